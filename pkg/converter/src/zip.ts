/**
 * Minimal read-only zip archive access: end-of-central-directory scan,
 * central directory walk, stored and deflate entries.  Enough for the
 * checkpoint containers this tool consumes.
 */

import { inflateRawSync } from "node:zlib";

const EOCD_SIG = 0x06054b50;
const CENTRAL_SIG = 0x02014b50;
const LOCAL_SIG = 0x04034b50;

export interface ZipEntry {
  name: string;
  compressedSize: number;
  uncompressedSize: number;
  method: number;
  localHeaderOffset: number;
}

export class ZipReader {
  private entries = new Map<string, ZipEntry>();

  constructor(private buf: Buffer) {
    const eocd = this.findEocd();
    const count = buf.readUInt16LE(eocd + 10);
    let off = buf.readUInt32LE(eocd + 16);
    for (let i = 0; i < count; i++) {
      if (buf.readUInt32LE(off) !== CENTRAL_SIG) {
        throw new Error(`bad central directory record at ${off}`);
      }
      const method = buf.readUInt16LE(off + 10);
      const compressedSize = buf.readUInt32LE(off + 20);
      const uncompressedSize = buf.readUInt32LE(off + 24);
      const nameLen = buf.readUInt16LE(off + 28);
      const extraLen = buf.readUInt16LE(off + 30);
      const commentLen = buf.readUInt16LE(off + 32);
      const localHeaderOffset = buf.readUInt32LE(off + 42);
      const name = buf.subarray(off + 46, off + 46 + nameLen).toString("utf-8");
      this.entries.set(name, {
        name, compressedSize, uncompressedSize, method, localHeaderOffset,
      });
      off += 46 + nameLen + extraLen + commentLen;
    }
  }

  private findEocd(): number {
    const buf = this.buf;
    const lo = Math.max(0, buf.length - 65557);
    for (let i = buf.length - 22; i >= lo; i--) {
      if (buf.readUInt32LE(i) === EOCD_SIG) return i;
    }
    throw new Error("not a zip archive (no end-of-central-directory)");
  }

  names(): string[] {
    return [...this.entries.keys()];
  }

  has(name: string): boolean {
    return this.entries.has(name);
  }

  read(name: string): Buffer {
    const e = this.entries.get(name);
    if (!e) throw new Error(`no zip entry ${name}`);
    const buf = this.buf;
    const off = e.localHeaderOffset;
    if (buf.readUInt32LE(off) !== LOCAL_SIG) {
      throw new Error(`bad local header for ${name}`);
    }
    const nameLen = buf.readUInt16LE(off + 26);
    const extraLen = buf.readUInt16LE(off + 28);
    const start = off + 30 + nameLen + extraLen;
    const raw = buf.subarray(start, start + e.compressedSize);
    if (e.method === 0) return raw;
    if (e.method === 8) return inflateRawSync(raw);
    throw new Error(`unsupported compression method ${e.method} for ${name}`);
  }
}
