/**
 * Writes the manifest+blob checkpoint format: UTF-8 JSON tensor table
 * bound to a spec fingerprint, plus contiguous little-endian float32
 * tensor data.  Files are written atomically (temp + rename).
 */

import { createHash } from "node:crypto";
import { renameSync, writeFileSync } from "node:fs";

export interface OutTensor {
  name: string;
  shape: number[];
  data: Buffer; // raw little-endian float32
}

function atomicWrite(path: string, data: Buffer | string): void {
  const tmp = `${path}.tmp.${process.pid}`;
  writeFileSync(tmp, data);
  renameSync(tmp, path);
}

export function writeCheckpoint(prefix: string, modelFingerprint: string,
                                tensors: OutTensor[]): { blobSha256: string } {
  const entries = [];
  const blobs = [];
  let offset = 0;
  for (const t of tensors) {
    const numel = t.shape.reduce((a, b) => a * b, 1);
    if (t.data.length !== numel * 4) {
      throw new Error(`tensor ${t.name}: ${t.data.length} bytes != shape ${t.shape}`);
    }
    entries.push({
      name: t.name, dtype: "f32", shape: t.shape,
      byte_offset: offset, byte_length: t.data.length,
    });
    blobs.push(t.data);
    offset += t.data.length;
  }
  const blob = Buffer.concat(blobs);
  const manifest = {
    format_version: 1,
    model_fingerprint: modelFingerprint,
    tensors: entries,
  };
  atomicWrite(`${prefix}.weights.bin`, blob);
  atomicWrite(`${prefix}.manifest.json`, JSON.stringify(manifest, null, 2) + "\n");
  return { blobSha256: createHash("sha256").update(blob).digest("hex") };
}
