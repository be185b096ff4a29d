/**
 * Reads a zip-archived serialized state dict: locates `<prefix>/data.pkl`,
 * unpickles it, and exposes each tensor's metadata plus its raw
 * little-endian bytes from `<prefix>/data/<key>`.
 */

import { readFileSync } from "node:fs";

import { TensorMeta, unpickle } from "./pickle.js";
import { ZipReader } from "./zip.js";

export interface SourceTensor {
  name: string;
  dtype: string;
  shape: number[];
  numel: number;
  bytes: () => Buffer;
}

function contiguous(shape: number[], stride: number[]): boolean {
  let expect = 1;
  for (let i = shape.length - 1; i >= 0; i--) {
    if (shape[i] !== 1 && stride[i] !== expect) return false;
    expect *= shape[i];
  }
  return true;
}

export class SourceCheckpoint {
  private zip: ZipReader;
  private prefix: string;
  readonly tensors = new Map<string, SourceTensor>();
  readonly extras: string[] = []; // non-tensor top-level keys, reported only

  constructor(path: string) {
    this.zip = new ZipReader(readFileSync(path));
    const pkl = this.zip.names().find((n) => n.endsWith("/data.pkl"));
    if (!pkl) throw new Error(`${path}: no data.pkl entry; not a checkpoint container`);
    this.prefix = pkl.slice(0, -"/data.pkl".length);
    const root = unpickle(this.zip.read(pkl));
    const stateDict = this.findStateDict(root);
    for (const [key, value] of stateDict) {
      if (typeof key !== "string") continue;
      const t = value as TensorMeta;
      if (!t || (t as TensorMeta).kind !== "tensor") {
        this.extras.push(key);
        continue;
      }
      this.addTensor(key, t);
    }
  }

  private findStateDict(root: unknown): Map<unknown, unknown> {
    if (root instanceof Map) {
      const model = root.get("model");
      if (model instanceof Map) return model;          // {"model": state_dict, ...}
      return root;                                     // bare state_dict
    }
    throw new Error("checkpoint payload is not a dict");
  }

  private addTensor(name: string, t: TensorMeta) {
    const numel = t.shape.reduce((a, b) => a * b, 1);
    if (!contiguous(t.shape, t.stride)) {
      throw new Error(`tensor ${name} is not contiguous; unsupported layout`);
    }
    const { storage } = t;
    const entry = `${this.prefix}/data/${storage.key}`;
    if (!this.zip.has(entry)) {
      throw new Error(`tensor ${name}: missing storage entry ${entry}`);
    }
    const elementBytes = storage.elementBytes;
    const offsetBytes = t.storageOffset * elementBytes;
    this.tensors.set(name, {
      name,
      dtype: storage.dtype,
      shape: t.shape,
      numel,
      bytes: () => {
        const raw = this.zip.read(entry);
        return raw.subarray(offsetBytes, offsetBytes + numel * elementBytes);
      },
    });
  }
}

/** Decode a float32 tensor's values (test/diagnostic helper). */
export function toFloat32(t: SourceTensor): Float32Array {
  if (t.dtype !== "f32") throw new Error(`tensor ${t.name} is ${t.dtype}, not f32`);
  const raw = t.bytes();
  const aligned = new ArrayBuffer(raw.length);
  new Uint8Array(aligned).set(raw);
  return new Float32Array(aligned);
}
