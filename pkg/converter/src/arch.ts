/**
 * Architecture file consumption: expected parameter tensors (canonical
 * order and shapes) and the spec fingerprint, implementing the documented
 * canonical line rendering independently of the Python toolkit.
 */

import { createHash } from "node:crypto";
import { readFileSync } from "node:fs";

interface Layer {
  name: string;
  kind: string;
  [field: string]: unknown;
}

export interface ArchSpec {
  layers: Layer[];
  input_shape: [number, number];
  class_count: number;
  conv_index: Record<string, string>;
}

// Field order per kind, as fixed by the architecture file format.
const KIND_FIELDS: Record<string, string[]> = {
  InputBN: ["bins", "epsilon"],
  Conv2d: ["in_channels", "out_channels", "kernel", "padding", "stride", "has_bias"],
  BatchNorm: ["channels", "epsilon"],
  ReLU: [],
  AvgPool: ["window", "stride"],
  GlobalPool: [],
  Dense: ["in_features", "out_features", "has_bias"],
  Sigmoid: [],
};

export function loadArch(path: string): ArchSpec {
  const doc = JSON.parse(readFileSync(path, "utf-8")) as ArchSpec;
  for (const layer of doc.layers) {
    if (!(layer.kind in KIND_FIELDS)) {
      throw new Error(`architecture file has unknown layer kind ${layer.kind}`);
    }
  }
  return doc;
}

export interface ExpectedTensor {
  name: string;
  shape: number[];
  trainable: boolean;
}

export function expectedTensors(spec: ArchSpec): ExpectedTensor[] {
  const out: ExpectedTensor[] = [];
  for (const l of spec.layers) {
    if (l.kind === "Conv2d") {
      const [n, c, k] = [l.out_channels, l.in_channels, l.kernel] as number[];
      out.push({ name: `${l.name}.weight`, shape: [n, c, k, k], trainable: true });
      if (l.has_bias) out.push({ name: `${l.name}.bias`, shape: [n], trainable: true });
    } else if (l.kind === "BatchNorm" || l.kind === "InputBN") {
      const ch = (l.kind === "BatchNorm" ? l.channels : l.bins) as number;
      out.push({ name: `${l.name}.gamma`, shape: [ch], trainable: true });
      out.push({ name: `${l.name}.beta`, shape: [ch], trainable: true });
      out.push({ name: `${l.name}.running_mean`, shape: [ch], trainable: false });
      out.push({ name: `${l.name}.running_var`, shape: [ch], trainable: false });
    } else if (l.kind === "Dense") {
      const [o, i] = [l.out_features, l.in_features] as number[];
      out.push({ name: `${l.name}.weight`, shape: [o, i], trainable: true });
      if (l.has_bias) out.push({ name: `${l.name}.bias`, shape: [o], trainable: true });
    }
  }
  return out;
}

// Real-valued fields render as IEEE-754 double hex, chosen by field name
// (not runtime type) so the digest matches other implementations exactly.
const FLOAT_FIELDS = new Set(["epsilon"]);

function f64hex(x: number): string {
  const buf = Buffer.alloc(8);
  buf.writeDoubleBE(x);
  return buf.toString("hex");
}

function renderValue(field: string, v: unknown): string {
  if (FLOAT_FIELDS.has(field)) return f64hex(v as number);
  if (typeof v === "boolean") return v ? "1" : "0";
  return String(v);
}

export function fingerprint(spec: ArchSpec): string {
  const lines = [
    "prunekit-arch-v1",
    `input=${spec.input_shape[0]},${spec.input_shape[1]}`,
    `classes=${spec.class_count}`,
  ];
  for (const l of spec.layers) {
    const parts = [l.name, l.kind];
    for (const f of KIND_FIELDS[l.kind]) {
      parts.push(`${f}=${renderValue(f, l[f])}`);
    }
    lines.push(parts.join("|"));
  }
  for (const label of Object.keys(spec.conv_index).sort()) {
    lines.push(`index|${label}=${spec.conv_index[label]}`);
  }
  return createHash("sha256").update(lines.join("\n"), "utf-8").digest("hex");
}
