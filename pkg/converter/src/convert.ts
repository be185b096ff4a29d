#!/usr/bin/env node
/**
 * One-shot converter: published CNN14 checkpoint container -> manifest+blob
 * checkpoint bound to an architecture file.
 *
 *   prunekit-convert --source Cnn14.pth --arch cnn14.model.json \
 *                    --namemap namemap.cnn14.json --out cnn14
 *
 * Prints a per-tensor shape table, the coverage report (including
 * intentionally skipped frontend tensors) and the blob content hash.
 * Exits nonzero with a category line on stderr when tensors are missing,
 * unmapped or shaped differently than the architecture requires.
 */

import { expectedTensors, fingerprint, loadArch } from "./arch.js";
import { writeCheckpoint } from "./manifest.js";
import { loadNameMap, resolve, UnmappedTensorError } from "./namemap.js";
import { SourceCheckpoint } from "./torch.js";

export class ShapeMismatchError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ShapeMismatch";
  }
}

export interface ConvertResult {
  blobSha256: string;
  elementCount: number;
  mapped: number;
  skipped: { source: string; reason: string }[];
}

export function convert(sourcePath: string, archPath: string,
                        nameMapPath: string, outPrefix: string,
                        log: (line: string) => void = () => {}): ConvertResult {
  const spec = loadArch(archPath);
  const expected = expectedTensors(spec);
  const nameMap = loadNameMap(nameMapPath);
  const source = new SourceCheckpoint(sourcePath);

  const coverage = resolve(nameMap, [...source.tensors.keys()],
                           expected.map((t) => t.name));
  const byTarget = new Map(coverage.mapped.map((m) => [m.target, m.source]));

  let elementCount = 0;
  const out = [];
  log(`${"target".padEnd(24)} ${"source".padEnd(32)} shape`);
  for (const t of expected) {
    const sourceName = byTarget.get(t.name)!;
    const src = source.tensors.get(sourceName)!;
    if (src.dtype !== "f32") {
      throw new ShapeMismatchError(
        `${sourceName}: dtype ${src.dtype}, expected f32 for ${t.name}`);
    }
    if (JSON.stringify(src.shape) !== JSON.stringify(t.shape)) {
      throw new ShapeMismatchError(
        `${sourceName}: shape [${src.shape}] != expected [${t.shape}] for ${t.name}`);
    }
    elementCount += src.numel;
    log(`${t.name.padEnd(24)} ${sourceName.padEnd(32)} [${t.shape.join(", ")}]`);
    out.push({ name: t.name, shape: t.shape, data: src.bytes() });
  }
  const { blobSha256 } = writeCheckpoint(outPrefix, fingerprint(spec), out);

  log("");
  log(`mapped tensors:  ${coverage.mapped.length} (${elementCount} elements)`);
  for (const s of coverage.skipped) {
    log(`skipped:         ${s.source} (${s.reason})`);
  }
  if (source.extras.length) {
    log(`non-tensor keys: ${source.extras.join(", ")}`);
  }
  log(`blob sha256:     ${blobSha256}`);
  return {
    blobSha256, elementCount,
    mapped: coverage.mapped.length, skipped: coverage.skipped,
  };
}

function parseArgs(argv: string[]): Record<string, string> {
  const args: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || argv[i + 1] === undefined) {
      throw new Error(`bad argument ${argv[i]}`);
    }
    args[argv[i].slice(2)] = argv[i + 1];
  }
  for (const req of ["source", "arch", "namemap", "out"]) {
    if (!(req in args)) throw new Error(`missing --${req}`);
  }
  return args;
}

const invokedDirectly = process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop()!);

if (invokedDirectly) {
  try {
    const args = parseArgs(process.argv.slice(2));
    convert(args.source, args.arch, args.namemap, args.out,
            (line) => console.log(line));
  } catch (err) {
    const e = err as Error;
    console.error(e.name === "Error" ? "ConvertError" : e.name);
    console.error(JSON.stringify({ category: e.name, message: e.message }));
    process.exit(1);
  }
}
