/**
 * Data-driven tensor name mapping with a coverage report.  The map is
 * injective source -> target; skip patterns (shell-style `*`) mark source
 * tensors that are intentionally not imported.
 */

import { readFileSync } from "node:fs";

export interface NameMap {
  map: { source: string; target: string }[];
  skip: { pattern: string; reason: string }[];
}

export interface Coverage {
  mapped: { source: string; target: string }[];
  skipped: { source: string; reason: string }[];
  unmappedSource: string[];
  unmappedTarget: string[];
}

export class UnmappedTensorError extends Error {
  constructor(public coverage: Coverage) {
    const parts = [];
    if (coverage.unmappedSource.length) {
      parts.push(`source tensors without a mapping: ${coverage.unmappedSource.join(", ")}`);
    }
    if (coverage.unmappedTarget.length) {
      parts.push(`expected tensors never produced: ${coverage.unmappedTarget.join(", ")}`);
    }
    super(parts.join("; "));
    this.name = "UnmappedTensor";
  }
}

export function loadNameMap(path: string): NameMap {
  const doc = JSON.parse(readFileSync(path, "utf-8")) as NameMap;
  const targets = new Set<string>();
  for (const { target } of doc.map) {
    if (targets.has(target)) throw new Error(`name map is not injective: ${target}`);
    targets.add(target);
  }
  return doc;
}

function globToRegExp(pattern: string): RegExp {
  const esc = pattern.replace(/[.+^${}()|[\]\\]/g, "\\$&").replace(/\*/g, ".*");
  return new RegExp(`^${esc}$`);
}

/** Resolve the mapping against actual source names and expected targets. */
export function resolve(nameMap: NameMap, sourceNames: string[],
                        expectedTargets: string[]): Coverage {
  const bySource = new Map(nameMap.map.map((e) => [e.source, e.target]));
  const skips = nameMap.skip.map((s) => ({ re: globToRegExp(s.pattern), reason: s.reason }));
  const coverage: Coverage = { mapped: [], skipped: [], unmappedSource: [], unmappedTarget: [] };
  const produced = new Set<string>();
  for (const source of sourceNames) {
    const target = bySource.get(source);
    if (target !== undefined) {
      coverage.mapped.push({ source, target });
      produced.add(target);
      continue;
    }
    const skip = skips.find((s) => s.re.test(source));
    if (skip) {
      coverage.skipped.push({ source, reason: skip.reason });
    } else {
      coverage.unmappedSource.push(source);
    }
  }
  for (const target of expectedTargets) {
    if (!produced.has(target)) coverage.unmappedTarget.push(target);
  }
  if (coverage.unmappedSource.length || coverage.unmappedTarget.length) {
    throw new UnmappedTensorError(coverage);
  }
  return coverage;
}
