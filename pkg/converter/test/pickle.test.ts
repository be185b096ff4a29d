import assert from "node:assert/strict";
import { execFileSync } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { test } from "node:test";
import { fileURLToPath } from "node:url";

import { SourceCheckpoint, toFloat32 } from "../src/torch.js";

const here = fileURLToPath(new URL(".", import.meta.url));
const fixtureScript = join(here, "..", "..", "test", "make_fixture.py");

function makeFixture(kind: string): string {
  const dir = mkdtempSync(join(tmpdir(), "pkconv-"));
  const out = join(dir, `${kind}.pth`);
  execFileSync("python3", [fixtureScript, "--kind", kind, "--out", out]);
  return out;
}

test("unpickles a small mixed payload saved by the source ecosystem", () => {
  const ck = new SourceCheckpoint(makeFixture("small"));
  const a = ck.tensors.get("a");
  assert.ok(a);
  assert.deepEqual(a.shape, [2, 3]);
  assert.deepEqual([...toFloat32(a)], [0, 1, 2, 3, 4, 5]);
  // non-tensor top-level values are reported, not imported
  assert.ok(ck.extras.includes("count"));
  assert.ok(ck.extras.includes("name"));
});

test("nested ordered dict tensors are reachable", () => {
  // the "b" sub-dict is not a state dict; SourceCheckpoint flattens only
  // the top level, so the nested dict lands in extras
  const ck = new SourceCheckpoint(makeFixture("small"));
  assert.ok(ck.extras.includes("b"));
});
