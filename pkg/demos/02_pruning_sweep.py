#!/usr/bin/env python3
# Structural pruning sweep over the CNN14 preset.
#
# Rank filters of the last six conv layers (the parameter-heavy ones),
# drop the bottom p fraction with full channel rewiring, and tabulate
# the analytical reductions.  Random weights stand in for a real
# checkpoint; the arithmetic is weight-independent.

from prunekit import complexity, graph, importance, pruning, storage

spec = graph.build_cnn14_preset()
ckpt = storage.init_random(spec, seed=0)

# Data-free criterion: l1 norm of each filter's weights.
report = importance.score_model(spec, ckpt.tensors, "weight_norm")

base = complexity.analyze(spec)
print(f"baseline: {base.total_params:>12,} params  {base.total_macs:>14,} MACs")

targets = [f"C{i}" for i in range(7, 13)]
for p in (0.25, 0.5, 0.75):
    plan = pruning.make_plan(report, {name: p for name in targets})
    pruned_spec, pruned_ckpt = pruning.apply_plan(spec, ckpt, plan)
    cmp = complexity.compare(base, complexity.analyze(pruned_spec))
    t = cmp.totals
    print(f"p={p:<5} {t.params_after:>12,} params  {t.macs_after:>14,} MACs"
          f"  (-{cmp.params_reduction_pct:.1f}% / -{cmp.macs_reduction_pct:.1f}%)")

# The p=0.5 rewiring in detail: pruned widths propagate into the next
# consumer's input axis, which is where most of the savings come from.
plan = pruning.make_plan(report, {name: 0.5 for name in targets})
pruned_spec, _ = pruning.apply_plan(spec, ckpt, plan)
print("\n50% plan, per-layer widths:")
print(pruning.prune_report(spec, pruned_spec))
