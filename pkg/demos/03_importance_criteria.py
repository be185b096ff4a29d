#!/usr/bin/env python3
# Compare the two filter-importance criteria on a small model.
#
# weight_norm ranks filters by the l1 norm of their weights (data-free);
# activation_energy ranks by mean |post-ReLU feature map| over a
# calibration batch.  A constructed dead filter lands at the bottom of
# both rankings, and removing it is exact.

import numpy as np

from prunekit import engine, graph, importance, pruning, storage

spec = graph.build_toy_cnn(classes=4, frames=32, bins=16, channels=(8,))
ckpt = storage.init_random(spec, seed=0)

# Kill filter 3 of C1: zero weights, BN gamma 0, beta -1 -> ReLU output 0.
tensors = {k: v.copy() for k, v in ckpt.tensors.items()}
tensors["C1.weight"][3] = 0
tensors["C1.bn.gamma"][3] = 0
tensors["C1.bn.beta"][3] = -1
dead = storage.Checkpoint.for_spec(spec, tensors)

calib = np.random.default_rng(1).normal(size=(16, 1, 32, 16)).astype(np.float32)

by_weight = importance.score_model(spec, dead.tensors, "weight_norm")
by_energy = importance.score_model(spec, dead.tensors, "activation_energy",
                                   calibration=calib)
print("criterion          ranking (best -> worst)")
print(f"weight_norm        {by_weight.order('C1')}")
print(f"activation_energy  {by_energy.order('C1')}")
assert by_weight.order("C1")[-1] == by_energy.order("C1")[-1] == 3

# Removing the dead filter leaves the network function untouched.
x = np.random.default_rng(2).normal(size=(4, 1, 32, 16)).astype(np.float32)
before, _ = engine.forward(spec, dead.tensors, x)
pruned_spec, pruned_ckpt = pruning.apply_plan(
    spec, dead, pruning.PrunePlan(targets={"C1": (3,)}))
after, _ = engine.forward(pruned_spec, pruned_ckpt.tensors, x)
print(f"\nmax |output delta| after removing the dead filter: "
      f"{np.max(np.abs(before - after)):.2e}")
