"""Structural filter pruning with full channel rewiring.

Removing output filters from a conv layer also drops the coupled batch
norm entries and shrinks the input axis of the next channel consumer
(the following conv, or the dense layer fed by global pooling).  Zero
masking without rewiring is deliberately not offered.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import complexity
from .errors import (PlanSpecMismatch, RatioOutOfRange, UnknownLayer,
                     WouldEmptyLayer)
from .graph import LayerSpec, ModelSpec
from .importance import ImportanceReport
from .storage import Checkpoint


@dataclass(frozen=True)
class PrunePlan:
    targets: dict[str, tuple[int, ...]]  # conv layer name -> sorted filter indices to drop
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {"targets": {k: list(v) for k, v in self.targets.items()},
               "provenance": self.provenance}
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PrunePlan":
        doc = json.loads(text)
        return cls(targets={k: tuple(int(i) for i in v)
                            for k, v in doc["targets"].items()},
                   provenance=doc.get("provenance", {}))


def make_plan(report: ImportanceReport, targets: dict[str, float]) -> PrunePlan:
    """Select the floor(p * n) lowest-ranked filters of each target layer."""
    plan: dict[str, tuple[int, ...]] = {}
    ratios: dict[str, float] = {}
    for layer, p in targets.items():
        if not (0.0 <= p < 1.0):
            raise RatioOutOfRange(f"ratio {p} for {layer} not in [0, 1)")
        order = report.order(layer)          # raises UnknownLayer
        count = math.floor(p * len(order))
        plan[layer] = tuple(sorted(order[len(order) - count:])) if count else ()
        ratios[layer] = p
    return PrunePlan(targets=plan,
                     provenance={"ratios": ratios, "criterion": report.criterion,
                                 "report_fingerprint": report.calibration_fingerprint})


def apply_plan(spec: ModelSpec, weights: Checkpoint,
               plan: PrunePlan) -> tuple[ModelSpec, Checkpoint]:
    """Pruned (spec, checkpoint) pair; inputs are never mutated.

    The returned spec passes validation and the checkpoint binds it
    exactly.  An empty plan reproduces the inputs byte-identically.
    """
    conv_names = {l.name for l in spec.conv_layers()}
    for name, idx in plan.targets.items():
        if name not in conv_names:
            raise PlanSpecMismatch(f"plan targets {name}, which is not a conv layer")
        n = spec.layer(name).out_channels
        if any(i < 0 or i >= n for i in idx):
            raise PlanSpecMismatch(f"plan for {name} has indices outside 0..{n - 1}")
        if len(set(idx)) >= n:
            raise WouldEmptyLayer(f"plan removes all {n} filters of {name}")

    tensors = dict(weights.tensors)
    new_layers: list[LayerSpec] = []
    keep: np.ndarray | None = None   # surviving producer-channel indices, or None for all
    for l in spec.layers:
        if l.kind == "Conv2d":
            w = tensors[f"{l.name}.weight"]
            in_ch = l.in_channels
            if keep is not None:
                w = w[:, keep]
                in_ch = len(keep)
            out_ch = l.out_channels
            removed = set(plan.targets.get(l.name, ()))
            if removed:
                keep = np.array([i for i in range(out_ch) if i not in removed])
                w = w[keep]
                out_ch = len(keep)
                if l.has_bias:
                    tensors[f"{l.name}.bias"] = tensors[f"{l.name}.bias"][keep]
            else:
                keep = None
            tensors[f"{l.name}.weight"] = w
            new_layers.append(LayerSpec(name=l.name, kind="Conv2d", in_channels=in_ch,
                                        out_channels=out_ch, kernel=l.kernel,
                                        padding=l.padding, stride=l.stride,
                                        has_bias=l.has_bias))
        elif l.kind == "BatchNorm":
            ch = l.channels
            if keep is not None:
                for p in ("gamma", "beta", "running_mean", "running_var"):
                    tensors[f"{l.name}.{p}"] = tensors[f"{l.name}.{p}"][keep]
                ch = len(keep)
            new_layers.append(LayerSpec(name=l.name, kind="BatchNorm", channels=ch,
                                        epsilon=l.epsilon))
        elif l.kind == "Dense":
            in_f = l.in_features
            if keep is not None:
                tensors[f"{l.name}.weight"] = tensors[f"{l.name}.weight"][:, keep]
                in_f = len(keep)
                keep = None
            new_layers.append(LayerSpec(name=l.name, kind="Dense", in_features=in_f,
                                        out_features=l.out_features, has_bias=l.has_bias))
        else:
            # InputBN / ReLU / AvgPool / GlobalPool / Sigmoid: channel set passes through
            new_layers.append(l)
    new_spec = ModelSpec(layers=tuple(new_layers), input_shape=spec.input_shape,
                         class_count=spec.class_count, conv_index=dict(spec.conv_index))
    new_ckpt = Checkpoint.for_spec(new_spec, tensors)
    return new_spec, new_ckpt


def prune_report(before: ModelSpec, after: ModelSpec) -> str:
    """Human-readable pruning summary: per-layer widths plus total reductions."""
    cmp = complexity.compare(complexity.analyze(before), complexity.analyze(after))
    widths_after = {l.name: l.out_channels for l in after.conv_layers()}
    lines = [f"{'layer':<12}{'before':>8}{'after':>8}"]
    for l in before.conv_layers():
        lines.append(f"{l.name:<12}{l.out_channels:>8}{widths_after.get(l.name, 0):>8}")
    lines.append(f"params -{cmp.params_reduction_pct:.1f}%, "
                 f"MACs -{cmp.macs_reduction_pct:.1f}%")
    return "\n".join(lines) + "\n"
