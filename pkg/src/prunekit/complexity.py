"""Analytical parameter and MAC accounting for ModelSpecs.

Conventions: one MAC = one multiply + one accumulate; the headline MAC
total covers conv and dense layers only, with elementwise work (BN, ReLU,
pooling, sigmoid) reported in a separate ``other_ops`` column.  The
headline parameter total counts trainable tensors only; BN running
statistics appear in ``aux_params``.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

from .graph import ModelSpec, infer_shapes


@dataclass(frozen=True)
class LayerCost:
    layer: str
    kind: str
    params: int
    aux_params: int   # non-trainable (BN running stats)
    macs: int
    other_ops: int    # elementwise ops excluded from the MAC headline


@dataclass(frozen=True)
class ComplexityReport:
    entries: tuple[LayerCost, ...]

    @property
    def total_params(self) -> int:
        return sum(e.params for e in self.entries)

    @property
    def total_aux_params(self) -> int:
        return sum(e.aux_params for e in self.entries)

    @property
    def total_macs(self) -> int:
        return sum(e.macs for e in self.entries)

    @property
    def total_other_ops(self) -> int:
        return sum(e.other_ops for e in self.entries)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("layer,kind,params,macs\n")
        for e in self.entries:
            out.write(f"{e.layer},{e.kind},{e.params},{e.macs}\n")
        out.write(f"total,,{self.total_params},{self.total_macs}\n")
        return out.getvalue()

    def to_json(self) -> str:
        doc = {
            "layers": [{"layer": e.layer, "kind": e.kind, "params": e.params,
                        "aux_params": e.aux_params, "macs": e.macs,
                        "other_ops": e.other_ops} for e in self.entries],
            "totals": {"params": self.total_params,
                       "aux_params": self.total_aux_params,
                       "macs": self.total_macs,
                       "other_ops": self.total_other_ops},
        }
        return json.dumps(doc, indent=2) + "\n"


def analyze(spec: ModelSpec) -> ComplexityReport:
    """Per-layer params and MACs for one forward pass at spec.input_shape."""
    shapes = infer_shapes(spec)
    entries = []
    t, f = spec.input_shape
    prev_shape: tuple = (1, t, f)
    for l in spec.layers:
        out_shape = shapes[l.name]
        params = aux = macs = other = 0
        if l.kind == "Conv2d":
            n, c, k = l.out_channels, l.in_channels, l.kernel
            params = k * k * c * n + (n if l.has_bias else 0)
            ot, of = out_shape[1], out_shape[2]
            macs = ot * of * k * k * c * n
        elif l.kind in ("BatchNorm", "InputBN"):
            ch = l.channels if l.kind == "BatchNorm" else l.bins
            params = 2 * ch
            aux = 2 * ch
            other = 2 * _numel(out_shape)          # scale + shift per element
        elif l.kind == "Dense":
            params = l.in_features * l.out_features + (l.out_features if l.has_bias else 0)
            macs = l.in_features * l.out_features
        elif l.kind == "ReLU":
            other = _numel(out_shape)
        elif l.kind == "AvgPool":
            other = 4 * _numel(out_shape)          # window adds per output
        elif l.kind == "GlobalPool":
            other = 2 * _numel(prev_shape)         # freq mean + time mean/max sweeps
        elif l.kind == "Sigmoid":
            other = _numel(out_shape)
        entries.append(LayerCost(l.name, l.kind, params, aux, macs, other))
        prev_shape = out_shape
    return ComplexityReport(entries=tuple(entries))


def _numel(shape: tuple) -> int:
    n = 1
    for s in shape:
        n *= s
    return n


def count_params(spec: ModelSpec) -> ComplexityReport:
    return analyze(spec)


def count_macs(spec: ModelSpec) -> ComplexityReport:
    return analyze(spec)


@dataclass(frozen=True)
class DeltaRow:
    layer: str
    params_before: int
    params_after: int
    macs_before: int
    macs_after: int

    @property
    def params_pct(self) -> float:
        return _pct(self.params_before, self.params_after)

    @property
    def macs_pct(self) -> float:
        return _pct(self.macs_before, self.macs_after)


def _pct(ref: int, new: int) -> float:
    return 0.0 if ref == 0 else 100.0 * (ref - new) / ref


@dataclass(frozen=True)
class CompareReport:
    rows: tuple[DeltaRow, ...]
    totals: DeltaRow

    @property
    def params_reduction_pct(self) -> float:
        return self.totals.params_pct

    @property
    def macs_reduction_pct(self) -> float:
        return self.totals.macs_pct

    def to_json(self) -> str:
        doc = {
            "layers": [{"layer": r.layer,
                        "params": [r.params_before, r.params_after],
                        "macs": [r.macs_before, r.macs_after],
                        "params_reduction_pct": round(r.params_pct, 1),
                        "macs_reduction_pct": round(r.macs_pct, 1)} for r in self.rows],
            "totals": {"params": [self.totals.params_before, self.totals.params_after],
                       "macs": [self.totals.macs_before, self.totals.macs_after],
                       "params_reduction_pct": round(self.params_reduction_pct, 1),
                       "macs_reduction_pct": round(self.macs_reduction_pct, 1)},
        }
        return json.dumps(doc, indent=2) + "\n"


def compare(baseline: ComplexityReport, candidate: ComplexityReport) -> CompareReport:
    """Per-layer and total reductions of candidate relative to baseline.

    Layers are matched by name; a layer absent on one side contributes
    zero on that side.
    """
    base = {e.layer: e for e in baseline.entries}
    cand = {e.layer: e for e in candidate.entries}
    names = list(base)
    names += [n for n in cand if n not in base]
    rows = []
    for name in names:
        b = base.get(name)
        c = cand.get(name)
        rows.append(DeltaRow(name,
                             b.params if b else 0, c.params if c else 0,
                             b.macs if b else 0, c.macs if c else 0))
    totals = DeltaRow("total",
                      baseline.total_params, candidate.total_params,
                      baseline.total_macs, candidate.total_macs)
    return CompareReport(rows=tuple(rows), totals=totals)
