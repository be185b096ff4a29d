"""Multi-label evaluation: per-class average precision and mAP.

AP is non-interpolated, computed over the descending-score sweep with
tied scores processed as one group.  Classes with no positive labels are
skipped (and counted), not scored zero.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import AllClassesEmpty, NoPositives, ShapeMismatch


def average_precision(scores, labels) -> float:
    """AP = sum over thresholds of (R_k - R_{k-1}) * P_k.

    Requires at least one positive label.  The final accumulation is a
    sequential float sum in descending-threshold order, so the value is
    bit-reproducible.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeMismatch(f"scores {scores.shape} vs labels {labels.shape}")
    positives = int(labels.sum())
    if positives == 0:
        raise NoPositives("no positive labels")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    l = labels[order].astype(np.int64)
    # last index of each tie group
    ends = np.nonzero(np.append(s[1:] != s[:-1], True))[0]
    tp = np.cumsum(l)[ends]
    seen = ends + 1
    ap = 0.0
    prev_recall = 0.0
    for k in range(len(ends)):
        precision = int(tp[k]) / int(seen[k])
        recall = int(tp[k]) / positives
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


@dataclass(frozen=True)
class EvalResult:
    ap: np.ndarray          # per-class AP; NaN where the class was skipped
    map: float
    skipped: int

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("class,ap\n")
        for i, v in enumerate(self.ap):
            out.write(f"{i},{'' if np.isnan(v) else repr(float(v))}\n")
        return out.getvalue()

    def to_json(self) -> str:
        doc = {"map": self.map, "skipped_classes": self.skipped,
               "ap": [None if np.isnan(v) else float(v) for v in self.ap]}
        return json.dumps(doc, indent=2) + "\n"


def mean_average_precision(scores, labels) -> EvalResult:
    """Macro mean of AP over classes that have at least one positive."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise ShapeMismatch(f"scores {scores.shape} vs labels {labels.shape}")
    n_classes = scores.shape[1]
    ap = np.full(n_classes, np.nan)
    total = 0.0
    scored = 0
    for c in range(n_classes):
        if labels[:, c].sum() == 0:
            continue
        ap[c] = average_precision(scores[:, c], labels[:, c])
        total += ap[c]
        scored += 1
    if scored == 0:
        raise AllClassesEmpty("every class is all-negative")
    return EvalResult(ap=ap, map=float(total / scored), skipped=n_classes - scored)
