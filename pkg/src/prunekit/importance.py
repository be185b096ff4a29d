"""Per-layer filter importance scoring and ranking.

Two criteria ship: ``weight_norm`` (l1 norm of each filter's weights,
data-free) and ``activation_energy`` (mean absolute post-activation
feature map over a calibration batch).  Layers are scored independently;
rankings are descending by score with ascending-index tie break.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .engine import Runtime
from .errors import EmptyCalibration, InvalidScore, UnknownLayer
from .graph import ModelSpec

CRITERIA = ("weight_norm", "activation_energy")


@dataclass(frozen=True)
class ImportanceReport:
    criterion: str
    calibration_fingerprint: str      # "" for data-free criteria
    layers: dict[str, list[tuple[int, float]]]  # name -> [(filter, score) desc]

    def order(self, layer: str) -> list[int]:
        if layer not in self.layers:
            raise UnknownLayer(f"layer {layer} not in report")
        return [i for i, _ in self.layers[layer]]

    def to_json(self) -> str:
        doc = {"criterion": self.criterion,
               "calibration_fingerprint": self.calibration_fingerprint,
               "layers": {name: [[i, s] for i, s in pairs]
                          for name, pairs in self.layers.items()}}
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ImportanceReport":
        doc = json.loads(text)
        return cls(criterion=doc["criterion"],
                   calibration_fingerprint=doc["calibration_fingerprint"],
                   layers={name: [(int(i), float(s)) for i, s in pairs]
                           for name, pairs in doc["layers"].items()})


def score_weight_norm(weights: np.ndarray) -> np.ndarray:
    """l1 norm of each filter's weights; weights shaped (n, c, k, k)."""
    return np.abs(weights).reshape(weights.shape[0], -1).sum(axis=1)


def score_activation_energy(spec: ModelSpec, params: dict, layer_name: str,
                            calibration: np.ndarray) -> np.ndarray:
    """Mean |post-activation feature map| per filter over the calibration batch.

    The map is taken after the ReLU that follows ``layer_name`` (after the
    conv itself when no activation follows).  BN runs in eval mode.
    """
    calibration = np.asarray(calibration)
    if calibration.size == 0:
        raise EmptyCalibration("calibration batch is empty")
    tap = _post_activation_tap(spec, layer_name)
    rt = Runtime(spec, params)
    rt.forward(calibration, mode="eval", capture=(tap,))
    fmap = rt.captured[tap]                      # (B, n, T, F)
    # fixed accumulation order: positions then samples
    return np.abs(fmap).mean(axis=(2, 3)).mean(axis=0)


def _post_activation_tap(spec: ModelSpec, layer_name: str) -> str:
    names = [l.name for l in spec.layers]
    if layer_name not in names:
        raise UnknownLayer(f"no layer named {layer_name}")
    idx = names.index(layer_name)
    if spec.layers[idx].kind != "Conv2d":
        raise UnknownLayer(f"layer {layer_name} is not Conv2d")
    tap = layer_name
    for l in spec.layers[idx + 1:]:
        if l.kind in ("BatchNorm", "ReLU"):
            tap = l.name
        else:
            break
    return tap


def rank(scores: np.ndarray) -> list[tuple[int, float]]:
    """Descending by score, ties broken by ascending filter index."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise InvalidScore(f"scores must be a vector, got shape {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise InvalidScore("scores contain NaN or Inf")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return [(i, float(scores[i])) for i in order]


def _calibration_fingerprint(calibration: np.ndarray) -> str:
    arr = np.ascontiguousarray(calibration, dtype=np.float32)
    h = hashlib.sha256()
    h.update(str(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()


def score_model(spec: ModelSpec, params: dict, criterion: str = "weight_norm",
                calibration: np.ndarray | None = None,
                calibration_fingerprint: str | None = None,
                layer_names: list[str] | None = None) -> ImportanceReport:
    """ImportanceReport over the given conv layers (default: all of them)."""
    if criterion not in CRITERIA:
        raise InvalidScore(f"unknown criterion {criterion!r}")
    names = layer_names if layer_names is not None else [l.name for l in spec.conv_layers()]
    for n in names:
        if n not in {l.name for l in spec.conv_layers()}:
            raise UnknownLayer(f"no conv layer named {n}")
    if criterion == "activation_energy":
        if calibration is None or np.asarray(calibration).size == 0:
            raise EmptyCalibration("activation_energy requires a calibration batch")
        fp = calibration_fingerprint or _calibration_fingerprint(calibration)
    else:
        fp = ""
    layers = {}
    for name in names:
        if criterion == "weight_norm":
            scores = score_weight_norm(np.asarray(params[f"{name}.weight"]))
        else:
            scores = score_activation_energy(spec, params, name, calibration)
        layers[name] = rank(scores)
    return ImportanceReport(criterion=criterion, calibration_fingerprint=fp,
                            layers=layers)
