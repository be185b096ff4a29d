"""Declarative layer-graph representation of feed-forward CNNs.

A ``ModelSpec`` is an ordered list of ``LayerSpec`` entries plus the input
spectrogram shape and class count.  Specs are immutable; shape inference,
validation, serialization and the architecture fingerprint are all pure
functions over them.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, replace

from .errors import ShapeMismatch, ZeroExtent

KINDS = ("InputBN", "Conv2d", "BatchNorm", "ReLU", "AvgPool", "GlobalPool", "Dense", "Sigmoid")

# Fields serialized per kind, in architecture-file order.
_KIND_FIELDS = {
    "InputBN": ("bins", "epsilon"),
    "Conv2d": ("in_channels", "out_channels", "kernel", "padding", "stride", "has_bias"),
    "BatchNorm": ("channels", "epsilon"),
    "ReLU": (),
    "AvgPool": ("window", "stride"),
    "GlobalPool": (),
    "Dense": ("in_features", "out_features", "has_bias"),
    "Sigmoid": (),
}


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0
    padding: str = "same"
    stride: int = 1
    has_bias: bool = False
    channels: int = 0
    epsilon: float = 1e-5
    bins: int = 0
    in_features: int = 0
    out_features: int = 0
    window: int = 2

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        for f in _KIND_FIELDS[self.kind]:
            d[f] = getattr(self, f)
        return d


def conv2d(name: str, in_channels: int, out_channels: int, kernel: int = 3,
           has_bias: bool = False) -> LayerSpec:
    return LayerSpec(name=name, kind="Conv2d", in_channels=in_channels,
                     out_channels=out_channels, kernel=kernel, has_bias=has_bias)


def batchnorm(name: str, channels: int, epsilon: float = 1e-5) -> LayerSpec:
    return LayerSpec(name=name, kind="BatchNorm", channels=channels, epsilon=epsilon)


def input_bn(name: str, bins: int, epsilon: float = 1e-5) -> LayerSpec:
    return LayerSpec(name=name, kind="InputBN", bins=bins, epsilon=epsilon)


def relu(name: str) -> LayerSpec:
    return LayerSpec(name=name, kind="ReLU")


def avgpool(name: str) -> LayerSpec:
    return LayerSpec(name=name, kind="AvgPool")


def global_pool(name: str) -> LayerSpec:
    return LayerSpec(name=name, kind="GlobalPool")


def dense(name: str, in_features: int, out_features: int, has_bias: bool = True) -> LayerSpec:
    return LayerSpec(name=name, kind="Dense", in_features=in_features,
                     out_features=out_features, has_bias=has_bias)


def sigmoid(name: str) -> LayerSpec:
    return LayerSpec(name=name, kind="Sigmoid")


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int]  # (time_frames, freq_bins)
    class_count: int
    conv_index: dict[str, str] = field(default_factory=dict)  # label (C1..) -> layer name

    def layer(self, name: str) -> LayerSpec:
        for l in self.layers:
            if l.name == name:
                return l
        raise KeyError(name)

    def conv_layers(self) -> tuple[LayerSpec, ...]:
        return tuple(l for l in self.layers if l.kind == "Conv2d")

    def replace_layers(self, new_layers: list[LayerSpec]) -> "ModelSpec":
        return replace(self, layers=tuple(new_layers))


@dataclass(frozen=True)
class ParamTensor:
    """One named parameter tensor a checkpoint must carry for a spec."""
    name: str        # "<layer>.<param>", e.g. "C7.weight", "C7.bn.gamma"
    shape: tuple[int, ...]
    trainable: bool


def param_tensors(spec: ModelSpec) -> list[ParamTensor]:
    """Parameter tensors in canonical order: layer order, fixed per-kind field order.

    This order defines the checkpoint manifest/blob layout.
    """
    out: list[ParamTensor] = []
    for l in spec.layers:
        if l.kind == "Conv2d":
            out.append(ParamTensor(f"{l.name}.weight",
                                   (l.out_channels, l.in_channels, l.kernel, l.kernel), True))
            if l.has_bias:
                out.append(ParamTensor(f"{l.name}.bias", (l.out_channels,), True))
        elif l.kind in ("BatchNorm", "InputBN"):
            ch = l.channels if l.kind == "BatchNorm" else l.bins
            out.append(ParamTensor(f"{l.name}.gamma", (ch,), True))
            out.append(ParamTensor(f"{l.name}.beta", (ch,), True))
            out.append(ParamTensor(f"{l.name}.running_mean", (ch,), False))
            out.append(ParamTensor(f"{l.name}.running_var", (ch,), False))
        elif l.kind == "Dense":
            out.append(ParamTensor(f"{l.name}.weight", (l.out_features, l.in_features), True))
            if l.has_bias:
                out.append(ParamTensor(f"{l.name}.bias", (l.out_features,), True))
    return out


# ---------------------------------------------------------------------------
# Shape inference

def infer_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    """Output shape of every layer, keyed by layer name.

    Spatial stages yield (channels, time, freq); after GlobalPool shapes
    are flat (features,).  Raises ShapeMismatch on inconsistent channel or
    feature chains, ZeroExtent when pooling exhausts a spatial dimension.
    """
    t, f = spec.input_shape
    if t < 1 or f < 1:
        raise ZeroExtent(f"input shape {spec.input_shape} has no extent")
    channels = 1           # log-mel input is a single-channel image
    features = None        # set once flattened by GlobalPool
    shapes: dict[str, tuple[int, ...]] = {}
    for l in spec.layers:
        if l.kind in ("InputBN", "Conv2d", "BatchNorm", "AvgPool", "GlobalPool") and features is not None:
            raise ShapeMismatch(f"layer {l.name}: {l.kind} after flattening")
        if l.kind == "InputBN":
            if l.bins != f:
                raise ShapeMismatch(f"layer {l.name}: bins={l.bins} but freq dim is {f}")
        elif l.kind == "Conv2d":
            if l.in_channels != channels:
                raise ShapeMismatch(
                    f"layer {l.name}: in_channels={l.in_channels} but producer has {channels}")
            channels = l.out_channels
        elif l.kind == "BatchNorm":
            if l.channels != channels:
                raise ShapeMismatch(
                    f"layer {l.name}: channels={l.channels} but producer has {channels}")
        elif l.kind == "AvgPool":
            t, f = t // 2, f // 2
            if t < 1 or f < 1:
                raise ZeroExtent(f"layer {l.name}: pooling exhausts spatial dims to ({t},{f})")
        elif l.kind == "GlobalPool":
            features = channels
        elif l.kind == "Dense":
            if features is None:
                raise ShapeMismatch(f"layer {l.name}: Dense requires flat features")
            if l.in_features != features:
                raise ShapeMismatch(
                    f"layer {l.name}: in_features={l.in_features} but producer has {features}")
            features = l.out_features
        elif l.kind in ("ReLU", "Sigmoid"):
            pass
        else:
            raise ShapeMismatch(f"layer {l.name}: unknown kind {l.kind!r}")
        shapes[l.name] = (features,) if features is not None else (channels, t, f)
    return shapes


def validate(spec: ModelSpec) -> list[str]:
    """All invariant violations, as strings; empty list iff the spec is valid."""
    violations = []
    seen = set()
    for l in spec.layers:
        if l.name in seen:
            violations.append(f"duplicate name: {l.name}")
        seen.add(l.name)
        if l.kind not in KINDS:
            violations.append(f"{l.name}: unknown kind {l.kind!r}")
            continue
        if l.kind == "Conv2d":
            if l.kernel < 1:
                violations.append(f"{l.name}: kernel {l.kernel} < 1")
            if l.in_channels < 1 or l.out_channels < 1:
                violations.append(f"{l.name}: channel counts must be >= 1")
            if l.padding != "same" or l.stride != 1:
                violations.append(f"{l.name}: only padding='same', stride=1 supported")
        if l.kind == "BatchNorm" and l.channels < 1:
            violations.append(f"{l.name}: channels {l.channels} < 1")
        if l.kind == "InputBN" and l.bins < 1:
            violations.append(f"{l.name}: bins {l.bins} < 1")
    if not spec.layers:
        violations.append("spec has no layers")
    elif spec.layers[-1].kind != "Sigmoid":
        violations.append("final layer must be Sigmoid")
    for label, name in spec.conv_index.items():
        if name not in seen:
            violations.append(f"conv_index {label}: no layer named {name}")
        else:
            try:
                if spec.layer(name).kind != "Conv2d":
                    violations.append(f"conv_index {label}: layer {name} is not Conv2d")
            except KeyError:
                pass
    if violations:
        return violations
    try:
        shapes = infer_shapes(spec)
    except (ShapeMismatch, ZeroExtent) as e:
        violations.append(str(e))
        return violations
    last = spec.layers[-1].name
    if shapes[last] != (spec.class_count,):
        violations.append(
            f"final output is {shapes[last]}, expected ({spec.class_count},)")
    return violations


# ---------------------------------------------------------------------------
# Architecture file (UTF-8 JSON)

def to_json(spec: ModelSpec) -> str:
    doc = {
        "layers": [l.to_dict() for l in spec.layers],
        "input_shape": list(spec.input_shape),
        "class_count": spec.class_count,
        "conv_index": dict(sorted(spec.conv_index.items())),
    }
    return json.dumps(doc, indent=2) + "\n"


def from_json(text: str) -> ModelSpec:
    doc = json.loads(text)
    layers = []
    for d in doc["layers"]:
        kind = d["kind"]
        if kind not in _KIND_FIELDS:
            raise ShapeMismatch(f"unknown layer kind {kind!r} in architecture file")
        kwargs = {f: d[f] for f in _KIND_FIELDS[kind] if f in d}
        layers.append(LayerSpec(name=d["name"], kind=kind, **kwargs))
    return ModelSpec(
        layers=tuple(layers),
        input_shape=tuple(doc["input_shape"]),
        class_count=doc["class_count"],
        conv_index=dict(doc.get("conv_index", {})),
    )


def save(spec: ModelSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_json(spec))


def load(path) -> ModelSpec:
    with open(path, encoding="utf-8") as fh:
        return from_json(fh.read())


def _f64hex(x: float) -> str:
    # IEEE-754 big-endian hex: exact and identical across languages.
    return struct.pack(">d", float(x)).hex()


_FLOAT_FIELDS = frozenset({"epsilon"})


def fingerprint(spec: ModelSpec) -> str:
    """SHA-256 over a canonical line rendering of the spec.

    Real-valued fields render as IEEE-754 double hex (chosen by field, not
    runtime type), so independent implementations reproduce the digest
    without float-formatting ambiguity.  Any spec edit changes it.
    """
    lines = ["prunekit-arch-v1",
             f"input={spec.input_shape[0]},{spec.input_shape[1]}",
             f"classes={spec.class_count}"]
    for l in spec.layers:
        parts = [l.name, l.kind]
        for f in _KIND_FIELDS[l.kind]:
            v = getattr(l, f)
            if f in _FLOAT_FIELDS:
                v = _f64hex(float(v))
            elif isinstance(v, bool):
                v = int(v)
            parts.append(f"{f}={v}")
        lines.append("|".join(parts))
    for label in sorted(spec.conv_index):
        lines.append(f"index|{label}={spec.conv_index[label]}")
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Presets

CNN14_BLOCK_WIDTHS = ((64, 64), (128, 128), (256, 256), (512, 512),
                      (1024, 1024), (2048, 2048))


def build_cnn14_preset() -> ModelSpec:
    """Baseline CNN14 audio-tagging graph.

    Six conv blocks of [Conv3x3(no bias) -> BN -> ReLU] x 2 with widths
    64..2048, AvgPool 2x2 after blocks 1-5, global (mean+max) pooling,
    then Dense 2048->2048 + ReLU and Dense 2048->527 + Sigmoid on a
    (1000, 64) log-mel input.
    """
    layers = [input_bn("bn0", bins=64)]
    conv_index = {}
    in_ch = 1
    ci = 0
    for b, widths in enumerate(CNN14_BLOCK_WIDTHS, start=1):
        for w in widths:
            ci += 1
            label = f"C{ci}"
            layers.append(conv2d(label, in_ch, w, kernel=3, has_bias=False))
            layers.append(batchnorm(f"{label}.bn", w))
            layers.append(relu(f"{label}.relu"))
            conv_index[label] = label
            in_ch = w
        if b < 6:
            layers.append(avgpool(f"pool{b}"))
    layers.append(global_pool("global_pool"))
    layers.append(dense("fc1", 2048, 2048, has_bias=True))
    layers.append(relu("fc1.relu"))
    layers.append(dense("fc2", 2048, 527, has_bias=True))
    layers.append(sigmoid("output"))
    return ModelSpec(layers=tuple(layers), input_shape=(1000, 64),
                     class_count=527, conv_index=conv_index)


def build_toy_cnn(classes: int = 4, frames: int = 100, bins: int = 64,
                  channels: tuple[int, ...] = (8, 16), kernel: int = 3,
                  conv_bias: bool = False) -> ModelSpec:
    """Small CNN in the same idiom as the CNN14 preset, for desk-scale runs."""
    layers = [input_bn("bn0", bins=bins)]
    conv_index = {}
    in_ch = 1
    for i, w in enumerate(channels, start=1):
        label = f"C{i}"
        layers.append(conv2d(label, in_ch, w, kernel=kernel, has_bias=conv_bias))
        layers.append(batchnorm(f"{label}.bn", w))
        layers.append(relu(f"{label}.relu"))
        layers.append(avgpool(f"pool{i}"))
        conv_index[label] = label
        in_ch = w
    layers.append(global_pool("global_pool"))
    layers.append(dense("fc", in_ch, classes, has_bias=True))
    layers.append(sigmoid("output"))
    return ModelSpec(layers=tuple(layers), input_shape=(frames, bins),
                     class_count=classes, conv_index=conv_index)
