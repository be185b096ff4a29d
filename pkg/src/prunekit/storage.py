"""Bit-exact checkpoint and dataset persistence.

Checkpoint = two files: ``<prefix>.manifest.json`` (tensor table bound to a
spec fingerprint) and ``<prefix>.weights.bin`` (contiguous little-endian
float32, tensors in manifest order, row-major).  Datasets are an
``index.tsv`` plus one raw ``.f32`` file per clip, shaped (time, bins).
Files are written atomically (temp + rename).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import CorruptBlob, EmptyDataset, FingerprintMismatch, UnknownVersion
from .graph import ModelSpec, fingerprint, param_tensors

FORMAT_VERSION = 1
_F32 = np.dtype("<f4")


@dataclass
class Checkpoint:
    model_fingerprint: str
    tensors: dict[str, np.ndarray]  # insertion order = blob order

    @classmethod
    def for_spec(cls, spec: ModelSpec, tensors: dict[str, np.ndarray]) -> "Checkpoint":
        """Bind arrays to a spec, validating coverage and shapes; tensors are
        stored as float32 copies in canonical order."""
        ordered: dict[str, np.ndarray] = {}
        for pt in param_tensors(spec):
            if pt.name not in tensors:
                raise FingerprintMismatch(f"missing tensor {pt.name}")
            arr = np.ascontiguousarray(tensors[pt.name], dtype=_F32)
            if arr.shape != pt.shape:
                raise FingerprintMismatch(
                    f"tensor {pt.name}: shape {arr.shape} != spec shape {pt.shape}")
            ordered[pt.name] = arr
        extra = set(tensors) - set(ordered)
        if extra:
            raise FingerprintMismatch(f"tensors not in spec: {sorted(extra)}")
        return cls(model_fingerprint=fingerprint(spec), tensors=ordered)

    def element_count(self) -> int:
        return sum(a.size for a in self.tensors.values())

    def copy(self) -> "Checkpoint":
        return Checkpoint(self.model_fingerprint,
                          {k: v.copy() for k, v in self.tensors.items()})


def _atomic_write(path: str, data: bytes) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def save_checkpoint(ckpt: Checkpoint, prefix: str) -> tuple[str, str]:
    """Write ``<prefix>.manifest.json`` + ``<prefix>.weights.bin``."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in ckpt.tensors.items():
        raw = np.ascontiguousarray(arr, dtype=_F32).tobytes()
        entries.append({"name": name, "dtype": "f32", "shape": list(arr.shape),
                        "byte_offset": offset, "byte_length": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    manifest = {"format_version": FORMAT_VERSION,
                "model_fingerprint": ckpt.model_fingerprint,
                "tensors": entries}
    mpath, bpath = f"{prefix}.manifest.json", f"{prefix}.weights.bin"
    _atomic_write(bpath, b"".join(blobs))
    _atomic_write(mpath, (json.dumps(manifest, indent=2) + "\n").encode("utf-8"))
    return mpath, bpath


def load_checkpoint(prefix: str, spec: ModelSpec) -> Checkpoint:
    """Read and validate a checkpoint against ``spec``.

    Raises UnknownVersion, FingerprintMismatch (spec binding violated) or
    CorruptBlob (byte-level inconsistency).
    """
    with open(f"{prefix}.manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise UnknownVersion(f"format_version {manifest.get('format_version')!r}")
    if manifest.get("model_fingerprint") != fingerprint(spec):
        raise FingerprintMismatch("checkpoint was written for a different spec")
    with open(f"{prefix}.weights.bin", "rb") as fh:
        blob = fh.read()

    expected = {pt.name: pt.shape for pt in param_tensors(spec)}
    seen = set()
    spans = []
    tensors: dict[str, np.ndarray] = {}
    for e in manifest["tensors"]:
        name = e["name"]
        if name in seen:
            raise CorruptBlob(f"tensor {name} listed twice")
        seen.add(name)
        if e.get("dtype") != "f32":
            raise UnknownVersion(f"tensor {name}: dtype {e.get('dtype')!r}")
        if name not in expected:
            raise FingerprintMismatch(f"tensor {name} not in spec")
        shape = tuple(e["shape"])
        if shape != expected[name]:
            raise FingerprintMismatch(
                f"tensor {name}: shape {shape} != spec shape {expected[name]}")
        off, length = e["byte_offset"], e["byte_length"]
        if length != int(np.prod(shape, dtype=np.int64)) * 4:
            raise CorruptBlob(f"tensor {name}: byte_length {length} != shape size")
        if off < 0 or off + length > len(blob):
            raise CorruptBlob(f"tensor {name}: span [{off}, {off + length}) outside blob")
        spans.append((off, off + length, name))
        tensors[name] = np.frombuffer(blob, dtype=_F32, count=length // 4,
                                      offset=off).reshape(shape).copy()
    missing = set(expected) - seen
    if missing:
        raise FingerprintMismatch(f"tensors missing from manifest: {sorted(missing)}")
    spans.sort()
    for (s0, e0, n0), (s1, _, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise CorruptBlob(f"tensors {n0} and {n1} overlap")
    ordered = {pt.name: tensors[pt.name] for pt in param_tensors(spec)}
    return Checkpoint(model_fingerprint=manifest["model_fingerprint"], tensors=ordered)


def init_random(spec: ModelSpec, seed: int) -> Checkpoint:
    """Deterministic seeded initialization: Glorot-uniform conv/dense weights,
    zero biases, identity batch norm (gamma 1, beta 0, mean 0, var 1)."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for pt in param_tensors(spec):
        kind = pt.name.rsplit(".", 1)[1]
        if kind == "weight":
            if len(pt.shape) == 4:
                n, c, k, _ = pt.shape
                fan_in, fan_out = c * k * k, n * k * k
            else:
                fan_out, fan_in = pt.shape
            bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
            tensors[pt.name] = rng.uniform(-bound, bound, pt.shape).astype(_F32)
        elif kind in ("bias", "beta", "running_mean"):
            tensors[pt.name] = np.zeros(pt.shape, dtype=_F32)
        elif kind in ("gamma", "running_var"):
            tensors[pt.name] = np.ones(pt.shape, dtype=_F32)
    return Checkpoint.for_spec(spec, tensors)


# ---------------------------------------------------------------------------
# Dataset

@dataclass(frozen=True)
class ToyDatasetConfig:
    clips: int = 100
    classes: int = 4
    frames: int = 100
    bins: int = 64
    band_gain: float = 1.0
    noise: float = 0.25
    active_prob: float = 0.5


@dataclass
class Dataset:
    root: str
    entries: list[tuple[str, np.ndarray]]  # (clip path relative to root, multi-hot labels)
    bins: int

    @property
    def class_count(self) -> int:
        return len(self.entries[0][1]) if self.entries else 0

    def __len__(self) -> int:
        return len(self.entries)

    def load_clip(self, i: int) -> np.ndarray:
        raw = np.fromfile(os.path.join(self.root, self.entries[i][0]), dtype=_F32)
        if raw.size % self.bins:
            raise CorruptBlob(f"clip {self.entries[i][0]}: size not divisible by bins")
        return raw.reshape(-1, self.bins)

    def load_all(self) -> tuple[np.ndarray, np.ndarray]:
        """All clips as a (N, 1, time, bins) batch plus the (N, classes) labels.
        Clips must share one time length."""
        if not self.entries:
            raise EmptyDataset("dataset has no clips")
        clips = [self.load_clip(i) for i in range(len(self.entries))]
        t0 = clips[0].shape[0]
        if any(c.shape[0] != t0 for c in clips):
            raise CorruptBlob("clips have differing time lengths")
        x = np.stack(clips)[:, None, :, :]
        y = np.stack([lab for _, lab in self.entries]).astype(np.float32)
        return x, y

    def content_fingerprint(self) -> str:
        """Hash over the ordered clip file list and file contents."""
        h = hashlib.sha256()
        for rel, _ in self.entries:
            h.update(rel.encode("utf-8"))
            with open(os.path.join(self.root, rel), "rb") as fh:
                h.update(hashlib.sha256(fh.read()).digest())
        return h.hexdigest()


def save_dataset(ds: Dataset, clips: list[np.ndarray]) -> None:
    os.makedirs(os.path.join(ds.root, "clips"), exist_ok=True)
    lines = []
    for (rel, labels), clip in zip(ds.entries, clips):
        _atomic_write(os.path.join(ds.root, rel),
                      np.ascontiguousarray(clip, dtype=_F32).tobytes())
        lines.append(rel + "\t" + ",".join(str(int(v)) for v in labels))
    _atomic_write(os.path.join(ds.root, "index.tsv"),
                  ("\n".join(lines) + "\n").encode("utf-8"))


def load_dataset(index_path: str, bins: int = 64) -> Dataset:
    # The on-disk clip format carries no header; the frequency dimension is
    # fixed at 64 bins unless the caller states otherwise.
    root = os.path.dirname(os.path.abspath(index_path))
    entries = []
    with open(index_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            rel, labels = line.split("\t")
            entries.append((rel, np.array([int(v) for v in labels.split(",")], dtype=np.int8)))
    if not entries:
        raise EmptyDataset(f"{index_path} lists no clips")
    return Dataset(root=root, entries=entries, bins=bins)


def generate_toy_dataset(out_dir: str, config: ToyDatasetConfig = ToyDatasetConfig(),
                         seed: int = 0) -> Dataset:
    """Synthetic multi-label spectrogram dataset.

    Class c is present iff a band-limited energy pattern occupies the c-th
    contiguous frequency band for a random time segment; gaussian noise is
    added everywhere.  Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    cfg = config
    band_edges = np.linspace(0, cfg.bins, cfg.classes + 1).astype(int)
    entries = []
    clips = []
    for i in range(cfg.clips):
        labels = (rng.random(cfg.classes) < cfg.active_prob).astype(np.int8)
        clip = rng.normal(0.0, cfg.noise, size=(cfg.frames, cfg.bins))
        for c in range(cfg.classes):
            if not labels[c]:
                continue
            seg = int(rng.integers(cfg.frames // 2, cfg.frames + 1))
            start = int(rng.integers(0, cfg.frames - seg + 1))
            gain = cfg.band_gain * rng.uniform(0.8, 1.2)
            clip[start:start + seg, band_edges[c]:band_edges[c + 1]] += gain
        entries.append((os.path.join("clips", f"clip{i:04d}.f32"), labels))
        clips.append(clip.astype(_F32))
    ds = Dataset(root=os.path.abspath(out_dir), entries=entries, bins=cfg.bins)
    save_dataset(ds, clips)
    return ds
