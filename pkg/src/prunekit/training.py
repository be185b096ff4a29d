"""Desk-scale fine-tuning: optimizers, mixup, spectrogram masking.

The reference path is single-threaded and bit-deterministic for a fixed
seed; all randomness flows from one generator in a fixed draw order.
"""

from __future__ import annotations

import dataclasses
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .engine import Runtime
from .errors import AllClassesEmpty, DivergedLoss, EmptyDataset
from .graph import ModelSpec, param_tensors
from .metrics import mean_average_precision
from .storage import Checkpoint, Dataset


@dataclass(frozen=True)
class MaskConfig:
    time_masks: int = 0
    max_time_width: int = 0
    freq_masks: int = 0
    max_freq_width: int = 0


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 200
    batch_size: int = 16
    learning_rate: float = 1e-3
    optimizer: str = "adam"            # "adam" | "sgd"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    sgd_momentum: float = 0.9
    mixup_alpha: float = 0.0
    masking: MaskConfig = field(default_factory=MaskConfig)
    seed: int = 0
    eval_fraction: float = 0.2
    bn_mode: str = "train"             # batch-norm mode during fine-tuning

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class TrainLog:
    points: list[tuple[int, float, float]]   # (iteration, loss, mAP)
    wall_time: float
    config: dict

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("iteration,loss,map\n")
        for it, loss, m in self.points:
            out.write(f"{it},{float(loss)!r},{float(m)!r}\n")
        return out.getvalue()


def mix_batch(inputs: np.ndarray, targets: np.ndarray, lam: np.ndarray,
              perm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Linear mix of each sample with its shuffled partner."""
    li = lam.reshape(-1, *([1] * (inputs.ndim - 1))).astype(inputs.dtype)
    lt = lam.reshape(-1, 1).astype(targets.dtype)
    return (li * inputs + (1 - li) * inputs[perm],
            lt * targets + (1 - lt) * targets[perm])


def mixup(inputs: np.ndarray, targets: np.ndarray, alpha: float,
          rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Beta(alpha, alpha) mixup over a shuffled pairing; alpha = 0 is identity."""
    if alpha == 0:
        return inputs, targets
    lam = rng.beta(alpha, alpha, size=len(inputs))
    perm = rng.permutation(len(inputs))
    return mix_batch(inputs, targets, lam, perm)


def spec_mask(inputs: np.ndarray, masking: MaskConfig,
              rng: np.random.Generator) -> np.ndarray:
    """Zero random time/frequency stripes per sample (SpecAugment-style)."""
    if (masking.time_masks * masking.max_time_width == 0
            and masking.freq_masks * masking.max_freq_width == 0):
        return inputs
    x = inputs.copy()
    t, f = x.shape[2], x.shape[3]
    for b in range(len(x)):
        for _ in range(masking.time_masks):
            w = int(rng.integers(0, masking.max_time_width + 1))
            start = int(rng.integers(0, t - w + 1))
            x[b, :, start:start + w, :] = 0
        for _ in range(masking.freq_masks):
            w = int(rng.integers(0, masking.max_freq_width + 1))
            start = int(rng.integers(0, f - w + 1))
            x[b, :, :, start:start + w] = 0
    return x


class Adam:
    def __init__(self, lr: float, beta1: float, beta2: float, eps: float):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        for name in grads:
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m[...] = self.b1 * m + (1 - self.b1) * g
            v[...] = self.b2 * v + (1 - self.b2) * g * g
            mhat = m / (1 - self.b1 ** self.t)
            vhat = v / (1 - self.b2 ** self.t)
            params[name] -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(params[name].dtype)


class SGD:
    def __init__(self, lr: float, momentum: float):
        self.lr, self.mu = lr, momentum
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        for name in grads:
            v = self.v.setdefault(name, np.zeros_like(grads[name]))
            v[...] = self.mu * v + grads[name]
            params[name] -= (self.lr * v).astype(params[name].dtype)


def _make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    if cfg.optimizer == "sgd":
        return SGD(cfg.learning_rate, cfg.sgd_momentum)
    raise ValueError(f"unknown optimizer {cfg.optimizer!r}")


def evaluate(spec: ModelSpec, ckpt: Checkpoint, x: np.ndarray, y: np.ndarray):
    rt = Runtime(spec, ckpt.tensors)
    probs = rt.forward(x, mode="eval")
    return mean_average_precision(probs, y)


def finetune(spec: ModelSpec, weights: Checkpoint, dataset: Dataset,
             config: TrainConfig) -> tuple[Checkpoint, TrainLog]:
    """Train with BCE loss, logging held-out mAP at a fixed cadence.

    Deterministic for a given (seed, config, dataset); returns the final
    checkpoint (running BN statistics included) and the train log.
    """
    t0 = time.monotonic()
    if len(dataset) == 0:
        raise EmptyDataset("cannot fine-tune on an empty dataset")
    x, y = dataset.load_all()
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(len(x))
    n_eval = max(1, int(len(x) * config.eval_fraction)) if config.eval_fraction > 0 else 0
    eval_idx, train_idx = perm[:n_eval], perm[n_eval:]
    if len(train_idx) == 0:
        raise EmptyDataset("eval split leaves no training clips")

    rt = Runtime(spec, weights.tensors)
    if config.iterations == 0:
        return weights.copy(), TrainLog([], time.monotonic() - t0,
                                        dataclasses.asdict(config))
    trainable = {pt.name for pt in param_tensors(spec) if pt.trainable}
    opt = _make_optimizer(config)
    cadence = max(1, config.iterations // 50)
    points: list[tuple[int, float, float]] = []

    def heldout_map() -> float:
        if n_eval == 0:
            return float("nan")
        probs = rt.forward(x[eval_idx], mode="eval")
        try:
            return float(mean_average_precision(probs, y[eval_idx]).map)
        except AllClassesEmpty:
            return float("nan")

    for it in range(1, config.iterations + 1):
        batch = rng.integers(0, len(train_idx), config.batch_size)
        xb, yb = x[train_idx[batch]], y[train_idx[batch]]
        xb, yb = mixup(xb, yb, config.mixup_alpha, rng)
        xb = spec_mask(xb, config.masking, rng)
        loss, grads = rt.loss_and_grads(xb, yb, mode=config.bn_mode)
        if not np.isfinite(loss):
            raise DivergedLoss(f"loss became {loss} at iteration {it}")
        opt.step(rt.params, {k: v for k, v in grads.items() if k in trainable})
        if it % cadence == 0 or it == config.iterations:
            points.append((it, loss, heldout_map()))

    final = Checkpoint.for_spec(spec, rt.params)
    return final, TrainLog(points, time.monotonic() - t0, dataclasses.asdict(config))
