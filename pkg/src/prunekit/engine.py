"""Dense-tensor forward/backward engine for the layer kinds in ``graph``.

Activations are rank-4 arrays in (batch, channel, time, freq) order,
32-bit by default; a 64-bit build of the same formulas is selected with
``dtype=np.float64`` (used by the gradient verification suite).

Convolution is realized as explicit patch gathering followed by dot
products (one per output position), with zero padding outside bounds.
Scalar reductions (loss) accumulate in float64 with a fixed summation
order so results are reproducible run to run.
"""

from __future__ import annotations

import numpy as np

from .errors import MissingWeights, NonPositiveVariance, ShapeMismatch
from .graph import ModelSpec, param_tensors

BN_MOMENTUM = 0.9  # running = momentum * running + (1 - momentum) * batch


def _pad_same(x: np.ndarray, k: int) -> np.ndarray:
    lo, hi = (k - 1) // 2, k // 2
    return np.pad(x, ((0, 0), (0, 0), (lo, hi), (lo, hi)))


def _gather_patches(x: np.ndarray, k: int) -> np.ndarray:
    """All (c x k x k) input patches under 'same' zero padding.

    Returns (batch, time, freq, c*k*k); one row per output position.
    """
    xp = _pad_same(x, k)
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    b, c, t, f = win.shape[:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b, t, f, c * k * k)


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None):
    """'same'-padded stride-1 convolution; weight shaped (n, c, k, k)."""
    n, c, k, _ = weight.shape
    if x.ndim != 4 or x.shape[1] != c:
        raise ShapeMismatch(f"conv input {x.shape} does not provide {c} channels")
    cols = _gather_patches(x, k)
    y = cols @ weight.reshape(n, -1).T          # dot product per position
    if bias is not None:
        y = y + bias
    return y.transpose(0, 3, 1, 2), cols


def conv2d_backward(go: np.ndarray, cols: np.ndarray, weight: np.ndarray,
                    x_shape: tuple, has_bias: bool):
    n, c, k, _ = weight.shape
    b, _, t, f = go.shape
    gom = go.transpose(1, 0, 2, 3).reshape(n, -1)       # (n, B*T*F)
    dw = (gom @ cols.reshape(-1, c * k * k)).reshape(weight.shape)
    db = go.sum(axis=(0, 2, 3)) if has_bias else None
    dcols = (gom.T @ weight.reshape(n, -1)).reshape(b, t, f, c, k, k)
    lo = (k - 1) // 2
    dxp = np.zeros((b, c, t + k - 1, f + k - 1), dtype=go.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + t, j:j + f] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    dx = dxp[:, :, lo:lo + t, lo:lo + f]
    return dx, dw, db


def _bn_axes(kind: str) -> tuple:
    # BatchNorm: stats per channel; InputBN: stats per frequency bin.
    return (0, 2, 3) if kind == "BatchNorm" else (0, 1, 2)


def _bn_bshape(kind: str, x: np.ndarray) -> tuple:
    return (1, -1, 1, 1) if kind == "BatchNorm" else (1, 1, 1, -1)


def bn_forward(x: np.ndarray, state: dict, mode: str, kind: str = "BatchNorm"):
    """Batch normalization; eval uses running stats, train uses batch stats
    and updates the running estimates in place with momentum."""
    axes = _bn_axes(kind)
    bshape = _bn_bshape(kind, x)
    gamma = state["gamma"].reshape(bshape)
    beta = state["beta"].reshape(bshape)
    eps = state["eps"]
    if mode == "eval":
        var = state["running_var"]
        if np.any(var <= 0):
            raise NonPositiveVariance("running variance must be strictly positive")
        mean = state["running_mean"].reshape(bshape)
        inv = 1.0 / np.sqrt(var.reshape(bshape) + eps)
        xhat = (x - mean) * inv
    else:
        mean = x.mean(axis=axes, keepdims=True)
        var = x.var(axis=axes, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x - mean) * inv
        m = BN_MOMENTUM
        state["running_mean"][...] = m * state["running_mean"] + (1 - m) * mean.ravel()
        state["running_var"][...] = m * state["running_var"] + (1 - m) * var.ravel()
    y = gamma * xhat + beta
    cache = {"xhat": xhat, "inv": inv, "gamma": gamma, "axes": axes, "mode": mode}
    return y, cache


def bn_backward(go: np.ndarray, cache: dict):
    xhat, inv, gamma, axes = cache["xhat"], cache["inv"], cache["gamma"], cache["axes"]
    dgamma = (go * xhat).sum(axis=axes)
    dbeta = go.sum(axis=axes)
    if cache["mode"] == "eval":
        dx = go * gamma * inv
    else:
        n = go.size // dgamma.size
        dxhat = go * gamma
        dx = (inv / n) * (n * dxhat
                          - dxhat.sum(axis=axes, keepdims=True)
                          - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True))
    return dx, dgamma, dbeta


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def avgpool2x2(x: np.ndarray) -> np.ndarray:
    b, c, t, f = x.shape
    t2, f2 = t // 2, f // 2
    if t2 < 1 or f2 < 1:
        raise ShapeMismatch(f"avgpool on {x.shape}: spatial dims too small")
    return x[:, :, :2 * t2, :2 * f2].reshape(b, c, t2, 2, f2, 2).mean(axis=(3, 5))


def avgpool2x2_backward(go: np.ndarray, x_shape: tuple) -> np.ndarray:
    b, c, t, f = x_shape
    t2, f2 = go.shape[2], go.shape[3]
    dx = np.zeros(x_shape, dtype=go.dtype)
    g = np.repeat(np.repeat(go, 2, axis=2), 2, axis=3) / 4
    dx[:, :, :2 * t2, :2 * f2] = g
    return dx


def global_pool(x: np.ndarray):
    """Mean over frequency, then (mean over time + max over time)."""
    m = x.mean(axis=3)                      # (B, C, T)
    out = m.mean(axis=2) + m.max(axis=2)
    cache = {"argmax": m.argmax(axis=2), "t": x.shape[2], "f": x.shape[3]}
    return out, cache


def global_pool_backward(go: np.ndarray, cache: dict) -> np.ndarray:
    t, f = cache["t"], cache["f"]
    b, c = go.shape
    dm = np.broadcast_to(go[:, :, None] / t, (b, c, t)).copy()
    dmax = np.zeros((b, c, t), dtype=go.dtype)
    np.put_along_axis(dmax, cache["argmax"][:, :, None], go[:, :, None], axis=2)
    dm += dmax
    return np.broadcast_to(dm[:, :, :, None] / f, (b, c, t, f)).astype(go.dtype, copy=True)


def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None):
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"dense input {x.shape} does not match weight {weight.shape}")
    y = x @ weight.T
    if bias is not None:
        y = y + bias
    return y


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bce_from_logits(z: np.ndarray, targets: np.ndarray):
    """Mean binary cross-entropy of sigmoid(z) against multi-hot targets.

    Computed from logits for stability; the mean accumulates in float64.
    """
    elems = np.logaddexp(0, -z) + (1 - targets) * z
    return float(np.mean(elems, dtype=np.float64))


class Runtime:
    """Binds a ModelSpec to parameter arrays and runs forward/backward.

    Parameters are copied (and cast to ``dtype``) at construction; train-mode
    batch norm updates the runtime's running statistics in place.
    """

    def __init__(self, spec: ModelSpec, params: dict[str, np.ndarray],
                 dtype=np.float32):
        self.spec = spec
        self.dtype = dtype
        self.params: dict[str, np.ndarray] = {}
        for pt in param_tensors(spec):
            if pt.name not in params:
                raise MissingWeights(f"checkpoint does not bind tensor {pt.name}")
            arr = np.asarray(params[pt.name], dtype=dtype)
            if arr.shape != pt.shape:
                raise ShapeMismatch(
                    f"tensor {pt.name}: shape {arr.shape} != spec shape {pt.shape}")
            self.params[pt.name] = arr.copy()

    def _bn_state(self, name: str, eps: float) -> dict:
        return {"gamma": self.params[f"{name}.gamma"],
                "beta": self.params[f"{name}.beta"],
                "running_mean": self.params[f"{name}.running_mean"],
                "running_var": self.params[f"{name}.running_var"],
                "eps": eps}

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 3:
            x = x[:, None]                  # (B, T, F) -> single channel
        if x.ndim != 4:
            raise ShapeMismatch(f"batch must be rank 4, got shape {x.shape}")
        if x.shape[2:] != tuple(self.spec.input_shape):
            raise ShapeMismatch(
                f"input spatial dims {x.shape[2:]} != model input {self.spec.input_shape}")
        return x

    def forward(self, x: np.ndarray, mode: str = "eval",
                capture: tuple | list = (), _caches: list | None = None) -> np.ndarray:
        """Class probabilities for a batch; optionally records per-layer
        outputs for every layer name in ``capture`` (in ``self.captured``)."""
        x = self._check_input(x)
        self.captured: dict[str, np.ndarray] = {}
        record = _caches is not None
        for l in self.spec.layers:
            if l.kind == "Conv2d":
                bias = self.params.get(f"{l.name}.bias") if l.has_bias else None
                x, cols = conv2d_forward(x, self.params[f"{l.name}.weight"], bias)
                if record:
                    _caches.append((l, {"cols": cols, "x_shape": None}))
            elif l.kind in ("BatchNorm", "InputBN"):
                x, cache = bn_forward(x, self._bn_state(l.name, l.epsilon), mode, l.kind)
                if record:
                    _caches.append((l, cache))
            elif l.kind == "ReLU":
                mask = x > 0
                x = x * mask
                if record:
                    _caches.append((l, {"mask": mask}))
            elif l.kind == "AvgPool":
                shape = x.shape
                x = avgpool2x2(x)
                if record:
                    _caches.append((l, {"x_shape": shape}))
            elif l.kind == "GlobalPool":
                x, cache = global_pool(x)
                if record:
                    _caches.append((l, cache))
            elif l.kind == "Dense":
                inp = x
                bias = self.params.get(f"{l.name}.bias") if l.has_bias else None
                x = dense_forward(x, self.params[f"{l.name}.weight"], bias)
                if record:
                    _caches.append((l, {"x": inp}))
            elif l.kind == "Sigmoid":
                if record:
                    _caches.append((l, {"z": x}))   # keep logits for the loss head
                x = sigmoid(x)
            if l.name in capture:
                self.captured[l.name] = x.copy()
        return x

    def loss_and_grads(self, x: np.ndarray, targets: np.ndarray, mode: str = "train"):
        """Mean BCE loss plus exact analytic gradients for every parameter."""
        targets = np.asarray(targets, dtype=self.dtype)
        caches: list = []
        probs = self.forward(x, mode=mode, _caches=caches)
        if targets.shape != probs.shape:
            raise ShapeMismatch(
                f"targets {targets.shape} do not match outputs {probs.shape}")
        if self.spec.layers[-1].kind != "Sigmoid":
            raise ShapeMismatch("loss head requires a final Sigmoid layer")
        z = caches[-1][1]["z"]
        loss = bce_from_logits(z, targets)
        grads: dict[str, np.ndarray] = {}
        # BCE + sigmoid combine to (p - t) / N at the pre-activation.
        go = ((probs - targets) / probs.size).astype(self.dtype)
        for l, cache in reversed(caches[:-1]):
            if l.kind == "Conv2d":
                w = self.params[f"{l.name}.weight"]
                go, dw, db = conv2d_backward(go, cache["cols"], w, None, l.has_bias)
                grads[f"{l.name}.weight"] = dw
                if l.has_bias:
                    grads[f"{l.name}.bias"] = db
            elif l.kind in ("BatchNorm", "InputBN"):
                go, dgamma, dbeta = bn_backward(go, cache)
                grads[f"{l.name}.gamma"] = dgamma
                grads[f"{l.name}.beta"] = dbeta
            elif l.kind == "ReLU":
                go = go * cache["mask"]
            elif l.kind == "AvgPool":
                go = avgpool2x2_backward(go, cache["x_shape"])
            elif l.kind == "GlobalPool":
                go = global_pool_backward(go, cache)
            elif l.kind == "Dense":
                w = self.params[f"{l.name}.weight"]
                grads[f"{l.name}.weight"] = go.T @ cache["x"]
                if l.has_bias:
                    grads[f"{l.name}.bias"] = go.sum(axis=0)
                go = go @ w
        return loss, grads


def forward(spec: ModelSpec, params: dict[str, np.ndarray], batch: np.ndarray,
            mode: str = "eval", capture: tuple | list = (), dtype=np.float32):
    """One-shot forward pass; returns (probabilities, captured feature maps)."""
    rt = Runtime(spec, params, dtype=dtype)
    y = rt.forward(batch, mode=mode, capture=capture)
    return y, rt.captured


def backward(spec: ModelSpec, params: dict[str, np.ndarray], batch: np.ndarray,
             targets: np.ndarray, mode: str = "train", dtype=np.float32):
    """One-shot loss + gradients under mean binary cross-entropy."""
    rt = Runtime(spec, params, dtype=dtype)
    return rt.loss_and_grads(batch, targets, mode=mode)
