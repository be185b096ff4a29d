"""Shared test oracles, independent of the implementation paths they check."""

import numpy as np

from prunekit import engine, graph
from prunekit.graph import (ModelSpec, avgpool, batchnorm, conv2d,
                            dense, global_pool, input_bn, relu, sigmoid)


def oracle_conv2d(x, w, bias=None):
    """Direct-summation convolution: slide the filter, multiply elementwise
    over the (c x k x k) patch, sum.  Zero padding, float64 accumulation."""
    b, c, t, f = x.shape
    n, c2, k, _ = w.shape
    assert c == c2
    lo = (k - 1) // 2
    xp = np.zeros((b, c, t + k - 1, f + k - 1))  # zero padding outside bounds
    xp[:, :, lo:lo + t, lo:lo + f] = x
    out = np.zeros((b, n, t, f))
    for bi in range(b):
        for ni in range(n):
            for ti in range(t):
                for fi in range(f):
                    acc = 0.0
                    for ci in range(c):
                        for i in range(k):
                            for j in range(k):
                                acc += float(xp[bi, ci, ti + i, fi + j]) * float(w[ni, ci, i, j])
                    if bias is not None:
                        acc += float(bias[ni])
                    out[bi, ni, ti, fi] = acc
    return out


def instrumented_mac_forward(spec, params, x):
    """Forward pass that literally counts multiply-accumulates performed by
    the direct conv/dense implementations.  Returns (output, mac_count)."""
    macs = 0
    features = None
    x = np.asarray(x, dtype=np.float64)
    for l in spec.layers:
        if l.kind == "Conv2d":
            w = np.asarray(params[f"{l.name}.weight"], dtype=np.float64)
            bias = params.get(f"{l.name}.bias") if l.has_bias else None
            n, c, k, _ = w.shape
            b, _, t, f = x.shape
            lo = (k - 1) // 2
            xp = np.zeros((b, c, t + k - 1, f + k - 1))
            xp[:, :, lo:lo + t, lo:lo + f] = x
            wmat = w.reshape(n, -1)
            out = np.zeros((b, n, t, f))
            for bi in range(b):
                for ti in range(t):
                    for fi in range(f):
                        patch = xp[bi, :, ti:ti + k, fi:fi + k].ravel()
                        for ni in range(n):
                            out[bi, ni, ti, fi] = np.dot(patch, wmat[ni])
                            macs += patch.size
            if bias is not None:
                out += np.asarray(bias, dtype=np.float64)[None, :, None, None]
            x = out
        elif l.kind in ("BatchNorm", "InputBN"):
            st = {k2: np.asarray(params[f"{l.name}.{k2}"], dtype=np.float64)
                  for k2 in ("gamma", "beta", "running_mean", "running_var")}
            st["eps"] = l.epsilon
            x, _ = engine.bn_forward(x, st, "eval", l.kind)
        elif l.kind == "ReLU":
            x = np.maximum(x, 0)
        elif l.kind == "AvgPool":
            x = engine.avgpool2x2(x)
        elif l.kind == "GlobalPool":
            x, _ = engine.global_pool(x)
        elif l.kind == "Dense":
            w = np.asarray(params[f"{l.name}.weight"], dtype=np.float64)
            out = np.zeros((x.shape[0], w.shape[0]))
            for bi in range(x.shape[0]):
                for ui in range(w.shape[0]):
                    out[bi, ui] = np.dot(x[bi], w[ui])
                    macs += w.shape[1]
            if l.has_bias:
                out += np.asarray(params[f"{l.name}.bias"], dtype=np.float64)
            x = out
        elif l.kind == "Sigmoid":
            x = 1.0 / (1.0 + np.exp(-x))
    return x, macs


def random_small_spec(rng, max_blocks=3):
    """Random valid conv net: blocks of conv(+BN)(+ReLU)(+pool), then
    GlobalPool -> Dense -> Sigmoid.  Kept small enough to run instrumented."""
    frames = int(rng.integers(8, 17))
    bins = int(rng.integers(4, 9))
    classes = int(rng.integers(2, 5))
    layers = []
    if rng.random() < 0.5:
        layers.append(input_bn("bn0", bins=bins))
    t, f = frames, bins
    ch = 1
    for i in range(1, int(rng.integers(1, max_blocks + 1)) + 1):
        out_ch = int(rng.integers(2, 7))
        k = int(rng.choice([1, 3]))
        layers.append(conv2d(f"C{i}", ch, out_ch, kernel=k,
                             has_bias=bool(rng.random() < 0.5)))
        if rng.random() < 0.8:
            layers.append(batchnorm(f"C{i}.bn", out_ch))
        layers.append(relu(f"C{i}.relu"))
        if t >= 4 and f >= 4 and rng.random() < 0.6:
            layers.append(avgpool(f"pool{i}"))
            t, f = t // 2, f // 2
        ch = out_ch
    layers.append(global_pool("global_pool"))
    layers.append(dense("fc", ch, classes, has_bias=True))
    layers.append(sigmoid("output"))
    spec = ModelSpec(layers=tuple(layers), input_shape=(frames, bins),
                     class_count=classes,
                     conv_index={l.name: l.name for l in layers if l.kind == "Conv2d"})
    assert graph.validate(spec) == []
    return spec


def random_dead_filter_spec(rng, max_blocks=3):
    """Random conv net where every conv is followed by BN + ReLU, so a dead
    filter (zero weights, gamma 0, beta -1) can be constructed exactly."""
    while True:
        spec = random_small_spec(rng, max_blocks=max_blocks)
        names = [l.name for l in spec.layers]
        ok = all(f"{c.name}.bn" in names for c in spec.conv_layers())
        if ok:
            return spec


def make_dead_filter(spec, ckpt, conv_name, filter_idx):
    """Zero the filter's weights and its BN response so the post-activation
    map is identically zero; returns a new tensors dict."""
    tensors = {k: v.copy() for k, v in ckpt.tensors.items()}
    tensors[f"{conv_name}.weight"][filter_idx] = 0
    conv = spec.layer(conv_name)
    if conv.has_bias:
        tensors[f"{conv_name}.bias"][filter_idx] = 0
    tensors[f"{conv_name}.bn.gamma"][filter_idx] = 0
    tensors[f"{conv_name}.bn.beta"][filter_idx] = -1
    return tensors


def fd_worst_ratio(spec, ckpt, seed, dtype, h0, tol, floor, mode="train"):
    """Worst (|analytic - central difference| / allowance) over all trainable
    parameters; allowance = tol * max(|analytic|, |fd|, floor).  Values < 1 pass."""
    rng = np.random.default_rng(seed + 100)
    x = rng.normal(size=(2, 1, spec.input_shape[0], spec.input_shape[1])).astype(dtype)
    t = (rng.random((2, spec.class_count)) < 0.5).astype(dtype)
    rt = engine.Runtime(spec, ckpt.tensors, dtype=dtype)
    _, grads = rt.loss_and_grads(x, t, mode=mode)
    trainable = {p.name for p in graph.param_tensors(spec) if p.trainable}
    worst = 0.0
    for name in sorted(trainable):
        base, g = rt.params[name], grads[name]
        for idx in np.ndindex(*base.shape):
            h = h0 * max(1.0, abs(float(base[idx])))
            losses = []
            for sgn in (+1, -1):
                r = engine.Runtime(spec, ckpt.tensors, dtype=dtype)
                r.params[name][idx] += sgn * h
                losses.append(r.loss_and_grads(x, t, mode=mode)[0])
            fd = (losses[0] - losses[1]) / (2 * h)
            a = float(g[idx])
            worst = max(worst, abs(a - fd) / (tol * max(abs(a), abs(fd), floor)))
    return worst


def ap_oracle(scores, labels):
    """Brute-force AP: enumerate every distinct score as a threshold and count
    TP/FP from scratch; sum (dR * P) in descending-threshold order."""
    thresholds = sorted(set(float(s) for s in scores), reverse=True)
    positives = sum(1 for l in labels if l == 1)
    ap = 0.0
    prev_recall = 0.0
    for th in thresholds:
        tp = sum(1 for s, l in zip(scores, labels) if s >= th and l == 1)
        predicted = sum(1 for s in scores if s >= th)
        precision = tp / predicted
        recall = tp / positives
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap
