"""Neural-network primitives built on the tape: conv, pooling, normalization,
embedding, dropout, attention, and the cross-entropy loss."""

from __future__ import annotations

import numpy as np

from .tensor import ShapeMismatch, Tensor, _record, as_tensor


def conv2d(x, w, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D convolution (really cross-correlation) with zero padding.

    x: (N, Cin, H, W), w: (Cout, Cin, kh, kw) -> (N, Cout, OH, OW).
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"conv2d: input {x.shape} vs kernel {w.shape}")
    n, cin, h, wid = x.shape
    cout, _, kh, kw = w.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wid + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ShapeMismatch(f"conv2d: kernel {w.shape} larger than padded input {x.shape}")
    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((n, oh, ow, cout), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            xs = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
            out += np.tensordot(xs, w.data[:, :, i, j], axes=([1], [1]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward(g):
        gt = g.transpose(0, 2, 3, 1)  # (N, OH, OW, Cout)
        gw = np.zeros_like(w.data)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                xs = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
                gw[:, :, i, j] = np.tensordot(gt, xs, axes=([0, 1, 2], [0, 2, 3]))
                gxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += (
                    np.tensordot(gt, w.data[:, :, i, j], axes=([3], [0])).transpose(0, 3, 1, 2)
                )
        gx = gxp[:, :, padding : padding + h, padding : padding + wid] if padding else gxp
        return gx, gw

    return _record("conv2d", (x, w), out, backward)


def maxpool2(x) -> Tensor:
    """2x2 max pooling with stride 2; odd trailing rows/columns are dropped."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    windows = (
        x.data[:, :, : 2 * h2, : 2 * w2]
        .reshape(n, c, h2, 2, w2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h2, w2, 4)
    )
    idx = windows.argmax(axis=-1)  # first max wins on ties
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gw = np.zeros_like(windows)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gx = np.zeros_like(x.data)
        gx[:, :, : 2 * h2, : 2 * w2] = (
            gw.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
        )
        return (gx,)

    return _record("maxpool2", (x,), out, backward)


def global_avg_pool(x) -> Tensor:
    """(N, C, H, W) -> (N, C) spatial mean."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), dtype=np.float64).astype(x.dtype)

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).astype(x.dtype),)

    return _record("gap", (x,), out, backward)


def softmax(x, axis: int = -1) -> Tensor:
    """Numerically stable softmax; rows that are entirely -inf come out all-zero."""
    x = as_tensor(x)
    m = np.max(x.data, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(x.data - m_safe)
    s = e.sum(axis=axis, keepdims=True, dtype=np.float64)
    out = np.where(s > 0, e / np.maximum(s, np.finfo(np.float64).tiny), 0.0).astype(x.dtype)

    def backward(g):
        inner = (g * out).sum(axis=axis, keepdims=True, dtype=np.float64).astype(x.dtype)
        return (out * (g - inner),)

    return _record("softmax", (x,), out, backward)


def layer_norm(x, axis=-1, eps: float = 1e-5) -> Tensor:
    """Normalize to zero mean, unit variance over ``axis`` (int or tuple).

    Affine gain/bias, when wanted, are applied by the caller with mul/add.
    """
    x = as_tensor(x)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    mu = x.data.mean(axis=axes, keepdims=True, dtype=np.float64)
    var = ((x.data.astype(np.float64) - mu) ** 2).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    out = ((x.data - mu) * inv).astype(x.dtype)

    def backward(g):
        g64 = g.astype(np.float64)
        gm = g64.mean(axis=axes, keepdims=True)
        gym = (g64 * out).mean(axis=axes, keepdims=True)
        return (((g64 - gm - out * gym) * inv).astype(x.dtype),)

    return _record("layer_norm", (x,), out, backward)


def embedding(table, ids) -> Tensor:
    """Row lookup: table (V, d), ids int array of any shape -> (*ids.shape, d)."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if np.any(ids < 0) or np.any(ids >= table.shape[0]):
        raise ShapeMismatch(f"embedding: id out of range for table {table.shape}")
    out = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _record("embedding", (table,), out, backward)


def dropout(x, p: float, train: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: at train time scale survivors by 1/(1-p); identity otherwise."""
    x = as_tensor(x)
    if not train or p <= 0.0:
        return x
    if not 0.0 < p < 1.0:
        raise ValueError(f"dropout p {p} outside [0, 1)")
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    out = x.data * mask

    def backward(g):
        return (g * mask,)

    return _record("dropout", (x,), out, backward)


def attention(q, k, v, mask=None) -> Tensor:
    """Scaled dot-product attention: softmax(Q K^T / sqrt(d) + mask) V.

    The additive mask uses -inf for blocked positions; a row with every
    position blocked yields a zero output vector rather than NaN.
    """
    from .tensor import add, matmul, scale, transpose

    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    dk = q.shape[-1]
    perm = list(range(k.data.ndim))
    perm[-1], perm[-2] = perm[-2], perm[-1]
    scores = scale(matmul(q, transpose(k, perm)), 1.0 / np.sqrt(dk))
    if mask is not None:
        scores = add(scores, as_tensor(mask, dtype=scores.dtype))
    weights = softmax(scores, axis=-1)
    return matmul(weights, v)


def cross_entropy(logits, targets, ignore_id: int | None = None) -> Tensor:
    """Mean negative log-likelihood of integer targets under softmax(logits).

    logits: (N, V); targets: (N,) int. Positions equal to ``ignore_id`` are
    excluded from both the sum and the averaging count. Log-sum-exp runs in
    float64 for stability.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeMismatch(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    counted = np.ones_like(targets, dtype=bool) if ignore_id is None else targets != ignore_id
    count = int(counted.sum())
    if count == 0:
        raise ValueError("cross_entropy: every position is ignored")
    z = logits.data.astype(np.float64)
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    safe_targets = np.where(counted, targets, 0)
    nll = lse - z[np.arange(z.shape[0]), safe_targets]
    loss = np.asarray((nll * counted).sum() / count, dtype=logits.dtype)

    def backward(g):
        p = np.exp(z - lse[:, None])
        p[np.arange(z.shape[0]), safe_targets] -= 1.0
        p *= (counted / count)[:, None] * float(g)
        return (p.astype(logits.dtype),)

    return _record("cross_entropy", (logits,), loss, backward)


def log_softmax_np(logits: np.ndarray) -> np.ndarray:
    """Plain-numpy log-softmax over the last axis (decode-time scoring)."""
    z = np.asarray(logits, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))
