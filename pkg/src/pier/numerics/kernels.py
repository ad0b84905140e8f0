"""Differentiable kernels.

Each kernel computes its forward value with numpy and registers a closure that
maps the output gradient to input gradients. Fused kernels (attention, fusion
routing, layer norm, cross-entropy) carry hand-derived backward rules; all of
them are covered by the finite-difference suite in ``gradcheck``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..exceptions import DegenerateVectorError, EmptyLossError, InvalidInputError
from .tensor import Tensor, as_tensor, record

COSINE_EPS = 1e-8
MASK_FILL = -1e9


def _t(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x), dtype=dtype)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.isfinite(x).all():
        raise InvalidInputError(f"{what} contains non-finite entries")


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a = _t(a, b if isinstance(b, Tensor) else None)
    b = _t(b, a)
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record(out, (a, b), bw)


def sub(a, b) -> Tensor:
    a = _t(a, b if isinstance(b, Tensor) else None)
    b = _t(b, a)
    out = a.data - b.data

    def bw(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return record(out, (a, b), bw)


def mul(a, b) -> Tensor:
    a = _t(a, b if isinstance(b, Tensor) else None)
    b = _t(b, a)
    out = a.data * b.data

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return record(out, (a, b), bw)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def bw(g):
        return (g * (x.data > 0),)

    return record(out, (x,), bw)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def bw(g):
        return (g * (1 - out * out),)

    return record(out, (x,), bw)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def bw(g):
        return (g * out,)

    return record(out, (x,), bw)


def log(x: Tensor) -> Tensor:
    out = np.log(x.data)

    def bw(g):
        return (g / x.data,)

    return record(out, (x,), bw)


# ---------------------------------------------------------------- reductions / shape

def sum(x: Tensor, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return record(out, (x,), bw)


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([x.shape[a] for a in axes]))
    if n == 0:
        raise InvalidInputError("mean over an empty axis")
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)

    def bw(g):
        return (g.reshape(x.shape),)

    return record(out, (x,), bw)


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(range(x.ndim))[::-1]
    axes = tuple(axes)
    out = x.data.transpose(axes)
    inv = np.argsort(axes)

    def bw(g):
        return (g.transpose(inv),)

    return record(out, (x,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise InvalidInputError("concat of an empty list")
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record(out, tuple(tensors), bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise InvalidInputError("stack of an empty list")
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return record(out, tuple(tensors), bw)


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a = _t(a)
    b = _t(b, a)
    if a.ndim < 2 or b.ndim < 2:
        raise InvalidInputError("matmul needs operands with at least two dimensions")
    out = np.matmul(a.data, b.data)

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return record(out, (a, b), bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` shaped (in, out)."""
    d_in = weight.shape[0]
    if x.shape[-1] != d_in:
        raise InvalidInputError(f"linear expects last dim {d_in}, got {x.shape[-1]}")
    flat = x.data.reshape(-1, d_in)
    out = flat @ weight.data
    if bias is not None:
        out = out + bias.data
    out = out.reshape(x.shape[:-1] + (weight.shape[1],))

    def bw(g):
        g2 = g.reshape(-1, weight.shape[1])
        gx = (g2 @ weight.data.T).reshape(x.shape) if x.requires_grad else None
        gw = flat.T @ g2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, (g2.sum(axis=0) if bias.requires_grad else None)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record(out, inputs, bw)


# ---------------------------------------------------------------- normalisation / probabilities

def _softmax_np(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis`` (max-subtracted)."""
    x = as_tensor(x)
    if x.size == 0:
        raise InvalidInputError("softmax of an empty input")
    _check_finite(x.data, "softmax input")
    p = _softmax_np(x.data, axis)

    def bw(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return record(p, (x,), bw)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def bw(g):
        p = np.exp(out)
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return record(out, (x,), bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    inv_d = 1.0 / x.shape[-1]
    mu = x.data.sum(axis=-1, keepdims=True) * inv_d
    xc = x.data - mu
    var = (xc * xc).sum(axis=-1, keepdims=True) * inv_d
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        gxhat = g * gamma.data
        gx = inv * (gxhat - gxhat.sum(axis=-1, keepdims=True) * inv_d
                    - xhat * ((gxhat * xhat).sum(axis=-1, keepdims=True) * inv_d))
        if not gamma.requires_grad:
            return gx, None, None
        red = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=red), g.sum(axis=red)

    return record(out.astype(x.dtype, copy=False), (x, gamma, beta), bw)


def embedding(ids, weight: Tensor) -> Tensor:
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise InvalidInputError("token id outside the embedding table")
    out = weight.data[ids]

    def bw(g):
        if not weight.requires_grad:
            return (None,)
        gw = np.zeros_like(weight.data)
        np.add.at(gw, ids.reshape(-1), g.reshape(-1, weight.shape[1]))
        return (gw,)

    return record(out, (weight,), bw)


def cross_entropy(logits, targets, mask=None) -> Tensor:
    """Mean over unmasked positions of ``-log softmax(logits)[target]``."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.shape[:-1] != targets.shape:
        raise InvalidInputError(f"targets shape {targets.shape} does not match logits {logits.shape}")
    vocab = logits.shape[-1]
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise InvalidInputError("target id outside the vocabulary")
    mask = np.ones(targets.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != targets.shape:
        raise InvalidInputError("mask shape does not match targets")
    n = int(mask.sum())
    if n == 0:
        raise EmptyLossError("every position is masked; cross-entropy is undefined")

    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    loss = -(picked * mask).sum() / n
    out = np.asarray(loss, dtype=logits.dtype)

    def bw(g):
        p = np.exp(logp)
        np.put_along_axis(p, targets[..., None], np.take_along_axis(p, targets[..., None], -1) - 1, -1)
        return (p * (mask[..., None] * (g / n)),)

    return record(out, (logits,), bw)


# ---------------------------------------------------------------- similarity / pooling

def cosine_similarity(u, v, axis: int = -1) -> Tensor:
    """Cosine along ``axis``; raises when either norm is below ``COSINE_EPS``."""
    u = as_tensor(u)
    v = as_tensor(v, dtype=u.dtype)
    if u.shape != v.shape:
        raise InvalidInputError(f"cosine operands differ in shape: {u.shape} vs {v.shape}")
    nu = np.sqrt((u.data * u.data).sum(axis=axis, keepdims=True))
    nv = np.sqrt((v.data * v.data).sum(axis=axis, keepdims=True))
    if (nu < COSINE_EPS).any() or (nv < COSINE_EPS).any():
        raise DegenerateVectorError("vector norm below cosine epsilon")
    dot = (u.data * v.data).sum(axis=axis, keepdims=True)
    raw = dot / (nu * nv)
    out = np.clip(raw, -1.0, 1.0)
    # gradient is zero where clamping was active
    live = (raw == out).astype(u.dtype)

    def bw(g):
        g = np.expand_dims(g, axis) * live
        gu = g * (v.data / (nu * nv) - raw * u.data / (nu * nu))
        gv = g * (u.data / (nu * nv) - raw * v.data / (nv * nv))
        return gu, gv

    return record(np.squeeze(out, axis=axis), (u, v), bw)


def mean_pool(vectors) -> Tensor:
    """Elementwise mean of a non-empty list of equal-length vectors."""
    if isinstance(vectors, Tensor):
        if vectors.ndim < 1 or vectors.shape[0] == 0:
            raise InvalidInputError("mean_pool of an empty list")
        return mean(vectors, axis=0)
    vectors = list(vectors)
    if not vectors:
        raise InvalidInputError("mean_pool of an empty list")
    lengths = {as_tensor(v).shape for v in vectors}
    if len(lengths) != 1:
        raise InvalidInputError("mean_pool vectors differ in length")
    return mean(stack(vectors, axis=0), axis=0)


# ---------------------------------------------------------------- attention kernels

def multi_head_attention(xq: Tensor, xkv: Tensor, wq: Tensor, bq: Tensor, wk: Tensor, bk: Tensor,
                         wv: Tensor, bv: Tensor, wo: Tensor, bo: Tensor, n_heads: int,
                         mask: np.ndarray | None = None) -> Tensor:
    """Scaled dot-product multi-head attention as a single fused op.

    ``xq`` is (B, Tq, D), ``xkv`` is (B, Tk, D); ``mask`` is a boolean array
    broadcastable to (B, 1, Tq, Tk) with True marking positions that may be
    attended.
    """
    B, Tq, D = xq.shape
    Tk = xkv.shape[1]
    if D % n_heads:
        raise InvalidInputError("d_model must be divisible by n_heads")
    dh = D // n_heads
    scale = float(1.0 / np.sqrt(dh))
    xq2 = xq.data.reshape(-1, D)
    xk2 = xkv.data.reshape(-1, D)

    def heads(a, T):
        return a.reshape(B, T, n_heads, dh).transpose(0, 2, 1, 3)

    q = heads(xq2 @ wq.data + bq.data, Tq)
    k = heads(xk2 @ wk.data + bk.data, Tk)
    v = heads(xk2 @ wv.data + bv.data, Tk)
    s = np.matmul(q, k.transpose(0, 1, 3, 2)) * scale
    if mask is not None:
        s = np.where(mask, s, MASK_FILL).astype(xq.dtype, copy=False)
    p = _softmax_np(s, -1)
    c = np.matmul(p, v).transpose(0, 2, 1, 3).reshape(-1, D)
    out = (c @ wo.data + bo.data).reshape(B, Tq, D)

    def bw(g):
        g2 = g.reshape(-1, D)
        gc = heads(g2 @ wo.data.T, Tq)
        gp = np.matmul(gc, v.transpose(0, 1, 3, 2))
        gv = np.matmul(p.transpose(0, 1, 3, 2), gc)
        gs = p * (gp - (gp * p).sum(axis=-1, keepdims=True)) * scale
        gq = np.matmul(gs, k)
        gk = np.matmul(gs.transpose(0, 1, 3, 2), q)
        gq = gq.transpose(0, 2, 1, 3).reshape(-1, D)
        gk = gk.transpose(0, 2, 1, 3).reshape(-1, D)
        gv = gv.transpose(0, 2, 1, 3).reshape(-1, D)
        gxq = (gq @ wq.data.T).reshape(xq.shape) if xq.requires_grad else None
        gxkv = (gk @ wk.data.T + gv @ wv.data.T).reshape(xkv.shape) if xkv.requires_grad else None
        if not wq.requires_grad:
            # frozen attention block: only the activations need gradients
            return (gxq, gxkv) + (None,) * 8
        return (gxq, gxkv, xq2.T @ gq, gq.sum(0), xk2.T @ gk, gk.sum(0),
                xk2.T @ gv, gv.sum(0), c.T @ g2, g2.sum(axis=0))

    return record(out, (xq, xkv, wq, bq, wk, bk, wv, bv, wo, bo), bw)


def fusion_attend(b: Tensor, g: Tensor, Q: Tensor, K: Tensor, V: Tensor,
                  return_weights: bool = False):
    """Route between a base vector and its adapter output at every position.

    With candidates ``H = [b; g]`` the layer scores ``(b Q) . (H K)``, takes a
    two-way softmax ``a`` and returns ``a^T (H V)``. Leading dimensions of
    ``b``/``g`` are treated as independent positions.
    """
    if b.shape != g.shape:
        raise InvalidInputError(f"fusion inputs differ in shape: {b.shape} vs {g.shape}")
    D = b.shape[-1]
    if Q.shape != (D, D) or K.shape != (D, D) or V.shape != (D, D):
        raise InvalidInputError("fusion matrices must be d_model x d_model")
    _check_finite(b.data, "fusion base input")
    _check_finite(g.data, "fusion adapter input")
    bf = b.data.reshape(-1, D)
    gf = g.data.reshape(-1, D)
    q = bf @ Q.data
    kb = bf @ K.data
    kg = gf @ K.data
    scores = np.stack([(q * kb).sum(-1), (q * kg).sum(-1)], axis=-1)
    a = _softmax_np(scores, -1)
    vb = bf @ V.data
    vg = gf @ V.data
    out = (a[:, :1] * vb + a[:, 1:] * vg).reshape(b.shape)

    def bw(go):
        go = go.reshape(-1, D)
        da = np.stack([(go * vb).sum(-1), (go * vg).sum(-1)], axis=-1)
        ds = a * (da - (a * da).sum(-1, keepdims=True))
        dvb = a[:, :1] * go
        dvg = a[:, 1:] * go
        dq = ds[:, :1] * kb + ds[:, 1:] * kg
        dkb = ds[:, :1] * q
        dkg = ds[:, 1:] * q
        db = (dq @ Q.data.T + dkb @ K.data.T + dvb @ V.data.T).reshape(b.shape) if b.requires_grad else None
        dg = (dkg @ K.data.T + dvg @ V.data.T).reshape(g.shape) if g.requires_grad else None
        if not Q.requires_grad:
            return db, dg, None, None, None
        dQ = bf.T @ dq
        dK = bf.T @ dkb + gf.T @ dkg
        dV = bf.T @ dvb + gf.T @ dvg
        return db, dg, dQ, dK, dV

    out_t = record(out, (b, g, Q, K, V), bw)
    if return_weights:
        return out_t, a.reshape(b.shape[:-1] + (2,))
    return out_t


__all__ = [
    "add", "sub", "mul", "relu", "tanh", "exp", "log", "sum", "mean", "reshape", "transpose",
    "concat", "stack", "matmul", "linear", "softmax", "log_softmax", "layer_norm", "embedding",
    "cross_entropy", "cosine_similarity", "mean_pool", "multi_head_attention", "fusion_attend",
]
