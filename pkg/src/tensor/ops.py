"""Differentiable operations used by the HGT stack.

Each op computes its forward value with numpy and hands a closure mapping the
output gradient to input gradients to :func:`make_result`.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from exception import EmptyGroup, LabelOutOfRange, ShapeMismatch

from .autograd import Tensor, as_tensor, make_result

_GELU_C = math.sqrt(2.0 / math.pi)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from exc


# --- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "add")
    return make_result(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "sub")
    return make_result(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "mul")
    return make_result(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    v = x.data
    inner = _GELU_C * (v + 0.044715 * v ** 3)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * v ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t ** 2) * d_inner),)

    return make_result(out, (x,), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(x.data * mask, (x,), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return make_result(out, (x,), lambda g: (g * (1.0 - out ** 2),))


def sigmoid(x: Tensor) -> Tensor:
    out = _stable_sigmoid(x.data)
    return make_result(out, (x,), lambda g: (g * out * (1.0 - out),))


def identity(x: Tensor) -> Tensor:
    return x


ACTIVATIONS = {"gelu": gelu, "relu": relu, "tanh": tanh, "identity": identity}


def _stable_sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    if p <= 0.0:
        return x
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return make_result(x.data * mask, (x,), lambda g: (g * mask,))


# --- linear algebra ----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    return make_result(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x · W + bias`` for x [n×a], W [a×b], bias [b]."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeMismatch(f"linear: input {x.shape} does not fit weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeMismatch(f"linear: bias {bias.shape} does not fit weight {weight.shape}")
    out = x.data @ weight.data
    if bias is None:
        return make_result(out, (x, weight), lambda g: (g @ weight.data.T, x.data.T @ g))
    out = out + bias.data
    return make_result(
        out, (x, weight, bias),
        lambda g: (g @ weight.data.T, x.data.T @ g, g.sum(axis=0)),
    )


def batched_matmul(x: Tensor, weight: Tensor) -> Tensor:
    """Per-head products: x [E×h×a], W [h×a×b] -> [E×h×b]."""
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[0] or x.shape[2] != weight.shape[1]:
        raise ShapeMismatch(f"batched_matmul: {x.shape} with {weight.shape}")
    out = np.einsum("eha,hab->ehb", x.data, weight.data)

    def backward(g):
        return (np.einsum("ehb,hab->eha", g, weight.data),
                np.einsum("eha,ehb->hab", x.data, g))

    return make_result(out, (x, weight), backward)


def bilinear_slices(p: Tensor, weight: Tensor, a: Tensor) -> Tensor:
    """Per-slice bilinear forms: p [n×d], W [k×d×e], a [n×e] -> [n×k] with out[i,j] = p_i W_j a_iᵀ."""
    if (p.ndim, weight.ndim, a.ndim) != (2, 3, 2) or p.shape[1] != weight.shape[1] \
            or a.shape[1] != weight.shape[2] or p.shape[0] != a.shape[0]:
        raise ShapeMismatch(f"bilinear_slices: {p.shape}, {weight.shape}, {a.shape}")
    pw = np.einsum("nd,kde->nke", p.data, weight.data)
    out = np.einsum("nke,ne->nk", pw, a.data)

    def backward(g):
        wa = np.einsum("kde,ne->nkd", weight.data, a.data)
        return (np.einsum("nk,nkd->nd", g, wa),
                np.einsum("nk,nd,ne->kde", g, p.data, a.data),
                np.einsum("nk,nke->ne", g, pw))

    return make_result(out, (p, weight, a), backward)


# --- shape & indexing --------------------------------------------------------

def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    original = x.shape
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(original),))


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    index = np.asarray(index, dtype=np.int64)
    n = x.shape[0]

    def backward(g):
        grad = np.zeros((n,) + g.shape[1:], dtype=g.dtype)
        np.add.at(grad, index, g)
        return (grad,)

    return make_result(x.data[index], (x,), backward)


def segment_sum(x: Tensor, segments: np.ndarray, n_segments: int) -> Tensor:
    """Row-wise scatter-add: out[k] = Σ x[i] over i with segments[i] == k."""
    segments = np.asarray(segments, dtype=np.int64)
    if segments.shape[0] != x.shape[0]:
        raise ShapeMismatch(f"segment_sum: {segments.shape[0]} segment ids for {x.shape[0]} rows")
    out = np.zeros((n_segments,) + x.shape[1:], dtype=x.dtype)
    np.add.at(out, segments, x.data)
    return make_result(out, (x,), lambda g: (g[segments],))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if len(tensors) == 1:
        return tensors[0]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return make_result(out, tensors, lambda g: tuple(np.split(g, splits, axis=axis)))


def reduce_sum(x: Tensor, axis: int | None = None) -> Tensor:
    shape = x.shape
    if axis is None:
        return make_result(np.asarray(x.data.sum()).reshape(1), (x,),
                           lambda g: (np.broadcast_to(g.reshape(()), shape).copy(),))
    return make_result(x.data.sum(axis=axis), (x,),
                       lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),))


def mean(x: Tensor) -> Tensor:
    return mul(reduce_sum(x), 1.0 / max(x.size, 1))


# --- normalisation -----------------------------------------------------------

def softmax_rows(x: Tensor, groups: np.ndarray | None = None, n_groups: int | None = None) -> Tensor:
    """Softmax over the rows of each group, independently per column.

    ``groups[i]`` is the group id of row i (all rows form one group when
    omitted). When ``n_groups`` is given every group id in ``range(n_groups)``
    must own at least one row.
    """
    if x.ndim != 2:
        raise ShapeMismatch(f"softmax_rows expects a 2-d input, got {x.shape}")
    n = x.shape[0]
    if groups is None:
        groups = np.zeros(n, dtype=np.int64)
        n_groups = 1 if n_groups is None else n_groups
    groups = np.asarray(groups, dtype=np.int64)
    if groups.shape[0] != n:
        raise ShapeMismatch(f"softmax_rows: {groups.shape[0]} group ids for {n} rows")
    size = n_groups if n_groups is not None else (int(groups.max()) + 1 if n else 0)
    counts = np.bincount(groups, minlength=size) if n else np.zeros(size, dtype=np.int64)
    if n_groups is not None and np.any(counts[:n_groups] == 0):
        empty = int(np.flatnonzero(counts[:n_groups] == 0)[0])
        raise EmptyGroup(f"softmax group {empty} has no rows")
    if n == 0:
        return make_result(x.data.copy(), (x,), lambda g: (g,))

    group_max = np.full((size, x.shape[1]), -np.inf, dtype=x.dtype)
    np.maximum.at(group_max, groups, x.data)
    e = np.exp(x.data - group_max[groups])
    denom = np.zeros((size, x.shape[1]), dtype=x.dtype)
    np.add.at(denom, groups, e)
    out = e / denom[groups]

    def backward(g):
        dot = np.zeros((size, x.shape[1]), dtype=x.dtype)
        np.add.at(dot, groups, g * out)
        return (out * (g - dot[groups]),)

    return make_result(out, (x,), backward)


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise each row to zero mean and unit variance (no affine part)."""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    out = centered * inv

    def backward(g):
        g_mean = g.mean(axis=-1, keepdims=True)
        gx_mean = (g * out).mean(axis=-1, keepdims=True)
        return (inv * (g - g_mean - out * gx_mean),)

    return make_result(out, (x,), backward)


# --- losses ------------------------------------------------------------------

def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy over rows."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeMismatch(f"cross_entropy: {labels.shape} labels for {n} rows")
    if n and (labels.min() < 0 or labels.max() >= c):
        bad = int(labels[(labels < 0) | (labels >= c)][0])
        raise LabelOutOfRange(f"label {bad} outside [0, {c})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    loss = -log_p[np.arange(n), labels].sum() / max(n, 1)

    def backward(g):
        p = np.exp(log_p)
        p[np.arange(n), labels] -= 1.0
        return (p * (g.reshape(()) / max(n, 1)),)

    return make_result(np.asarray([loss], dtype=logits.dtype), (logits,), backward)


def bce_with_logits(z: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy of sigmoid(z) against 0/1 targets."""
    y = np.asarray(targets, dtype=z.dtype).reshape(z.shape)
    v = z.data
    losses = np.maximum(v, 0) - v * y + np.log1p(np.exp(-np.abs(v)))
    count = max(z.size, 1)

    def backward(g):
        return ((_stable_sigmoid(v) - y) * (g.reshape(()) / count),)

    return make_result(np.asarray([losses.sum() / count], dtype=z.dtype), (z,), backward)
