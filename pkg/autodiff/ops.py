from __future__ import annotations

import math
from typing import Sequence, Tuple

import numpy as np

from autodiff.tensor import Tensor, record
from utils.errors import ShapeError

# GELU exacta: 0.5·x·(1 + erf(x/√2))
_erf = np.vectorize(math.erf, otypes=[np.float64])
_INV_SQRT2 = 0.70710678118654752440
_INV_SQRT2PI = 0.3989422804014327


def _out(data: np.ndarray, like: Tensor) -> Tensor:
    return Tensor(data.astype(like.dtype, copy=False))


# ─────────────────────────────────────────────
# Álgebra lineal
# ─────────────────────────────────────────────

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    a: (..., n, k) · b: (k, m) con pesos compartidos, o b: (..., k, m) con el mismo lote.
    """
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul", [a.shape, b.shape], "se requieren al menos 2 dimensiones")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", [a.shape, b.shape], "dimensión interna distinta")
    shared = b.data.ndim == 2
    if not shared and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError("matmul", [a.shape, b.shape], "dimensiones de lote distintas")

    out = _out(np.matmul(a.data, b.data), a)

    def backward_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if shared:
                k, m = b.shape
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, m)
            else:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return ga, gb

    return record("matmul", out, (a, b), backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    """
    Suma elemento a elemento, o sesgo por filas si b es 1-D con b.shape == a.shape[-1:].
    """
    bias = b.data.ndim == 1 and a.data.ndim >= 1 and b.shape[0] == a.shape[-1] and a.shape != b.shape
    if a.shape != b.shape and not bias:
        raise ShapeError("add", [a.shape, b.shape])

    out = _out(a.data + b.data, a)

    def backward_fn(g):
        gb = None
        if b.requires_grad:
            gb = g.reshape(-1, b.shape[0]).sum(axis=0) if bias else g
        return (g if a.requires_grad else None), gb

    return record("add", out, (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("mul", [a.shape, b.shape])

    out = _out(a.data * b.data, a)

    def backward_fn(g):
        return (
            g * b.data if a.requires_grad else None,
            g * a.data if b.requires_grad else None,
        )

    return record("mul", out, (a, b), backward_fn)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = _out(a.data * c, a)
    return record("scale", out, (a,), lambda g: (g * c,))


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def power(a: Tensor, p: float) -> Tensor:
    p = float(p)
    fractional = not p.is_integer()
    if fractional and np.any(a.data < 0.0):
        raise ValueError(f"power: base negativa con exponente fraccionario {p}")
    if p < 1.0 and p != 0.0 and np.any(a.data == 0.0):
        raise ValueError(f"power: base cero con exponente {p}")

    out = _out(np.power(a.data, p), a)

    def backward_fn(g):
        return (g * p * np.power(a.data, p - 1.0),)

    return record("power", out, (a,), backward_fn)


# ─────────────────────────────────────────────
# No linealidades
# ─────────────────────────────────────────────

def gelu(a: Tensor) -> Tensor:
    x = a.data.astype(np.float64, copy=False)
    cdf = 0.5 * (1.0 + _erf(x * _INV_SQRT2))
    out = _out(x * cdf, a)

    def backward_fn(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        return ((g * (cdf + x * pdf)).astype(a.dtype, copy=False),)

    return record("gelu", out, (a,), backward_fn)


def softmax_np(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax_np(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def softmax(a: Tensor) -> Tensor:
    """
    Softmax sobre el último eje.
    """
    s = softmax_np(a.data)
    out = _out(s, a)

    def backward_fn(g):
        return (s * (g - np.sum(g * s, axis=-1, keepdims=True)),)

    return record("softmax", out, (a,), backward_fn)


def log_softmax(a: Tensor) -> Tensor:
    ls = log_softmax_np(a.data)
    out = _out(ls, a)

    def backward_fn(g):
        return (g - np.exp(ls) * np.sum(g, axis=-1, keepdims=True),)

    return record("log_softmax", out, (a,), backward_fn)


def log(a: Tensor) -> Tensor:
    out = _out(np.log(a.data), a)
    return record("log", out, (a,), lambda g: (g / a.data,))


# ─────────────────────────────────────────────
# Reducciones e indexado
# ─────────────────────────────────────────────

def sum(a: Tensor, axis: int | Tuple[int, ...] | None = None) -> Tensor:  # noqa: A001
    out = _out(np.asarray(np.sum(a.data, axis=axis)), a)

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % a.data.ndim for ax in axes)
        return (np.broadcast_to(np.expand_dims(g, axes), a.shape).copy(),)

    return record("sum", out, (a,), backward_fn)


def gather(a: Tensor, indices, axis: int = 0) -> Tensor:
    """
    np.take sobre `axis`; en backward los índices repetidos se acumulan.
    """
    idx = np.asarray(indices, dtype=np.int64)
    axis = axis % a.data.ndim
    n = a.shape[axis]
    if idx.size and (idx.min() < -n or idx.max() >= n):
        raise ShapeError("gather", [a.shape, idx.shape], f"índice fuera de rango en eje {axis}")

    out = _out(np.take(a.data, idx, axis=axis), a)

    def backward_fn(g):
        ga = np.zeros_like(a.data)
        moved = np.moveaxis(ga, axis, 0)
        g_moved = np.moveaxis(g, list(range(axis, axis + idx.ndim)), list(range(idx.ndim)))
        np.add.at(moved, idx, g_moved)
        return (ga,)

    return record("gather", out, (a,), backward_fn)


def mask_fill(a: Tensor, mask: np.ndarray, value: float) -> Tensor:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ShapeError("mask_fill", [a.shape, mask.shape])

    out = _out(np.where(mask, value, a.data), a)
    return record("mask_fill", out, (a,), lambda g: (np.where(mask, 0.0, g).astype(g.dtype, copy=False),))


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = a.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError("layer_norm", [a.shape, gamma.shape, beta.shape])

    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = _out(xhat * gamma.data + beta.data, a)

    def backward_fn(g):
        ga = None
        if a.requires_grad:
            gx = g * gamma.data
            ga = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        gg = (g * xhat).reshape(-1, d).sum(axis=0) if gamma.requires_grad else None
        gbt = g.reshape(-1, d).sum(axis=0) if beta.requires_grad else None
        return ga, gg, gbt

    return record("layer_norm", out, (a, gamma, beta), backward_fn)


# ─────────────────────────────────────────────
# Cambios de forma explícitos
# ─────────────────────────────────────────────

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeError("reshape", [a.shape, shape])
    out = _out(a.data.reshape(shape), a)
    return record("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axis1: int = -1, axis2: int = -2) -> Tensor:
    out = _out(np.ascontiguousarray(np.swapaxes(a.data, axis1, axis2)), a)
    return record("transpose", out, (a,), lambda g: (np.ascontiguousarray(np.swapaxes(g, axis1, axis2)),))


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise ShapeError("concat", [], "lista vacía")
    ndim = parts[0].data.ndim
    axis = axis % ndim
    for p in parts[1:]:
        same = p.data.ndim == ndim and all(
            p.shape[i] == parts[0].shape[i] for i in range(ndim) if i != axis
        )
        if not same:
            raise ShapeError("concat", [q.shape for q in parts])

    out = _out(np.concatenate([p.data for p in parts], axis=axis), parts[0])
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def backward_fn(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) if parts[i].requires_grad else None
            for i in range(len(parts))
        )

    return record("concat", out, tuple(parts), backward_fn)


def mean(a: Tensor) -> Tensor:
    return scale(sum(a), 1.0 / max(a.size, 1))
