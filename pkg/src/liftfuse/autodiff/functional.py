"""Differentiable primitives on :class:`Tensor`."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor, as_tensor


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(g, b.shape) if b.requires_grad else None,
        )

    return Tensor(a.data + b.data, (a, b), bw, op="add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(-g, b.shape) if b.requires_grad else None,
        )

    return Tensor(a.data - b.data, (a, b), bw, op="sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        )

    return Tensor(a.data * b.data, (a, b), bw, op="mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def bw(g):
        return (
            _unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None,
        )

    return Tensor(out, (a, b), bw, op="div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(-a.data, (a,), lambda g: (-g,), op="neg")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ConfigError("matmul expects 2-D operands")

    def bw(g):
        return (
            g @ b.data.T if a.requires_grad else None,
            a.data.T @ g if b.requires_grad else None,
        )

    return Tensor(a.data @ b.data, (a, b), bw, op="matmul")


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor(out, (a,), bw, op="sum")


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[i] for i in axes]))
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), op="reshape")


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    inv = np.argsort(axes)
    return Tensor(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), op="transpose")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), op="relu")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor(out, (a,), lambda g: (g * out,), op="exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(np.log(a.data), (a,), lambda g: (g / a.data,), op="log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return Tensor(out, (a,), lambda g: (g * 0.5 / out,), op="sqrt")


def abs(a) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    return Tensor(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), op="abs")


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        parts = np.split(g, cuts, axis=axis)
        return tuple(p if t.requires_grad else None for p, t in zip(parts, tensors))

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw, op="concat")


def take_rows(a, idx) -> Tensor:
    """Rows ``a[idx]`` of a 2-D tensor; ``idx == -1`` yields a zero row."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    valid = idx >= 0
    out = np.zeros((idx.shape[0],) + a.shape[1:])
    out[valid] = a.data[idx[valid]]

    def bw(g):
        ga = np.zeros(a.shape)
        np.add.at(ga, idx[valid], g[valid])
        return (ga,)

    return Tensor(out, (a,), bw, op="take_rows")


def row_dot(a, b) -> Tensor:
    """Per-row inner product of two ``(N, C)`` tensors."""
    a, b = as_tensor(a), as_tensor(b)
    return sum(mul(a, b), axis=1)


def cross_entropy(logits, labels) -> Tensor:
    """Mean softmax cross-entropy of ``(N, K)`` logits against integer labels."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    N = logits.shape[0]
    if N == 0:
        return Tensor(0.0, op="cross_entropy")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    nll = lse - z[np.arange(N), labels]

    def bw(g):
        p = np.exp(z - lse[:, None])
        p[np.arange(N), labels] -= 1.0
        return (p * (g / N),)

    return Tensor(nll.mean(), (logits,), bw, op="cross_entropy")
