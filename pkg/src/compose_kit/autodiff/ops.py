"""Differentiable primitives.

Binary elementwise ops accept operands of identical shape, or a second
operand whose shape matches the trailing axes of the first (a bias row
added to every row of a matrix). There is no general broadcasting.

Subgradient conventions: relu and max-style ops route gradient to the
first maximizer; sqrt has zero gradient at exactly zero input.
"""
from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from .tensor import Tensor, as_tensor, record


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> bool:
    """True when ``b`` broadcasts over the leading axes of ``a``."""
    if a.shape == b.shape:
        return False
    if b.data.ndim < a.data.ndim and a.shape[a.data.ndim - b.data.ndim:] == b.shape:
        return True
    raise ShapeMismatch(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    lead = g.ndim - len(shape)
    return g.sum(axis=tuple(range(lead))) if lead else g


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    bcast = _binary_shapes(a, b, "add")
    return record(
        a.data + b.data,
        (a, b),
        lambda g: (g, _reduce_to(g, b.shape) if bcast else g),
    )


def sub(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    bcast = _binary_shapes(a, b, "sub")
    return record(
        a.data - b.data,
        (a, b),
        lambda g: (g, -_reduce_to(g, b.shape) if bcast else -g),
    )


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    bcast = _binary_shapes(a, b, "mul")
    return record(
        a.data * b.data,
        (a, b),
        lambda g: (
            g * b.data,
            _reduce_to(g * a.data, b.shape) if bcast else g * a.data,
        ),
    )


def scalar_mul(x, c: float) -> Tensor:
    x = as_tensor(x)
    c = float(c)
    return record(x.data * c, (x,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return record(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    first = tensors[0]
    axis = axis % first.data.ndim
    for t in tensors[1:]:
        ok = t.data.ndim == first.data.ndim and all(
            t.shape[i] == first.shape[i] for i in range(first.data.ndim) if i != axis
        )
        if not ok:
            raise ShapeMismatch(f"concat: incompatible shapes {first.shape} vs {t.shape}")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return record(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), vjp)


def gather(x, indices) -> Tensor:
    """Select rows (axis 0) by integer index; repeats allowed."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.int64)

    def vjp(g):
        z = np.zeros_like(x.data)
        np.add.at(z, idx, g)
        return (z,)

    return record(x.data[idx], (x,), vjp)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return record(np.where(mask, x.data, 0), (x,), lambda g: (g * mask,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = 1.0 / (1.0 + np.exp(-x.data))
    return record(y, (x,), lambda g: (g * y * (1.0 - y),))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    y = np.sqrt(x.data)
    return record(
        y, (x,), lambda g: (np.where(y > 0, g / (2.0 * np.where(y > 0, y, 1.0)), 0.0),)
    )


def _softmax_grad(y: np.ndarray, g: np.ndarray) -> np.ndarray:
    return y * (g - (g * y).sum(axis=-1, keepdims=True))


def softmax(x) -> Tensor:
    """Softmax along the last axis; rows sum to one."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    return record(y, (x,), lambda g: (_softmax_grad(y, g),))


def layer_norm(x, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance (no affine)."""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv

    def vjp(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - xhat * gx),)

    return record(xhat, (x,), vjp)


def max_pool(x) -> Tensor:
    """Columnwise max over all rows: (N, D) -> (D,)."""
    x = as_tensor(x)
    idx = np.argmax(x.data, axis=0)

    def vjp(g):
        z = np.zeros_like(x.data)
        z[idx, np.arange(x.shape[1])] = g
        return (z,)

    return record(x.data[idx, np.arange(x.shape[1])], (x,), vjp)


def avg_pool(x) -> Tensor:
    """Columnwise mean over all rows: (N, D) -> (D,)."""
    x = as_tensor(x)
    n = x.shape[0]

    def vjp(g):
        return (np.broadcast_to(g / n, x.shape).copy(),)

    return record(x.data.mean(axis=0), (x,), vjp)


def group_max_pool(x, group_size: int) -> Tensor:
    """Max within consecutive row groups: (G*k, D) -> (G, D)."""
    x = as_tensor(x)
    n, d = x.shape
    if n % group_size:
        raise ShapeMismatch(f"group_max_pool: {n} rows not divisible by {group_size}")
    grouped = x.data.reshape(n // group_size, group_size, d)
    idx = np.argmax(grouped, axis=1)

    def vjp(g):
        z = np.zeros_like(grouped)
        np.put_along_axis(z, idx[:, None, :], g[:, None, :], axis=1)
        return (z.reshape(n, d),)

    return record(grouped.max(axis=1), (x,), vjp)


def group_sum_pool(x, group_size: int) -> Tensor:
    """Sum within consecutive row groups: (G*k, D) -> (G, D)."""
    x = as_tensor(x)
    n, d = x.shape
    if n % group_size:
        raise ShapeMismatch(f"group_sum_pool: {n} rows not divisible by {group_size}")
    return record(
        x.data.reshape(n // group_size, group_size, d).sum(axis=1),
        (x,),
        lambda g: (np.repeat(g, group_size, axis=0),),
    )


def scale_rows(x, v) -> Tensor:
    """Multiply row i of ``x`` (N, D) by scalar ``v[i]`` (N,)."""
    x, v = as_tensor(x), as_tensor(v)
    if v.data.ndim != 1 or v.shape[0] != x.shape[0]:
        raise ShapeMismatch(f"scale_rows: {x.shape} rows vs {v.shape} scales")
    return record(
        x.data * v.data[:, None],
        (x, v),
        lambda g: (g * v.data[:, None], (g * x.data).sum(axis=1)),
    )


def sum_last(x) -> Tensor:
    """Row sums: (N, D) -> (N,)."""
    x = as_tensor(x)

    def vjp(g):
        return (np.broadcast_to(g[..., None], x.shape).copy(),)

    return record(x.data.sum(axis=-1), (x,), vjp)


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    return record(
        np.asarray(x.data.sum()), (x,), lambda g: (np.full(x.shape, g, dtype=x.dtype),)
    )


def mean_all(x) -> Tensor:
    x = as_tensor(x)
    n = x.data.size

    def vjp(g):
        return (np.full(x.shape, g / n, dtype=x.dtype),)

    return record(np.asarray(x.data.mean()), (x,), vjp)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return record(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeMismatch(f"transpose expects a matrix, got {x.shape}")
    return record(x.data.T.copy(), (x,), lambda g: (g.T,))
