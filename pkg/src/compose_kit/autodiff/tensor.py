"""Dense-tensor reverse-mode automatic differentiation.

A :class:`Tape` records operations in execution order; :func:`backward`
replays it once in reverse, so its cost is linear in tape length. Tensors
are thin wrappers around numpy arrays. Networks run in float32 by default;
feeding float64 leaves produces a float64 graph (used by gradient checks).

A tape is bound to the thread that opened it. Forward passes on frozen
parameters without an active tape record nothing and are safe to run
concurrently.
"""
from __future__ import annotations

import threading

import numpy as np

from ..errors import NotScalar

_STATE = threading.local()


def active_tape():
    """The innermost open tape on this thread, or None."""
    return getattr(_STATE, "tape", None)


class Tape:
    """Ordered record of differentiable operations.

    Usage::

        with Tape():
            loss = ...   # ops on tensors with requires_grad record here
        backward(loss)
    """

    def __init__(self):
        self.nodes: list[Tensor] = []
        self._outer = None

    def __enter__(self):
        self._outer = active_tape()
        _STATE.tape = self
        return self

    def __exit__(self, *exc):
        _STATE.tape = self._outer
        return False

    def __len__(self):
        return len(self.nodes)


class Tensor:
    """A numpy array plus optional gradient and tape bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "_tape")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None
        self._tape = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # Arithmetic sugar; the full primitive set lives in ops.py.
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops

        if isinstance(other, (int, float)):
            return ops.scalar_mul(self, float(other))
        return ops.mul(self, other)

    __rmul__ = __mul__


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    """Coerce to a constant Tensor, matching ``like``'s dtype when given."""
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def record(out_data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    """Wrap an op result, registering it on the active tape when needed.

    ``vjp(g)`` must return one gradient array (or None) per parent.
    """
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
        out._tape = tape
        tape.nodes.append(out)
    return out


def backward(loss: Tensor) -> None:
    """Accumulate gradients of ``loss`` into every requires-grad leaf.

    Walks the recording tape once in reverse; repeated calls without
    clearing leaf ``.grad`` keep accumulating.
    """
    if loss.data.size != 1:
        raise NotScalar(f"backward needs a scalar, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    seed = np.ones_like(loss.data)
    if loss._vjp is None:  # loss is itself a leaf
        _accumulate_leaf(loss, seed)
        return

    tape = loss._tape
    adjoint: dict[int, np.ndarray] = {id(loss): seed}
    for node in reversed(tape.nodes):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent._vjp is None:
                _accumulate_leaf(parent, pg)
            else:
                key = id(parent)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + pg
                else:
                    adjoint[key] = pg


def _accumulate_leaf(leaf: Tensor, g: np.ndarray) -> None:
    if leaf.grad is None:
        leaf.grad = np.zeros_like(leaf.data)
    leaf.grad += g
