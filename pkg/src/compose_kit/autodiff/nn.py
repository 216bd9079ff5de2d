"""Network building blocks on top of the autodiff primitives.

Attention is single-head throughout, matching the formulas the model uses:
``attend(Q, K) = softmax(Q Wq (K Wk)^T / sqrt(D)) (K Wv)``, wrapped with a
residual connection. Blocks use post-normalization: every attention and
feed-forward sublayer is followed by residual + layer norm.
"""
from __future__ import annotations

import math

import numpy as np

from . import ops
from .tensor import Tensor


class ParameterStore:
    """Named parameters plus Adam moment state and a step counter.

    Parameters are created in registration order from a seeded generator,
    so two stores built the same way with the same seed are identical.
    """

    def __init__(self, seed: int = 0, dtype=np.float32):
        self.rng = np.random.default_rng(seed)
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self.moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self.step = 0

    def parameter(self, name: str, shape, fan_in: int | None = None,
                  fill: float | None = None) -> Tensor:
        """Register a parameter; uniform(+-1/sqrt(fan_in)) unless ``fill`` given."""
        if name in self.params:
            raise ValueError(f"duplicate parameter name: {name}")
        if fill is not None:
            data = np.full(shape, fill, dtype=self.dtype)
        else:
            bound = 1.0 / math.sqrt(fan_in if fan_in else shape[0])
            data = self.rng.uniform(-bound, bound, size=shape).astype(self.dtype)
        t = Tensor(data, requires_grad=True)
        self.params[name] = t
        return t

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def num_values(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flat name->array view of parameters and optimizer moments."""
        out = {name: p.data for name, p in self.params.items()}
        for name, (m, v) in self.moments.items():
            out[f"opt.m:{name}"] = m
            out[f"opt.v:{name}"] = v
        return out

    def load_state(self, arrays: dict[str, np.ndarray], step: int) -> None:
        """Restore parameters (and moments, when present) from ``state_arrays`` form."""
        for name, p in self.params.items():
            if name not in arrays:
                raise KeyError(f"checkpoint is missing parameter {name}")
            src = arrays[name]
            if src.shape != p.data.shape:
                raise ValueError(
                    f"checkpoint shape {src.shape} != model shape {p.data.shape} for {name}"
                )
            p.data = src.astype(self.dtype)
            p.grad = None
        self.moments = {
            name: (
                arrays[f"opt.m:{name}"].astype(self.dtype),
                arrays[f"opt.v:{name}"].astype(self.dtype),
            )
            for name in self.params
            if f"opt.m:{name}" in arrays
        }
        self.step = step


class Linear:
    def __init__(self, store: ParameterStore, name: str, d_in: int, d_out: int,
                 bias: bool = True):
        self.w = store.parameter(f"{name}.w", (d_in, d_out), fan_in=d_in)
        self.b = store.parameter(f"{name}.b", (d_out,), fan_in=d_in) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, self.w)
        return ops.add(y, self.b) if self.b is not None else y


class MLP:
    """Stack of linear layers with ReLU between them (none after the last)."""

    def __init__(self, store: ParameterStore, name: str, dims: list[int]):
        self.layers = [
            Linear(store, f"{name}.{i}", dims[i], dims[i + 1])
            for i in range(len(dims) - 1)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ops.relu(x)
        return x


class LayerNorm:
    def __init__(self, store: ParameterStore, name: str, d: int):
        self.gamma = store.parameter(f"{name}.g", (d,), fill=1.0)
        self.beta = store.parameter(f"{name}.b", (d,), fill=0.0)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(ops.mul(ops.layer_norm(x), self.gamma), self.beta)


class AttentionParams:
    """Projection matrices of one single-head attention."""

    def __init__(self, store: ParameterStore, name: str, d: int):
        self.d = d
        self.wq = store.parameter(f"{name}.wq", (d, d), fan_in=d)
        self.wk = store.parameter(f"{name}.wk", (d, d), fan_in=d)
        self.wv = store.parameter(f"{name}.wv", (d, d), fan_in=d)


def attention_scores(q: Tensor, kv: Tensor, p: AttentionParams) -> Tensor:
    logits = ops.matmul(ops.matmul(q, p.wq), ops.transpose(ops.matmul(kv, p.wk)))
    return ops.softmax(ops.scalar_mul(logits, 1.0 / math.sqrt(p.d)))


def cross_attention(q: Tensor, kv: Tensor, p: AttentionParams) -> Tensor:
    """softmax(q Wq (kv Wk)^T / sqrt(D)) (kv Wv), plus residual on q."""
    out = ops.matmul(attention_scores(q, kv, p), ops.matmul(kv, p.wv))
    return ops.add(out, q)


def self_attention(x: Tensor, p: AttentionParams) -> Tensor:
    """Cross-attention with itself as key/value source."""
    return cross_attention(x, x, p)


class PositionEmbedding:
    """Learnable per-point embedding: MLP on raw 3D coordinates."""

    def __init__(self, store: ParameterStore, name: str, d: int):
        self.mlp = MLP(store, name, [3, d, d])

    def __call__(self, points: Tensor) -> Tensor:
        return self.mlp(points)


class EncoderBlock:
    """Self-attention then feed-forward, each with residual + layer norm."""

    def __init__(self, store: ParameterStore, name: str, d: int, ff_mult: int = 2):
        self.attn = AttentionParams(store, f"{name}.sa", d)
        self.ff = MLP(store, f"{name}.ff", [d, ff_mult * d, d])
        self.ln1 = LayerNorm(store, f"{name}.ln1", d)
        self.ln2 = LayerNorm(store, f"{name}.ln2", d)

    def __call__(self, x: Tensor) -> Tensor:
        x = self.ln1(self_attention(x, self.attn))
        return self.ln2(ops.add(self.ff(x), x))


class DecoderBlock:
    """Cross-attention into a memory, then self-attention, then feed-forward."""

    def __init__(self, store: ParameterStore, name: str, d: int, ff_mult: int = 2):
        self.cross = AttentionParams(store, f"{name}.ca", d)
        self.attn = AttentionParams(store, f"{name}.sa", d)
        self.ff = MLP(store, f"{name}.ff", [d, ff_mult * d, d])
        self.ln1 = LayerNorm(store, f"{name}.ln1", d)
        self.ln2 = LayerNorm(store, f"{name}.ln2", d)
        self.ln3 = LayerNorm(store, f"{name}.ln3", d)

    def __call__(self, q: Tensor, memory: Tensor) -> Tensor:
        q = self.ln1(cross_attention(q, memory, self.cross))
        q = self.ln2(self_attention(q, self.attn))
        return self.ln3(ops.add(self.ff(q), q))
