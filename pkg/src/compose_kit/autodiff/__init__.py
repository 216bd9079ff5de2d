from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .nn import (
    AttentionParams,
    DecoderBlock,
    EncoderBlock,
    LayerNorm,
    Linear,
    MLP,
    ParameterStore,
    PositionEmbedding,
    cross_attention,
    self_attention,
)
from .optim import Adam, cosine_lr
from .tensor import Tape, Tensor, backward

__all__ = [
    "ops",
    "Adam",
    "AttentionParams",
    "DecoderBlock",
    "EncoderBlock",
    "LayerNorm",
    "Linear",
    "MLP",
    "ParameterStore",
    "PositionEmbedding",
    "Tape",
    "Tensor",
    "backward",
    "cosine_lr",
    "cross_attention",
    "load_checkpoint",
    "save_checkpoint",
    "self_attention",
]
