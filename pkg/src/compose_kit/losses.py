"""Differentiable supervision terms and their weighted sum.

Each loss returns a scalar :class:`Tensor`; called on plain arrays (no
tape) they just produce values. Supervision targets (the observed model
surface, score targets, ground-truth NOCS labels) enter as constants, so
gradients flow only through the network predictions.

Nearest-neighbor assignments inside the Chamfer terms are recomputed from
current values and treated as locally constant, which is the standard
subgradient of a min. Point-distance terms define the gradient at exactly
zero distance as zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ops
from .autodiff.tensor import Tensor, as_tensor
from .errors import LengthMismatch, ZeroScale


def _nearest_indices(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Argmin neighbor of each x in y, and of each y in x (fast inner-product form)."""
    x2 = (x * x).sum(axis=1)
    y2 = (y * y).sum(axis=1)
    d2 = x2[:, None] + y2[None, :] - 2.0 * (x @ y.T)
    return d2.argmin(axis=1), d2.argmin(axis=0)


def chamfer_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Bidirectional mean of squared nearest-neighbor distances to a fixed cloud."""
    pred = as_tensor(pred)
    target = np.asarray(target, dtype=pred.data.dtype)
    nn_xy, nn_yx = _nearest_indices(pred.data, target)

    d_fwd = ops.sub(pred, target[nn_xy])
    fwd = ops.mean_all(ops.sum_last(ops.mul(d_fwd, d_fwd)))
    d_bwd = ops.sub(ops.gather(pred, nn_yx), target)
    bwd = ops.mean_all(ops.sum_last(ops.mul(d_bwd, d_bwd)))
    return ops.add(fwd, bwd)


def loss_completion(c_miss: Tensor, p_kpt: Tensor, p_com: Tensor,
                    m_obs: np.ndarray) -> Tensor:
    """Sum of the Chamfer distances from each predicted stage to the observed model."""
    return ops.add(
        ops.add(chamfer_loss(c_miss, m_obs), chamfer_loss(p_kpt, m_obs)),
        chamfer_loss(p_com, m_obs),
    )


def loss_score(scores: Tensor, targets: np.ndarray) -> Tensor:
    """Mean squared error between predicted and target candidate scores."""
    scores = as_tensor(scores)
    targets = np.asarray(targets, dtype=scores.data.dtype)
    if scores.shape != targets.shape:
        raise LengthMismatch(f"scores {scores.shape} vs targets {targets.shape}")
    d = ops.sub(scores, targets)
    return ops.mean_all(ops.mul(d, d))


def _pointwise_l2(a: Tensor, b: np.ndarray) -> Tensor:
    d = ops.sub(a, b)
    return ops.sqrt(ops.sum_last(ops.mul(d, d)))


def loss_correspondence(o_kpt: Tensor, o_gt: np.ndarray, smooth_l1: bool = False,
                        beta: float = 1.0) -> Tensor:
    """Mean per-point distance between predicted and ground-truth NOCS coordinates.

    Plain L2 by default; ``smooth_l1`` switches to the quadratic-below-``beta``
    variant on the per-point distance.
    """
    o_kpt = as_tensor(o_kpt)
    o_gt = np.asarray(o_gt, dtype=o_kpt.data.dtype)
    if o_kpt.shape != o_gt.shape:
        raise LengthMismatch(f"predictions {o_kpt.shape} vs labels {o_gt.shape}")
    d = _pointwise_l2(o_kpt, o_gt)
    if not smooth_l1:
        return ops.mean_all(d)
    near = (d.data < beta).astype(d.data.dtype)
    quad = ops.scalar_mul(ops.mul(d, d), 0.5 / beta)
    lin = ops.sub(d, np.asarray(0.5 * beta, dtype=d.data.dtype))
    return ops.mean_all(ops.add(ops.mul(quad, near), ops.mul(lin, 1.0 - near)))


def _pairwise_distance_flat(points: Tensor, scale: float) -> Tensor:
    """All-pairs distances of scaled points, flattened to (N*N,)."""
    n = points.shape[0]
    left = ops.gather(points, np.repeat(np.arange(n), n))
    right = ops.gather(points, np.tile(np.arange(n), n))
    d = ops.sub(left, right)
    dist = ops.sqrt(ops.sum_last(ops.mul(d, d)))
    return ops.scalar_mul(dist, 1.0 / scale) if scale != 1.0 else dist


def loss_geometric_consistency(p_kpt: Tensor, o_kpt: Tensor,
                               s_gt_norm: float) -> Tensor:
    """Mean squared mismatch between the two pairwise relation matrices.

    The observed keypoints are scaled by the ground-truth size norm before
    forming their relation matrix, so a structurally perfect NOCS prediction
    gives exactly zero regardless of object placement.
    """
    p_kpt, o_kpt = as_tensor(p_kpt), as_tensor(o_kpt)
    if p_kpt.shape != o_kpt.shape:
        raise LengthMismatch(f"keypoints {p_kpt.shape} vs NOCS {o_kpt.shape}")
    if s_gt_norm <= 0:
        raise ZeroScale(f"size norm must be positive, got {s_gt_norm}")
    g_kpt = _pairwise_distance_flat(p_kpt, float(s_gt_norm))
    g_nocs = _pairwise_distance_flat(o_kpt, 1.0)
    d = ops.sub(g_kpt, g_nocs)
    return ops.mean_all(ops.mul(d, d))


@dataclass
class LossBreakdown:
    l_com: float
    l_score: float
    l_corr: float
    l_geo: float
    l_total: float

    CSV_HEADER = "step,l_com,l_score,l_corr,l_geo,l_total,lr"

    def csv_row(self, step: int, lr: float) -> str:
        return (
            f"{step},{self.l_com:.8e},{self.l_score:.8e},"
            f"{self.l_corr:.8e},{self.l_geo:.8e},{self.l_total:.8e},{lr:.8e}"
        )


DEFAULT_WEIGHTS = (15.0, 1.0, 2.0, 1.0)


def loss_total(l_com: Tensor, l_score: Tensor, l_corr: Tensor, l_geo: Tensor,
               weights: tuple[float, float, float, float] = DEFAULT_WEIGHTS,
               ) -> tuple[Tensor, LossBreakdown]:
    """Weighted sum of the four terms, plus a float report of the parts."""
    if any(w <= 0 for w in weights):
        raise ValueError(f"loss weights must be positive, got {weights}")
    w_com, w_score, w_corr, w_geo = weights
    total = ops.add(
        ops.add(ops.scalar_mul(l_com, w_com), ops.scalar_mul(l_score, w_score)),
        ops.add(ops.scalar_mul(l_corr, w_corr), ops.scalar_mul(l_geo, w_geo)),
    )
    report = LossBreakdown(
        l_com.item(), l_score.item(), l_corr.item(), l_geo.item(), total.item()
    )
    return total, report
