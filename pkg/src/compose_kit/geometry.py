"""Exact geometric kernels for supervision, pose fitting, and evaluation.

Everything in this module is pure numpy in double precision, independent of
the learned network. Point clouds are ``(N, 3)`` float arrays; nearest
neighbor queries are exact brute force, which is fast enough for the
desk-scale cloud sizes (<= ~2048 points) used throughout.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateInput, TooFewPoints, ZeroScale


class Frame(Enum):
    """Coordinate frame a point cloud lives in."""

    OBSERVATION = "observation"  # metric camera/world space
    CANONICAL = "canonical"      # object-centric, normalized model space
    NOCS = "nocs"                # normalized object coordinate space


@dataclass
class Pose:
    """Rigid pose plus per-axis size: ``R`` (3x3 rotation), ``t`` and ``s`` in meters.

    ``np.linalg.norm(s)`` is the uniform scale that maps the unit-diagonal
    canonical model into metric observation space.
    """

    R: np.ndarray
    t: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        self.s = np.asarray(self.s, dtype=np.float64).reshape(3)

    def validate(self, atol: float = 1e-6) -> None:
        if self.R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {self.R.shape}")
        if np.max(np.abs(self.R @ self.R.T - np.eye(3))) >= atol:
            raise ValueError("rotation is not orthonormal")
        if np.linalg.det(self.R) <= 0:
            raise ValueError("rotation has non-positive determinant")
        if not np.all(self.s > 0):
            raise ValueError("size must be strictly positive componentwise")

    @property
    def scale(self) -> float:
        return float(np.linalg.norm(self.s))


def _as_points(x, name: str = "cloud") -> np.ndarray:
    pts = np.asarray(x, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"{name} must have shape (N, 3), got {pts.shape}")
    if pts.shape[0] == 0:
        raise ValueError(f"{name} must be non-empty")
    return pts


def pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact squared distances between all pairs, shape ``(len(a), len(b))``.

    Uses the explicit difference form so identical points give exactly zero.
    """
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def umeyama_fit(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Least-squares similarity transform from index-wise correspondences.

    Solves ``min sum_i || scale * R @ src_i + t - dst_i ||^2`` in closed form
    via SVD of the cross-covariance, with the sign of the smallest singular
    vector flipped whenever the unconstrained optimum would be a reflection,
    so the returned ``R`` always satisfies ``det(R) = +1``.

    Args:
        src: (N, 3) source points (e.g. predicted NOCS coordinates).
        dst: (N, 3) target points (e.g. observed keypoints), N >= 3.

    Returns:
        ``(R, t, scale)`` with R (3, 3), t (3,), scale > 0.

    Raises:
        DegenerateInput: src points are coincident or collinear (covariance
            rank < 2), so the rotation is not identifiable.
    """
    src = _as_points(src, "src")
    dst = _as_points(dst, "dst")
    if src.shape != dst.shape:
        raise ValueError(f"src and dst must match, got {src.shape} vs {dst.shape}")
    n = src.shape[0]
    if n < 3:
        raise DegenerateInput(f"need at least 3 correspondences, got {n}")

    mu_src = src.mean(axis=0)
    mu_dst = dst.mean(axis=0)
    x = src - mu_src
    y = dst - mu_dst

    src_sv = np.linalg.svd(x, compute_uv=False)
    if src_sv[1] <= 1e-9 * max(src_sv[0], 1e-30):
        raise DegenerateInput("source points are coincident or collinear")

    cov = (y.T @ x) / n
    u, d, vt = np.linalg.svd(cov)
    sign = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[2] = -1.0
    rotation = u @ np.diag(sign) @ vt

    var_src = (x * x).sum() / n
    scale = float((d * sign).sum() / var_src)
    translation = mu_dst - scale * rotation @ mu_src
    return rotation, translation, scale


def chamfer_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Chamfer distance: bidirectional mean of squared NN distances."""
    a = _as_points(a, "a")
    b = _as_points(b, "b")
    d2 = pairwise_sq_dists(a, b)
    return float(d2.min(axis=1).mean() + d2.min(axis=0).mean())


def cd_unit(completed: np.ndarray, gt: np.ndarray, s_gt: np.ndarray) -> float:
    """Chamfer distance after normalizing both clouds by the size norm ``|s_gt|``.

    Algebraically equal to ``chamfer_distance(completed, gt) / |s_gt|^2``.
    """
    norm = float(np.linalg.norm(np.asarray(s_gt, dtype=np.float64)))
    if norm == 0.0:
        raise ZeroScale("ground-truth size norm is zero")
    return chamfer_distance(np.asarray(completed) / norm, np.asarray(gt) / norm)


def farthest_point_sampling(cloud: np.ndarray, k: int) -> np.ndarray:
    """Deterministic farthest point sampling, returning ``k`` indices.

    The seed point is the one farthest from the centroid; every following
    pick maximizes the minimum distance to the already-chosen set. All ties
    break to the lowest index, so results are identical across platforms.
    """
    cloud = _as_points(cloud)
    n = cloud.shape[0]
    if not 1 <= k <= n:
        raise TooFewPoints(f"cannot sample {k} points from a cloud of {n}")

    centroid = cloud.mean(axis=0)
    d0 = ((cloud - centroid) ** 2).sum(axis=1)
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = int(np.argmax(d0))  # argmax returns the first (lowest) index on ties

    min_d = ((cloud - cloud[chosen[0]]) ** 2).sum(axis=1)
    min_d[chosen[0]] = -1.0  # exclude already-chosen points
    for i in range(1, k):
        idx = int(np.argmax(min_d))
        chosen[i] = idx
        d = ((cloud - cloud[idx]) ** 2).sum(axis=1)
        np.minimum(min_d, d, out=min_d)
        min_d[idx] = -1.0
    return chosen


def knn_indices(query: np.ndarray, base: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest base points per query row, shape ``(N, k)``.

    Rows are sorted by ascending distance with ties broken by lower index.
    """
    query = _as_points(query, "query")
    base = _as_points(base, "base")
    if base.shape[0] < k:
        raise TooFewPoints(f"need {k} base points, have {base.shape[0]}")
    d2 = pairwise_sq_dists(query, base)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]


def model_to_observation(m_cad: np.ndarray, pose: Pose) -> np.ndarray:
    """Map a canonical model cloud into observation space: ``|s| * R @ p + t``."""
    pts = _as_points(m_cad, "m_cad")
    return pose.scale * pts @ pose.R.T + pose.t


def nocs_ground_truth(p_obs: np.ndarray, pose: Pose) -> np.ndarray:
    """Map observation-space points into NOCS: ``(1/|s|) * R^T @ (p - t)``.

    Exact inverse of :func:`model_to_observation`.
    """
    pts = _as_points(p_obs, "p_obs")
    scale = pose.scale
    if scale == 0.0:
        raise ZeroScale("pose size norm is zero")
    return (pts - pose.t) @ pose.R / scale


def relation_matrix(points: np.ndarray, scale: float) -> np.ndarray:
    """Pairwise L2 distances among points divided by ``scale``, shape ``(N, N)``.

    Symmetric with an exactly-zero diagonal; invariant under rigid motion of
    the input cloud.
    """
    if scale <= 0.0:
        raise ZeroScale(f"scale must be positive, got {scale}")
    pts = _as_points(points) / scale
    return np.sqrt(pairwise_sq_dists(pts, pts))


def score_targets(candidates: np.ndarray, m_obs: np.ndarray, tau: float) -> np.ndarray:
    """Soft proximity targets ``exp(-d_n / tau)`` in (0, 1].

    ``d_n`` is the distance from candidate n to its nearest point on the
    ground-truth observed model surface.
    """
    if tau <= 0.0:
        raise ValueError(f"temperature must be positive, got {tau}")
    candidates = _as_points(candidates, "candidates")
    m_obs = _as_points(m_obs, "m_obs")
    d = np.sqrt(pairwise_sq_dists(candidates, m_obs).min(axis=1))
    return np.exp(-d / tau)


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation matrix for a right-handed rotation of ``angle`` radians about ``axis``."""
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    c, s = np.cos(angle), np.sin(angle)
    cross = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return c * np.eye(3) + s * cross + (1 - c) * np.outer(a, a)


def rotation_from_quaternion(q: np.ndarray) -> np.ndarray:
    """Rotation matrix from a (w, x, y, z) quaternion (normalized internally)."""
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
