"""Central finite-difference verification of every analytic gradient.

All checks run in float64. Each check builds a scalar-valued function of
one or more leaf tensors, compares ``backward`` gradients against central
differences entry by entry, and reports the worst relative error over
entries where either side is meaningfully nonzero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn, ops
from .tensor import Tape, Tensor, backward

DEFAULT_H = 1e-5
PRIMITIVE_TOL = 1e-4
NETWORK_TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<28s} max rel err {self.max_rel_err:.3e} (tol {self.tol:.0e})"


def _rel_err(a: float, n: float) -> float:
    denom = max(abs(a), abs(n))
    if denom < 1e-9:
        return 0.0
    return abs(a - n) / denom


def check_scalar_fn(value_fn, leaves: list[Tensor], h: float = DEFAULT_H,
                    entries_per_leaf: int | None = None,
                    per_leaf_scale: bool = False) -> float:
    """Worst relative error between backward and central differences.

    ``value_fn`` must read the leaves' current ``.data`` on every call and
    return a scalar Tensor. ``entries_per_leaf`` limits the finite-difference
    probes per leaf (deterministically spread over the array) for large
    composites; None probes every entry.

    With ``per_leaf_scale`` the difference is measured against the leaf's
    gradient magnitude instead of entry by entry. Deep compositions have
    entries whose true gradient sits below the FD roundoff floor
    (~eps * |f| / h); entrywise ratios there measure noise, not correctness.
    """
    for leaf in leaves:
        leaf.grad = None
    with Tape():
        loss = value_fn()
    backward(loss)
    analytic = [
        np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad.copy()
        for leaf in leaves
    ]

    def value_at() -> float:
        return float(value_fn().data)

    worst = 0.0
    for leaf, grad in zip(leaves, analytic):
        flat = leaf.data.reshape(-1)
        size = flat.size
        if entries_per_leaf is None or size <= entries_per_leaf:
            idx = range(size)
        else:
            idx = np.linspace(0, size - 1, entries_per_leaf).astype(int)
        pairs = []
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = value_at()
            flat[i] = orig - h
            down = value_at()
            flat[i] = orig
            pairs.append((grad.reshape(-1)[i], (up - down) / (2.0 * h)))
        if per_leaf_scale:
            scale = max(max(abs(a), abs(n)) for a, n in pairs)
            if scale > 1e-9:
                worst = max(worst, max(abs(a - n) for a, n in pairs) / scale)
        else:
            worst = max(worst, max(_rel_err(a, n) for a, n in pairs))
    return worst


def _leaf(rng, *shape, low=0.2, high=1.0) -> Tensor:
    """Random float64 leaf bounded away from zero (keeps kinks out of reach)."""
    mag = rng.uniform(low, high, size=shape)
    sign = np.where(rng.uniform(size=shape) < 0.5, -1.0, 1.0)
    return Tensor(mag * sign, requires_grad=True)


def _readout(out: Tensor, w: np.ndarray) -> Tensor:
    return ops.sum_all(ops.mul(out, w))


def _make_primitive_checks() -> dict:
    checks = {}

    def register(name):
        def deco(fn):
            checks[name] = fn
            return fn
        return deco

    @register("add")
    def check_add():
        rng = np.random.default_rng(10)
        a, b = _leaf(rng, 4, 5), _leaf(rng, 4, 5)
        w = rng.standard_normal((4, 5))
        return check_scalar_fn(lambda: _readout(ops.add(a, b), w), [a, b])

    @register("add_bias")
    def check_add_bias():
        rng = np.random.default_rng(11)
        a, b = _leaf(rng, 4, 5), _leaf(rng, 5)
        w = rng.standard_normal((4, 5))
        return check_scalar_fn(lambda: _readout(ops.add(a, b), w), [a, b])

    @register("sub")
    def check_sub():
        rng = np.random.default_rng(12)
        a, b = _leaf(rng, 4, 5), _leaf(rng, 5)
        w = rng.standard_normal((4, 5))
        return check_scalar_fn(lambda: _readout(ops.sub(a, b), w), [a, b])

    @register("mul")
    def check_mul():
        rng = np.random.default_rng(13)
        a, b = _leaf(rng, 4, 5), _leaf(rng, 4, 5)
        w = rng.standard_normal((4, 5))
        return check_scalar_fn(lambda: _readout(ops.mul(a, b), w), [a, b])

    @register("mul_row")
    def check_mul_row():
        rng = np.random.default_rng(14)
        a, b = _leaf(rng, 4, 5), _leaf(rng, 5)
        w = rng.standard_normal((4, 5))
        return check_scalar_fn(lambda: _readout(ops.mul(a, b), w), [a, b])

    @register("scalar_mul")
    def check_scalar_mul():
        rng = np.random.default_rng(15)
        a = _leaf(rng, 4, 5)
        w = rng.standard_normal((4, 5))
        return check_scalar_fn(lambda: _readout(ops.scalar_mul(a, 1.7), w), [a])

    @register("matmul")
    def check_matmul():
        rng = np.random.default_rng(16)
        a, b = _leaf(rng, 3, 4), _leaf(rng, 4, 2)
        w = rng.standard_normal((3, 2))
        return check_scalar_fn(lambda: _readout(ops.matmul(a, b), w), [a, b])

    @register("concat")
    def check_concat():
        rng = np.random.default_rng(17)
        a, b = _leaf(rng, 4, 3), _leaf(rng, 4, 2)
        w = rng.standard_normal((4, 5))
        return check_scalar_fn(lambda: _readout(ops.concat([a, b]), w), [a, b])

    @register("concat_rows")
    def check_concat_rows():
        rng = np.random.default_rng(18)
        a, b = _leaf(rng, 3, 5), _leaf(rng, 2, 5)
        w = rng.standard_normal((5, 5))
        return check_scalar_fn(lambda: _readout(ops.concat([a, b], axis=0), w), [a, b])

    @register("gather")
    def check_gather():
        rng = np.random.default_rng(19)
        a = _leaf(rng, 6, 4)
        idx = np.array([0, 2, 2, 5, 1])  # repeated rows accumulate
        w = rng.standard_normal((5, 4))
        return check_scalar_fn(lambda: _readout(ops.gather(a, idx), w), [a])

    @register("relu")
    def check_relu():
        rng = np.random.default_rng(20)
        a = _leaf(rng, 4, 5)
        w = rng.standard_normal((4, 5))
        return check_scalar_fn(lambda: _readout(ops.relu(a), w), [a])

    @register("sigmoid")
    def check_sigmoid():
        rng = np.random.default_rng(21)
        a = _leaf(rng, 3, 4)
        w = rng.standard_normal((3, 4))
        return check_scalar_fn(lambda: _readout(ops.sigmoid(a), w), [a])

    @register("sqrt")
    def check_sqrt():
        rng = np.random.default_rng(22)
        a = Tensor(rng.uniform(0.1, 2.0, (4, 5)), requires_grad=True)
        w = rng.standard_normal((4, 5))
        return check_scalar_fn(lambda: _readout(ops.sqrt(a), w), [a])

    @register("softmax")
    def check_softmax():
        rng = np.random.default_rng(23)
        a = _leaf(rng, 4, 5)
        w = rng.standard_normal((4, 5))
        return check_scalar_fn(lambda: _readout(ops.softmax(a), w), [a])

    @register("layer_norm")
    def check_layer_norm():
        rng = np.random.default_rng(24)
        a = _leaf(rng, 4, 6)
        w = rng.standard_normal((4, 6))
        return check_scalar_fn(lambda: _readout(ops.layer_norm(a), w), [a])

    @register("max_pool")
    def check_max_pool():
        rng = np.random.default_rng(25)
        a = _leaf(rng, 5, 4)
        w = rng.standard_normal(4)
        return check_scalar_fn(lambda: _readout(ops.max_pool(a), w), [a])

    @register("avg_pool")
    def check_avg_pool():
        rng = np.random.default_rng(26)
        a = _leaf(rng, 5, 4)
        w = rng.standard_normal(4)
        return check_scalar_fn(lambda: _readout(ops.avg_pool(a), w), [a])

    @register("group_max_pool")
    def check_group_max_pool():
        rng = np.random.default_rng(27)
        a = _leaf(rng, 6, 4)
        w = rng.standard_normal((2, 4))
        return check_scalar_fn(lambda: _readout(ops.group_max_pool(a, 3), w), [a])

    @register("group_sum_pool")
    def check_group_sum_pool():
        rng = np.random.default_rng(28)
        a = _leaf(rng, 6, 4)
        w = rng.standard_normal((3, 4))
        return check_scalar_fn(lambda: _readout(ops.group_sum_pool(a, 2), w), [a])

    @register("scale_rows")
    def check_scale_rows():
        rng = np.random.default_rng(29)
        a, v = _leaf(rng, 5, 3), _leaf(rng, 5)
        w = rng.standard_normal((5, 3))
        return check_scalar_fn(lambda: _readout(ops.scale_rows(a, v), w), [a, v])

    @register("sum_last")
    def check_sum_last():
        rng = np.random.default_rng(30)
        a = _leaf(rng, 4, 6)
        w = rng.standard_normal(4)
        return check_scalar_fn(lambda: _readout(ops.sum_last(a), w), [a])

    @register("sum_all")
    def check_sum_all():
        rng = np.random.default_rng(31)
        a = _leaf(rng, 3, 4)
        return check_scalar_fn(lambda: ops.sum_all(a), [a])

    @register("mean_all")
    def check_mean_all():
        rng = np.random.default_rng(32)
        a = _leaf(rng, 3, 4)
        return check_scalar_fn(lambda: ops.mean_all(a), [a])

    @register("reshape")
    def check_reshape():
        rng = np.random.default_rng(33)
        a = _leaf(rng, 4, 6)
        w = rng.standard_normal((3, 8))
        return check_scalar_fn(lambda: _readout(ops.reshape(a, (3, 8)), w), [a])

    @register("transpose")
    def check_transpose():
        rng = np.random.default_rng(34)
        a = _leaf(rng, 3, 5)
        w = rng.standard_normal((5, 3))
        return check_scalar_fn(lambda: _readout(ops.transpose(a), w), [a])

    @register("mlp_apply")
    def check_mlp():
        rng = np.random.default_rng(35)
        store = nn.ParameterStore(seed=35, dtype=np.float64)
        mlp = nn.MLP(store, "m", [3, 8, 4])
        x = _leaf(rng, 5, 3)
        w = rng.standard_normal((5, 4))
        leaves = [x] + list(store.params.values())
        return check_scalar_fn(lambda: _readout(mlp(x), w), leaves)

    @register("self_attention")
    def check_self_attention():
        rng = np.random.default_rng(36)
        store = nn.ParameterStore(seed=36, dtype=np.float64)
        p = nn.AttentionParams(store, "a", 8)
        x = _leaf(rng, 4, 8)
        w = rng.standard_normal((4, 8))
        leaves = [x] + list(store.params.values())
        return check_scalar_fn(lambda: _readout(nn.self_attention(x, p), w), leaves)

    @register("cross_attention")
    def check_cross_attention():
        rng = np.random.default_rng(37)
        store = nn.ParameterStore(seed=37, dtype=np.float64)
        p = nn.AttentionParams(store, "a", 8)
        q, kv = _leaf(rng, 4, 8), _leaf(rng, 6, 8)
        w = rng.standard_normal((4, 8))
        leaves = [q, kv] + list(store.params.values())
        return check_scalar_fn(lambda: _readout(nn.cross_attention(q, kv, p), w), leaves)

    @register("position_embedding")
    def check_position_embedding():
        rng = np.random.default_rng(38)
        store = nn.ParameterStore(seed=38, dtype=np.float64)
        pe = nn.PositionEmbedding(store, "pe", 8)
        pts = _leaf(rng, 5, 3)
        w = rng.standard_normal((5, 8))
        leaves = [pts] + list(store.params.values())
        return check_scalar_fn(lambda: _readout(pe(pts), w), leaves)

    return checks


def _make_loss_checks() -> dict:
    from ..losses import (
        loss_completion,
        loss_correspondence,
        loss_geometric_consistency,
        loss_score,
    )

    checks = {}

    def check_loss_completion():
        rng = np.random.default_rng(50)
        c_miss = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
        p_kpt = Tensor(rng.standard_normal((6, 3)), requires_grad=True)
        p_com = Tensor(rng.standard_normal((20, 3)), requires_grad=True)
        m_obs = rng.standard_normal((12, 3))
        return check_scalar_fn(
            lambda: loss_completion(c_miss, p_kpt, p_com, m_obs),
            [c_miss, p_kpt, p_com],
        )

    def check_loss_score():
        rng = np.random.default_rng(51)
        scores = Tensor(rng.uniform(0.1, 0.9, 10), requires_grad=True)
        targets = rng.uniform(0.1, 0.9, 10)
        return check_scalar_fn(lambda: loss_score(scores, targets), [scores])

    def check_loss_correspondence():
        rng = np.random.default_rng(52)
        o = Tensor(rng.standard_normal((8, 3)), requires_grad=True)
        # labels displaced well away from the predictions: sqrt stays smooth
        o_gt = o.data + rng.uniform(0.2, 0.5, (8, 3)) * np.sign(rng.standard_normal((8, 3)))
        return check_scalar_fn(lambda: loss_correspondence(o, o_gt), [o])

    def check_loss_correspondence_smooth():
        rng = np.random.default_rng(53)
        o = Tensor(rng.standard_normal((8, 3)), requires_grad=True)
        o_gt = o.data + rng.uniform(0.2, 0.5, (8, 3)) * np.sign(rng.standard_normal((8, 3)))
        return check_scalar_fn(
            lambda: loss_correspondence(o, o_gt, smooth_l1=True, beta=0.7), [o]
        )

    def check_loss_geo():
        rng = np.random.default_rng(54)
        p = Tensor(rng.standard_normal((6, 3)), requires_grad=True)
        o = Tensor(rng.standard_normal((6, 3)), requires_grad=True)
        return check_scalar_fn(
            lambda: loss_geometric_consistency(p, o, 1.3), [p, o]
        )

    checks["loss_completion"] = check_loss_completion
    checks["loss_score"] = check_loss_score
    checks["loss_correspondence"] = check_loss_correspondence
    checks["loss_correspondence_smooth"] = check_loss_correspondence_smooth
    checks["loss_geometric_consistency"] = check_loss_geo
    return checks


def toy_model_config():
    from ..config import ModelConfig

    return ModelConfig(
        n_part=16, n_kpt=4, n_fold=2, n_com=8, n_miss=4, n_vis=2,
        d=8, encoder_knn=4, knn_layers=(2, 3), attn_layers=1,
    )


def check_full_network(entries_per_leaf: int = 3) -> float:
    """Finite-difference check of the composed training loss on a toy model.

    Supervision labels (score targets and NOCS ground truth) are computed
    once from the unperturbed forward pass and held fixed, matching what the
    backward pass differentiates.
    """
    from ..geometry import Pose, nocs_ground_truth, rotation_from_quaternion, score_targets
    from ..losses import (
        loss_completion,
        loss_correspondence,
        loss_geometric_consistency,
        loss_score,
        loss_total,
    )
    from ..network import CompletionPoseNet

    cfg = toy_model_config()
    model = CompletionPoseNet(cfg, seed=7, dtype=np.float64)
    rng = np.random.default_rng(77)
    p_part = Tensor(0.3 * rng.standard_normal((cfg.n_part, 3)), requires_grad=True)
    m_obs = 0.3 * rng.standard_normal((24, 3))
    pose = Pose(rotation_from_quaternion(rng.standard_normal(4)),
                rng.standard_normal(3), np.array([0.2, 0.3, 0.1]))

    base = model.forward_tensors(p_part)
    r_gt = score_targets(base.candidates.data, m_obs, cfg.tau)
    o_gt = nocs_ground_truth(base.p_kpt.data, pose)

    def value_fn():
        out = model.forward_tensors(p_part)
        total, _ = loss_total(
            loss_completion(out.c_miss, out.p_kpt, out.p_com, m_obs),
            loss_score(out.scores, r_gt),
            loss_correspondence(out.o_kpt, o_gt),
            loss_geometric_consistency(out.p_kpt, out.o_kpt, pose.scale),
            cfg.weights,
        )
        return total

    leaves = [p_part] + list(model.store.params.values())
    return check_scalar_fn(
        value_fn, leaves, entries_per_leaf=entries_per_leaf, per_leaf_scale=True
    )


def run_suite(include_network: bool = True) -> list[CheckResult]:
    """Every primitive, every loss, and optionally the composed network loss."""
    results = []
    for name, fn in _make_primitive_checks().items():
        results.append(CheckResult(name, fn(), PRIMITIVE_TOL))
    for name, fn in _make_loss_checks().items():
        results.append(CheckResult(name, fn(), PRIMITIVE_TOL))
    if include_network:
        results.append(CheckResult("full_network_loss", check_full_network(), NETWORK_TOL))
    return results
