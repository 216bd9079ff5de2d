"""The completion-pose model.

Depth-only pipeline over a partial point cloud:

1. a per-point encoder plus self-attention blocks produce partial features,
2. coarse keypoint candidates (predicted missing points + sampled visible
   points) are scored and the best are kept,
3. a cross/self-attention decoder refines keypoint features and coordinates
   over the complete shape, and a folding head expands each keypoint into a
   dense local patch,
4. relation encoding enriches keypoint features with local neighborhoods
   and keypoint-to-keypoint structure,
5. a head regresses per-keypoint NOCS coordinates; the similarity transform
   between them and the observed keypoints is the pose estimate.

The input cloud is centered on its centroid before encoding; the centroid
is added back to every predicted coordinate, so supervision targets stay in
the observation frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import nn, ops
from .autodiff.tensor import Tape, Tensor
from .config import ModelConfig
from .errors import ShapeMismatch
from .geometry import Pose, farthest_point_sampling, knn_indices, umeyama_fit


@dataclass
class ForwardTensors:
    """Differentiable outputs of one forward pass (observation frame)."""

    c_miss: Tensor       # coarse missing-region predictions (n_miss, 3)
    candidates: Tensor   # all keypoint candidates (n_cand, 3)
    scores: Tensor       # candidate scores in (0, 1), (n_cand,)
    selected: np.ndarray  # indices kept as keypoints, descending score
    c_kpt: Tensor        # coarse keypoints (n_kpt, 3)
    p_kpt: Tensor        # refined keypoints (n_kpt, 3)
    f_kpt: Tensor        # keypoint features (n_kpt, d)
    p_com: Tensor        # dense completion (n_com, 3)
    f_geo: Tensor        # relation-enhanced keypoint features (n_kpt, d)
    o_kpt: Tensor        # predicted NOCS coordinates (n_kpt, 3)


@dataclass
class Prediction:
    """Plain-array view of a forward pass plus the fitted pose."""

    c_miss: np.ndarray
    candidates: np.ndarray
    scores: np.ndarray
    selected: np.ndarray
    c_kpt: np.ndarray
    p_kpt: np.ndarray
    p_com: np.ndarray
    o_kpt: np.ndarray
    pose: Pose


class RelationLayer:
    """One relation-encoding layer: neighborhood attention plus global fusion."""

    def __init__(self, store: nn.ParameterStore, name: str, d: int, k: int):
        self.k = k
        self.local_mlp = nn.MLP(store, f"{name}.local", [3, d, d])
        self.global_mlp = nn.MLP(store, f"{name}.global", [3, d, d])
        self.key_mlp = nn.MLP(store, f"{name}.key", [d, d])
        self.attn = nn.AttentionParams(store, f"{name}.attn", d)
        self.ln = nn.LayerNorm(store, f"{name}.ln", d)
        self.pe = nn.PositionEmbedding(store, f"{name}.pe", d)
        self.fuse_mlp = nn.MLP(store, f"{name}.fuse", [d, d, d])

    def __call__(self, f_kpt: Tensor, p_kpt: Tensor, p_part: Tensor,
                 f_part: Tensor) -> Tensor:
        n, d = f_kpt.shape
        k = self.k
        nbr = knn_indices(p_kpt.data, p_part.data, k).reshape(-1)
        owner = np.repeat(np.arange(n), k)

        # offsets from each keypoint to its neighbors, and to all keypoints
        e_local = self.local_mlp(ops.sub(ops.gather(p_kpt, owner), ops.gather(p_part, nbr)))
        pair_a = np.repeat(np.arange(n), n)
        pair_b = np.tile(np.arange(n), n)
        e_global = self.global_mlp(ops.sub(ops.gather(p_kpt, pair_a), ops.gather(p_kpt, pair_b)))

        # attention of each keypoint over its own k neighbors
        keys = self.key_mlp(ops.add(ops.gather(f_part, nbr), e_local))
        q = ops.gather(ops.matmul(f_kpt, self.attn.wq), owner)
        k_proj = ops.matmul(keys, self.attn.wk)
        v_proj = ops.matmul(keys, self.attn.wv)
        logits = ops.scalar_mul(ops.sum_last(ops.mul(q, k_proj)), 1.0 / math.sqrt(d))
        weights = ops.softmax(ops.reshape(logits, (n, k)))
        attended = ops.group_sum_pool(
            ops.scale_rows(v_proj, ops.reshape(weights, (n * k,))), k
        )
        f_hat = self.ln(ops.add(attended, f_kpt))

        fused = ops.add(
            ops.add(f_hat, ops.avg_pool(f_hat)),
            ops.add(self.pe(p_kpt), ops.scalar_mul(ops.group_sum_pool(e_global, n), 1.0 / n)),
        )
        return self.fuse_mlp(fused)


class CompletionPoseNet:
    """Keypoint completion network with a NOCS correspondence pose head."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        config.validate()
        self.config = config
        self.store = nn.ParameterStore(seed=seed, dtype=dtype)
        store, d = self.store, config.d

        # partial encoder
        self.point_mlp = nn.MLP(store, "enc.point", [3, 64, d])
        self.local_proj = nn.Linear(store, "enc.localproj", 2 * d, d)
        self.pe_part = nn.PositionEmbedding(store, "enc.pe", d)
        self.enc_blocks = [
            nn.EncoderBlock(store, f"enc.block{i}", d) for i in range(config.attn_layers)
        ]

        # coarse keypoint generation
        self.miss_mlp = nn.MLP(store, "coarse.miss", [d, 2 * d, config.n_miss * 3])
        self.score_mlp = nn.MLP(store, "coarse.score", [3 + d, d, 1])

        # progressive refinement and folding
        self.pe_kpt = nn.PositionEmbedding(store, "dec.pe", d)
        self.dec_blocks = [
            nn.DecoderBlock(store, f"dec.block{i}", d) for i in range(config.attn_layers)
        ]
        self.kpt_mlp = nn.MLP(store, "dec.coord", [d, d // 2, 3])
        self.fold_mlp = nn.MLP(store, "dec.fold", [d + 3, d, config.n_fold * 3])

        # relation encoding and NOCS head
        self.relation_layers = [
            RelationLayer(store, f"geo.layer{i}", d, k)
            for i, k in enumerate(config.knn_layers)
        ]
        self.nocs_mlp = nn.MLP(store, "nocs.head", [d, d // 2, 3])

    # -- stages ----------------------------------------------------------

    def encode_partial(self, p_part: Tensor) -> Tensor:
        """Per-point features refined by self-attention, (n_part, d)."""
        cfg = self.config
        if p_part.shape != (cfg.n_part, 3):
            raise ShapeMismatch(f"expected ({cfg.n_part}, 3) input, got {p_part.shape}")
        f_point = self.point_mlp(p_part)
        nbr = knn_indices(p_part.data, p_part.data, cfg.encoder_knn).reshape(-1)
        f_local = ops.group_max_pool(ops.gather(f_point, nbr), cfg.encoder_knn)
        f_init = self.local_proj(ops.concat([f_point, f_local]))
        h = ops.add(f_init, self.pe_part(p_part))
        for block in self.enc_blocks:
            h = block(h)
        return h

    def generate_coarse_keypoints(self, f_part: Tensor, p_part: Tensor):
        """Candidate keypoints, their scores, and the global feature."""
        cfg = self.config
        f_global = ops.max_pool(f_part)
        c_miss = ops.reshape(
            self.miss_mlp(ops.reshape(f_global, (1, cfg.d))), (cfg.n_miss, 3)
        )
        vis_idx = farthest_point_sampling(p_part.data, cfg.n_vis)
        c_vis = ops.gather(p_part, vis_idx)
        candidates = ops.concat([c_miss, c_vis], axis=0)

        global_rows = ops.gather(
            ops.reshape(f_global, (1, cfg.d)), np.zeros(cfg.n_cand, dtype=np.int64)
        )
        score_in = ops.concat([candidates, global_rows], axis=-1)
        scores = ops.sigmoid(ops.reshape(self.score_mlp(score_in), (cfg.n_cand,)))

        selected = np.argsort(-scores.data, kind="stable")[: cfg.n_kpt]
        c_kpt = ops.gather(candidates, selected)
        return c_miss, candidates, scores, selected, c_kpt, f_global

    def refine_keypoints(self, c_kpt: Tensor, f_global: Tensor, f_part: Tensor):
        """Decode keypoint features against the partial features; predict coords."""
        q = ops.add(self.pe_kpt(c_kpt), f_global)
        for block in self.dec_blocks:
            q = block(q, f_part)
        p_kpt = self.kpt_mlp(q)
        return p_kpt, q

    def fold_dense(self, p_kpt: Tensor, f_kpt: Tensor) -> Tensor:
        """Expand each keypoint into n_fold offset points around it."""
        cfg = self.config
        folded = ops.reshape(
            self.fold_mlp(ops.concat([f_kpt, p_kpt], axis=-1)),
            (cfg.n_kpt * cfg.n_fold, 3),
        )
        anchors = ops.gather(p_kpt, np.repeat(np.arange(cfg.n_kpt), cfg.n_fold))
        return ops.add(folded, anchors)

    def geometric_relation_encode(self, f_kpt: Tensor, p_kpt: Tensor,
                                  p_part: Tensor, f_part: Tensor) -> Tensor:
        h = f_kpt
        for layer in self.relation_layers:
            h = layer(h, p_kpt, p_part, f_part)
        return h

    def predict_nocs(self, f_geo: Tensor) -> Tensor:
        return self.nocs_mlp(f_geo)

    # -- full pass ---------------------------------------------------------

    def forward_tensors(self, p_part: Tensor) -> ForwardTensors:
        """Run all stages; coordinates are returned in the observation frame."""
        center = ops.avg_pool(p_part)
        centered = ops.sub(p_part, center)

        f_part = self.encode_partial(centered)
        c_miss, candidates, scores, selected, c_kpt, f_global = \
            self.generate_coarse_keypoints(f_part, centered)
        p_kpt, f_kpt = self.refine_keypoints(c_kpt, f_global, f_part)
        p_com = self.fold_dense(p_kpt, f_kpt)
        f_geo = self.geometric_relation_encode(f_kpt, p_kpt, centered, f_part)
        o_kpt = self.predict_nocs(f_geo)

        return ForwardTensors(
            c_miss=ops.add(c_miss, center),
            candidates=ops.add(candidates, center),
            scores=scores,
            selected=selected,
            c_kpt=ops.add(c_kpt, center),
            p_kpt=ops.add(p_kpt, center),
            f_kpt=f_kpt,
            p_com=ops.add(p_com, center),
            f_geo=f_geo,
            o_kpt=o_kpt,
        )

    def solve_pose(self, o_kpt: np.ndarray, p_kpt: np.ndarray) -> Pose:
        """Similarity fit NOCS -> observation; size from the NOCS extent."""
        rotation, translation, scale = umeyama_fit(
            o_kpt.astype(np.float64), p_kpt.astype(np.float64)
        )
        extent = o_kpt.astype(np.float64).max(axis=0) - o_kpt.astype(np.float64).min(axis=0)
        return Pose(rotation, translation, scale * np.maximum(extent, 1e-9))

    def predict(self, p_part: np.ndarray) -> Prediction:
        """Inference on a plain array; records nothing, fits the pose."""
        out = self.forward_tensors(Tensor(np.asarray(p_part, dtype=self.store.dtype)))
        return Prediction(
            c_miss=out.c_miss.data,
            candidates=out.candidates.data,
            scores=out.scores.data,
            selected=out.selected,
            c_kpt=out.c_kpt.data,
            p_kpt=out.p_kpt.data,
            p_com=out.p_com.data,
            o_kpt=out.o_kpt.data,
            pose=self.solve_pose(out.o_kpt.data, out.p_kpt.data),
        )
