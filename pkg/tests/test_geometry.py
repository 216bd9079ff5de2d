import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compose_kit.errors import DegenerateInput, TooFewPoints, ZeroScale
from compose_kit.geometry import (
    Pose,
    cd_unit,
    chamfer_distance,
    farthest_point_sampling,
    knn_indices,
    model_to_observation,
    nocs_ground_truth,
    relation_matrix,
    rotation_about_axis,
    rotation_from_quaternion,
    score_targets,
    umeyama_fit,
)

CUBE = np.array(list(itertools.product([0.0, 1.0], repeat=3)))


def random_rotation(rng):
    return rotation_from_quaternion(rng.standard_normal(4))


def random_pose(rng, scale_range=(0.1, 10.0)):
    s_dir = np.abs(rng.standard_normal(3)) + 0.1
    s_dir /= np.linalg.norm(s_dir)
    scale = rng.uniform(*scale_range)
    return Pose(random_rotation(rng), rng.uniform(-1, 1, 3), scale * s_dir)


class TestUmeyama:
    def test_identity(self):
        R, t, c = umeyama_fit(CUBE, CUBE)
        np.testing.assert_allclose(R, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(t, np.zeros(3), atol=1e-12)
        assert c == pytest.approx(1.0, abs=1e-12)

    def test_known_transform(self):
        # dst constructed from a known similarity; fit must invert it exactly
        r0 = rotation_about_axis([1.0, 2.0, 0.5], 1.1)
        dst = 2.0 * CUBE @ r0.T + np.array([1.0, 2.0, 3.0])
        R, t, c = umeyama_fit(CUBE, dst)
        assert np.abs(R - r0).max() < 1e-9
        assert np.abs(t - [1.0, 2.0, 3.0]).max() < 1e-9
        assert abs(c - 2.0) < 1e-9

    def test_planar_rank2(self):
        src = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
        r0 = rotation_about_axis([0.3, -1.0, 0.2], 0.7)
        dst = src @ r0.T + np.array([0.5, -0.25, 1.0])
        R, t, c = umeyama_fit(src, dst)
        assert np.abs(R - r0).max() < 1e-9
        assert np.abs(t - [0.5, -0.25, 1.0]).max() < 1e-9
        assert abs(c - 1.0) < 1e-9

    def test_collinear_raises(self):
        src = np.outer(np.arange(5.0), [1.0, 1.0, 0.0])
        with pytest.raises(DegenerateInput):
            umeyama_fit(src, src + 1.0)

    def test_coincident_raises(self):
        src = np.ones((4, 3))
        with pytest.raises(DegenerateInput):
            umeyama_fit(src, src)

    def test_reflection_guard(self):
        # noisy mirrored target would prefer a reflection; det must stay +1
        rng = np.random.default_rng(3)
        src = rng.standard_normal((16, 3))
        dst = src * np.array([1.0, 1.0, -1.0]) + 0.01 * rng.standard_normal((16, 3))
        R, _, c = umeyama_fit(src, dst)
        assert np.linalg.det(R) > 0
        assert c > 0

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_recovery_property(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 64))
        src = rng.standard_normal((n, 3))
        pose = random_pose(rng)
        dst = pose.scale * src @ pose.R.T + pose.t
        R, t, c = umeyama_fit(src, dst)
        assert np.linalg.norm(R - pose.R) < 1e-9
        assert np.linalg.norm(t - pose.t) < 1e-9
        assert abs(c - pose.scale) / pose.scale < 1e-9


class TestChamfer:
    def test_self_is_exactly_zero(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((50, 3))
        assert chamfer_distance(x, x) == 0.0

    def test_hand_value(self):
        # single points one meter apart: 1^2 + 1^2
        assert chamfer_distance([[0.0, 0, 0]], [[1.0, 0, 0]]) == pytest.approx(2.0)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a, b = rng.standard_normal((50, 3)), rng.standard_normal((50, 3))
        assert chamfer_distance(a, b) == pytest.approx(chamfer_distance(b, a), rel=1e-15)

    def test_rigid_motion_invariance(self):
        rng = np.random.default_rng(2)
        a, b = rng.standard_normal((30, 3)), rng.standard_normal((40, 3))
        R = random_rotation(rng)
        t = rng.standard_normal(3)
        moved = chamfer_distance(a @ R.T + t, b @ R.T + t)
        assert moved == pytest.approx(chamfer_distance(a, b), rel=1e-9)

    def test_nonnegative_and_zero_iff_covered(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((20, 3))
        assert chamfer_distance(a, a[::-1]) == 0.0  # mutual coverage, any order
        assert chamfer_distance(a, a + 0.5) > 0.0


class TestCdUnit:
    def test_identical(self):
        x = np.random.default_rng(0).standard_normal((20, 3))
        assert cd_unit(x, x, [1.0, 1.0, 1.0]) == 0.0

    def test_scale_identity(self):
        # cd_unit == CD / |s|^2: pick clouds with CD = 0.0008, |s| = 2
        a = np.array([[0.0, 0, 0]])
        b = np.array([[np.sqrt(0.0004), 0, 0]])
        assert chamfer_distance(a, b) == pytest.approx(0.0008)
        assert cd_unit(a, b, [2.0, 0.0, 0.0]) == pytest.approx(0.0002)

    def test_zero_scale(self):
        with pytest.raises(ZeroScale):
            cd_unit(CUBE, CUBE, [0.0, 0.0, 0.0])


class TestFps:
    def test_square_diameter_matches_bruteforce(self):
        square = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
        idx = farthest_point_sampling(square, 2)
        best = max(
            itertools.combinations(range(4), 2),
            key=lambda p: np.linalg.norm(square[p[0]] - square[p[1]]),
        )
        assert np.linalg.norm(square[idx[0]] - square[idx[1]]) == pytest.approx(
            np.linalg.norm(square[best[0]] - square[best[1]])
        )

    def test_k_equals_n_is_permutation(self):
        rng = np.random.default_rng(4)
        cloud = rng.standard_normal((17, 3))
        idx = farthest_point_sampling(cloud, 17)
        assert sorted(idx) == list(range(17))

    def test_degenerate_tie_break(self):
        cloud = np.zeros((5, 3))
        assert list(farthest_point_sampling(cloud, 2)) == [0, 1]

    def test_k2_matches_bruteforce_diameter(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            cloud = rng.standard_normal((rng.integers(5, 64), 3))
            idx = farthest_point_sampling(cloud, 2)
            got = np.linalg.norm(cloud[idx[0]] - cloud[idx[1]])
            diam = max(
                np.linalg.norm(a - b) for a, b in itertools.combinations(cloud, 2)
            )
            assert got == pytest.approx(diam)

    def test_too_few(self):
        with pytest.raises(TooFewPoints):
            farthest_point_sampling(CUBE, 9)


class TestKnn:
    def test_self_query(self):
        base = np.random.default_rng(5).standard_normal((10, 3))
        idx = knn_indices(base[3:4], base, 1)
        assert idx[0, 0] == 3

    def test_line_case(self):
        base = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]])
        idx = knn_indices(np.array([[1.4, 0, 0]]), base, 2)
        assert list(idx[0]) == [1, 2]

    def test_full_k_is_permutation(self):
        rng = np.random.default_rng(6)
        base = rng.standard_normal((8, 3))
        idx = knn_indices(rng.standard_normal((5, 3)), base, 8)
        for row in idx:
            assert sorted(row) == list(range(8))

    def test_sorted_with_index_ties(self):
        base = np.array([[1.0, 0, 0], [-1.0, 0, 0], [2.0, 0, 0]])
        idx = knn_indices(np.array([[0.0, 0, 0]]), base, 3)
        assert list(idx[0]) == [0, 1, 2]  # equal first two distances keep order

    def test_too_few(self):
        with pytest.raises(TooFewPoints):
            knn_indices(CUBE, CUBE, 9)


class TestFrameMaps:
    def test_identity_pose(self):
        pose = Pose(np.eye(3), np.zeros(3), np.array([1.0, 0, 0]))
        np.testing.assert_array_equal(model_to_observation(CUBE, pose), CUBE)

    def test_hand_point(self):
        pose = Pose(rotation_about_axis([0, 0, 1.0], np.pi / 2), [0.0, 0, 1.0], [2.0, 0, 0])
        out = model_to_observation(np.array([[1.0, 0, 0]]), pose)
        np.testing.assert_allclose(out, [[0.0, 2.0, 1.0]], atol=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(7)
        for seed in range(20):
            pose = random_pose(np.random.default_rng(seed))
            cloud = rng.standard_normal((32, 3))
            back = nocs_ground_truth(model_to_observation(cloud, pose), pose)
            assert np.abs(back - cloud).max() < 1e-12

    def test_translation_maps_to_origin(self):
        pose = random_pose(np.random.default_rng(8))
        out = nocs_ground_truth(pose.t[None, :], pose)
        np.testing.assert_allclose(out, np.zeros((1, 3)), atol=1e-12)

    def test_nocs_is_scaled_isometry(self):
        rng = np.random.default_rng(9)
        pose = random_pose(rng)
        cloud = rng.standard_normal((16, 3))
        nocs = nocs_ground_truth(cloud, pose)
        d_obs = np.linalg.norm(cloud[:, None] - cloud[None, :], axis=-1)
        d_nocs = np.linalg.norm(nocs[:, None] - nocs[None, :], axis=-1)
        np.testing.assert_allclose(d_nocs, d_obs / pose.scale, atol=1e-12)

    def test_zero_scale(self):
        pose = Pose(np.eye(3), np.zeros(3), np.zeros(3))
        with pytest.raises(ZeroScale):
            nocs_ground_truth(CUBE, pose)


class TestRelationMatrix:
    def test_structure(self):
        rng = np.random.default_rng(10)
        g = relation_matrix(rng.standard_normal((12, 3)), 1.0)
        np.testing.assert_array_equal(np.diag(g), np.zeros(12))
        np.testing.assert_array_equal(g, g.T)
        assert (g >= 0).all()

    def test_hand_value(self):
        g = relation_matrix([[0.0, 0, 0], [1.0, 0, 0]], 2.0)
        assert g[0, 1] == pytest.approx(0.5)

    def test_rigid_invariance(self):
        rng = np.random.default_rng(11)
        cloud = rng.standard_normal((10, 3))
        R = random_rotation(rng)
        moved = cloud @ R.T + rng.standard_normal(3)
        np.testing.assert_allclose(
            relation_matrix(moved, 1.5), relation_matrix(cloud, 1.5), atol=1e-12
        )

    def test_structural_identity_with_nocs(self):
        # relation(O_gt, 1) == relation(P, |s|): the fact behind the
        # relation-consistency loss
        rng = np.random.default_rng(12)
        pose = random_pose(rng)
        cloud = rng.standard_normal((8, 3))
        lhs = relation_matrix(nocs_ground_truth(cloud, pose), 1.0)
        rhs = relation_matrix(cloud, pose.scale)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_zero_scale(self):
        with pytest.raises(ZeroScale):
            relation_matrix(CUBE, 0.0)


class TestScoreTargets:
    def test_on_surface(self):
        r = score_targets(CUBE[:1], CUBE, 0.05)
        assert r[0] == 1.0

    def test_hand_value(self):
        r = score_targets([[0.05, 0, 0]], [[0.0, 0, 0]], 0.05)
        assert r[0] == pytest.approx(np.exp(-1.0))

    def test_monotone_decreasing(self):
        ds = np.linspace(0, 1, 11)
        cands = np.stack([ds, np.zeros(11), np.zeros(11)], axis=1)
        r = score_targets(cands, [[0.0, 0, 0]], 0.05)
        assert (np.diff(r) < 0).all()
