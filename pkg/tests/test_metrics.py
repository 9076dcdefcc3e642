from __future__ import annotations

import math

import numpy as np
import pytest

from signweave.metrics import (
    MotionMetricsReport,
    SyntheticSkeletonAdapter,
    bleu4,
    chrf,
    dtw_align,
    dtw_mpjpe,
    dtw_pa_mpjpe,
    fgd,
    frame_cost_matrix,
    length_ratio,
    procrustes,
    ranking_metrics,
    text_metrics,
    token_f1,
)


def enumerate_paths(t_a, t_b):
    """All monotone paths from (0,0) to (t_a-1, t_b-1) with steps (1,0),(0,1),(1,1)."""
    paths = []

    def walk(i, j, acc):
        if i == t_a - 1 and j == t_b - 1:
            paths.append(list(acc))
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            ni, nj = i + di, j + dj
            if ni < t_a and nj < t_b:
                acc.append((ni, nj))
                walk(ni, nj, acc)
                acc.pop()

    walk(0, 0, [(0, 0)])
    return paths


def random_rotation(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


class TestDtw:
    def test_identical_diagonal(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(6, 4, 3))
        path, cost = dtw_align(a, a)
        assert cost == pytest.approx(0.0, abs=1e-12)
        assert path == [(i, i) for i in range(6)]

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            t_a = int(rng.integers(1, 6))
            t_b = int(rng.integers(1, 6))
            a = rng.normal(size=(t_a, 3, 3))
            b = rng.normal(size=(t_b, 3, 3))
            cost = frame_cost_matrix(a, b)
            best = min(sum(cost[i, j] for i, j in p) for p in enumerate_paths(t_a, t_b))
            _, got = dtw_align(a, b)
            assert got == pytest.approx(best, abs=1e-12)

    def test_translation_invariance(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(5, 4, 3))
        b = rng.normal(size=(7, 4, 3))
        path1, cost1 = dtw_align(a, b)
        shift = np.array([1.0, -2.0, 0.5])
        path2, cost2 = dtw_align(a + shift, b + shift)
        assert path1 == path2
        assert cost1 == pytest.approx(cost2, abs=1e-10)

    def test_path_steps_valid(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(8, 2, 3))
        b = rng.normal(size=(5, 2, 3))
        path, _ = dtw_align(a, b)
        assert path[0] == (0, 0) and path[-1] == (7, 4)
        for (i0, j0), (i1, j1) in zip(path, path[1:]):
            assert (i1 - i0, j1 - j0) in {(1, 0), (0, 1), (1, 1)}


class TestDtwError:
    def test_identical_zero(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=(6, 5, 3))
        assert dtw_mpjpe(a, a) == pytest.approx(0.0, abs=1e-12)

    def test_constant_offset(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(6, 5, 3))
        delta = np.array([0.3, -0.4, 1.2])
        assert dtw_mpjpe(a, a + delta) == pytest.approx(np.linalg.norm(delta), rel=1e-9)

    def test_randomized_vs_two_pass_oracle(self):
        rng = np.random.default_rng(6)
        a = rng.normal(size=(5, 4, 3))
        b = rng.normal(size=(4, 4, 3))
        path, _ = dtw_align(a, b)
        expected = np.mean([np.linalg.norm(a[i] - b[j], axis=-1).mean() for i, j in path])
        assert dtw_mpjpe(a, b) == pytest.approx(expected, rel=1e-12)

    def test_subset_restriction(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(5, 6, 3))
        b = a.copy()
        b[:, 3:, :] += 10.0  # error only outside the subset
        assert dtw_mpjpe(a, b, subset=np.arange(3)) == pytest.approx(0.0, abs=1e-12)
        with pytest.raises(ValueError):
            dtw_mpjpe(a, b, subset=np.array([], dtype=int))


class TestProcrustes:
    def test_exact_recovery(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            p = rng.normal(size=(10, 3))
            rot = random_rotation(rng)
            s = float(rng.uniform(0.5, 2.0))
            t = rng.normal(size=3)
            q = s * p @ rot.T + t
            r_hat, s_hat, t_hat, fb = procrustes(p, q)
            assert not fb
            aligned = s_hat * p @ r_hat.T + t_hat
            assert np.linalg.norm(aligned - q) < 1e-9
            assert s_hat == pytest.approx(s, rel=1e-9)

    def test_identity(self):
        rng = np.random.default_rng(9)
        p = rng.normal(size=(6, 3))
        rot, s, t, fb = procrustes(p, p)
        assert np.allclose(rot, np.eye(3), atol=1e-10)
        assert s == pytest.approx(1.0, abs=1e-10)
        assert np.allclose(t, 0.0, atol=1e-10)

    def test_degenerate_fallback(self):
        p = np.zeros((5, 3))
        q = np.ones((5, 3))
        rot, s, t, fb = procrustes(p, q)
        assert fb
        assert np.allclose(rot, np.eye(3)) and s == 1.0
        assert np.allclose(t, 1.0)

    def test_optimal_vs_rotation_grid_on_planar_toy(self):
        rng = np.random.default_rng(10)
        p = np.concatenate([rng.normal(size=(8, 2)), np.zeros((8, 1))], axis=1)
        q = np.concatenate([rng.normal(size=(8, 2)), np.zeros((8, 1))], axis=1)
        rot, s, t, fb = procrustes(p, q)
        best_res = ((s * p @ rot.T + t - q) ** 2).sum()
        # coarse oracle: in-plane rotations with optimal scale/translation per angle
        for angle in np.linspace(0, 2 * np.pi, 720, endpoint=False):
            c, si = np.cos(angle), np.sin(angle)
            r = np.array([[c, -si, 0.0], [si, c, 0.0], [0.0, 0.0, 1.0]])
            pr = p @ r.T
            pc = pr - pr.mean(axis=0)
            qc = q - q.mean(axis=0)
            denom = (pc**2).sum()
            scale = (pc * qc).sum() / denom
            res = ((scale * pc - qc) ** 2).sum()
            assert best_res <= res + 1e-9

    def test_pa_error_not_above_plain_error(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            a = rng.normal(size=(4, 8, 3))
            b = rng.normal(size=(4, 8, 3))
            assert dtw_pa_mpjpe(a, b) <= dtw_mpjpe(a, b) + 1e-9


class TestLengthRatio:
    def test_equal(self):
        assert length_ratio([10, 20], [10, 20]) == 1.0

    def test_double(self):
        assert length_ratio([20, 40], [10, 20]) == 2.0

    def test_mean_of_ratios(self):
        assert length_ratio([20, 5], [10, 10]) == pytest.approx(1.25)

    def test_zero_gt_rejected(self):
        with pytest.raises(ValueError):
            length_ratio([1.0], [0.0])


class TestFgd:
    def test_identical_sets(self):
        rng = np.random.default_rng(12)
        feats = rng.normal(size=(200, 8))
        assert fgd(feats, feats) < 1e-6

    def test_1d_two_gaussian_closed_form(self):
        rng = np.random.default_rng(13)
        z = rng.normal(size=(4000, 1))
        z = (z - z.mean()) / z.std(ddof=1)  # exact sample moments
        mu1, s1 = 0.0, 1.0
        mu2, s2 = 2.0, 1.5
        a = mu1 + s1 * z
        b = mu2 + s2 * z
        expected = (mu1 - mu2) ** 2 + (s1 - s2) ** 2
        assert fgd(a, b) == pytest.approx(expected, abs=1e-6)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(14)
        a = rng.normal(size=(60, 5))
        b = rng.normal(size=(50, 5))
        perm = rng.permutation(60)
        assert fgd(a[perm], b) == pytest.approx(fgd(a, b), abs=1e-10)

    def test_symmetry_and_nonnegativity(self):
        rng = np.random.default_rng(15)
        a = rng.normal(size=(80, 6))
        b = rng.normal(size=(70, 6)) + 0.3
        assert fgd(a, b) == pytest.approx(fgd(b, a), abs=1e-8)
        assert fgd(a, b) >= 0.0


class TestTextMetrics:
    def test_identical(self):
        tokens = "IX-1p LIKE BOOK".split()
        m = text_metrics(tokens, tokens)
        assert m["bleu4"] == pytest.approx(1.0)
        assert m["chrf"] == pytest.approx(1.0)
        assert m["f1"] == pytest.approx(1.0)

    def test_disjoint_tokens(self):
        assert token_f1("A B".split(), "C D".split()) == 0.0

    def test_empty_hypothesis(self):
        m = text_metrics([], "A B".split())
        assert m == {"bleu4": 0.0, "chrf": 0.0, "f1": 0.0}

    def test_four_token_toy_hand_computed(self):
        hyp = "a b c d".split()
        ref = "a b x d".split()
        # p1=3/4, smoothed p2=2/4, p3=1/3, p4=1/2; geometric mean = 0.5
        assert bleu4(hyp, ref) == pytest.approx(0.5, rel=1e-12)
        assert token_f1(hyp, ref) == pytest.approx(0.75)

    def test_brevity_penalty(self):
        hyp = "a b".split()
        ref = "a b c d".split()
        short = bleu4(hyp, ref)
        full = bleu4(ref, ref)
        assert short < full

    def test_scores_bounded(self):
        rng = np.random.default_rng(16)
        vocab = list("abcdefg")
        for _ in range(50):
            hyp = list(rng.choice(vocab, size=rng.integers(1, 8)))
            ref = list(rng.choice(vocab, size=rng.integers(1, 8)))
            m = text_metrics(hyp, ref)
            for v in m.values():
                assert 0.0 <= v <= 1.0 + 1e-12


class TestRankingMetrics:
    def test_rank_one(self):
        m = ranking_metrics([["x", "y", "z"]], ["x"])
        assert m["mrr"] == 1.0 and m["r@1"] == 1.0 and m["r@5"] == 1.0

    def test_rank_three(self):
        m = ranking_metrics([["a", "b", "x", "c", "d"]], ["x"])
        assert m["mrr"] == pytest.approx(1 / 3)
        assert m["r@1"] == 0.0 and m["r@5"] == 1.0

    def test_absent_reference(self):
        m = ranking_metrics([["a", "b"]], [None])
        assert m["mrr"] == 0.0 and m["r@10"] == 0.0

    def test_aggregation(self):
        lists = [["x", "a"], ["a", "x"], ["a", "b"]]
        refs = ["x", "x", "x"]
        m = ranking_metrics(lists, refs, ks=(1, 2))
        assert m["mrr"] == pytest.approx((1.0 + 0.5 + 0.0) / 3)
        assert m["r@1"] == pytest.approx(1 / 3)
        assert m["r@2"] == pytest.approx(2 / 3)


class TestSkeletonAdapter:
    def test_shapes_and_subsets(self):
        adapter = SyntheticSkeletonAdapter()
        frames = np.random.default_rng(17).normal(size=(5, 206))
        pts = adapter.to_points(frames)
        assert pts.shape == (5, adapter.num_points, 3)
        all_idx = np.sort(np.concatenate([adapter.body_joints, adapter.hand_joints, adapter.face_vertices]))
        assert np.array_equal(all_idx, np.arange(adapter.num_points))

    def test_feature_error_moves_points(self):
        adapter = SyntheticSkeletonAdapter()
        rng = np.random.default_rng(18)
        frames = rng.normal(size=(4, 206))
        perturbed = frames.copy()
        perturbed[:, 70] += 1.0  # an expression dim
        a = adapter.to_points(frames)
        b = adapter.to_points(perturbed)
        assert np.abs(a[:, adapter.face_vertices] - b[:, adapter.face_vertices]).max() > 0
        assert np.allclose(a[:, adapter.body_joints], b[:, adapter.body_joints])

    def test_report_row(self):
        row = MotionMetricsReport(0.1, 0.2, 0.15, 0.01, 0.05, 1.02, extras={"fgd": 3.0})
        d = row.to_dict()
        assert d["length_ratio"] == 1.02 and d["fgd"] == 3.0
