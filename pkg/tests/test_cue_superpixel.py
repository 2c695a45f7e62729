import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage

from vsod.cue_superpixel import (
    N_FEATURES,
    SolverParams,
    SuperpixelParams,
    _group_shrink,
    _svt,
    build_feature_matrix,
    slic_segment,
    smd_decompose,
    superpixel_priors,
    superpixel_saliency,
)
from vsod.features import build_channel_stack


def _two_region(h=40, w=60):
    img = np.zeros((h, w, 3), np.uint8)
    img[:, : w // 2] = (220, 30, 30)
    img[:, w // 2:] = (30, 30, 220)
    return build_channel_stack(img)[0]


def _rank1_plus_outlier(seed=0, d=26, n=20, col=7):
    r = np.random.default_rng(seed)
    F = np.outer(r.random(d), r.random(n))
    F[:, col] += r.random(d) * 2.0
    return F, col


class TestSlic:
    def test_two_regions_split_at_boundary(self):
        seg = slic_segment(_two_region(), 2)
        assert seg.n == 2
        assert len(np.unique(seg.labels[:, :30])) == 1 and len(np.unique(seg.labels[:, 30:])) == 1

    def test_constant_grid(self):
        stack, _ = build_channel_stack(np.full((40, 40, 3), 128, np.uint8))
        seg = slic_segment(stack, 4)
        assert seg.n == 4
        assert seg.sizes.min() / seg.sizes.max() > 0.8

    def test_labels_dense_connected(self):
        r = np.random.default_rng(0)
        stack, _ = build_channel_stack((r.random((48, 64, 3)) * 255).astype(np.uint8))
        seg = slic_segment(stack, 50)
        assert set(np.unique(seg.labels)) == set(range(seg.n))
        for k in range(seg.n):
            assert ndimage.label(seg.labels == k)[1] == 1

    def test_too_many_segments(self):
        with pytest.raises(ValueError):
            slic_segment(_two_region(4, 4), 17)

    def test_adheres_to_color_object(self):
        r = np.random.default_rng(2)
        texture = ndimage.gaussian_filter(r.random((60, 90)), 1.5)
        img = (texture[..., None] * 120 + 70).repeat(3, 2).astype(np.uint8)
        img[20:40, 30:55] = (20, 200, 40)
        stack, _ = build_channel_stack(img)
        seg = slic_segment(stack, 120)
        obj = np.zeros((60, 90), bool)
        obj[20:40, 30:55] = True
        straddle = [k for k in np.unique(seg.labels[obj]) if 0.1 < obj[seg.labels == k].mean() < 0.9]
        assert not straddle


class TestFeatureMatrix:
    def test_shape_and_range(self):
        stack = _two_region()
        seg = slic_segment(stack, 10)
        F = build_feature_matrix(seg, stack)
        assert F.shape == (N_FEATURES, seg.n) == (26, seg.n)
        assert np.all(np.isfinite(F)) and F.min() >= 0 and F.max() <= 1

    def test_constant_image_rows_constant(self):
        stack, _ = build_channel_stack(np.full((40, 40, 3), 90, np.uint8))
        seg = slic_segment(stack, 4)
        F = build_feature_matrix(seg, stack)
        assert np.all(F[:24].max(axis=1) == F[:24].min(axis=1))

    def test_two_region_color_patterns(self):
        stack = _two_region()
        seg = slic_segment(stack, 2)
        F = build_feature_matrix(seg, stack)
        assert len({tuple(c) for c in F[:24].T}) == 2


class TestProximalSteps:
    def test_svt_matches_eigh_route(self):
        r = np.random.default_rng(0)
        for _ in range(20):
            X = r.standard_normal((5, 5))
            tau = r.uniform(0.1, 1.5)
            # Independent route: right singular vectors from the eigen-decomposition of X^T X.
            evals, V = np.linalg.eigh(X.T @ X)
            s = np.sqrt(np.maximum(evals, 0.0))
            U = X @ V / s
            expected = (U * np.maximum(s - tau, 0.0)) @ V.T
            got, nuc = _svt(X, tau)
            np.testing.assert_allclose(got, expected, atol=1e-10)
            assert nuc == pytest.approx(np.maximum(s - tau, 0).sum(), abs=1e-10)

    @given(arrays(np.float64, (4, 6), elements=st.floats(-3, 3)), st.floats(0, 2))
    def test_group_shrink_is_column_prox(self, X, t):
        out = _group_shrink(X, np.full(6, t))
        for j in range(6):
            n = np.linalg.norm(X[:, j])
            expect = X[:, j] * max(0.0, 1 - t / n) if n > 0 else X[:, j] * 0
            np.testing.assert_allclose(out[:, j], expect, atol=1e-12)


class TestDecompose:
    def test_rank1_has_no_sparse_part(self):
        # Similar columns: every column's share of the right singular vector is
        # below the default lambda, so E = 0 is optimal.
        r = np.random.default_rng(1)
        F = np.outer(r.random(26), r.uniform(0.8, 1.0, 20))
        res = smd_decompose(F)
        assert np.abs(res.E).max() < 1e-6
        assert res.saliency_per_superpixel.max() < 1e-6

    def test_isolates_outlier(self):
        F, col = _rank1_plus_outlier()
        res = smd_decompose(F)
        norms = np.linalg.norm(res.E, axis=0)
        others = np.delete(norms, col)
        assert norms[col] >= 5 * others.max()
        assert res.saliency_per_superpixel[col] == 1.0

    def test_objective_non_increasing_and_reconstructs(self):
        F, _ = _rank1_plus_outlier(seed=3)
        res = smd_decompose(F)
        assert all(b <= a + 1e-12 for a, b in zip(res.objective, res.objective[1:]))
        np.testing.assert_allclose(res.L + res.E, F, atol=1e-12)
        assert res.converged and res.residual <= 1e-6

    def test_against_convex_solver(self):
        cp = pytest.importorskip("cvxpy")
        r = np.random.default_rng(4)
        F = np.outer(r.random(4), r.random(4)) + np.diag([0, 0, 1.5, 0])
        lam, w = 0.6, np.array([1.0, 0.8, 0.5, 1.2])
        L = cp.Variable((4, 4))
        E = F - L
        obj = cp.normNuc(L) + lam * cp.sum(cp.multiply(w, cp.norm(E, 2, axis=0)))
        ref = cp.Problem(cp.Minimize(obj)).solve(solver="SCS", eps=1e-9, max_iters=200000)
        res = smd_decompose(F, w, SolverParams(lam=lam, max_iters=2000, tol=1e-10))
        assert res.objective[-1] == pytest.approx(ref, rel=1e-3)

    def test_uniform_weight_scaling_keeps_argmax(self):
        F, _ = _rank1_plus_outlier(seed=5)
        a = smd_decompose(F, np.full(20, 1.0))
        b = smd_decompose(F, np.full(20, 0.5))
        assert np.argmax(a.saliency_per_superpixel) == np.argmax(b.saliency_per_superpixel)

    def test_zero_matrix(self):
        res = smd_decompose(np.zeros((26, 5)))
        assert res.converged and not res.saliency_per_superpixel.any()

    def test_non_convergence_flag(self):
        F, _ = _rank1_plus_outlier(seed=6)
        res = smd_decompose(F, solver=SolverParams(max_iters=2, tol=1e-12))
        assert not res.converged and res.iterations == 2

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            smd_decompose(np.ones((3, 3)), np.array([1.0, -1.0, 1.0]))


class TestSuperpixelSaliency:
    def test_constant_frame(self):
        stack, _ = build_channel_stack(np.full((40, 50, 3), 60, np.uint8))
        assert not superpixel_saliency(stack).any()

    def test_constant_within_superpixels(self):
        r = np.random.default_rng(7)
        img = (r.random((48, 64, 3)) * 60 + 80).astype(np.uint8)
        img[15:35, 20:45] = (230, 40, 40)
        stack, _ = build_channel_stack(img)
        s = superpixel_saliency(stack)
        seg = slic_segment(stack, 300)
        for k in range(seg.n):
            assert np.ptp(s[seg.labels == k]) == 0.0

    def test_large_object_detected_as_whole(self):
        r = np.random.default_rng(8)
        img = (ndimage.gaussian_filter(r.random((80, 120)), 1.0)[..., None] * 90 + 80).repeat(3, 2).astype(np.uint8)
        img[20:60, 35:85] = (40, 210, 60)
        stack, _ = build_channel_stack(img)
        s = superpixel_saliency(stack)
        hot = s >= 0.5
        lab, n = ndimage.label(hot)
        assert n >= 1
        biggest = np.argmax(np.bincount(lab.ravel())[1:]) + 1
        region = lab == biggest
        obj = np.zeros(hot.shape, bool)
        obj[20:60, 35:85] = True
        assert (region & obj).sum() / obj.sum() > 0.7
        assert (region & ~obj).sum() / region.sum() < 0.2

    def test_priors_in_unit_range(self):
        stack = _two_region()
        seg = slic_segment(stack, 20)
        p = superpixel_priors(seg, stack)
        assert p.min() >= 0 and p.max() <= 1

    def test_higher_prior_means_lower_penalty(self):
        # Two identical outlier columns: the one with the smaller weight keeps more of E.
        r = np.random.default_rng(9)
        F = np.outer(r.random(26), r.uniform(0.8, 1.0, 20))
        bump = r.random(26)
        F[:, 3] += bump
        F[:, 11] += bump
        w = np.ones(20)
        w[11] = 0.5
        res = smd_decompose(F, w)
        norms = np.linalg.norm(res.E, axis=0)
        assert norms[11] > norms[3]

    def test_prior_floor_validated(self):
        with pytest.raises(ValueError):
            SuperpixelParams(prior_floor=0.0)
