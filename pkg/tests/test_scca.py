import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rmscca.covariance import DataPair, EstimatorMode, KMatrix, build_k
from rmscca.exceptions import DegeneratePairError, InvalidInputError
from rmscca.scca import (
    CanonicalPair,
    SparsePairConfig,
    batched_pairs,
    canonical_vectors,
    projected_correlation,
    soft_threshold,
    sparse_singular_pair,
)

from oracles import pearson, spearman

TIGHT = SparsePairConfig(0.0, 0.0, tol=1e-12, max_iter=200_000)


def svd_top(k):
    U, s, Vt = np.linalg.svd(k)
    return U[:, 0], Vt[0], s[0]


def sign_free_dist(a, b):
    return min(np.linalg.norm(a - b), np.linalg.norm(a + b))


class TestSoftThreshold:
    def test_direct(self):
        np.testing.assert_allclose(soft_threshold([0.5, -0.3, 0.1], 0.4), [0.3, -0.1, 0.0])

    def test_identity_at_zero(self):
        w = np.array([0.2, -1.5, 0.0, 3.0])
        np.testing.assert_array_equal(soft_threshold(w, 0.0), w)

    def test_all_below_half_lambda(self):
        np.testing.assert_array_equal(soft_threshold([0.1, -0.05], 0.4), [0.0, 0.0])

    @settings(max_examples=100)
    @given(arrays(np.float64, 8, elements=st.floats(-3, 3)), st.floats(0, 2), st.floats(0, 2))
    def test_zero_set_monotone_in_lambda(self, w, l1, l2):
        lo, hi = sorted((l1, l2))
        z_lo = soft_threshold(w, lo) == 0
        z_hi = soft_threshold(w, hi) == 0
        assert np.all(z_hi[z_lo])


class TestSparseSingularPair:
    def test_diagonal(self):
        pr = sparse_singular_pair(np.diag([2.0, 1.0]), SparsePairConfig())
        # default tol stops within 1e-6 of the fixed point
        np.testing.assert_allclose(pr.u, [1, 0], atol=1e-6)
        np.testing.assert_allclose(pr.v, [1, 0], atol=1e-6)
        assert pr.cc == pytest.approx(2.0, abs=1e-10)
        assert pr.converged

    def test_rank_one(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal(5)
        b = rng.standard_normal(4)
        a /= np.linalg.norm(a)
        b /= np.linalg.norm(b)
        pr = sparse_singular_pair(3 * np.outer(a, b))
        assert sign_free_dist(pr.u, a) < 1e-10
        assert sign_free_dist(pr.v, b) < 1e-10
        assert pr.cc == pytest.approx(3.0)

    def test_random_matches_svd(self):
        rng = np.random.default_rng(1)
        k = rng.standard_normal((8, 5))
        u, v, s = svd_top(k)
        pr = sparse_singular_pair(k, TIGHT)
        assert abs(pr.cc - s) < 1e-6
        assert sign_free_dist(pr.u, u) < 1e-6
        assert sign_free_dist(pr.v, v) < 1e-6

    def test_unit_norms_and_cc_recomputed(self):
        rng = np.random.default_rng(2)
        k = rng.standard_normal((12, 9)) * 0.2
        pr = sparse_singular_pair(k, SparsePairConfig(0.3, 0.2))
        assert abs(np.linalg.norm(pr.u) - 1) < 1e-12
        assert abs(np.linalg.norm(pr.v) - 1) < 1e-12
        assert abs(pr.cc - float(pr.u @ k @ pr.v)) < 1e-12

    def test_sign_convention(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            pr = sparse_singular_pair(rng.standard_normal((6, 4)), SparsePairConfig(0.2, 0.1))
            assert pr.u[np.argmax(np.abs(pr.u))] > 0

    def test_restart_from_converged_is_stable(self):
        rng = np.random.default_rng(4)
        k = rng.standard_normal((10, 7))
        cfg = SparsePairConfig(0.4, 0.3)
        pr = sparse_singular_pair(k, cfg)
        again = sparse_singular_pair(k, cfg, init=(pr.u, pr.v))
        assert np.abs(again.u - pr.u).max() < cfg.tol
        assert np.abs(again.v - pr.v).max() < cfg.tol

    def test_sparsity_increases_with_lambda(self):
        rng = np.random.default_rng(5)
        k = rng.standard_normal((30, 20)) * 0.1
        k[:4, :3] += 0.8
        sizes = [sparse_singular_pair(k, SparsePairConfig(l, l)).u.nonzero()[0].size
                 for l in (0.0, 0.3, 0.6)]
        assert sizes[0] == 30
        assert sizes[2] <= sizes[1] < sizes[0]

    def test_annihilation_raises(self):
        k = np.full((4, 4), 0.1)
        # every normalized entry is 0.5; lambda/2 = 0.6 removes them all
        with pytest.raises(DegeneratePairError) as ei:
            sparse_singular_pair(k, SparsePairConfig(1.2, 0.0))
        assert ei.value.lambda_u == 1.2

    def test_zero_init_rejected(self):
        with pytest.raises(InvalidInputError):
            sparse_singular_pair(np.eye(3), init=(np.zeros(3), np.ones(3)))

    def test_max_iter_reports_nonconvergence(self):
        rng = np.random.default_rng(6)
        pr = sparse_singular_pair(rng.standard_normal((9, 9)), SparsePairConfig(max_iter=1))
        assert not pr.converged and pr.iterations == 1

    def test_config_validation(self):
        with pytest.raises(InvalidInputError):
            SparsePairConfig(2.5, 0.0)
        with pytest.raises(InvalidInputError):
            SparsePairConfig(tol=1.5)

    def test_power_iteration_property(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            p, q = rng.integers(1, 21, size=2)
            k = rng.standard_normal((p, q))
            u, v, s = svd_top(k)
            pr = sparse_singular_pair(k, TIGHT)
            assert abs(pr.cc - s) <= 1e-6
            assert sign_free_dist(pr.u, u) <= 1e-5
            assert sign_free_dist(pr.v, v) <= 1e-5


class TestBatchedPairs:
    def test_agrees_with_single_cell(self):
        rng = np.random.default_rng(8)
        ks = rng.standard_normal((3, 12, 9)) * 0.3
        ks[:, :3, :2] += 0.7
        lams = np.array([(a, b) for a in (0, 0.2, 0.5, 1.5) for b in (0, 0.3, 1.8)])
        u, v, ok, conv = batched_pairs(ks, lams)
        for f in range(3):
            for c, (lu, lv) in enumerate(lams):
                try:
                    pr = sparse_singular_pair(ks[f], SparsePairConfig(lu, lv))
                except DegeneratePairError:
                    assert not ok[f, c]
                    continue
                assert ok[f, c]
                assert conv[f, c] == pr.converged
                np.testing.assert_allclose(u[f, :, c], pr.u, atol=1e-12)
                np.testing.assert_allclose(v[f, :, c], pr.v, atol=1e-12)


class TestCanonicalVectors:
    def test_identity_scaling(self):
        pr = CanonicalPair(u=np.array([0.6, 0.8]), v=np.array([1.0]), cc=0.5)
        k = KMatrix(np.zeros((2, 1)), np.ones(2), np.ones(1))
        out = canonical_vectors(pr, k)
        np.testing.assert_array_equal(out.alpha, pr.u)
        np.testing.assert_array_equal(out.beta, pr.v)

    def test_support_preserved(self):
        u = np.zeros(9)
        u[[2, 7]] = [0.6, -0.8]
        pr = CanonicalPair(u=u, v=np.array([1.0]), cc=0.1)
        k = KMatrix(np.zeros((9, 1)), np.linspace(0.5, 3, 9), [2.0])
        assert canonical_vectors(pr, k).support_alpha.tolist() == [2, 7]

    def test_bruteforce_product(self):
        rng = np.random.default_rng(9)
        x, y = rng.standard_normal((25, 4)) * [1, 2, 3, 4], rng.standard_normal((25, 3)) * 5
        k = build_k(DataPair(x, y))
        pr = canonical_vectors(sparse_singular_pair(k, SparsePairConfig(0.1, 0.1)), k)
        sd_x = [np.sqrt(sum((a - x[:, j].mean()) ** 2 for a in x[:, j]) / 24) for j in range(4)]
        expected = [pr.u[j] / sd_x[j] for j in range(4)]
        np.testing.assert_allclose(pr.alpha, expected, rtol=1e-12)


class TestProjectedCorrelation:
    def test_perfect(self):
        a = np.array([1.0, 3.0, 2.0, 5.0])[:, None]
        assert projected_correlation(DataPair(a, a), [1.0], [1.0]) == pytest.approx(1.0)

    def test_zero_beta_flagged(self):
        rng = np.random.default_rng(10)
        d = DataPair(rng.standard_normal((10, 2)), rng.standard_normal((10, 3)))
        r, flag = projected_correlation(d, [1.0, 0.5], np.zeros(3), with_flag=True)
        assert r == 0.0 and flag

    @pytest.mark.parametrize("mode", ["pearson", "spearman"])
    def test_bruteforce(self, mode):
        rng = np.random.default_rng(12)
        d = DataPair(rng.standard_normal((50, 4)), rng.standard_normal((50, 3)))
        d = DataPair(d.x, d.y + 0.5 * d.x[:, :3])
        alpha, beta = rng.standard_normal(4), rng.standard_normal(3)
        sx = [sum(d.x[i, j] * alpha[j] for j in range(4)) for i in range(50)]
        sy = [sum(d.y[i, j] * beta[j] for j in range(3)) for i in range(50)]
        expected = pearson(sx, sy) if mode == "pearson" else spearman(sx, sy)
        assert projected_correlation(d, alpha, beta, EstimatorMode(mode)) == pytest.approx(expected, abs=1e-12)
