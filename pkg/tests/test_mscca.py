import numpy as np
import pytest

from rmscca.covariance import DataPair, EstimatorMode, build_k
from rmscca.exceptions import InvalidInputError, NoViableLambdaError
from rmscca.mscca import CvPlan, CvSelection, cv_select, deflate, fit_pairs, make_folds
from rmscca.scca import (
    SparsePairConfig,
    canonical_vectors,
    projected_correlation,
    sparse_singular_pair,
)
from rmscca.exceptions import DegeneratePairError
from rmscca.simulate import SimulationSpec, generate


class TestDeflate:
    def test_rank_one_annihilated(self):
        rng = np.random.default_rng(0)
        u = rng.standard_normal(6)
        v = rng.standard_normal(4)
        u /= np.linalg.norm(u)
        v /= np.linalg.norm(v)
        out = deflate(2.5 * np.outer(u, v), u, v)
        assert np.linalg.norm(out) <= 1e-12

    def test_rank_two_leaves_second_singular_value(self):
        rng = np.random.default_rng(1)
        Q1, _ = np.linalg.qr(rng.standard_normal((7, 2)))
        Q2, _ = np.linalg.qr(rng.standard_normal((5, 2)))
        k = 3.0 * np.outer(Q1[:, 0], Q2[:, 0]) + 1.2 * np.outer(Q1[:, 1], Q2[:, 1])
        U, s, Vt = np.linalg.svd(k)
        out = deflate(k, U[:, 0], Vt[0])
        assert np.linalg.svd(out, compute_uv=False)[0] == pytest.approx(s[1], abs=1e-12)

    def test_zero_coefficient_leaves_k(self):
        k = np.zeros((4, 4))
        k[:2, :2] = [[0.5, 0.1], [0.2, 0.3]]
        u = np.array([0, 0, 1.0, 0])
        v = np.array([0, 0, 0, 1.0])
        np.testing.assert_array_equal(deflate(k, u, v), k)

    def test_orthogonality(self):
        rng = np.random.default_rng(2)
        k = rng.standard_normal((9, 6))
        u = rng.standard_normal(9)
        v = rng.standard_normal(6)
        u /= np.linalg.norm(u)
        v /= np.linalg.norm(v)
        assert abs(u @ deflate(k, u, v) @ v) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            deflate(np.eye(3), np.ones(2), np.ones(3))


class TestFolds:
    def test_even_split(self):
        assert np.bincount(make_folds(10, 5, 0)).tolist() == [2] * 5

    def test_remainder(self):
        assert sorted(np.bincount(make_folds(7, 3, 0)).tolist(), reverse=True) == [3, 2, 2]

    def test_deterministic(self):
        np.testing.assert_array_equal(make_folds(31, 4, 9), make_folds(31, 4, 9))
        assert not np.array_equal(make_folds(31, 4, 9), make_folds(31, 4, 10))

    def test_too_many_folds(self):
        with pytest.raises(InvalidInputError):
            make_folds(3, 4, 0)

    def test_plan_validation(self):
        with pytest.raises(InvalidInputError):
            CvPlan(2, (0, 0, 0))
        with pytest.raises(InvalidInputError):
            CvPlan(2, (0, 1), lambda_grid=(0.2, 0.1))
        with pytest.raises(InvalidInputError):
            CvPlan(2, (0, 1), lambda_grid=(0.1, 0.1))
        with pytest.raises(InvalidInputError):
            CvPlan(2, (0, 1), lambda_grid=(0.0, 2.5))


def _planted(n=120, p=20, q=25, seed=0, groups=((6, 8),), tail="clean"):
    return generate(SimulationSpec(n, p, q, groups=groups, seed=seed, tail=tail))


def exhaustive_grid(data, prior, plan, mode):
    """Every cell and fold re-evaluated through the single-pair path."""
    means = {}
    for lu in plan.lambda_grid:
        for lv in plan.lambda_grid:
            scores = []
            for mask in plan.fold_masks():
                train, test = data.subset(~mask), data.subset(mask)
                k = build_k(train, mode)
                for u, v in prior:
                    k = k.replace_k(deflate(k, u, v))
                try:
                    pr = sparse_singular_pair(k, SparsePairConfig(lu, lv))
                except DegeneratePairError:
                    scores = None
                    break
                pr = canonical_vectors(pr, k)
                scores.append(projected_correlation(test, pr.alpha, pr.beta, mode))
            means[(lu, lv)] = -np.inf if scores is None else float(np.mean(scores))
    return means


class TestCvSelect:
    def test_singleton_grid(self):
        data, _ = _planted()
        sel = cv_select(data, [], CvPlan.create(data.n, 4, (0.0,), seed=1))
        assert (sel.lambda_u_star, sel.lambda_v_star) == (0.0, 0.0)

    def test_tie_prefers_sparser(self):
        cells = np.array([[0.0, 0.0], [0.1, 0.2], [0.2, 0.1], [0.0, 0.3]])
        sel = CvSelection(0, 0, 0, cells, np.array([0.5, 0.7, 0.7, 0.7]), np.ones(4, bool))
        # sums 0.3, 0.3, 0.3 tie; the larger lambda_u wins
        assert sel.ranked_cells()[0] == 2
        sel = CvSelection(0, 0, 0, cells, np.array([0.5, 0.7, 0.6, 0.7]), np.ones(4, bool))
        assert sel.ranked_cells()[:2] == [1, 3]

    @pytest.mark.parametrize("mode", ["pearson", "spearman"])
    def test_matches_exhaustive_oracle(self, mode):
        data, _ = generate(SimulationSpec(200, 30, 40, groups=((10, 20), (5, 5)), seed=4))
        plan = CvPlan.create(data.n, 5, seed=2)
        mode = EstimatorMode(mode)
        for prior_count in (0, 1):
            prior = []
            if prior_count:
                first = fit_pairs(data, 1, plan, mode).pairs[0]
                prior = [(first.u, first.v)]
            sel = cv_select(data, prior, plan, mode)
            oracle = exhaustive_grid(data, prior, plan, mode)
            got = dict(zip(map(tuple, sel.cells), sel.cell_means))
            for cell, m in oracle.items():
                if np.isinf(m):
                    assert np.isinf(got[cell])
                else:
                    assert got[cell] == pytest.approx(m, abs=1e-9)
            best = max(oracle.values())
            assert sel.cc_test_mean == pytest.approx(best, abs=1e-9)

    def test_all_cells_degenerate(self):
        rng = np.random.default_rng(3)
        data = DataPair(rng.standard_normal((30, 4)), rng.standard_normal((30, 4)))
        with pytest.raises(NoViableLambdaError):
            cv_select(data, [], CvPlan.create(30, 3, (1.9, 2.0), seed=0))


class TestFitPairs:
    def test_planted_rank_one(self):
        data, _ = _planted(n=150, groups=((6, 8),), seed=5)
        fit = fit_pairs(data, 2, CvPlan.create(data.n, seed=0))
        assert fit.pairs[0].cc > 3 * abs(fit.pairs[1].cc)
        assert fit.pairs[0].cc_test_mean > 0.8
        assert fit.pairs[0].cc_test_mean > fit.pairs[1].cc_test_mean + 0.3

    def test_empty_request(self):
        data, _ = _planted()
        fit = fit_pairs(data, 0, CvPlan.create(data.n))
        assert fit.pairs == [] and fit.pq_star == 0

    def test_pq_bound(self):
        data, _ = _planted(p=8, q=9, groups=((3, 3),))
        with pytest.raises(InvalidInputError):
            fit_pairs(data, 9, CvPlan.create(data.n))

    @pytest.mark.parametrize("mode", ["pearson", "spearman"])
    def test_deflation_orthogonality_and_supports(self, mode):
        data, _ = _planted(groups=((6, 8), (4, 4)), seed=6, tail="tlike")
        plan = CvPlan.create(data.n, seed=1)
        fit = fit_pairs(data, 4, plan, mode)
        k = build_k(data, mode).k
        for pr in fit.pairs:
            assert np.isfinite(pr.cc)
            assert pr.support_alpha.size and pr.support_beta.size
            assert abs(pr.cc - pr.u @ k @ pr.v) < 1e-12
            k = deflate(k, pr.u, pr.v)
            assert abs(pr.u @ k @ pr.v) <= 1e-10

    def test_bit_identical_reruns(self):
        data, _ = _planted(seed=7)
        plan = CvPlan.create(data.n, seed=3)
        a = fit_pairs(data, 3, plan, "spearman")
        b = fit_pairs(data, 3, plan, "spearman")
        for pa, pb in zip(a.pairs, b.pairs):
            for f in ("u", "v", "alpha", "beta"):
                assert np.array_equal(getattr(pa, f), getattr(pb, f))
            assert pa.cc == pb.cc and pa.cc_test_mean == pb.cc_test_mean

    def test_nonsparse_cc_tracks_svd(self):
        rng = np.random.default_rng(8)
        for trial in range(5):
            data = DataPair(rng.standard_normal((60, 6)), rng.standard_normal((60, 8)))
            plan = CvPlan(3, tuple(make_folds(60, 3, trial)), (0.0,), tol=1e-13, max_iter=500_000)
            fit = fit_pairs(data, 4, plan)
            s = np.linalg.svd(build_k(data).k, compute_uv=False)
            np.testing.assert_allclose(fit.cc, s[:4], atol=1e-6)
            assert np.all(np.diff(fit.cc) <= 1e-9)
