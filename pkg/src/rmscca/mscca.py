"""Multiple sparse canonical pairs: K deflation and cross-validated penalties."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .covariance import DataPair, EstimatorMode, KMatrix, build_k, k_from_arrays
from .exceptions import (
    DegeneratePairError,
    InvalidInputError,
    NoViableLambdaError,
)
from .scca import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    CanonicalPair,
    SparsePairConfig,
    batched_pairs,
    canonical_vectors,
    correlate_projections,
    projected_correlation,
    sparse_singular_pair,
)

DEFAULT_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
DEFAULT_NCV = 5


def make_folds(n: int, n_cv: int, seed=0) -> np.ndarray:
    """Random fold ids in ``0..n_cv-1``; fold sizes differ by at most one."""
    if n_cv < 2:
        raise InvalidInputError(f"n_cv={n_cv} must be at least 2")
    if n_cv > n:
        raise InvalidInputError(f"n_cv={n_cv} exceeds the number of samples {n}")
    order = np.random.default_rng(seed).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[order] = np.arange(n) % n_cv
    return folds


@dataclass(frozen=True)
class CvPlan:
    n_cv: int
    folds: tuple
    lambda_grid: tuple = DEFAULT_GRID
    seed: int = 0
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        folds = tuple(int(f) for f in self.folds)
        grid = tuple(float(g) for g in self.lambda_grid)
        object.__setattr__(self, "folds", folds)
        object.__setattr__(self, "lambda_grid", grid)
        if self.n_cv < 2:
            raise InvalidInputError("n_cv must be at least 2")
        if sorted(set(folds)) != list(range(self.n_cv)):
            raise InvalidInputError("every fold 0..n_cv-1 must be nonempty")
        if not grid:
            raise InvalidInputError("lambda grid is empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise InvalidInputError("lambda grid must be strictly increasing")
        if grid[0] < 0 or grid[-1] > 2:
            raise InvalidInputError("lambda grid must lie in [0, 2]")

    @classmethod
    def create(cls, n, n_cv=DEFAULT_NCV, lambda_grid=DEFAULT_GRID, seed=0, **kw) -> "CvPlan":
        return cls(n_cv, tuple(make_folds(n, n_cv, seed)), tuple(lambda_grid), seed, **kw)

    @property
    def n(self) -> int:
        return len(self.folds)

    def cells(self) -> np.ndarray:
        """All (lambda_u, lambda_v) combinations, lambda_u outer."""
        return np.array(list(itertools.product(self.lambda_grid, self.lambda_grid)))

    def fold_masks(self):
        folds = np.asarray(self.folds)
        return [folds == j for j in range(self.n_cv)]


@dataclass(frozen=True)
class CvSelection:
    lambda_u_star: float
    lambda_v_star: float
    cc_test_mean: float
    cells: np.ndarray
    cell_means: np.ndarray
    cell_converged: np.ndarray

    def ranked_cells(self) -> list[int]:
        """Cell indices best first: mean test cc, then sparsity, then lambda_u."""
        keys = [
            (m, lu + lv, lu) for m, (lu, lv) in zip(self.cell_means, self.cells)
        ]
        order = sorted(range(len(keys)), key=lambda i: keys[i], reverse=True)
        return [i for i in order if np.isfinite(self.cell_means[i])]


@dataclass(frozen=True)
class FitResult:
    pairs: list
    mode: EstimatorMode
    plan: CvPlan
    pq_star: int
    test_cor: EstimatorMode | None = None
    selections: list = field(default_factory=list, compare=False)

    @property
    def cc_test(self) -> np.ndarray:
        return np.array([pr.cc_test_mean for pr in self.pairs])

    @property
    def cc(self) -> np.ndarray:
        return np.array([pr.cc for pr in self.pairs])


def deflate(k, u, v) -> np.ndarray:
    """k - (u' k v) u v'."""
    km = k.k if isinstance(k, KMatrix) else np.asarray(k, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if km.shape != (u.size, v.size):
        raise InvalidInputError(f"cannot deflate {km.shape} by vectors ({u.size}, {v.size})")
    d = u @ km @ v
    return km - d * np.outer(u, v)


class _Folds:
    """Training-fold K matrices and held-out rows, deflated in step with the full K."""

    def __init__(self, data: DataPair, plan: CvPlan, mode: EstimatorMode):
        if plan.n != data.n:
            raise InvalidInputError(f"plan covers {plan.n} samples, data has {data.n}")
        self.test_rows = []
        ks, dx, dy = [], [], []
        for mask in plan.fold_masks():
            km = k_from_arrays(data.x[~mask], data.y[~mask], mode, data.x_names, data.y_names)
            ks.append(km.k)
            dx.append(km.dxx_inv_sqrt)
            dy.append(km.dyy_inv_sqrt)
            self.test_rows.append(mask)
        self.ks = np.stack(ks)
        self.dx = np.stack(dx)
        self.dy = np.stack(dy)

    def deflate(self, u, v):
        for j in range(self.ks.shape[0]):
            self.ks[j] = deflate(self.ks[j], u, v)


def _select(data: DataPair, folds: _Folds, plan: CvPlan, test_cor) -> CvSelection:
    cells = plan.cells()
    u, v, ok, conv = batched_pairs(folds.ks, cells, plan.tol, plan.max_iter)
    scores = np.empty(ok.shape)
    for j, rows in enumerate(folds.test_rows):
        alpha = folds.dx[j][:, None] * u[j]
        beta = folds.dy[j][:, None] * v[j]
        r, _ = correlate_projections(data.x[rows] @ alpha, data.y[rows] @ beta, test_cor)
        scores[j] = r
    viable = ok.all(axis=0)
    means = np.where(viable, scores.mean(axis=0), -np.inf)
    sel = CvSelection(0.0, 0.0, -np.inf, cells, means, conv.all(axis=0))
    ranked = sel.ranked_cells()
    if not ranked:
        raise NoViableLambdaError()
    best = ranked[0]
    return replace(
        sel,
        lambda_u_star=float(cells[best, 0]),
        lambda_v_star=float(cells[best, 1]),
        cc_test_mean=float(means[best]),
    )


def cv_select(data: DataPair, prior, plan: CvPlan, mode=EstimatorMode.PEARSON,
              test_cor=None) -> CvSelection:
    """Pick (lambda_u, lambda_v) maximizing the mean held-out correlation.

    ``prior`` lists full-data ``(u, v)`` of pairs already fitted; each training
    K is deflated by them in order before the search.
    """
    mode = EstimatorMode.parse(mode)
    test_cor = EstimatorMode.parse(test_cor or mode)
    folds = _Folds(data, plan, mode)
    for u, v in prior:
        folds.deflate(u, v)
    return _select(data, folds, plan, test_cor)


def fit_pairs(data: DataPair, pq_star: int, plan: CvPlan, mode=EstimatorMode.PEARSON,
              test_cor=None) -> FitResult:
    """Fit ``pq_star`` sequential sparse pairs.

    For pair i: select penalties by CV on the deflated training Ks, refit on the
    full-data K_i, then deflate the full and training Ks by the refit (u, v).
    On failure :class:`NoViableLambdaError` carries ``pair_index`` and the pairs
    fitted so far in ``partial``.
    """
    mode = EstimatorMode.parse(mode)
    test_cor = EstimatorMode.parse(test_cor or mode)
    if pq_star < 0 or pq_star > min(data.p, data.q):
        raise InvalidInputError(f"pq_star={pq_star} must lie in [0, min(p, q)]")
    pairs, selections = [], []
    if pq_star == 0:
        return FitResult(pairs, mode, plan, 0, test_cor, selections)

    k = build_k(data, mode)
    folds = _Folds(data, plan, mode)
    for i in range(pq_star):
        try:
            sel = _select(data, folds, plan, test_cor)
            pair = _refit(k, sel, plan)
        except NoViableLambdaError as exc:
            exc.pair_index = i
            exc.partial = FitResult(pairs, mode, plan, pq_star, test_cor, selections)
            exc.args = (f"every lambda grid cell was degenerate (pair {i + 1})",)
            raise
        pair = canonical_vectors(pair, k)
        pair = replace(
            pair,
            cc_data=projected_correlation(data, pair.alpha, pair.beta, test_cor),
        )
        pairs.append(pair)
        selections.append(sel)
        k = k.replace_k(deflate(k, pair.u, pair.v))
        folds.deflate(pair.u, pair.v)
    return FitResult(pairs, mode, plan, pq_star, test_cor, selections)


def _refit(k: KMatrix, sel: CvSelection, plan: CvPlan) -> CanonicalPair:
    # a cell viable on every training fold can still zero out on the full K;
    # fall back down the CV ranking
    for idx in sel.ranked_cells():
        lu, lv = (float(a) for a in sel.cells[idx])
        cfg = SparsePairConfig(lu, lv, plan.tol, plan.max_iter)
        try:
            pair = sparse_singular_pair(k, cfg)
        except (DegeneratePairError, InvalidInputError):
            continue
        return replace(pair, cc_test_mean=float(sel.cell_means[idx]))
    raise NoViableLambdaError()
