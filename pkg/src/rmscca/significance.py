"""Permutation cutoffs for the number of significant canonical pairs."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .covariance import DataPair, EstimatorMode
from .exceptions import InvalidInputError, NoViableLambdaError
from .mscca import CvPlan, fit_pairs

DEFAULT_NPERM = 100
DEFAULT_Q = 0.9


@dataclass(frozen=True)
class PermutationSummary:
    n_perm: int
    q_level: float
    perm_cc: np.ndarray
    cutoffs: np.ndarray
    j_star: int
    observed: np.ndarray


def permutation_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for permutation ``index``; order-free across workers."""
    return np.random.default_rng([int(master_seed), int(index)])


def permute_rows(y, seed) -> np.ndarray:
    y = np.asarray(y)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return y[rng.permutation(y.shape[0])]


def quantile7(values, q: float) -> float:
    """Linear-interpolation (Hyndman-Fan type 7) sample quantile.

    Tolerates ``-inf`` entries: interpolating against them returns ``-inf``.
    """
    a = np.sort(np.asarray(values, dtype=float))
    if a.size == 0:
        raise InvalidInputError("quantile of an empty sample")
    h = (a.size - 1) * q
    lo = int(np.floor(h))
    hi = min(lo + 1, a.size - 1)
    frac = h - lo
    if frac == 0 or a[lo] == a[hi]:
        return float(a[lo])
    if not np.isfinite(a[lo]):
        return float(a[lo])
    return float(a[lo] + frac * (a[hi] - a[lo]))


def _observed_cc_test(data, pq_star, plan, mode, test_cor) -> np.ndarray:
    out = np.full(pq_star, -np.inf)
    try:
        fit = fit_pairs(data, pq_star, plan, mode, test_cor)
        out[:] = fit.cc_test
    except NoViableLambdaError as exc:
        partial = exc.partial.cc_test
        out[: partial.size] = partial
    return out


def _one_permutation(args):
    data, pq_star, plan, mode, test_cor, master_seed, index, rows = args
    if rows is None:
        rows = permutation_rng(master_seed, index).permutation(data.n)
    return _observed_cc_test(data.with_y(data.y[rows]), pq_star, plan, mode, test_cor)


def permutation_distribution(data: DataPair, pq_star: int, plan: CvPlan,
                             mode=EstimatorMode.PEARSON, n_perm=DEFAULT_NPERM,
                             master_seed=0, test_cor=None, threads=1,
                             permutations=None) -> np.ndarray:
    """Mean test correlations of every pair, refit on ``n_perm`` row
    permutations of ``y``.

    Row r of the result comes from permutation r, drawn from its own seeded
    stream, so the matrix does not depend on ``threads``. Pairs that could not
    be fitted are recorded as ``-inf``. ``permutations`` overrides the random
    draws with explicit row orders.
    """
    if n_perm < 1:
        raise InvalidInputError("n_perm must be at least 1")
    mode = EstimatorMode.parse(mode)
    if permutations is not None:
        permutations = [np.asarray(r, dtype=np.int64) for r in permutations]
        if len(permutations) != n_perm:
            raise InvalidInputError("need one explicit permutation per n_perm")
    tasks = [
        (data, pq_star, plan, mode, test_cor, master_seed, r,
         None if permutations is None else permutations[r])
        for r in range(n_perm)
    ]
    if threads and threads > 1 and n_perm > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_one_permutation, tasks))
    else:
        rows = [_one_permutation(t) for t in tasks]
    return np.vstack(rows) if rows else np.empty((0, pq_star))


def count_significant(observed_cc_test, perm_cc, q_level=DEFAULT_Q) -> PermutationSummary:
    """Per-pair q_level cutoffs and the length of the leading run of pairs
    that beat them."""
    observed = np.asarray(observed_cc_test, dtype=float)
    perm_cc = np.atleast_2d(np.asarray(perm_cc, dtype=float))
    if perm_cc.shape[1] != observed.size:
        raise InvalidInputError(
            f"{observed.size} observed pairs but permutation matrix has {perm_cc.shape[1]} columns"
        )
    if not 0.0 < q_level < 1.0:
        raise InvalidInputError(f"q_level={q_level} must lie in (0, 1)")
    cutoffs = np.array([quantile7(perm_cc[:, j], q_level) for j in range(observed.size)])
    j_star = 0
    for obs, cut in zip(observed, cutoffs):
        if not obs > cut:
            break
        j_star += 1
    return PermutationSummary(perm_cc.shape[0], float(q_level), perm_cc, cutoffs, j_star, observed)


def permutation_test(data: DataPair, pq_star: int, plan: CvPlan, mode=EstimatorMode.PEARSON,
                     n_perm=DEFAULT_NPERM, q_level=DEFAULT_Q, master_seed=0,
                     test_cor=None, threads=1, fit=None):
    """Fit the observed data (unless ``fit`` is given) and compare against the
    permutation distribution. Returns ``(fit, summary)``."""
    if fit is None:
        fit = fit_pairs(data, pq_star, plan, mode, test_cor)
    perm = permutation_distribution(data, pq_star, plan, mode, n_perm, master_seed,
                                    test_cor, threads)
    return fit, count_significant(fit.cc_test, perm, q_level)
