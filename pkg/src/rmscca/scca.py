"""One sparse canonical pair by soft-thresholded power iteration on K."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import rankdata

from .covariance import DataPair, EstimatorMode, KMatrix
from .exceptions import DegeneratePairError, InvalidInputError

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 1000
_GATHER_AT = 24


@dataclass(frozen=True)
class SparsePairConfig:
    lambda_u: float = 0.0
    lambda_v: float = 0.0
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        for name in ("lambda_u", "lambda_v"):
            val = getattr(self, name)
            if not 0.0 <= val <= 2.0:
                raise InvalidInputError(f"{name}={val} outside [0, 2]")
        if not 0.0 < self.tol < 1.0:
            raise InvalidInputError(f"tol={self.tol} must lie in (0, 1)")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InvalidInputError(f"max_iter={self.max_iter} must be a positive integer")


@dataclass(frozen=True)
class CanonicalPair:
    u: np.ndarray
    v: np.ndarray
    cc: float
    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None
    cc_test_mean: float = float("nan")
    cc_data: float = float("nan")
    lambda_u_star: float = 0.0
    lambda_v_star: float = 0.0
    converged: bool = True
    iterations: int = 0

    @property
    def support_alpha(self) -> np.ndarray:
        return np.flatnonzero(self.u if self.alpha is None else self.alpha)

    @property
    def support_beta(self) -> np.ndarray:
        return np.flatnonzero(self.v if self.beta is None else self.beta)


def soft_threshold(w, lam):
    """(|w_j| - lam/2)_+ * sign(w_j), elementwise."""
    w = np.asarray(w, dtype=float)
    return np.sign(w) * np.maximum(np.abs(w) - 0.5 * lam, 0.0)


def _kmat(k) -> np.ndarray:
    return k.k if isinstance(k, KMatrix) else np.asarray(k, dtype=float)


def _unit(a, side, cfg):
    nrm = np.sqrt(a @ a)
    if not nrm > 0:
        raise DegeneratePairError(cfg.lambda_u, cfg.lambda_v, side)
    return a / nrm


def sparse_singular_pair(k, cfg: SparsePairConfig = SparsePairConfig(), init=None) -> CanonicalPair:
    """Alternate thresholded updates of u and v until both stop moving.

    Starts from the row and column means of ``k`` unless ``init=(u0, v0)`` is
    given. Raises :class:`DegeneratePairError` if thresholding zeroes out a
    whole vector. Hitting ``max_iter`` is not an error; the returned pair has
    ``converged=False``.
    """
    km = _kmat(k)
    if init is None:
        u0, v0 = km.mean(axis=1), km.mean(axis=0)
    else:
        u0, v0 = (np.asarray(a, dtype=float) for a in init)
    if u0.shape != (km.shape[0],) or v0.shape != (km.shape[1],):
        raise InvalidInputError("initial vectors do not match k")
    nu, nv = np.sqrt(u0 @ u0), np.sqrt(v0 @ v0)
    if not (nu > 0 and nv > 0):
        raise InvalidInputError("initial vector is zero")
    u, v = u0 / nu, v0 / nv

    converged = False
    it = 0
    for it in range(1, int(cfg.max_iter) + 1):
        u_new = _unit(km @ v, "u", cfg)
        u_new = _unit(soft_threshold(u_new, cfg.lambda_u), "u", cfg)
        v_new = _unit(km.T @ u_new, "v", cfg)
        v_new = _unit(soft_threshold(v_new, cfg.lambda_v), "v", cfg)
        delta = max(np.max(np.abs(u_new - u)), np.max(np.abs(v_new - v)))
        u, v = u_new, v_new
        if delta < cfg.tol:
            converged = True
            break

    u, v = _orient(u, v)
    return CanonicalPair(
        u=u, v=v, cc=float(u @ km @ v),
        lambda_u_star=cfg.lambda_u, lambda_v_star=cfg.lambda_v,
        converged=converged, iterations=it,
    )


def _orient(u, v):
    # largest-magnitude entry of u made positive; flipping both keeps u'Kv
    if u[np.argmax(np.abs(u))] < 0:
        return -u, -v
    return u, v


def canonical_vectors(pair: CanonicalPair, k: KMatrix) -> CanonicalPair:
    alpha = k.dxx_inv_sqrt * pair.u
    beta = k.dyy_inv_sqrt * pair.v
    return replace(pair, alpha=alpha, beta=beta)


def _corr_columns(a: np.ndarray, b: np.ndarray):
    """Column-wise Pearson correlation; zero-variance columns give 0 and a flag."""
    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)
    sa = np.sqrt(np.einsum("ij,ij->j", ac, ac))
    sb = np.sqrt(np.einsum("ij,ij->j", bc, bc))
    num = np.einsum("ij,ij->j", ac, bc)
    scale = np.maximum(np.abs(a).max(axis=0), np.abs(b).max(axis=0))
    # rounding residue from centering a constant column is ~1e-16 relative
    tiny = 1e-12 * np.sqrt(a.shape[0]) * np.where(scale > 0, scale, 1.0)
    degenerate = (sa <= tiny) | (sb <= tiny)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(degenerate, 0.0, num / np.where(degenerate, 1.0, sa * sb))
    return np.clip(r, -1.0, 1.0), degenerate


def correlate_projections(sx: np.ndarray, sy: np.ndarray, mode=EstimatorMode.PEARSON):
    """Column-wise correlation of projection scores ``sx``, ``sy`` (n x c)."""
    if EstimatorMode.parse(mode) is EstimatorMode.SPEARMAN:
        sx = rankdata(sx, axis=0)
        sy = rankdata(sy, axis=0)
    return _corr_columns(sx, sy)


def projected_correlation(data: DataPair, alpha, beta, mode=EstimatorMode.PEARSON,
                          with_flag=False):
    """Correlation between x @ alpha and y @ beta.

    A constant projection scores 0; pass ``with_flag=True`` to also get the
    degeneracy flag.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if alpha.shape != (data.p,) or beta.shape != (data.q,):
        raise InvalidInputError("coefficient lengths do not match data")
    r, flag = correlate_projections((data.x @ alpha)[:, None], (data.y @ beta)[:, None], mode)
    r, flag = float(r[0]), bool(flag[0])
    return (r, flag) if with_flag else r


def batched_pairs(ks: np.ndarray, lambdas: np.ndarray, tol=DEFAULT_TOL,
                  max_iter=DEFAULT_MAX_ITER):
    """Run the power iteration for many (K, lambda_u, lambda_v) cells at once.

    ``ks`` is (f, p, q) and ``lambdas`` is (c, 2); every K is paired with every
    cell. Returns ``u`` (f, p, c), ``v`` (f, q, c), ``ok`` (f, c) marking cells
    that did not degenerate, and ``converged`` (f, c). Each cell follows the
    same arithmetic as :func:`sparse_singular_pair` and is frozen as soon as it
    converges or degenerates.
    """
    ks = np.asarray(ks, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    f, p, q = ks.shape
    c = lambdas.shape[0]
    half_u = 0.5 * lambdas[:, 0]
    half_v = 0.5 * lambdas[:, 1]
    kts = np.ascontiguousarray(ks.transpose(0, 2, 1))

    u0 = ks.mean(axis=2)
    v0 = ks.mean(axis=1)
    nu = np.linalg.norm(u0, axis=1)
    nv = np.linalg.norm(v0, axis=1)
    viable = (nu > 0) & (nv > 0)
    u = np.repeat((u0 / np.where(viable, nu, 1.0)[:, None])[:, :, None], c, axis=2)
    v = np.repeat((v0 / np.where(viable, nv, 1.0)[:, None])[:, :, None], c, axis=2)

    ok = np.repeat(viable[:, None], c, axis=1)
    active = ok.copy()
    converged = np.zeros((f, c), dtype=bool)

    # Two layouts, same per-cell arithmetic. While many cells run, each K
    # multiplies a block of cell columns (f, dim, cells). Once few remain the
    # active cells are gathered into (m, dim, 1) with their own K copies.
    it = 0
    while it < max_iter and active.any():
        m = int(active.sum())
        if m <= _GATHER_AT:
            fi, ci = np.nonzero(active)
            kb, ktb = ks[fi], kts[fi]
            ub, vb = u[fi, :, ci][:, :, None], v[fi, :, ci][:, :, None]
            hu, hv = half_u[ci][:, None, None], half_v[ci][:, None, None]
            act = np.ones((m, 1), dtype=bool)
            shrink_at = m // 2 if m > 4 else 0
        else:
            cols = np.flatnonzero(active.any(axis=0))
            kb, ktb = ks, kts
            ub, vb = u[:, :, cols], v[:, :, cols]
            hu, hv = half_u[cols][None, None, :], half_v[cols][None, None, :]
            act = active[:, cols]
            shrink_at = None
        okb = np.ones(act.shape, dtype=bool)
        convb = np.zeros(act.shape, dtype=bool)
        while it < max_iter and act.any():
            it += 1
            un, g1 = _normalize(kb @ vb)
            un, g2 = _normalize(np.sign(un) * np.maximum(np.abs(un) - hu, 0.0))
            vn, g3 = _normalize(ktb @ un)
            vn, g4 = _normalize(np.sign(vn) * np.maximum(np.abs(vn) - hv, 0.0))
            good = g1 & g2 & g3 & g4
            delta = np.maximum(np.abs(un - ub).max(axis=1), np.abs(vn - vb).max(axis=1))
            upd = act[:, None, :]
            ub = np.where(upd, un, ub)
            vb = np.where(upd, vn, vb)
            bad = act & ~good
            done = act & good & (delta < tol)
            okb &= ~bad
            convb |= done
            act = act & ~(bad | done)
            if shrink_at is None:
                if act.sum() <= _GATHER_AT or act.any(axis=0).sum() < 0.7 * act.shape[1]:
                    break
            elif act.sum() <= shrink_at:
                break
        if act.shape[1] == 1 and kb is not ks:
            u[fi, :, ci] = ub[:, :, 0]
            v[fi, :, ci] = vb[:, :, 0]
            ok[fi, ci] &= okb[:, 0]
            converged[fi, ci] |= convb[:, 0]
            active[fi, ci] = act[:, 0]
        else:
            u[:, :, cols] = ub
            v[:, :, cols] = vb
            ok[:, cols] &= okb
            converged[:, cols] |= convb
            active[:, cols] = act

    # sign convention per cell
    idx = np.argmax(np.abs(u), axis=1)
    lead = np.take_along_axis(u, idx[:, None, :], axis=1)[:, 0, :]
    flip = np.where(lead < 0, -1.0, 1.0)
    u = u * flip[:, None, :]
    v = v * flip[:, None, :]
    return u, v, ok, converged


def _normalize(a):
    # (f, dim, c): unit columns; all-zero columns stay zero and are flagged
    nrm = np.sqrt(np.einsum("fjc,fjc->fc", a, a))
    good = nrm > 0
    return a / np.where(good, nrm, 1.0)[:, None, :], good
