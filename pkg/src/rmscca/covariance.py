"""Classical and rank-based covariance, and the scaled cross-covariance K."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .exceptions import DegenerateColumnError, InvalidInputError


class EstimatorMode(str, enum.Enum):
    PEARSON = "pearson"
    SPEARMAN = "spearman"

    @classmethod
    def parse(cls, value) -> "EstimatorMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidInputError(f"unknown estimator mode {value!r}") from None


def _as_matrix(m, name="matrix") -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 2-d array, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class DataPair:
    """Two sample-aligned matrices, ``x`` (n x p) and ``y`` (n x q)."""

    x: np.ndarray
    y: np.ndarray
    x_names: list[str] | None = None
    y_names: list[str] | None = None

    def __post_init__(self):
        x = _as_matrix(self.x, "x")
        y = _as_matrix(self.y, "y")
        if x.shape[0] != y.shape[0]:
            raise InvalidInputError(
                f"x has {x.shape[0]} rows but y has {y.shape[0]}"
            )
        if x.shape[0] < 3:
            raise InvalidInputError("need at least 3 observations")
        for label, a in (("x", x), ("y", y)):
            if not np.all(np.isfinite(a)):
                raise InvalidInputError(f"{label} contains missing or non-finite values")
        x_names = _names(self.x_names, x.shape[1], "x")
        y_names = _names(self.y_names, y.shape[1], "y")
        for label, a, names in (("x", x, x_names), ("y", y, y_names)):
            flat = np.flatnonzero(np.ptp(a, axis=0) == 0)
            if flat.size:
                raise DegenerateColumnError(names[flat[0]], label)
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x_names", x_names)
        object.__setattr__(self, "y_names", y_names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def q(self) -> int:
        return self.y.shape[1]

    def subset(self, rows) -> "DataPair":
        return DataPair(self.x[rows], self.y[rows], self.x_names, self.y_names)

    def with_y(self, y) -> "DataPair":
        return DataPair(self.x, y, self.x_names, self.y_names)


def _names(names, count, prefix):
    if names is None:
        return [f"{prefix}{j + 1}" for j in range(count)]
    names = [str(s) for s in names]
    if len(names) != count:
        raise InvalidInputError(f"{prefix} has {count} columns but {len(names)} names")
    return names


@dataclass(frozen=True)
class KMatrix:
    """Scaled cross-covariance ``k`` plus the diagonal scalings used to build it."""

    k: np.ndarray
    dxx_inv_sqrt: np.ndarray
    dyy_inv_sqrt: np.ndarray
    mode: EstimatorMode = EstimatorMode.PEARSON

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float)
        dx = np.asarray(self.dxx_inv_sqrt, dtype=float)
        dy = np.asarray(self.dyy_inv_sqrt, dtype=float)
        if k.ndim != 2 or k.shape != (dx.size, dy.size):
            raise InvalidInputError(
                f"k shape {k.shape} does not match scalings ({dx.size}, {dy.size})"
            )
        if not np.all(np.isfinite(k)):
            raise InvalidInputError("k has non-finite entries")
        for d in (dx, dy):
            if not (np.all(np.isfinite(d)) and np.all(d > 0)):
                raise InvalidInputError("diagonal scalings must be positive and finite")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "dxx_inv_sqrt", dx)
        object.__setattr__(self, "dyy_inv_sqrt", dy)
        object.__setattr__(self, "mode", EstimatorMode.parse(self.mode))

    @property
    def shape(self):
        return self.k.shape

    def replace_k(self, k) -> "KMatrix":
        return KMatrix(k, self.dxx_inv_sqrt, self.dyy_inv_sqrt, self.mode)


def rank_transform(m) -> np.ndarray:
    """Replace each column by its midranks (ties share the average rank)."""
    a = _as_matrix(m)
    if a.shape[0] < 2:
        raise InvalidInputError("rank_transform needs at least 2 rows")
    return rankdata(a, axis=0, method="average").astype(float)


def _prepare(m, mode: EstimatorMode) -> np.ndarray:
    return rank_transform(m) if EstimatorMode.parse(mode) is EstimatorMode.SPEARMAN else _as_matrix(m)


def covariance(m, mode=EstimatorMode.PEARSON) -> np.ndarray:
    """Sample covariance (divisor n-1) of the columns of ``m``, of their ranks
    in Spearman mode.

    Constant columns produce a zero diagonal entry; :func:`degenerate_columns`
    reports them.
    """
    a = _prepare(m, mode)
    if a.shape[0] < 2:
        raise InvalidInputError("covariance needs at least 2 rows")
    c = a - a.mean(axis=0)
    s = c.T @ c / (a.shape[0] - 1)
    return (s + s.T) / 2


def degenerate_columns(cov: np.ndarray) -> np.ndarray:
    return np.flatnonzero(~(np.diag(cov) > 0))


def _centered_scaled(a: np.ndarray, names, label):
    c = a - a.mean(axis=0)
    var = np.einsum("ij,ij->j", c, c) / (a.shape[0] - 1)
    bad = np.flatnonzero(~(var > 0) | (np.ptp(a, axis=0) == 0))
    if bad.size:
        j = bad[0]
        raise DegenerateColumnError(names[j] if names else j, label)
    return c, 1.0 / np.sqrt(var)


def build_k(data: DataPair, mode=EstimatorMode.PEARSON) -> KMatrix:
    """K = D_xx^{-1/2} Cov(x, y) D_yy^{-1/2} with diagonal within-set scaling."""
    return k_from_arrays(data.x, data.y, mode, data.x_names, data.y_names)


def k_from_arrays(x, y, mode=EstimatorMode.PEARSON, x_names=None, y_names=None) -> KMatrix:
    """:func:`build_k` on bare arrays, skipping :class:`DataPair` validation."""
    mode = EstimatorMode.parse(mode)
    x = _prepare(x, mode)
    y = _prepare(y, mode)
    xc, dx = _centered_scaled(x, x_names, "x")
    yc, dy = _centered_scaled(y, y_names, "y")
    cov_xy = xc.T @ yc / (x.shape[0] - 1)
    k = dx[:, None] * cov_xy * dy[None, :]
    return KMatrix(k, dx, dy, mode)
