"""Synthetic x/y pairs with planted block relationships and optional heavy tails."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from .covariance import DataPair
from .exceptions import InvalidInputError

DEFAULT_GROUPS = ((10, 20), (5, 5), (20, 10), (50, 50), (15, 15))


class Tail(str, enum.Enum):
    CLEAN = "clean"
    TLIKE = "tlike"


class TailDivisor(str, enum.Enum):
    SQRT = "sqrt"      # rows / sqrt(w / df)
    LINEAR = "linear"  # rows / (w / df)


@dataclass(frozen=True)
class SimulationSpec:
    n: int
    p: int
    q: int
    rho: float = 0.2
    groups: tuple = DEFAULT_GROUPS
    tail: Tail = Tail.CLEAN
    df: float = 2.0
    b_value: float = 1.0
    seed: int = 0
    tail_divisor: TailDivisor = TailDivisor.SQRT
    contaminate_noise: bool = False

    def __post_init__(self):
        groups = tuple((int(a), int(b)) for a, b in self.groups)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "tail", Tail(self.tail))
        object.__setattr__(self, "tail_divisor", TailDivisor(self.tail_divisor))
        if self.n < 3:
            raise InvalidInputError("n must be at least 3")
        if not 0.0 < self.rho < 1.0:
            raise InvalidInputError(f"rho={self.rho} must lie in (0, 1)")
        if not self.df > 0:
            raise InvalidInputError("df must be positive")
        if any(a < 1 or b < 1 for a, b in groups):
            raise InvalidInputError("group block sizes must be positive")
        if sum(a for a, _ in groups) > self.p or sum(b for _, b in groups) > self.q:
            raise InvalidInputError(
                f"groups need p >= {sum(a for a, _ in groups)} and q >= {sum(b for _, b in groups)}"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["groups"] = [list(g) for g in self.groups]
        d["tail"] = self.tail.value
        d["tail_divisor"] = self.tail_divisor.value
        return d

    @classmethod
    def from_dict(cls, d) -> "SimulationSpec":
        return cls(**{k: (tuple(map(tuple, v)) if k == "groups" else v) for k, v in d.items()})


@dataclass(frozen=True)
class GroundTruth:
    b: np.ndarray
    groups: list
    sigma_yy_diag: np.ndarray
    spec: SimulationSpec | None = field(default=None, compare=False)

    @property
    def true_x(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.b != 0, axis=1))

    @property
    def true_y(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.b != 0, axis=0))


def group_indices(spec: SimulationSpec):
    """Consecutive 0-based (x indices, y indices) for every group."""
    out = []
    xo = yo = 0
    for a, b in spec.groups:
        out.append((np.arange(xo, xo + a), np.arange(yo, yo + b)))
        xo += a
        yo += b
    return out


def build_b(spec: SimulationSpec) -> np.ndarray:
    b = np.zeros((spec.p, spec.q))
    for xi, yi in group_indices(spec):
        b[np.ix_(xi, yi)] = spec.b_value
    return b


def sigma_yy_entry(p1: int, rho: float, b_value: float = 1.0) -> float:
    """Noise variance giving correlation rho between y columns of one group.

    A y column of the group is b_value * (sum of p1 equicorrelated x's) + noise.
    """
    if p1 < 1:
        raise InvalidInputError("p1 must be at least 1")
    if not 0.0 < rho < 1.0:
        raise InvalidInputError("rho must lie in (0, 1)")
    return (1.0 / rho - 1.0) * b_value ** 2 * (p1 + (p1 * p1 - p1) * rho)


def sigma_xx(spec: SimulationSpec) -> np.ndarray:
    s = np.eye(spec.p)
    for xi, _ in group_indices(spec):
        block = np.ix_(xi, xi)
        s[block] = spec.rho
        s[xi, xi] = 1.0
    return s


def sigma_yy_diag(spec: SimulationSpec) -> np.ndarray:
    d = np.ones(spec.q)
    for (xi, yi) in group_indices(spec):
        d[yi] = sigma_yy_entry(xi.size, spec.rho, spec.b_value)
    return d


def generate(spec: SimulationSpec) -> tuple[DataPair, GroundTruth]:
    rng = np.random.default_rng(spec.seed)
    try:
        chol = np.linalg.cholesky(sigma_xx(spec))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rho in (0,1) is always PD
        raise InvalidInputError("Sigma_xx is not positive definite") from exc
    x = rng.standard_normal((spec.n, spec.p)) @ chol.T
    divisor = None
    if spec.tail is Tail.TLIKE:
        w = rng.chisquare(spec.df, spec.n) / spec.df
        divisor = np.sqrt(w) if spec.tail_divisor is TailDivisor.SQRT else w
        x = x / divisor[:, None]
    b = build_b(spec)
    syy = sigma_yy_diag(spec)
    eps = rng.standard_normal((spec.n, spec.q)) * np.sqrt(syy)
    if divisor is not None and spec.contaminate_noise:
        eps = eps / divisor[:, None]
    y = x @ b + eps
    truth = GroundTruth(b, group_indices(spec), syy, spec)
    return DataPair(x, y), truth
