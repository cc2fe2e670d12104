"""Recovery metrics of significant pairs against a planted truth."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInputError

METRICS = ("nc_pair", "tpr", "tp_of_cg", "fn_rate")


@dataclass(frozen=True)
class MetricsReport:
    nc_pair: int
    tpr: float
    tp_of_cg: float
    fn_rate: float
    per_pair_flags: list = field(default_factory=list)
    matched_groups: list = field(default_factory=list)

    def as_row(self) -> dict:
        return {m: getattr(self, m) for m in METRICS}


def _supports(pair):
    a = pair.alpha if pair.alpha is not None else pair.u
    b = pair.beta if pair.beta is not None else pair.v
    return set(np.flatnonzero(a).tolist()), set(np.flatnonzero(b).tolist())


def contains_complete_group(pair, truth):
    """``(True, g)`` for the first group g whose x and y index sets both lie
    inside the pair's supports, else ``(False, None)``."""
    sa, sb = _supports(pair)
    if not sa or not sb:
        return False, None
    for g, (xi, yi) in enumerate(truth.groups):
        if set(np.asarray(xi).tolist()) <= sa and set(np.asarray(yi).tolist()) <= sb:
            return True, g
    return False, None


def compute_metrics(fit, summary, truth) -> MetricsReport:
    """Metrics over pairs ``1..j_star``.

    ``fit`` is a FitResult or a list of pairs; ``summary`` a
    PermutationSummary or the integer j_star.
    """
    pairs = list(getattr(fit, "pairs", fit))
    j_star = int(getattr(summary, "j_star", summary))
    if j_star > len(pairs) or j_star < 0:
        raise InvalidInputError(f"j_star={j_star} but only {len(pairs)} pairs fitted")
    sig = pairs[:j_star]
    true_x = set(truth.true_x.tolist())
    true_y = set(truth.true_y.tolist())

    tp = fp = 0
    hit_x, hit_y = set(), set()
    flags, matched = [], []
    for pr in sig:
        sa, sb = _supports(pr)
        tp += len(sa & true_x) + len(sb & true_y)
        fp += len(sa - true_x) + len(sb - true_y)
        hit_x |= sa
        hit_y |= sb
        flag, g = contains_complete_group(pr, truth)
        flags.append(flag)
        matched.append(g)

    n_true = len(true_x) + len(true_y)
    missed = len(true_x - hit_x) + len(true_y - hit_y)
    return MetricsReport(
        nc_pair=j_star,
        tpr=tp / (tp + fp) if tp + fp else 0.0,
        tp_of_cg=sum(flags) / j_star if j_star else 0.0,
        fn_rate=missed / n_true if n_true else 0.0,
        per_pair_flags=flags,
        matched_groups=matched,
    )


def batch_summary(reports, mode_label="") -> dict:
    """Rate of runs with at least one significant pair (type I error on null
    batches, power on signal batches) plus quartiles of every metric."""
    reports = list(reports)
    if not reports:
        raise InvalidInputError("batch_summary needs at least one report")
    out = {"label": mode_label, "n_runs": len(reports)}
    out["rate_any_significant"] = float(np.mean([r.nc_pair >= 1 for r in reports]))
    for m in METRICS:
        vals = np.array([getattr(r, m) for r in reports], dtype=float)
        q1, med, q3 = np.percentile(vals, [25, 50, 75])
        out[f"{m}_q1"] = float(q1)
        out[f"{m}_median"] = float(med)
        out[f"{m}_q3"] = float(q3)
    return out
