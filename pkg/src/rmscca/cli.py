"""``rmscca`` command line: simulate, fit, permtest, evaluate.

Exit codes: 0 success, 2 input/parse error, 3 numerical degeneracy,
4 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .covariance import DataPair, EstimatorMode
from .evaluate import METRICS, batch_summary, compute_metrics
from .exceptions import ConfigError, InvalidInputError, RmsccaError
from .io import (
    SCHEMA_VERSION,
    atomic_write,
    format_tsv,
    load_float,
    read_json,
    read_matrix_csv,
    write_json,
    write_matrix_csv,
)
from .mscca import DEFAULT_GRID, DEFAULT_NCV, CvPlan, FitResult, fit_pairs
from .scca import CanonicalPair
from .significance import (
    DEFAULT_NPERM,
    DEFAULT_Q,
    count_significant,
    permutation_distribution,
    quantile7,
)
from .simulate import GroundTruth, SimulationSpec, generate

log = logging.getLogger("rmscca")

FAN_QUANTILES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_PQ = 5


@dataclass
class RunConfig:
    mode: str = "pearson"
    n_cv: int = DEFAULT_NCV
    lambda_grid: list = field(default_factory=lambda: list(DEFAULT_GRID))
    pq_star: int | None = None
    n_perm: int = DEFAULT_NPERM
    q_level: float = DEFAULT_Q
    seed: int = 0
    threads: int = 0
    standardize: str = "auto"
    test_cor: str | None = None
    # simulation
    n: int = 100
    p: int = 100
    q: int = 100
    rho: float = 0.2
    groups: list | None = None
    tail: str = "clean"
    tail_divisor: str = "sqrt"
    contaminate_noise: bool = False
    df: float = 2.0
    b_value: float = 1.0
    # paths
    x: str | None = None
    y: str | None = None
    truth: str | None = None
    fit: str | None = None
    permtest: str | None = None
    out: str | None = None

    def validate(self) -> "RunConfig":
        try:
            EstimatorMode.parse(self.mode)
            if self.test_cor is not None:
                EstimatorMode.parse(self.test_cor)
        except InvalidInputError as exc:
            raise ConfigError(str(exc)) from None
        grid = [float(g) for g in self.lambda_grid]
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 0 or grid[-1] > 2:
            raise ConfigError("--grid must be strictly increasing values in [0, 2]")
        if self.n_cv < 2:
            raise ConfigError("--ncv must be at least 2")
        if self.pq_star is not None and self.pq_star < 0:
            raise ConfigError("--pq must be nonnegative")
        if self.n_perm < 1:
            raise ConfigError("--nperm must be at least 1")
        if not 0 < self.q_level < 1:
            raise ConfigError("--q must lie in (0, 1)")
        if self.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        if self.standardize not in ("auto", "on", "off"):
            raise ConfigError("--standardize must be auto, on or off")
        if self.tail not in ("clean", "tlike"):
            raise ConfigError("--tail must be clean or tlike")
        if self.tail_divisor not in ("sqrt", "linear"):
            raise ConfigError("--tail-divisor must be sqrt or linear")
        if not 0 < self.rho < 1:
            raise ConfigError("--rho must lie in (0, 1)")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# serialization of results


def _sparse(vec):
    idx = np.flatnonzero(vec)
    return [[int(i), float(vec[i])] for i in idx]


def _dense(pairs, length):
    out = np.zeros(length)
    for i, val in pairs:
        out[int(i)] = float(val)
    return out


def _plan_dict(plan: CvPlan) -> dict:
    return {
        "n_cv": plan.n_cv,
        "folds": list(plan.folds),
        "lambda_grid": list(plan.lambda_grid),
        "seed": plan.seed,
        "tol": plan.tol,
        "max_iter": plan.max_iter,
    }


def fit_to_dict(fit: FitResult, data: DataPair, provenance: dict) -> dict:
    pairs = []
    for i, pr in enumerate(fit.pairs):
        pairs.append({
            "index": i + 1,
            "lambda_u": pr.lambda_u_star,
            "lambda_v": pr.lambda_v_star,
            "cc": pr.cc,
            "cc_data": pr.cc_data,
            "cc_test_mean": pr.cc_test_mean,
            "converged": bool(pr.converged),
            "iterations": int(pr.iterations),
            "alpha": _sparse(pr.alpha),
            "beta": _sparse(pr.beta),
            "u": _sparse(pr.u),
            "v": _sparse(pr.v),
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "fit",
        "provenance": {**provenance, "mode": fit.mode.value,
                       "test_cor": fit.test_cor.value, "pq_star": fit.pq_star,
                       "plan": _plan_dict(fit.plan)},
        "n": data.n, "p": data.p, "q": data.q,
        "x_names": data.x_names, "y_names": data.y_names,
        "lambda_star": [[pr.lambda_u_star, pr.lambda_v_star] for pr in fit.pairs],
        "pairs": pairs,
    }


def pairs_from_fit_json(d) -> list[CanonicalPair]:
    p, q = d["p"], d["q"]
    out = []
    for e in d["pairs"]:
        out.append(CanonicalPair(
            u=_dense(e["u"], p), v=_dense(e["v"], q), cc=load_float(e["cc"]),
            alpha=_dense(e["alpha"], p), beta=_dense(e["beta"], q),
            cc_test_mean=load_float(e["cc_test_mean"]),
            cc_data=load_float(e["cc_data"]),
            lambda_u_star=e["lambda_u"], lambda_v_star=e["lambda_v"],
            converged=e["converged"], iterations=e["iterations"],
        ))
    return out


def truth_to_dict(truth: GroundTruth) -> dict:
    spec = truth.spec
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "truth",
        "groups": [[xi.tolist(), yi.tolist()] for xi, yi in truth.groups],
        "b_value": spec.b_value,
        "rho": spec.rho,
        "sigma_yy_diag": truth.sigma_yy_diag,
        "spec": spec.to_dict(),
    }


def truth_from_dict(d) -> GroundTruth:
    spec = SimulationSpec.from_dict(d["spec"])
    groups = [(np.asarray(xi, dtype=int), np.asarray(yi, dtype=int)) for xi, yi in d["groups"]]
    b = np.zeros((spec.p, spec.q))
    for xi, yi in groups:
        b[np.ix_(xi, yi)] = d["b_value"]
    return GroundTruth(b, groups, np.asarray(d["sigma_yy_diag"], dtype=float), spec)


# ---------------------------------------------------------------------------
# data loading


def _standardize(a):
    return (a - a.mean(axis=0)) / a.std(axis=0, ddof=1)


def load_data(cfg: RunConfig) -> tuple[DataPair, bool]:
    if not cfg.x or not cfg.y:
        raise ConfigError("--x and --y are required")
    x, xn = read_matrix_csv(cfg.x)
    y, yn = read_matrix_csv(cfg.y)
    if x.shape[0] != y.shape[0]:
        raise InvalidInputError(f"{cfg.x} has {x.shape[0]} rows but {cfg.y} has {y.shape[0]}")
    data = DataPair(x, y, xn, yn)
    std = cfg.standardize == "on"
    if cfg.standardize == "auto":
        # simulate writes truth.json beside its matrices; only real data is rescaled
        std = not (Path(cfg.x).parent / "truth.json").exists()
    if std:
        data = DataPair(_standardize(data.x), _standardize(data.y), xn, yn)
    return data, std


def _provenance(cfg: RunConfig, standardized: bool) -> dict:
    return {
        "version": __version__,
        "seed": cfg.seed,
        "standardized": standardized,
        "x": cfg.x,
        "y": cfg.y,
    }


def _threads(cfg: RunConfig) -> int:
    return cfg.threads if cfg.threads and cfg.threads > 0 else (os.cpu_count() or 1)


def _plan(cfg: RunConfig, n: int) -> CvPlan:
    try:
        return CvPlan.create(n, cfg.n_cv, cfg.lambda_grid, cfg.seed)
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from None


def _pq(cfg: RunConfig, data: DataPair) -> int:
    limit = min(data.p, data.q)
    if cfg.pq_star is None:
        return min(DEFAULT_PQ, limit)
    if cfg.pq_star > limit:
        raise ConfigError(f"--pq {cfg.pq_star} exceeds min(p, q) = {limit}")
    return cfg.pq_star


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: RunConfig) -> GroundTruth:
    if not cfg.out:
        raise ConfigError("--out is required")
    kw = {}
    if cfg.groups is not None:
        kw["groups"] = tuple(tuple(g) for g in cfg.groups)
    try:
        spec = SimulationSpec(
            n=cfg.n, p=cfg.p, q=cfg.q, rho=cfg.rho, tail=cfg.tail, df=cfg.df,
            b_value=cfg.b_value, seed=cfg.seed, tail_divisor=cfg.tail_divisor,
            contaminate_noise=cfg.contaminate_noise, **kw,
        )
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from None
    data, truth = generate(spec)
    out = Path(cfg.out)
    write_matrix_csv(out / "x.csv", data.x, data.x_names)
    write_matrix_csv(out / "y.csv", data.y, data.y_names)
    write_json(out / "truth.json", truth_to_dict(truth))
    return truth


def cmd_fit(cfg: RunConfig) -> FitResult:
    data, std = load_data(cfg)
    plan = _plan(cfg, data.n)
    fit = fit_pairs(data, _pq(cfg, data), plan, cfg.mode, cfg.test_cor)
    if cfg.out:
        write_json(cfg.out, fit_to_dict(fit, data, _provenance(cfg, std)))
    return fit


def fan_table(summary) -> tuple[list, list]:
    header = ["pair_index", "observed_cc_test", "cutoff_q"] + [
        f"perm_quantile_{q:g}" for q in FAN_QUANTILES
    ]
    rows = []
    for j in range(summary.cutoffs.size):
        col = summary.perm_cc[:, j]
        rows.append([j + 1, float(summary.observed[j]), float(summary.cutoffs[j])]
                    + [quantile7(col, q) for q in FAN_QUANTILES])
    return header, rows


def cmd_permtest(cfg: RunConfig):
    if not cfg.out:
        raise ConfigError("--out is required")
    data, std = load_data(cfg)
    plan = _plan(cfg, data.n)
    pq = _pq(cfg, data)
    fit = fit_pairs(data, pq, plan, cfg.mode, cfg.test_cor)
    perm = permutation_distribution(
        data, pq, plan, cfg.mode, cfg.n_perm, cfg.seed, cfg.test_cor, _threads(cfg)
    )
    summary = count_significant(fit.cc_test, perm, cfg.q_level)
    prov = _provenance(cfg, std)
    out = Path(cfg.out)
    write_json(out / "fit.json", fit_to_dict(fit, data, prov))
    write_json(out / "permtest.json", {
        "schema_version": SCHEMA_VERSION,
        "kind": "permtest",
        "provenance": {**prov, "mode": fit.mode.value, "test_cor": fit.test_cor.value,
                       "n_perm": cfg.n_perm, "q_level": cfg.q_level,
                       "master_seed": cfg.seed, "pq_star": pq, "plan": _plan_dict(plan)},
        "observed_cc_test": summary.observed,
        "cutoffs": summary.cutoffs,
        "j_star": summary.j_star,
        "perm_cc": summary.perm_cc,
    })
    header, rows = fan_table(summary)
    atomic_write(out / "fan.tsv", format_tsv(header, rows))
    return fit, summary


def _evaluate_run(run_dir: Path | None, cfg: RunConfig):
    if run_dir is not None:
        fit_path, perm_path = run_dir / "fit.json", run_dir / "permtest.json"
        truth_path = Path(cfg.truth) if cfg.truth else run_dir / "truth.json"
    else:
        if not (cfg.fit and cfg.permtest):
            raise ConfigError("evaluate needs --run DIR or --fit and --permtest")
        fit_path, perm_path = Path(cfg.fit), Path(cfg.permtest)
        truth_path = Path(cfg.truth) if cfg.truth else None
    if truth_path is None or not truth_path.exists():
        raise InvalidInputError(f"missing truth file {truth_path}")
    fit_d = read_json(fit_path, "fit")
    perm_d = read_json(perm_path, "permtest")
    truth = truth_from_dict(read_json(truth_path, "truth"))
    return compute_metrics(pairs_from_fit_json(fit_d), int(perm_d["j_star"]), truth)


def cmd_evaluate(cfg: RunConfig, runs=(), label=""):
    if not cfg.out:
        raise ConfigError("--out is required")
    run_dirs = [Path(r) for r in runs] or [None]
    reports = [_evaluate_run(r, cfg) for r in run_dirs]
    out = Path(cfg.out)
    names = [str(r) if r is not None else "run" for r in run_dirs]
    header = ["run", *METRICS, "complete_group_flags"]
    rows = [[nm, *r.as_row().values(), ",".join("1" if f else "0" for f in r.per_pair_flags)]
            for nm, r in zip(names, reports)]
    atomic_write(out / "metrics.tsv", format_tsv(header, rows))
    agg = batch_summary(reports, label or cfg.mode)
    atomic_write(out / "batch.tsv", format_tsv(list(agg), [list(agg.values())]))
    return reports, agg


# ---------------------------------------------------------------------------
# argument parsing


def _grid(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None


def _groups(text):
    try:
        return [[int(a), int(b)] for a, b in (g.split("x") for g in text.split(",") if g.strip())]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad groups {text!r}; use e.g. 10x20,5x5") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON RunConfig; flags override it")
    common.add_argument("--save-config", help="write the effective config here")
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("-v", "--verbose", action="store_true")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--x", help="x matrix CSV")
    model.add_argument("--y", help="y matrix CSV")
    model.add_argument("--mode", choices=["pearson", "spearman"])
    model.add_argument("--ncv", dest="n_cv", type=int)
    model.add_argument("--grid", dest="lambda_grid", type=_grid)
    model.add_argument("--pq", dest="pq_star", type=int)
    model.add_argument("--standardize", choices=["auto", "on", "off"])
    model.add_argument("--test-cor", dest="test_cor", choices=["pearson", "spearman"])

    ap = argparse.ArgumentParser(prog="rmscca", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"rmscca {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="generate x.csv, y.csv, truth.json")
    sim.add_argument("--n", type=int)
    sim.add_argument("--p", type=int)
    sim.add_argument("--q", type=int)
    sim.add_argument("--rho", type=float)
    sim.add_argument("--groups", type=_groups, help="e.g. 10x20,5x5 (x size x y size)")
    sim.add_argument("--null", action="store_true", help="no planted groups (B = 0)")
    sim.add_argument("--tail", choices=["clean", "tlike"])
    sim.add_argument("--tail-divisor", dest="tail_divisor", choices=["sqrt", "linear"])
    sim.add_argument("--contaminate-noise", dest="contaminate_noise", action="store_true",
                     default=None)
    sim.add_argument("--df", type=float)
    sim.add_argument("--b-value", dest="b_value", type=float)

    sub.add_parser("fit", parents=[common, model], help="fit sparse canonical pairs")

    perm = sub.add_parser("permtest", parents=[common, model],
                          help="fit plus permutation significance")
    perm.add_argument("--nperm", dest="n_perm", type=int)
    perm.add_argument("--q", dest="q_level", type=float)
    perm.add_argument("--threads", type=int)

    ev = sub.add_parser("evaluate", parents=[common], help="metrics against a truth file")
    ev.add_argument("--run", action="append", default=[],
                    help="directory holding fit.json, permtest.json, truth.json (repeatable)")
    ev.add_argument("--fit")
    ev.add_argument("--permtest")
    ev.add_argument("--truth")
    ev.add_argument("--label", default="")
    return ap


_NOT_CONFIG = {"command", "config", "save_config", "verbose", "run", "label", "null"}


def config_from_args(args) -> RunConfig:
    base = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    cfg = RunConfig.from_dict(base)
    for key, val in vars(args).items():
        if key in _NOT_CONFIG or val is None:
            continue
        setattr(cfg, key, val)
    if getattr(args, "null", False):
        cfg.groups = []
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        if args.save_config:
            write_json(args.save_config, cfg.to_dict())
        if args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "fit":
            cmd_fit(cfg)
        elif args.command == "permtest":
            _, summary = cmd_permtest(cfg)
            log.info("j* = %d", summary.j_star)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.run, args.label)
    except RmsccaError as exc:
        print(f"rmscca: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
