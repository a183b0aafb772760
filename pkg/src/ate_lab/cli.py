"""Command-line interface.

Options may also come from a ``key=value`` file given with ``--config``
(one pair per line, ``#`` starts a comment, keys use the long option names
with dashes or underscores).  Precedence: command-line flag, config file,
the ``ATE_LAB_SEED`` environment variable (seed only), built-in default.

Exit codes: 0 success, 1 validation or parse failure, 2 numerical failure
or a failed covariate-set check.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import asymptotics as asy
from .core import LogisticPropensity, read_sample_csv
from .errors import NumericalError, UnsupportedModel, ValidationError
from .estimators import ESTIMATORS, KNOWN_PS, estimate
from .experiments import (
    TABLE_GRIDS,
    DgpConfig,
    r_average,
    run_replications,
)
from .io import csv_text, curve_svg, fmt, write_csv
from .rng import DEFAULT_SEED

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2
SEED_ENV = "ATE_LAB_SEED"


class UsageError(ValidationError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_int(text: str) -> int:
    v = int(float(text)) if "e" in str(text).lower() else int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _seed(text: str) -> int:
    v = int(str(text), 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _flag(text) -> bool:
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in {"1", "true", "yes", "on"}


# name -> (type, default); every option that a config file may set
OPTIONS = {
    "seed": (_seed, None),
    "output_dir": (str, "."),
    "svg": (_flag, False),
    "workers": (_positive_int, 1),
    "dist": (str, "uniform"),
    "t": (float, 1.0),
    "theta": (float, 0.0),
    "a0": (float, 0.0),
    "a1": (float, 0.0),
    "c1": (_floats, (0.0, 0.0, 1.0)),
    "c0": (_floats, None),
    "gamma": (_floats, None),
    "logit_intercept": (float, 1.0),
    "sigma_t": (float, 1.0),
    "sigma_c": (float, 1.0),
    "draws": (_positive_int, asy.DEFAULT_DRAWS),
    "reps": (_positive_int, 2000),
    "n": (_positive_int, 4000),
    "theta_grid": (_positive_int, 64),
    "nodes": (_positive_int, asy.DEFAULT_QUADRATURE_NODES),
    "grid": (str, "published"),
    "estimators": (str, "ipw_known,lm"),
    "csv": (str, None),
    "estimator": (str, None),
    "logistic": (_floats, None),
    "fit": (str, "logistic"),
    "regression": (str, "linear"),
}


@dataclass
class RunConfig:
    subcommand: str
    values: dict

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def dgp(self) -> DgpConfig:
        try:
            return DgpConfig(
                covariate_dist=self.dist, t=self.t, theta=self.theta, a0=self.a0, a1=self.a1,
                c1=self.c1, logit_intercept=self.logit_intercept, sigma_t=self.sigma_t,
                sigma_c=self.sigma_c, gamma=self.gamma, c0=self.c0,
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run")
    g.add_argument("--config", help="key=value file with default option values")
    g.add_argument("--seed", type=_seed, help=f"base seed (default: ${SEED_ENV} or {DEFAULT_SEED})")
    g.add_argument("--output-dir", help="directory for output files (default: .)")
    g.add_argument("--svg", action="store_const", const=True, help="also write SVG plots")
    g.add_argument("--workers", type=_positive_int, help="threads for replications and theta grids")
    g = common.add_argument_group("data-generating process")
    g.add_argument("--dist", choices=["uniform", "normal", "ternary"])
    g.add_argument("--t", type=float, help="propensity strength")
    g.add_argument("--theta", type=float, help="angle of the control slope c0(theta)")
    g.add_argument("--a0", type=float)
    g.add_argument("--a1", type=float)
    g.add_argument("--c1", type=_floats)
    g.add_argument("--c0", type=_floats, help="override c0(theta)")
    g.add_argument("--gamma", type=_floats, help="override the propensity slopes (t, t, 0)")
    g.add_argument("--logit-intercept", type=float)
    g.add_argument("--sigma-t", type=float)
    g.add_argument("--sigma-c", type=float)
    g = common.add_argument_group("budgets")
    g.add_argument("--draws", type=_positive_int, help="Monte Carlo draws per moment")
    g.add_argument("--reps", type=_positive_int, help="replications")
    g.add_argument("--n", type=_positive_int, help="sample size per replication")
    g.add_argument("--theta-grid", type=_positive_int, help="theta grid points")
    g.add_argument("--nodes", type=_positive_int, help="quadrature nodes per dropped coordinate")

    parser = _Parser(prog="ate-lab", description="ATE estimators and their asymptotic efficiency.")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    p = sub.add_parser("estimate", parents=[common], help="estimate the ATE from a CSV sample")
    p.add_argument("--csv", help="sample file with header d,y,x1,...,xK")
    p.add_argument("--estimator", choices=sorted(ESTIMATORS))
    p.add_argument("--logistic", type=_floats, help="known propensity: intercept,slope1,...,slopeK")
    p.add_argument("--fit", choices=["cells", "logistic"], help="propensity fit for ipw_estimated")
    p.add_argument("--regression", choices=["cells", "linear"], help="outcome regression for kps")
    sub.add_parser("asymptotics", parents=[common], help="population variances for one DGP")
    sub.add_parser("reproduce-tables", parents=[common], help="average reduction R(t) tables")
    p = sub.add_parser("reproduce-curves", parents=[common], help="R(theta, t) curves")
    p.add_argument("--grid", choices=["published", "config"],
                   help="all six published (dist, t) pairs, or only --dist/--t")
    sub.add_parser("covariate-effects", parents=[common], help="instrument / outcome-predictor comparisons")
    p = sub.add_parser("replications", parents=[common], help="finite-sample replication sweep")
    p.add_argument("--estimators", help="comma-separated estimator names")
    return parser


def read_config_file(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in OPTIONS:
            raise UsageError(f"{path}:{lineno}: unknown option {key!r}")
        try:
            out[key] = OPTIONS[key][0](value)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from None
    return out


def resolve(args: argparse.Namespace, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    from_file = read_config_file(args.config) if getattr(args, "config", None) else {}
    values = {}
    for key, (conv, default) in OPTIONS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
        elif key in from_file:
            values[key] = from_file[key]
        elif key == "seed" and environ.get(SEED_ENV):
            try:
                values[key] = _seed(environ[SEED_ENV])
            except (ValueError, argparse.ArgumentTypeError):
                raise UsageError(f"{SEED_ENV} must be an unsigned 64-bit integer") from None
        else:
            values[key] = default if key != "seed" else DEFAULT_SEED
    return RunConfig(args.subcommand, values)


# --------------------------------------------------------------------------
# subcommands


def cmd_estimate(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    if not cfg.csv or not cfg.estimator:
        raise UsageError("estimate needs --csv and --estimator")
    sample = read_sample_csv(cfg.csv)
    ps = None
    if cfg.estimator in KNOWN_PS:
        if cfg.logistic is None:
            raise UsageError(f"{cfg.estimator} needs the known propensity via --logistic intercept,slopes...")
        if len(cfg.logistic) != sample.k + 1:
            raise UsageError(f"--logistic needs {sample.k + 1} numbers (intercept and {sample.k} slopes)")
        ps = LogisticPropensity(cfg.logistic[1:], cfg.logistic[0])
    res = estimate(cfg.estimator, sample, ps, propensity_fit=cfg.fit, regression=cfg.regression)
    header = ["estimator", "estimate", "n", "n_treated", "n_control"]
    row = [res.estimator_name, res.estimate, res.n, res.n_treated, res.n_control]
    if res.alpha_hat is not None:
        header += [f"alpha_{j + 1}" for j in range(len(res.alpha_hat))]
        row += [float(a) for a in res.alpha_hat]
    out.write(csv_text(header, [row]))
    return EXIT_OK


def cmd_asymptotics(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    dgp = cfg.dgp()
    s = asy.summarize(dgp.population_model(), cfg.draws, cfg.seed)
    rows = [
        ("bound", s.bound), ("asyvar_imp_known", s.asyvar_imp), ("asyvar_ipw_known", s.asyvar_ipw),
        ("ipw_excess", s.ipw_excess), ("imp_excess", s.imp_excess), ("lm_gain", s.lm.gain),
        ("asyvar_lm", s.asyvar_lm), ("r_theta", s.ratio),
    ]
    path = write_csv(Path(cfg.output_dir) / "asymptotics.csv", ["quantity", "value", "std_error", "draws"],
                     [(name, m.value, m.std_error, m.draws) for name, m in rows])
    out.write(f"asymptotics: r_theta={fmt(s.ratio.value)} se={fmt(s.ratio.std_error)} -> {path}\n")
    return EXIT_OK


def cmd_reproduce_tables(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    base = cfg.dgp()
    paths = []
    for dist, ts in TABLE_GRIDS.items():
        rows = []
        for t in ts:
            curve = r_average(DgpConfig(**{**base.__dict__, "covariate_dist": dist}), t=t,
                              theta_grid_size=cfg.theta_grid, draws=cfg.draws, seed=cfg.seed,
                              workers=cfg.workers)
            rows.append((t, curve.r_average, curve.r_average_se))
        paths.append(write_csv(Path(cfg.output_dir) / f"table_{dist}.csv", ["t", "r_avg", "mc_se_estimate"], rows))
    out.write("reproduce-tables: wrote " + ", ".join(str(p) for p in paths) + "\n")
    return EXIT_OK


def _t_label(t: float) -> str:
    return format(t, "g").replace(".", "p")


def cmd_reproduce_curves(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    base = cfg.dgp()
    if cfg.grid == "published":
        pairs = [(d, t) for d, ts in TABLE_GRIDS.items() for t in ts]
    else:
        pairs = [(base.covariate_dist, base.t)]
    degenerate_total = 0
    for dist, t in pairs:
        curve = r_average(DgpConfig(**{**base.__dict__, "covariate_dist": dist}), t=t,
                          theta_grid_size=cfg.theta_grid, draws=cfg.draws, seed=cfg.seed, workers=cfg.workers)
        stem = Path(cfg.output_dir) / f"curve_{dist}_t{_t_label(t)}"
        degenerate_total += len(curve.excluded)
        write_csv(stem.with_suffix(".csv"), ["theta", "r_theta", "std_error"],
                  zip(curve.thetas, curve.r_values, curve.std_errors),
                  footer=[f"# degenerate_points,{len(curve.excluded)}"])
        if cfg.svg:
            stem.with_suffix(".svg").write_text(
                curve_svg(curve.thetas, curve.r_values, f"R(theta, t): {dist}, t = {t:g}"), encoding="utf-8")
    out.write(f"reproduce-curves: {len(pairs)} curves, {degenerate_total} degenerate points -> {cfg.output_dir}\n")
    return EXIT_OK


def cmd_covariate_effects(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    cmp = asy.compare_covariate_sets(cfg.dgp().population_model(), cfg.draws, cfg.seed, nodes=cfg.nodes)
    rows = [("quantity", f"{s}:{q}", m.value, m.std_error, "") for (s, q), m in cmp.quantities.items()]
    rows += [("check", c.name, c.difference, c.std_error, int(c.passed)) for c in cmp.checks]
    path = write_csv(Path(cfg.output_dir) / "covariate_effects.csv",
                     ["kind", "name", "value", "std_error", "passed"], rows)
    failed = [c.name for c in cmp.checks if not c.passed]
    out.write(f"covariate-effects: {6 - len(failed)}/6 checks passed -> {path}\n")
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_replications(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    names = [s.strip() for s in cfg.estimators.split(",") if s.strip()]
    unknown = [s for s in names if s not in ESTIMATORS]
    if unknown:
        raise UsageError(f"unknown estimators {unknown}; choose from {sorted(ESTIMATORS)}")
    if cfg.reps < 2:
        raise UsageError("replications need --reps >= 2")
    dgp = cfg.dgp()
    res = run_replications(dgp, names, cfg.n, cfg.reps, cfg.seed, propensity_fit=cfg.fit,
                           regression=cfg.regression, workers=cfg.workers)
    rows = []
    for name in names:
        r = res[name]
        vals = dict(zip(r.replication_index.tolist(), r.estimates.tolist()))
        errs = dict(r.failures)
        for rep in range(cfg.reps):
            rows.append((name, rep, vals.get(rep, math.nan), errs.get(rep, "").replace(",", ";")))
    path = write_csv(Path(cfg.output_dir) / "replications.csv", ["estimator", "rep", "estimate", "error"], rows)
    summary = "; ".join(
        f"{n}: mean={res[n].mean():.6g} n*var={res[n].n_variance():.6g} failures={len(res[n].failures)}"
        if len(res[n].estimates) > 1 else f"{n}: failures={len(res[n].failures)}"
        for n in names
    )
    out.write(f"replications: {summary} -> {path}\n")
    return EXIT_OK


COMMANDS = {
    "estimate": cmd_estimate,
    "asymptotics": cmd_asymptotics,
    "reproduce-tables": cmd_reproduce_tables,
    "reproduce-curves": cmd_reproduce_curves,
    "covariate-effects": cmd_covariate_effects,
    "replications": cmd_replications,
}


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args, environ)
        np.seterr(all="ignore")
        return COMMANDS[cfg.subcommand](cfg)
    except (ValidationError, UnsupportedModel, OSError) as exc:
        print(f"ate-lab: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"ate-lab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def entry_point():
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
