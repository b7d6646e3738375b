"""Command line entry point: ``stablehf <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import fisher
from . import harness as hn
from .errors import DomainError, EstimationError, NumericalError, ParseError
from .likelihood import SamplingScheme, Theta
from .norming import check_conditions, default_schemes, norming_family


def _emit(text: str, out) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _theta_args(p, defaults=True):
    p.add_argument("--beta", type=float, default=1.6 if defaults else None)
    p.add_argument("--sigma", type=float, default=1.2 if defaults else None)
    p.add_argument("--mu", type=float, default=0.0 if defaults else None)


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def cmd_simulate(a) -> int:
    rule = hn.HRule.parse(a.h_rule)
    scheme = SamplingScheme(a.n, rule.step(a.n))
    theta = Theta(a.beta, a.sigma, a.mu)
    data = hn.simulate_path(theta, scheme, hn.rep_seed(a.seed, 0))
    if a.format == "csv":
        text = _csv([["delta"]] + [[repr(float(x))] for x in data.deltas])
    else:
        doc = {
            "theta": {"beta": theta.beta, "sigma": theta.sigma, "mu": theta.mu},
            "n": scheme.n,
            "h": scheme.h,
            "seed": a.seed,
            "deltas": data.deltas.tolist(),
        }
        text = json.dumps(doc) + "\n"
    _emit(text, a.out)
    return 0


def cmd_fit(a) -> int:
    rep = hn.fit(a.file, a.h, a.estimator, levels=a.levels)
    d = rep.to_dict()
    if a.format == "csv":
        t = d["theta_hat"]
        text = _csv([["method", "beta", "sigma", "mu", "converged"], [d["method"], t["beta"], t["sigma"], t["mu"], d["converged"]]])
    else:
        text = json.dumps(d, indent=2, sort_keys=True) + "\n"
    _emit(text, a.out)
    return 0


def _experiment_config(a) -> hn.ExperimentConfig:
    doc = {}
    if a.config:
        doc = json.loads(Path(a.config).read_text())
    doc.setdefault("theta", {})
    for key in ("beta", "sigma", "mu"):
        v = getattr(a, key)
        if v is not None:
            doc["theta"][key] = v
    for key, attr in (("n", "n"), ("h_rule", "h_rule"), ("reps", "reps"), ("seed", "seed"), ("workers", "workers"), ("bins", "bins")):
        v = getattr(a, attr)
        if v is not None:
            doc[key] = v
    if a.estimator:
        doc["estimators"] = a.estimator
    out = dict(doc.get("output") or {})
    if a.out is not None:
        out["path"] = a.out
    if a.format is not None:
        out["format"] = a.format
    doc["output"] = out
    return hn.ExperimentConfig.from_dict(doc)


def cmd_experiment(a) -> int:
    cfg = _experiment_config(a)
    res = hn.run_experiment(cfg)
    if cfg.out:
        paths = res.write(cfg.out, plot=not a.no_plot)
        for k, p in paths.items():
            print(f"{k}: {p}", file=sys.stderr)
    if cfg.out is None or a.stdout:
        sys.stdout.write(res.to_json() if cfg.format == "json" else res.to_csv())
    return 0


def cmd_check_norming(a) -> int:
    theta = Theta(a.beta, a.sigma, a.mu)
    kappa = hn.HRule.parse(a.h_rule).kappa or 1.0
    rep = check_conditions(norming_family(a.family), theta, default_schemes(kappa), tol=a.tol)
    if a.format == "csv":
        names = list(rep.sequences)
        rows = [["n"] + names]
        rows += [[n] + [repr(float(rep.sequences[k][i])) for k in names] for i, n in enumerate(rep.n)]
        rows.append(["limit"] + [repr(float(rep.limits[k])) for k in names])
        text = _csv(rows)
    else:
        lim = rep.observed_limits()
        doc = {
            "family": a.family,
            "passed": bool(rep.passed),
            "limits": {k: _finite(v) for k, v in rep.limits.items()},
            "diverging": {k: bool(v) for k, v in rep.diverging.items()},
            "observed_limits": None if lim is None else list(lim.as_tuple()),
            "determinant": None if lim is None else float(rep.determinant),
            "n": [int(x) for x in rep.n],
        }
        text = json.dumps(doc, indent=2) + "\n"
    _emit(text, a.out)
    print("PASS" if rep.passed else "FAIL", a.family, file=sys.stderr)
    return 0 if rep.passed else 1


def _finite(v):
    v = float(v)
    return v if np.isfinite(v) else None


def _beta_grid(text: str) -> np.ndarray:
    if ":" in text:
        lo, hi, k = text.split(":")
        return np.linspace(float(lo), float(hi), int(k))
    return np.array([float(x) for x in text.split(",")])


def cmd_fisher_table(a) -> int:
    rows = [["beta", "s11", "s12", "s22", "s33", "efficient_variance"]]
    for b in _beta_grid(a.betas):
        sm = fisher.sigma_matrix(float(b))
        rows.append([float(b), sm.s11, sm.s12, sm.s22, sm.s33, fisher.efficient_variance(float(b))])
    if a.format == "csv":
        text = _csv([rows[0]] + [[f"{v:.12g}" for v in r] for r in rows[1:]])
    else:
        text = json.dumps([dict(zip(rows[0], r)) for r in rows[1:]], indent=2) + "\n"
    _emit(text, a.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stablehf", description="Estimation for symmetric stable Levy processes at high frequency.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate one path of increments")
    _theta_args(s)
    s.add_argument("--n", type=int, default=512)
    s.add_argument("--h-rule", default="one-over-n")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--format", choices=("json", "csv"), default="csv")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="estimate from a data file")
    s.add_argument("file")
    s.add_argument("--h", type=float, required=True, help="sampling step")
    s.add_argument("--levels", action="store_true", help="file holds levels X_t, not increments")
    s.add_argument("--estimator", default="mle")
    s.add_argument("--out")
    s.add_argument("--format", choices=("json", "csv"), default="json")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("experiment", help="Monte Carlo experiment")
    s.add_argument("--config", help="ExperimentConfig as JSON; flags override")
    _theta_args(s, defaults=False)
    s.add_argument("--n", type=int)
    s.add_argument("--h-rule")
    s.add_argument("--reps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--estimator", action="append", help="repeatable estimator spec")
    s.add_argument("--workers", type=int)
    s.add_argument("--bins", type=int)
    s.add_argument("--out", help="output stem; writes .json .csv .dat .png")
    s.add_argument("--format", choices=("json", "csv"))
    s.add_argument("--no-plot", action="store_true")
    s.add_argument("--stdout", action="store_true", help="also print the primary format with --out")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("check-norming", help="numerical check of the rate-matrix limits")
    s.add_argument("--family", choices=("beta", "sigma", "diagonal"), default="beta")
    _theta_args(s)
    s.add_argument("--h-rule", default="one-over-n")
    s.add_argument("--tol", type=float, default=1e-3)
    s.add_argument("--out")
    s.add_argument("--format", choices=("json", "csv"), default="json")
    s.set_defaults(func=cmd_check_norming)

    s = sub.add_parser("fisher-table", help="tabulate Sigma(beta)")
    s.add_argument("--betas", default="0.5:1.9:15", help="lo:hi:count or comma list")
    s.add_argument("--out")
    s.add_argument("--format", choices=("json", "csv"), default="csv")
    s.set_defaults(func=cmd_fisher_table)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, EstimationError, NumericalError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
