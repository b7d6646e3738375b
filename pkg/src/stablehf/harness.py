"""Simulation, file fitting and Monte Carlo experiments.

Estimators are named by short spec strings::

    me-log
    me-power(q=0.1)
    adaptive-q(eps=0.2,split=0.6)        # or m=<int> for a fixed split
    one-step(init=me-power(q=0.1),norming=beta)
    mle(init=me-power(q=0.1),norming=beta)

Normalized errors use the true parameter in the rates:
``sqrt(n)(beta_hat - beta)``, ``sqrt(n)(sigma_hat - sigma) / (sigma L / beta**2)``
and ``sqrt(n) h**(1 - 1/beta) (mu_hat - mu)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from . import estimators as es
from . import fisher
from . import stable_dist as sd
from .errors import DomainError, EstimationError, NumericalError, ParseError
from .likelihood import IncrementSeries, SamplingScheme, Theta
from .norming import norming_family

__all__ = [
    "SCHEMA_VERSION",
    "SUMMARY_SCHEMA",
    "HRule",
    "EstimatorSpec",
    "parse_estimator",
    "ExperimentConfig",
    "MonteCarloResult",
    "simulate_path",
    "run_experiment",
    "read_series",
    "fit",
]

SCHEMA_VERSION = 1
COORDS = ("beta", "sigma", "mu")

_NUM = {"type": ["number", "null"]}
_COORD = {
    "type": "object",
    "required": ["mean", "variance", "skewness", "variance_ratio", "histogram"],
    "properties": {
        "mean": _NUM,
        "variance": _NUM,
        "skewness": _NUM,
        "variance_ratio": _NUM,
        "histogram": {
            "type": "object",
            "required": ["edges", "counts"],
            "properties": {
                "edges": {"type": "array", "items": _NUM},
                "counts": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
        },
    },
}
# JSON Schema (draft 2020-12) of the experiment summary
SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "config", "reference", "estimators"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "config": {
            "type": "object",
            "required": ["theta", "n", "h_rule", "reps", "seed", "estimators"],
            "properties": {
                "theta": {
                    "type": "object",
                    "required": ["beta", "sigma", "mu"],
                    "properties": {"beta": {"type": "number"}, "sigma": {"type": "number"}, "mu": {"type": "number"}},
                },
                "n": {"type": "integer", "minimum": 1},
                "h_rule": {"type": "string", "pattern": "^(one-over-n|pow:.+)$"},
                "reps": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "estimators": {"type": "array", "items": {"type": "string"}, "minItems": 1},
            },
        },
        "reference": {
            "type": "object",
            "required": ["variance"],
            "properties": {
                "variance": {
                    "type": "object",
                    "required": list(COORDS),
                    "additionalProperties": {"type": "number", "exclusiveMinimum": 0},
                }
            },
        },
        "estimators": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["count", "failures", "failure_rate", "failure_messages", "coords"],
                "properties": {
                    "count": {"type": "integer", "minimum": 0},
                    "failures": {"type": "integer", "minimum": 0},
                    "failure_rate": {"type": "number", "minimum": 0, "maximum": 1},
                    "failure_messages": {"type": "array", "items": {"type": "string"}},
                    "coords": {
                        "type": "object",
                        "required": list(COORDS),
                        "properties": {c: _COORD for c in COORDS},
                    },
                },
            },
        },
    },
}


# --------------------------------------------------------------------------
# sampling rule


@dataclass(frozen=True)
class HRule:
    """``h = 1/n`` or ``h = n**-kappa`` with ``kappa`` in (0, 1]."""

    kappa: Optional[float] = None

    def __post_init__(self):
        if self.kappa is not None and not (0.0 < self.kappa <= 1.0):
            raise DomainError(f"kappa must lie in (0, 1], got {self.kappa}")

    @classmethod
    def parse(cls, text: str) -> "HRule":
        text = text.strip()
        if text == "one-over-n":
            return cls()
        if text.startswith("pow:"):
            try:
                return cls(float(text[4:]))
            except ValueError:
                pass
        raise DomainError(f"unknown h rule {text!r}; use one-over-n or pow:<kappa>")

    def step(self, n: int) -> float:
        return 1.0 / n if self.kappa is None else float(n) ** -self.kappa

    def __str__(self) -> str:
        return "one-over-n" if self.kappa is None else f"pow:{self.kappa:g}"


# --------------------------------------------------------------------------
# estimator specs


_KINDS = ("me-log", "me-power", "adaptive-q", "one-step", "mle")
_DEFAULT_INIT = "me-power(q=0.1)"


def _split_args(text: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise DomainError("unbalanced parentheses")
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if depth:
        raise DomainError("unbalanced parentheses")
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str
    params: tuple = ()

    def get(self, key, default=None):
        return dict(self.params).get(key, default)

    @property
    def label(self) -> str:
        if not self.params:
            return self.kind
        args = ",".join(f"{k}={v.label if isinstance(v, EstimatorSpec) else _fmt(v)}" for k, v in self.params)
        return f"{self.kind}({args})"

    def __str__(self) -> str:
        return self.label

    def run(self, data: IncrementSeries, cache: Optional[dict] = None) -> es.EstimateReport:
        """Evaluate on ``data``; ``cache`` shares results (e.g. a common initial estimate)."""
        cache = {} if cache is None else cache
        key = self.label
        if key not in cache:
            try:
                cache[key] = self._run(data, cache)
            except (EstimationError, DomainError, NumericalError) as exc:
                cache[key] = exc
        out = cache[key]
        if isinstance(out, Exception):
            raise out
        return out

    def _run(self, data, cache) -> es.EstimateReport:
        if self.kind == "me-log":
            return es.moment_estimate(data, es.MomentSpec.log())
        if self.kind == "me-power":
            return es.moment_estimate(data, es.MomentSpec.power(self.get("q")))
        if self.kind == "adaptive-q":
            m = self.get("m")
            return es.adaptive_q_estimate(
                data, m=None if m is None else int(m), eps=self.get("eps", 0.2), split_exponent=self.get("split", 0.6)
            )
        init = self.get("init").run(data, cache)
        if init.boundary:
            raise EstimationError(f"initial estimate {init.method} hit the beta clip", stage=self.kind)
        family = norming_family(self.get("norming", "beta"))
        if self.kind == "one-step":
            return es.one_step_mle(data, init.theta_hat, family)
        rep = es.mle(data, init.theta_hat, family)
        if not rep.converged:
            raise EstimationError("scoring iterations did not converge", stage="mle", diagnostics=rep.diagnostics)
        return rep


def _fmt(v) -> str:
    return f"{v:g}" if isinstance(v, float) else str(v)


_SPEC_RE = re.compile(r"^\s*([a-z-]+)\s*(?:\((.*)\))?\s*$", re.S)
_ALLOWED = {
    "me-log": {},
    "me-power": {"q": float},
    "adaptive-q": {"eps": float, "split": float, "m": int},
    "one-step": {"init": "spec", "norming": str},
    "mle": {"init": "spec", "norming": str},
}


def parse_estimator(text) -> EstimatorSpec:
    """Parse a spec string such as ``one-step(init=me-log,norming=sigma)``."""
    if isinstance(text, EstimatorSpec):
        return text
    m = _SPEC_RE.match(str(text))
    if not m or m.group(1) not in _KINDS:
        raise DomainError(f"unknown estimator {text!r}; expected one of {', '.join(_KINDS)}")
    kind, body = m.group(1), m.group(2) or ""
    params: dict = {}
    for arg in _split_args(body):
        key, sep, value = arg.partition("=")
        key = key.strip()
        conv = _ALLOWED[kind].get(key)
        if not sep or conv is None:
            raise DomainError(f"bad argument {arg!r} for {kind}")
        try:
            params[key] = parse_estimator(value) if conv == "spec" else conv(value.strip())
        except ValueError as exc:
            raise DomainError(f"bad value in {arg!r}: {exc}") from exc
    if kind == "me-power":
        if "q" not in params:
            raise DomainError("me-power needs q")
        es.MomentSpec.power(params["q"])
    if kind in ("one-step", "mle"):
        params.setdefault("init", parse_estimator(_DEFAULT_INIT))
        params.setdefault("norming", "beta")
        if params["init"].kind in ("one-step", "mle"):
            raise DomainError("init must be a moment estimator")
        fam = norming_family(params["norming"])
        if fam.__name__ == "diagonal_norming":
            raise DomainError("the diagonal family has no information limit")
    order = list(_ALLOWED[kind])
    return EstimatorSpec(kind, tuple(sorted(params.items(), key=lambda kv: order.index(kv[0]))))


# --------------------------------------------------------------------------
# simulation


def simulate_path(theta: Theta, scheme: SamplingScheme, seed=None) -> IncrementSeries:
    """Increments ``mu h + sigma h**(1/beta) J`` with ``J`` standard stable."""
    eps = sd.sample_standard(theta.beta, scheme.n, seed)
    h = scheme.h
    deltas = theta.mu * h + theta.sigma * h ** (1.0 / theta.beta) * eps
    return IncrementSeries(deltas, scheme)


def rep_seed(seed: int, rep: int) -> np.random.SeedSequence:
    # counter based: the stream of rep r does not depend on scheduling
    return np.random.SeedSequence(int(seed), spawn_key=(int(rep),))


# --------------------------------------------------------------------------
# experiments


@dataclass
class ExperimentConfig:
    theta_true: Theta
    n: int
    h_rule: HRule = field(default_factory=HRule)
    reps: int = 1000
    seed: int = 0
    estimators: tuple = ()
    out: Optional[str] = None
    format: str = "json"
    workers: int = 1
    bins: int = 40

    def __post_init__(self):
        if int(self.reps) < 1:
            raise DomainError("reps must be at least 1")
        if int(self.n) < 3:
            raise DomainError("n must be at least 3")
        if self.format not in ("json", "csv"):
            raise DomainError(f"format must be json or csv, got {self.format!r}")
        if int(self.bins) < 1:
            raise DomainError("bins must be positive")
        if isinstance(self.h_rule, str):
            self.h_rule = HRule.parse(self.h_rule)
        specs = tuple(parse_estimator(e) for e in (self.estimators or ("me-power(q=0.1)", "one-step", "mle")))
        self.estimators = specs
        self.reps, self.n, self.seed = int(self.reps), int(self.n), int(self.seed)
        self.scheme  # validates n*h

    @property
    def scheme(self) -> SamplingScheme:
        return SamplingScheme(self.n, self.h_rule.step(self.n))

    def to_dict(self) -> dict:
        t = self.theta_true
        return {
            "theta": {"beta": t.beta, "sigma": t.sigma, "mu": t.mu},
            "n": self.n,
            "h_rule": str(self.h_rule),
            "reps": self.reps,
            "seed": self.seed,
            "estimators": [e.label for e in self.estimators],
            "output": {"path": self.out, "format": self.format},
            "workers": self.workers,
            "bins": self.bins,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {"theta", "n", "h_rule", "reps", "seed", "estimators", "output", "workers", "bins"}
        extra = set(doc) - known
        if extra:
            raise DomainError(f"unknown config keys: {sorted(extra)}")
        th = doc.get("theta", {})
        out = doc.get("output") or {}
        return cls(
            Theta(th.get("beta", 1.6), th.get("sigma", 1.2), th.get("mu", 0.0)),
            doc.get("n", 512),
            HRule.parse(doc.get("h_rule", "one-over-n")),
            doc.get("reps", 1000),
            doc.get("seed", 0),
            tuple(doc.get("estimators", ())),
            out.get("path"),
            out.get("format", "json"),
            doc.get("workers", 1),
            doc.get("bins", 40),
        )


def _one_rep(args):
    config, rep = args
    data = simulate_path(config.theta_true, config.scheme, rep_seed(config.seed, rep))
    cache: dict = {}
    out = []
    for spec in config.estimators:
        try:
            r = spec.run(data, cache)
            if r.boundary:
                out.append((None, f"[{spec.kind}] beta clipped to the boundary"))
            else:
                out.append((r.theta_hat.as_array(), None))
        except (EstimationError, DomainError, NumericalError) as exc:
            out.append((None, str(exc)))
    return rep, out


@dataclass
class MonteCarloResult:
    """Per-rep estimates and normalized errors; rows are NaN for failed reps."""

    config: ExperimentConfig
    estimates: dict
    errors: dict
    failures: dict
    reference: dict

    @property
    def labels(self) -> list[str]:
        return [e.label for e in self.config.estimators]

    def ok(self, label: str) -> np.ndarray:
        return np.all(np.isfinite(self.errors[label]), axis=1)

    def histogram(self, label: str, coord: int) -> tuple[np.ndarray, np.ndarray]:
        """Counts over +-4 reference standard deviations; values beyond fall in the end bins."""
        sd_ref = math.sqrt(self.reference["variance"][COORDS[coord]])
        edges = np.linspace(-4 * sd_ref, 4 * sd_ref, self.config.bins + 1)
        vals = self.errors[label][self.ok(label), coord]
        idx = np.clip(np.searchsorted(edges, vals, side="right") - 1, 0, self.config.bins - 1)
        return np.bincount(idx, minlength=self.config.bins), edges

    def summary(self) -> dict:
        per = {}
        for label in self.labels:
            good = self.errors[label][self.ok(label)]
            coords = {}
            for i, c in enumerate(COORDS):
                v = good[:, i]
                counts, edges = self.histogram(label, i)
                coords[c] = {
                    "mean": _num(v.mean()) if v.size else None,
                    "variance": _num(v.var(ddof=1)) if v.size > 1 else None,
                    "skewness": _num(stats.skew(v)) if v.size > 2 else None,
                    "variance_ratio": _num(v.var(ddof=1) / self.reference["variance"][c]) if v.size > 1 else None,
                    "histogram": {"edges": [_num(x) for x in edges], "counts": counts.tolist()},
                }
            fails = self.failures[label]
            per[label] = {
                "count": int(good.shape[0]),
                "failures": len(fails),
                "failure_rate": len(fails) / self.config.reps,
                "failure_messages": sorted({m for _, m in fails})[:10],
                "coords": coords,
            }
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "reference": {k: {c: _num(x) for c, x in v.items()} for k, v in self.reference.items()},
            "estimators": per,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rep", "estimator", "status", "beta_hat", "sigma_hat", "mu_hat", "err_beta", "err_sigma", "err_mu"])
        for label in self.labels:
            msgs = dict(self.failures[label])
            for r in range(self.config.reps):
                est, err = self.estimates[label][r], self.errors[label][r]
                if r in msgs:
                    w.writerow([r, label, "fail"] + [""] * 6)
                else:
                    w.writerow([r, label, "ok"] + [repr(float(x)) for x in (*est, *err)])
        return buf.getvalue()

    def to_gnuplot(self) -> str:
        """Histogram table: one index block per estimator, columns are bin centres and counts."""
        lines = ["# histogram of normalized errors; blocks separated by two blank lines"]
        for label in self.labels:
            lines.append(f"# estimator {label}")
            lines.append("# " + " ".join(f"{c}_centre {c}_count" for c in COORDS))
            cols = []
            for i in range(3):
                counts, edges = self.histogram(label, i)
                cols.append((0.5 * (edges[1:] + edges[:-1]), counts))
            for b in range(self.config.bins):
                lines.append(" ".join(f"{cols[i][0][b]:.10g} {cols[i][1][b]}" for i in range(3)))
            lines += ["", ""]
        return "\n".join(lines) + "\n"

    def write(self, out: str | os.PathLike, plot: bool = True) -> dict:
        """Write ``<stem>.json``, ``<stem>.csv``, ``<stem>.dat`` and (optionally) ``<stem>.png``."""
        base = Path(out)
        stem = base.with_suffix("") if base.suffix in (".json", ".csv", ".dat", ".png") else base
        stem.parent.mkdir(parents=True, exist_ok=True)
        paths = {
            "json": stem.with_suffix(".json"),
            "csv": stem.with_suffix(".csv"),
            "dat": stem.with_suffix(".dat"),
        }
        paths["json"].write_text(self.to_json())
        paths["csv"].write_text(self.to_csv())
        paths["dat"].write_text(self.to_gnuplot())
        if plot:
            from .plotting import plot_histograms

            paths["png"] = stem.with_suffix(".png")
            plot_histograms(self, paths["png"])
        return paths


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def reference_variances(theta: Theta) -> dict:
    eff = fisher.efficient_variance(theta.beta)
    s33 = fisher.sigma_matrix(theta.beta).s33
    return {
        "variance": {"beta": eff, "sigma": eff, "mu": theta.sigma**2 / s33},
        "median_drift_variance": {"mu": fisher.median_drift_variance(theta.beta, theta.sigma)},
    }


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> MonteCarloResult:
    """Run ``config.reps`` replications; each rep feeds the same path to every estimator.

    Rep ``r`` draws from ``SeedSequence(seed, spawn_key=(r,))`` so the output
    does not depend on ``workers``.
    """
    workers = config.workers if workers is None else workers
    scheme = config.scheme
    labels = [e.label for e in config.estimators]
    ests = {k: np.full((config.reps, 3), np.nan) for k in labels}
    errs = {k: np.full((config.reps, 3), np.nan) for k in labels}
    fails: dict = {k: [] for k in labels}
    tasks = [(config, r) for r in range(config.reps)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_rep, tasks, chunksize=max(1, config.reps // (4 * workers))))
    else:
        results = [_one_rep(t) for t in tasks]
    for rep, rows in results:
        for label, (est, msg) in zip(labels, rows):
            if est is None:
                fails[label].append((rep, msg))
                continue
            ests[label][rep] = est
            errs[label][rep] = es.normalized_errors(Theta.from_array(est), config.theta_true, scheme.n, scheme.h)
    return MonteCarloResult(config, ests, errs, fails, reference_variances(config.theta_true))


# --------------------------------------------------------------------------
# data files


_SPLIT = re.compile(r"[,\s]+")


def read_series(path, h: float, levels: bool = False) -> IncrementSeries:
    """Read one value per line (last field if a line has several).

    A non-numeric first line is taken as a header.  Blank lines and lines
    starting with ``#`` are skipped.  With ``levels`` the values are
    ``X_{t_j}`` and are differenced.
    """
    values = []
    first = True
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f for f in _SPLIT.split(line) if f]
            try:
                v = float(fields[-1])
            except ValueError:
                if first:
                    first = False
                    continue
                raise ParseError(f"not a number: {fields[-1]!r}", lineno) from None
            first = False
            if not math.isfinite(v):
                raise ParseError(f"non-finite value {fields[-1]!r}", lineno)
            values.append(v)
    if not values:
        raise ParseError("no data values in file")
    arr = np.asarray(values)
    if levels:
        if arr.size < 2:
            raise ParseError("need at least two levels")
        arr = np.diff(arr)
    try:
        return IncrementSeries.from_deltas(arr, h)
    except DomainError as exc:
        raise ParseError(str(exc)) from exc


def fit(path, h: float, estimator="mle", levels: bool = False) -> es.EstimateReport:
    """Estimate from a data file with the given estimator spec."""
    data = read_series(path, h, levels)
    rep = parse_estimator(estimator).run(data)
    rep.diagnostics.setdefault("n", data.n)
    rep.diagnostics.setdefault("h", data.h)
    return rep
