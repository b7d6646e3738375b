"""Estimators of (beta, sigma, mu): median drift, moment matching, one-step and full MLE.

Moment estimators work on the centered increments ``x_j = dX_j - h mu_hat``
with the median term removed.  For both shipped moment functions the
``h**(-1/beta')`` scaling separates from the unknown, so no outer fixed
point is needed:

* LOG: the variance of ``log|x_j|`` gives ``beta`` in closed form and the
  mean gives ``log sigma``;
* POWER(q): the ratio ``mean|x|**(2q) / (mean|x|**q)**2`` depends on ``beta``
  only and is inverted by bracketing root search, then ``sigma`` follows.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, special

from . import stable_dist as sd
from .errors import DomainError, EstimationError
from .fisher import asymptotic_info
from .likelihood import IncrementSeries, Theta, loglik, score
from .norming import NormingFamily, rate_beta_oriented

__all__ = [
    "MomentKind",
    "MomentSpec",
    "MomentFit",
    "EstimateReport",
    "BETA_CLIP",
    "median_drift",
    "empirical_g_moments",
    "moment_map",
    "moment_jacobian_det",
    "log_moments_to_params",
    "power_moments_to_params",
    "solve_moments_log",
    "solve_moments_power",
    "moment_estimate",
    "adaptive_q_estimate",
    "one_step_mle",
    "mle",
    "normalized_errors",
]

BETA_CLIP = (0.05, 1.95)
_POWER_DELTA = 1e-3


class MomentKind(enum.Enum):
    LOG = "log"
    POWER = "power"


@dataclass(frozen=True)
class MomentSpec:
    kind: MomentKind
    q: Optional[float] = None

    def __post_init__(self):
        if self.kind is MomentKind.POWER:
            if self.q is None or not (0.0 < float(self.q) < 1.0 / 3.0 - _POWER_DELTA / 6):
                raise DomainError(f"POWER moments need 0 < q < 1/3, got {self.q!r}")
        elif self.q is not None:
            raise DomainError("LOG moments take no q")

    @classmethod
    def log(cls) -> "MomentSpec":
        return cls(MomentKind.LOG)

    @classmethod
    def power(cls, q: float) -> "MomentSpec":
        return cls(MomentKind.POWER, float(q))

    @property
    def beta_range(self) -> tuple[float, float]:
        """Admissible beta' for the solver."""
        if self.kind is MomentKind.LOG:
            return BETA_CLIP
        return (6 * self.q + _POWER_DELTA, 2.0 - _POWER_DELTA)


@dataclass
class MomentFit:
    beta: float
    sigma: float
    boundary: bool = False
    diagnostics: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.beta, self.sigma))


@dataclass
class EstimateReport:
    theta_hat: Theta
    method: str
    normalized_errors: Optional[np.ndarray] = None
    iterations: int = 0
    converged: bool = True
    boundary: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            return v

        return {
            "method": self.method,
            "theta_hat": {"beta": self.theta_hat.beta, "sigma": self.theta_hat.sigma, "mu": self.theta_hat.mu},
            "normalized_errors": clean(self.normalized_errors),
            "iterations": self.iterations,
            "converged": self.converged,
            "boundary": self.boundary,
            "diagnostics": clean(self.diagnostics),
        }


# --------------------------------------------------------------------------
# median drift and moment data


def _odd(d: np.ndarray, diagnostics: Optional[dict], key: str = "dropped_last_increment") -> np.ndarray:
    if d.size % 2 == 0:
        d = d[:-1]
        if diagnostics is not None:
            diagnostics[key] = True
    if d.size == 0:
        raise EstimationError("no increments left", stage="median")
    return d


def _median(d: np.ndarray, h: float, diagnostics: Optional[dict] = None) -> float:
    return float(np.median(_odd(d, diagnostics))) / h


def median_drift(data: IncrementSeries, diagnostics: Optional[dict] = None) -> float:
    """Sample median of the increments divided by ``h`` (odd sample size)."""
    return _median(data.deltas, data.h, diagnostics)


def _centered(d: np.ndarray, h: float, mu_hat: float, diagnostics: Optional[dict] = None) -> np.ndarray:
    d = _odd(d, diagnostics)
    k = d.size // 2
    drop = np.argsort(d, kind="stable")[k]
    x = np.delete(d, drop) - mu_hat * h
    zeros = x == 0.0
    if np.any(zeros):
        x = x[~zeros]
        if diagnostics is not None:
            diagnostics["zero_terms_excluded"] = int(zeros.sum())
    if x.size < 2:
        raise EstimationError("fewer than two non-zero centered increments", stage="moments")
    return x


def _g_moments(values: np.ndarray, spec: MomentSpec) -> np.ndarray:
    a = np.abs(values)
    if spec.kind is MomentKind.LOG:
        la = np.log(a)
        return np.array([la.mean(), (la * la).mean()])
    p = a**spec.q
    return np.array([p.mean(), (p * p).mean()])


def empirical_g_moments(
    data: IncrementSeries, mu_hat: float, beta_trial: float, spec: MomentSpec, diagnostics: Optional[dict] = None
) -> np.ndarray:
    """Mean of ``g(h**(-1/beta') (dX_j - mu_hat h))`` over all but the median term."""
    beta_trial = sd.check_beta(beta_trial, quadrature=False)
    x = _centered(data.deltas, data.h, mu_hat, diagnostics)
    return _g_moments(x * data.h ** (-1.0 / beta_trial), spec)


def moment_map(beta: float, sigma: float, spec: MomentSpec) -> np.ndarray:
    """Population moments of ``g(sigma J_1)``."""
    if spec.kind is MomentKind.LOG:
        return np.array([sd.log_moment_mean(beta, sigma), sd.log_moment_second(beta, sigma)])
    q = spec.q
    return np.array(
        [sigma**q * sd.frac_moment_coeff(beta, q), sigma ** (2 * q) * sd.frac_moment_coeff(beta, 2 * q)]
    )


def moment_jacobian_det(beta: float, sigma: float, spec: MomentSpec) -> float:
    """Determinant of ``(d/dbeta G0, -sigma d/dsigma G0)``.

    LOG gives ``-pi**2 / (3 beta**3)``.  POWER gives
    ``2 q**2 sigma**(3q) C_q C_2q Gamma(a) Gamma(b) (psi(b) - psi(a)) / beta**2``
    with ``a = 1 - q/beta`` and ``b = 1 - 2q/beta``.
    """
    if spec.kind is MomentKind.LOG:
        return -(math.pi**2) / (3.0 * beta**3)
    q = spec.q
    a, b = 1.0 - q / beta, 1.0 - 2.0 * q / beta
    if b <= 0:
        raise DomainError("POWER moments need 2q < beta")
    cq, c2q = sd.power_moment_const(q), sd.power_moment_const(2 * q)
    return (
        2.0 * q * q / beta**2 * sigma ** (3 * q) * cq * c2q
        * math.gamma(a) * math.gamma(b) * (special.digamma(b) - special.digamma(a))
    )


# --------------------------------------------------------------------------
# moment solvers


def log_moments_to_params(m1: float, m2: float, log_inv_h: float) -> MomentFit:
    """Invert LOG moments of the unscaled centered increments.

    ``m1 = mean log|x|`` and ``m2 = mean log(|x|)**2``.
    """
    var = m2 - m1 * m1
    lo, hi = BETA_CLIP
    denom = 6.0 * var / math.pi**2 - 0.5
    diag = {"log_variance": var}
    boundary = False
    if not math.isfinite(var):
        raise EstimationError("non-finite log moments", stage="log-moments", diagnostics=diag)
    if denom <= 1.0 / hi**2:
        beta, boundary = hi, True
    else:
        beta = 1.0 / math.sqrt(denom)
        if beta < lo:
            beta, boundary = lo, True
    log_sigma = log_inv_h / beta + m1 - sd.EULER_GAMMA * (1.0 / beta - 1.0)
    diag["boundary"] = boundary
    return MomentFit(beta, math.exp(log_sigma), boundary, diag)


def _power_ratio(beta: float, q: float) -> float:
    # C(beta, 2q) / C(beta, q)**2, in logs for stability
    c = sd.power_moment_const
    return math.exp(
        math.log(c(2 * q)) - 2 * math.log(c(q)) + math.lgamma(1 - 2 * q / beta) - 2 * math.lgamma(1 - q / beta)
    )


def power_moments_to_params(m1: float, m2: float, q: float, log_inv_h: float) -> MomentFit:
    """Invert POWER(q) moments of the unscaled centered increments.

    ``m1 = mean |x|**q`` and ``m2 = mean |x|**(2q)``.
    """
    spec = MomentSpec.power(q)
    lo, hi = spec.beta_range
    target = m2 / (m1 * m1)
    grid = np.linspace(lo, hi, 65)
    ratios = np.array([_power_ratio(b, q) for b in grid])
    steps = np.diff(ratios)
    diag: dict = {"ratio": target}
    if not (np.all(steps < 0) or np.all(steps > 0)):
        raise EstimationError("moment ratio is not monotone in beta", stage="power-moments", diagnostics=diag)
    resid = ratios - target
    diag["sign_changes"] = int(np.sum(np.sign(resid[1:]) != np.sign(resid[:-1])))
    r_lo, r_hi = ratios[0], ratios[-1]
    boundary = False
    # the ratio decreases in beta: heavier tails inflate the higher moment
    if target >= r_lo:
        beta, boundary = lo, True
    elif target <= r_hi:
        beta, boundary = hi, True
    else:
        beta = optimize.brentq(lambda b: _power_ratio(b, q) - target, lo, hi, xtol=1e-14, rtol=1e-15)
    sigma_q = math.exp(q * log_inv_h / beta) * m1 / sd.frac_moment_coeff(beta, q)
    diag["boundary"] = boundary
    return MomentFit(beta, sigma_q ** (1.0 / q), boundary, diag)


def _log_fit(d: np.ndarray, h: float, mu_hat: float) -> MomentFit:
    diag: dict = {}
    m1, m2 = _g_moments(_centered(d, h, mu_hat, diag), MomentSpec.log())
    fit = log_moments_to_params(m1, m2, -math.log(h))
    fit.diagnostics.update(diag)
    return fit


def _power_fit(d: np.ndarray, h: float, mu_hat: float, q: float) -> MomentFit:
    diag: dict = {}
    m1, m2 = _g_moments(_centered(d, h, mu_hat, diag), MomentSpec.power(q))
    fit = power_moments_to_params(m1, m2, q, -math.log(h))
    fit.diagnostics.update(diag)
    return fit


def solve_moments_log(data: IncrementSeries, mu_hat: float) -> MomentFit:
    return _log_fit(data.deltas, data.h, mu_hat)


def solve_moments_power(data: IncrementSeries, mu_hat: float, q: float) -> MomentFit:
    return _power_fit(data.deltas, data.h, mu_hat, q)


def moment_estimate(data: IncrementSeries, spec: MomentSpec) -> EstimateReport:
    """Median drift followed by the LOG or POWER moment fit on the same data."""
    diag: dict = {}
    mu = median_drift(data, diag)
    if spec.kind is MomentKind.LOG:
        fit = solve_moments_log(data, mu)
        method = "me-log"
    else:
        fit = solve_moments_power(data, mu, spec.q)
        method = f"me-power(q={spec.q:g})"
    diag.update(fit.diagnostics)
    return EstimateReport(Theta(fit.beta, fit.sigma, mu), method, boundary=fit.boundary, diagnostics=diag)


def default_split(n: int, exponent: float = 0.6) -> int:
    return int(math.ceil(n**exponent))


def adaptive_q_estimate(
    data: IncrementSeries, m: Optional[int] = None, eps: float = 0.2, split_exponent: float = 0.6
) -> EstimateReport:
    """Pick ``q`` from a LOG fit on the first ``m`` increments, then fit POWER(q) on the rest."""
    n = data.n
    m = default_split(n, split_exponent) if m is None else int(m)
    if not (3 <= m <= n - 3):
        raise EstimationError(f"split m={m} leaves too little data (n={n})", stage="adaptive-split")
    if not (0.0 < eps < 1.0):
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    h = data.h
    head, rest = data.deltas[:m], data.deltas[m:]
    try:
        pilot = _log_fit(head, h, _median(head, h))
    except EstimationError as exc:
        raise EstimationError(str(exc), stage="adaptive-pilot", diagnostics=exc.diagnostics) from exc
    q = (1.0 - eps) * pilot.beta / 6.0
    diag: dict = {"m": m, "q_hat": q, "pilot_beta": pilot.beta}
    if rest.size % 2 == 0:
        rest = rest[1:]
        diag["dropped_first_of_rest"] = True
    try:
        mu = _median(rest, h)
        fit = _power_fit(rest, h, mu, q)
    except EstimationError as exc:
        raise EstimationError(str(exc), stage="adaptive-power", diagnostics={**diag, **exc.diagnostics}) from exc
    diag.update(fit.diagnostics)
    return EstimateReport(
        Theta(fit.beta, fit.sigma, mu), "adaptive-q", boundary=fit.boundary or pilot.boundary, diagnostics=diag
    )


# --------------------------------------------------------------------------
# likelihood based


def _scoring_step(data: IncrementSeries, theta: Theta, family: NormingFamily):
    nm = family(theta, data.scheme)
    if nm.limits is None:
        raise EstimationError(f"norming family {nm.name!r} has no limits", stage="one-step")
    info = asymptotic_info(theta, nm.limits).matrix
    sc = score(data, theta)
    phi = nm.matrix
    try:
        inner = np.linalg.solve(info, phi.T @ sc)
    except np.linalg.LinAlgError as exc:
        raise EstimationError("singular information matrix", stage="one-step") from exc
    return phi @ inner, nm, sc


def _valid_theta(values: np.ndarray) -> Optional[Theta]:
    b, s, m = values
    if not (sd.BETA_MIN <= b <= sd.BETA_MAX and s > 0 and math.isfinite(s) and math.isfinite(m)):
        return None
    return Theta(b, s, m)


def _project_init(theta0: Theta, diag: dict) -> Theta:
    # moment fits may return beta up to 2; the density needs [BETA_MIN, BETA_MAX]
    b = min(max(theta0.beta, sd.BETA_MIN), sd.BETA_MAX)
    if b != theta0.beta:
        diag["init_beta_projected"] = theta0.beta
        return Theta(b, theta0.sigma, theta0.mu)
    return theta0


def one_step_mle(
    data: IncrementSeries, theta0: Theta, norming_family: NormingFamily = rate_beta_oriented
) -> EstimateReport:
    """One Fisher-scoring step from ``theta0`` using the limit information at ``theta0``.

    An initial beta outside the density range is first moved to the nearest end.
    """
    diag: dict = {}
    theta0 = _project_init(theta0, diag)
    step, nm, sc = _scoring_step(data, theta0, norming_family)
    new = theta0.as_array() + step
    theta1 = _valid_theta(new)
    diag.update({"step": step, "normalized_step": nm.inverse() @ step, "score": sc})
    if theta1 is None:
        raise EstimationError(f"step leaves the parameter space: {new.tolist()}", stage="one-step", diagnostics=diag)
    return EstimateReport(theta1, "one-step", iterations=1, diagnostics=diag)


def mle(
    data: IncrementSeries,
    theta0: Theta,
    norming_family: NormingFamily = rate_beta_oriented,
    max_iter: int = 50,
    tol: float = 1e-8,
) -> EstimateReport:
    """Iterated Fisher scoring with step halving.

    Stops when the normalized step ``phi_n^{-1} step`` has norm below
    ``tol``.  A step is halved (at most 20 times) until the log-likelihood
    does not decrease.  If ``max_iter`` is reached the best iterate is
    returned with ``converged=False``.  The initial beta is projected as in
    :func:`one_step_mle`.
    """
    diag: dict = {}
    theta0 = _project_init(theta0, diag)
    theta = theta0
    ll = loglik(data, theta)
    score0 = None
    converged = False
    it = 0
    halvings = 0
    norm_step = math.inf
    for it in range(1, max_iter + 1):
        step, nm, sc = _scoring_step(data, theta, norming_family)
        if score0 is None:
            score0 = sc
        norm_step = float(np.linalg.norm(nm.inverse() @ step))
        if norm_step < tol:
            converged = True
            break
        base = theta.as_array()
        accepted = False
        for _ in range(21):
            cand = _valid_theta(base + step)
            if cand is not None:
                ll_new = loglik(data, cand)
                if ll_new >= ll:
                    theta, ll, accepted = cand, ll_new, True
                    break
            step = 0.5 * step
            halvings += 1
        if not accepted:
            # no ascent along the scoring direction: treat as stationary
            converged = norm_step < math.sqrt(tol)
            break
    final_score = score(data, theta)
    diag.update({
        "loglik": ll,
        "loglik_initial": loglik(data, theta0),
        "score_norm": float(np.linalg.norm(final_score)),
        "initial_score_norm": float(np.linalg.norm(score0)) if score0 is not None else 0.0,
        "last_normalized_step": norm_step,
        "halvings": halvings,
    })
    return EstimateReport(theta, "mle", iterations=it, converged=converged, diagnostics=diag)


def normalized_errors(theta_hat: Theta, theta_true: Theta, n: int, h: float) -> np.ndarray:
    """Errors scaled by the rates: sqrt(n), sqrt(n)/(sigma L / beta**2), sqrt(n) h**(1 - 1/beta).

    The true parameter enters the scaling.
    """
    b, s = theta_true.beta, theta_true.sigma
    L = -math.log(h)
    r = math.sqrt(n)
    return np.array(
        [
            r * (theta_hat.beta - b),
            r * (theta_hat.sigma - s) / (s * L / b**2),
            r * h ** (1.0 - 1.0 / b) * (theta_hat.mu - theta_true.mu),
        ]
    )
