"""Block-diagonal rate matrices for (beta, sigma, mu) and their limit checks.

A rate matrix has the form

    phi_n = n**-0.5 * [[p11, p12, 0], [p21, p22, 0], [0, 0, h**-(1 - 1/beta)]]

and is admissible when p11, p12 and

    s21 = L p11 / beta**2 + p21 / sigma,   s22 = L p12 / beta**2 + p22 / sigma

(``L = log(1/h)``) converge, with a non-zero limiting determinant
``p11bar * p22bar - p12bar * p21bar``.  Here ``p21bar`` and ``p22bar`` are the
limits of ``s21`` and ``s22``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import DomainError
from .likelihood import SamplingScheme, Theta

__all__ = [
    "NormingLimits",
    "NormingMatrix",
    "NormingFamily",
    "rate_beta_oriented",
    "rate_sigma_oriented",
    "diagonal_norming",
    "norming_family",
    "ConditionReport",
    "check_conditions",
    "default_schemes",
]


@dataclass(frozen=True)
class NormingLimits:
    phi11bar: float
    phi12bar: float
    phi21bar: float
    phi22bar: float

    @property
    def determinant(self) -> float:
        return self.phi11bar * self.phi22bar - self.phi12bar * self.phi21bar

    def is_degenerate(self, tol: float = 1e-12) -> bool:
        return not abs(self.determinant) > tol

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.phi11bar, self.phi12bar, self.phi21bar, self.phi22bar)


@dataclass(frozen=True)
class NormingMatrix:
    matrix: np.ndarray
    scheme: SamplingScheme
    theta: Theta
    limits: Optional[NormingLimits] = None
    name: str = ""

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise DomainError("norming matrix must be 3x3")
        if m[0, 2] or m[1, 2] or m[2, 0] or m[2, 1]:
            raise DomainError("norming matrix must be block diagonal")
        if m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0] == 0.0 or m[2, 2] == 0.0:
            raise DomainError("norming matrix is singular")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)

    def scaled_entries(self) -> tuple[float, float, float, float]:
        """``sqrt(n)`` times the upper block: (p11, p12, p21, p22)."""
        r = math.sqrt(self.scheme.n)
        m = self.matrix
        return (r * m[0, 0], r * m[0, 1], r * m[1, 0], r * m[1, 1])

    def s_entries(self) -> tuple[float, float]:
        p11, p12, p21, p22 = self.scaled_entries()
        L = self.scheme.log_inv_h
        b2 = self.theta.beta**2
        s = self.theta.sigma
        return (L * p11 / b2 + p21 / s, L * p12 / b2 + p22 / s)


NormingFamily = Callable[[Theta, SamplingScheme], NormingMatrix]


def _build(upper, theta: Theta, scheme: SamplingScheme, limits, name) -> NormingMatrix:
    if scheme.h >= 1.0:
        raise DomainError(f"rate matrices need h < 1, got h={scheme.h}")
    r = 1.0 / math.sqrt(scheme.n)
    m = np.zeros((3, 3))
    m[:2, :2] = np.asarray(upper, dtype=float) * r
    m[2, 2] = r * scheme.h ** -(1.0 - 1.0 / theta.beta)
    return NormingMatrix(m, scheme, theta, limits, name)


def rate_beta_oriented(theta: Theta, scheme: SamplingScheme) -> NormingMatrix:
    """Upper block [[1, 0], [-sigma L / beta**2, 1]]; limits (1, 0, 0, 1/sigma)."""
    b, s, L = theta.beta, theta.sigma, scheme.log_inv_h
    upper = [[1.0, 0.0], [-s * L / b**2, 1.0]]
    return _build(upper, theta, scheme, NormingLimits(1.0, 0.0, 0.0, 1.0 / s), "beta")


def rate_sigma_oriented(theta: Theta, scheme: SamplingScheme) -> NormingMatrix:
    """Upper block [[1/L, 1], [0, -sigma L / beta**2]]; limits (0, 1, 1/beta**2, 0)."""
    b, s, L = theta.beta, theta.sigma, scheme.log_inv_h
    upper = [[1.0 / L, 1.0], [0.0, -s * L / b**2]]
    return _build(upper, theta, scheme, NormingLimits(0.0, 1.0, 1.0 / b**2, 0.0), "sigma")


def diagonal_norming(theta: Theta, scheme: SamplingScheme) -> NormingMatrix:
    """Plain diagonal rates; s21 grows like log(1/h), so this family is not admissible."""
    return _build([[1.0, 0.0], [0.0, 1.0]], theta, scheme, None, "diagonal")


_FAMILIES = {
    "beta": rate_beta_oriented,
    "sigma": rate_sigma_oriented,
    "diagonal": diagonal_norming,
}


def norming_family(name: str) -> NormingFamily:
    try:
        return _FAMILIES[name]
    except KeyError:
        raise DomainError(f"unknown norming family {name!r}; choose from {sorted(_FAMILIES)}") from None


def default_schemes(kappa: float = 1.0) -> list[SamplingScheme]:
    """Geometric grid n = 2**6 ... 2**18 with h = n**-kappa."""
    return [SamplingScheme(2**k, float(2**k) ** -kappa) for k in range(6, 19)]


@dataclass
class ConditionReport:
    """Observed sequences of (p11, p12, s21, s22) and their extrapolated limits."""

    n: list[int]
    sequences: dict[str, list[float]]
    limits: dict[str, float]
    diverging: dict[str, bool]
    expected: Optional[NormingLimits] = None
    tol: float = 1e-3
    mismatches: dict[str, float] = field(default_factory=dict)

    @property
    def determinant(self) -> float:
        l = self.limits
        return l["phi11"] * l["s22"] - l["phi12"] * l["s21"]

    @property
    def s_limits_ok(self) -> bool:
        return not (self.diverging["s21"] or self.diverging["s22"])

    @property
    def passed(self) -> bool:
        if any(self.diverging.values()):
            return False
        if not abs(self.determinant) > self.tol:
            return False
        return not self.mismatches

    def observed_limits(self) -> Optional[NormingLimits]:
        if any(self.diverging.values()):
            return None
        l = self.limits
        return NormingLimits(l["phi11"], l["phi12"], l["s21"], l["s22"])


def _richardson(x: np.ndarray, y: np.ndarray) -> float:
    # quadratic through the last three points, evaluated at x = 0
    coef = np.polyfit(x[-3:], y[-3:], 2)
    return float(coef[-1])


def check_conditions(
    family: NormingFamily,
    theta: Theta,
    schemes: Optional[Iterable[SamplingScheme]] = None,
    expected: Optional[NormingLimits] = None,
    tol: float = 1e-3,
) -> ConditionReport:
    """Evaluate the admissibility sequences along ``schemes`` and extrapolate.

    Each sequence is extrapolated to ``1/log(1/h) -> 0``.  A sequence is
    flagged as diverging when ``sequence / log(1/h)`` does not extrapolate to
    zero within ``tol``.  Divergence is reported, never raised.
    """
    schemes = list(schemes) if schemes is not None else default_schemes()
    if len(schemes) < 3:
        raise DomainError("need at least three schemes to extrapolate")
    seqs = {"phi11": [], "phi12": [], "s21": [], "s22": []}
    x = []
    for sc in schemes:
        nm = family(theta, sc)
        p11, p12, _, _ = nm.scaled_entries()
        s21, s22 = nm.s_entries()
        for key, val in zip(seqs, (p11, p12, s21, s22)):
            seqs[key].append(val)
        x.append(1.0 / sc.log_inv_h)
    order = np.argsort(x)[::-1]
    xs = np.asarray(x)[order]
    limits, diverging = {}, {}
    for key, vals in seqs.items():
        v = np.asarray(vals)[order]
        diverging[key] = abs(_richardson(xs, v * xs)) > tol
        limits[key] = math.inf if diverging[key] else _richardson(xs, v)
    mismatches = {}
    if expected is not None:
        for key, want in zip(seqs, expected.as_tuple()):
            if diverging[key] or abs(limits[key] - want) > tol:
                mismatches[key] = limits[key] - want
    return ConditionReport(
        n=[sc.n for sc in schemes],
        sequences=seqs,
        limits=limits,
        diverging=diverging,
        expected=expected,
        tol=tol,
        mismatches=mismatches,
    )
