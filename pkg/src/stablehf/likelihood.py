"""Log-likelihood of high-frequency increments of X_t = mu t + sigma J_t.

With ``L = log(1/h)`` and residuals ``eps_j = (dX_j - h mu) / (h**(1/beta) sigma)``,

    loglik = sum_j [ L/beta - log(sigma) + log phi_beta(eps_j) ].

Derivatives are taken analytically through ``eps_j(theta)``, using the
density derivatives of :mod:`stablehf.stable_dist`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from . import stable_dist as sd
from .errors import DomainError, NumericalError

if TYPE_CHECKING:
    from .norming import NormingMatrix

__all__ = [
    "Theta",
    "SamplingScheme",
    "IncrementSeries",
    "residuals",
    "loglik",
    "score",
    "hessian",
    "normalized_score",
    "normalized_score_assembled",
    "observed_info",
]


@dataclass(frozen=True)
class Theta:
    """Parameter triple (beta, sigma, mu)."""

    beta: float
    sigma: float
    mu: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "beta", sd.check_beta(self.beta, quadrature=False))
        sigma, mu = float(self.sigma), float(self.mu)
        if not (sigma > 0.0 and math.isfinite(sigma)):
            raise DomainError(f"sigma must be positive and finite, got {self.sigma!r}")
        if not math.isfinite(mu):
            raise DomainError(f"mu must be finite, got {self.mu!r}")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "mu", mu)

    def as_array(self) -> np.ndarray:
        return np.array([self.beta, self.sigma, self.mu])

    @classmethod
    def from_array(cls, values) -> "Theta":
        b, s, m = (float(v) for v in values)
        return cls(b, s, m)


@dataclass(frozen=True)
class SamplingScheme:
    """``n`` increments on a grid of step ``h``; terminal time ``n h`` must stay >= 0.5."""

    n: int
    h: float

    def __post_init__(self):
        n, h = int(self.n), float(self.h)
        if n != self.n or n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        if not (h > 0.0 and math.isfinite(h)):
            raise DomainError(f"h must be positive and finite, got {self.h!r}")
        if n * h < 0.5:
            raise DomainError(f"terminal time n*h = {n * h:g} is below 0.5")
        if n * h < 1.0 - 1e-9:
            warnings.warn(f"terminal time n*h = {n * h:g} is below 1", RuntimeWarning, stacklevel=2)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "h", h)

    @property
    def log_inv_h(self) -> float:
        return -math.log(self.h)


@dataclass(frozen=True)
class IncrementSeries:
    deltas: np.ndarray
    scheme: SamplingScheme
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        d = np.array(self.deltas, dtype=float).ravel()
        if d.size != self.scheme.n:
            raise DomainError(f"expected {self.scheme.n} increments, got {d.size}")
        if not np.all(np.isfinite(d)):
            raise DomainError("increments must be finite")
        d.setflags(write=False)
        object.__setattr__(self, "deltas", d)

    @classmethod
    def from_deltas(cls, deltas, h: float) -> "IncrementSeries":
        d = np.asarray(deltas, dtype=float).ravel()
        return cls(d, SamplingScheme(d.size, h))

    @property
    def n(self) -> int:
        return self.scheme.n

    @property
    def h(self) -> float:
        return self.scheme.h


def residuals(data: IncrementSeries, theta: Theta) -> np.ndarray:
    h = data.h
    return (data.deltas - h * theta.mu) / (h ** (1.0 / theta.beta) * theta.sigma)


def loglik(data: IncrementSeries, theta: Theta) -> float:
    eps = residuals(data, theta)
    const = data.scheme.log_inv_h / theta.beta - math.log(theta.sigma)
    return float(data.n * const + np.sum(sd.log_density(theta.beta, eps)))


@dataclass
class _Pieces:
    """Per-observation ingredients shared by the score and the Hessian."""

    eps: np.ndarray
    eps_d: np.ndarray  # (3, n) first derivatives of eps
    f: np.ndarray
    g: np.ndarray
    d: sd.DensityEval


def _pieces(data: IncrementSeries, theta: Theta) -> _Pieces:
    b, s = theta.beta, theta.sigma
    L = data.scheme.log_inv_h
    eps = residuals(data, theta)
    d = sd.density(b, eps)
    c = data.h ** (1.0 - 1.0 / b) / s
    eps_d = np.stack([-(L / b**2) * eps, -eps / s, np.full_like(eps, -c)])
    return _Pieces(eps, eps_d, d.d_beta / d.value, d.d_y / d.value, d)


def score(data: IncrementSeries, theta: Theta) -> np.ndarray:
    """Gradient of :func:`loglik` in (beta, sigma, mu)."""
    p = _pieces(data, theta)
    L = data.scheme.log_inv_h
    b, s = theta.beta, theta.sigma
    w = 1.0 + p.eps * p.g
    return np.array(
        [
            np.sum(p.f - (L / b**2) * w),
            -np.sum(w) / s,
            -(data.h ** (1.0 - 1.0 / b) / s) * np.sum(p.g),
        ]
    )


def hessian(data: IncrementSeries, theta: Theta) -> np.ndarray:
    """Second derivatives of :func:`loglik` in (beta, sigma, mu)."""
    p = _pieces(data, theta)
    L = data.scheme.log_inv_h
    b, s = theta.beta, theta.sigma
    eps, d = p.eps, p.d
    c = data.h ** (1.0 - 1.0 / b) / s

    # derivatives of psi = log phi
    psi_y = p.g
    psi_yy = d.d_yy / d.value - p.g**2
    psi_by = d.d_beta_y / d.value - p.f * p.g
    psi_bb = d.d_beta_beta / d.value - p.f**2

    e1 = p.eps_d
    k = L / b**2
    e2 = np.empty((3, 3, eps.size))
    e2[0, 0] = (2 * L / b**3 + k * k) * eps
    e2[0, 1] = e2[1, 0] = k * eps / s
    e2[0, 2] = e2[2, 0] = k * c
    e2[1, 1] = 2 * eps / s**2
    e2[1, 2] = e2[2, 1] = c / s
    e2[2, 2] = 0.0

    H = np.empty((3, 3))
    for a in range(3):
        for bb in range(a, 3):
            term = psi_yy * e1[a] * e1[bb] + psi_y * e2[a, bb]
            if a == 0:
                term = term + psi_by * e1[bb]
            if bb == 0:
                term = term + psi_by * e1[a]
            if a == 0 and bb == 0:
                term = term + psi_bb
            H[a, bb] = H[bb, a] = np.sum(term)
    n = data.n
    H[0, 0] += n * 2 * L / b**3
    H[1, 1] += n / s**2
    return H


def normalized_score(
    data: IncrementSeries, theta: Theta, norming: "NormingMatrix", *, verify: bool = False
) -> np.ndarray:
    """``phi_n^T`` times the score.

    With ``verify=True`` the explicit kernel assembly is computed as well and
    a :class:`NumericalError` is raised if the two differ by more than 1e-8
    (relative to the larger of the two norms).
    """
    out = norming.matrix.T @ score(data, theta)
    if verify:
        alt = normalized_score_assembled(data, theta, norming)
        scale = max(np.max(np.abs(out)), np.max(np.abs(alt)), 1e-300)
        if np.max(np.abs(out - alt)) > 1e-8 * scale:
            raise NumericalError("normalized score formulas disagree", float(np.max(np.abs(out - alt))))
    return out


def normalized_score_assembled(data: IncrementSeries, theta: Theta, norming: "NormingMatrix") -> np.ndarray:
    """Normalized score built directly from the kernels ``f``, ``1 + eps g`` and ``g``."""
    p = _pieces(data, theta)
    b, s = theta.beta, theta.sigma
    L = data.scheme.log_inv_h
    m = norming.matrix
    s21 = L / b**2 * m[0, 0] + m[1, 0] / s
    s22 = L / b**2 * m[0, 1] + m[1, 1] / s
    w = 1.0 + p.eps * p.g
    third = -m[2, 2] * data.h ** (1.0 - 1.0 / b) / s
    return np.array(
        [
            np.sum(m[0, 0] * p.f - s21 * w),
            np.sum(m[0, 1] * p.f - s22 * w),
            third * np.sum(p.g),
        ]
    )


def observed_info(data: IncrementSeries, theta: Theta, norming: "NormingMatrix") -> np.ndarray:
    """``-phi_n^T H phi_n``, the normalized observed information."""
    m = norming.matrix
    out = -m.T @ hessian(data, theta) @ m
    return 0.5 * (out + out.T)
