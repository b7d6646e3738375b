"""Fisher information of the standard symmetric stable law and its assembly.

``Sigma(beta)`` collects the second moments of the score kernels under
``phi_beta``::

    s11 = E f**2,  s12 = E[eps f g],  s22 = E(1 + eps g)**2,  s33 = E g**2

The cross terms with ``g`` alone vanish by symmetry.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from . import stable_dist as sd
from .errors import DomainError, NumericalError
from .likelihood import Theta
from .norming import NormingLimits

__all__ = [
    "SigmaMatrix",
    "AsymptoticInfo",
    "sigma_matrix",
    "asymptotic_info",
    "efficient_variance",
    "lower_bound_beta",
    "lower_bound_sigma",
    "median_drift_variance",
]


@dataclass(frozen=True)
class SigmaMatrix:
    beta: float
    s11: float
    s12: float
    s22: float
    s33: float

    def as_matrix(self) -> np.ndarray:
        return np.array(
            [[self.s11, self.s12, 0.0], [self.s12, self.s22, 0.0], [0.0, 0.0, self.s33]]
        )

    @property
    def upper(self) -> np.ndarray:
        return np.array([[self.s11, self.s12], [self.s12, self.s22]])


@dataclass(frozen=True)
class AsymptoticInfo:
    matrix: np.ndarray
    sigma_matrix: SigmaMatrix
    limits: NormingLimits

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)


_GL = np.polynomial.legendre.leggauss(24)


def _gl_nodes(edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x, w = _GL
    a, b = edges[:-1, None], edges[1:, None]
    return ((b - a) * (x + 1) / 2 + a).ravel(), ((b - a) * w / 2).ravel()


def _nodes(beta: float, width: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for 2 * int_0^inf (.) dy.

    Composite rule on [0, ys]; beyond ys the substitution y = ys e^t turns the
    power-law tail into an exponentially decaying integrand in t.
    """
    ys = sd.tail_threshold(beta)
    k = max(4, int(math.ceil(ys / width)))
    y_in, w_in = _gl_nodes(np.linspace(0.0, ys, k + 1))
    t_max = 60.0 / beta
    t, w_t = _gl_nodes(np.linspace(0.0, t_max, int(math.ceil(t_max / (2 * width))) + 1))
    y_out = ys * np.exp(t)
    return np.concatenate([y_in, y_out]), 2.0 * np.concatenate([w_in, w_t * y_out])


def _integrate(beta: float, width: float) -> np.ndarray:
    y, w = _nodes(beta, width)
    d = sd.density(beta, y)
    f = d.d_beta / d.value
    g = d.d_y / d.value
    wv = w * d.value
    ones = 1.0 + y * g
    return np.array([wv @ (f * f), wv @ (y * f * g), wv @ (ones * ones), wv @ (g * g)])


_CACHE: dict[float, SigmaMatrix] = {}
_LOCK = threading.Lock()
_TOL = 1e-7


def sigma_matrix(beta: float) -> SigmaMatrix:
    """Sigma(beta) by quadrature, accurate to about 1e-7 per entry.

    Results are memoized per ``round(beta, 12)``; the cache is lock protected.
    """
    beta = sd.check_beta(beta)
    key = round(beta, 12)
    with _LOCK:
        hit = _CACHE.get(key)
    if hit is not None:
        return hit
    # panel widths: the integrands are smooth on the scale of one unit
    coarse = _integrate(key, 2.0)
    fine = _integrate(key, 1.0)
    err = float(np.max(np.abs(fine - coarse)))
    if err > _TOL:
        raise NumericalError(f"Sigma quadrature did not settle at beta={beta}", err)
    s11, s12, s22, s33 = (float(v) for v in fine)
    out = SigmaMatrix(key, s11, s12, s22, s33)
    with _LOCK:
        _CACHE[key] = out
    return out


def asymptotic_info(theta: Theta, limits: NormingLimits) -> AsymptoticInfo:
    """Block-diagonal limit information for a rate matrix with the given limits.

    Upper block ``M^T Sigma_2 M`` with ``M = [[p11, p12], [-p21, -p22]]``;
    lower-right entry ``s33 / sigma**2``.
    """
    if limits.is_degenerate():
        raise DomainError(f"degenerate norming limits {limits.as_tuple()}")
    sm = sigma_matrix(theta.beta)
    M = np.array([[limits.phi11bar, limits.phi12bar], [-limits.phi21bar, -limits.phi22bar]])
    out = np.zeros((3, 3))
    out[:2, :2] = M.T @ sm.upper @ M
    out[2, 2] = sm.s33 / theta.sigma**2
    return AsymptoticInfo(out, sm, limits)


def efficient_variance(beta: float) -> float:
    """``s22 / (s11 s22 - s12**2)``."""
    sm = sigma_matrix(beta)
    return sm.s22 / (sm.s11 * sm.s22 - sm.s12**2)


def lower_bound_beta(beta: float) -> float:
    """Asymptotic minimax variance bound for ``sqrt(n)(beta_hat - beta)``."""
    return efficient_variance(beta)


def lower_bound_sigma(beta: float) -> float:
    """Same bound for ``sqrt(n)(sigma_hat - sigma) / (sigma log(1/h) / beta**2)``."""
    return efficient_variance(beta)


def median_drift_variance(beta: float, sigma: float) -> float:
    """Asymptotic variance of ``sqrt(n) h**(1-1/beta) (mu_hat - mu)`` for the sample median."""
    phi0 = math.gamma(1.0 + 1.0 / beta) / math.pi
    return sigma**2 / (4.0 * phi0**2)
