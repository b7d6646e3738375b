"""Independent reference computations used by the test-suite.

Everything here goes through scipy's adaptive QUADPACK routines and never
touches the package's fixed-node quadrature or tail series.
"""

import math
import warnings

import numpy as np
from scipy import integrate


def _u_max(beta):
    return 45.0 ** (1.0 / beta)


def _weight(kind, beta):
    if kind == "value":
        return lambda u: 1.0, "cos"
    if kind == "d_y":
        return lambda u: -u, "sin"
    if kind == "d_yy":
        return lambda u: -u * u, "cos"
    if kind == "d_beta":
        return (lambda u: -(u**beta) * math.log(u) if u > 0 else 0.0), "cos"
    raise ValueError(kind)


def quad_density(beta, y, kind="value"):
    """Fourier inversion of exp(-u**beta) by QAWO on [0, 45**(1/beta)]."""
    w, trig = _weight(kind, beta)
    f = lambda u: math.exp(-(u**beta)) * w(u)
    y = float(y)
    sign = 1.0
    if trig == "sin" and y < 0:
        y, sign = -y, -1.0
    y = abs(y)
    if y == 0.0 and trig == "sin":
        return 0.0
    with warnings.catch_warnings():
        # epsabs is below what double precision can certify; the value is still good
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(
            f, 0.0, _u_max(beta), weight=trig, wvar=y, epsabs=1e-15, epsrel=1e-13, limit=5000
        )
    return sign * val / math.pi


def quad_expectation(beta, func, density=None):
    """E func(J_1) for even integrands: 2 int_0^inf func(y) phi(y) dy."""
    density = density or (lambda y: quad_density(beta, y))
    g = lambda y: func(y) * density(y)
    a, _ = integrate.quad(g, 0.0, 1.0, epsabs=1e-12, limit=200)
    b, _ = integrate.quad(g, 1.0, 30.0, epsabs=1e-12, limit=400)
    c, _ = integrate.quad(g, 30.0, np.inf, epsabs=1e-12, limit=400)
    return 2.0 * (a + b + c)
