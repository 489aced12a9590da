"""
Numerical integration shared by the kernel, the certifiers and the
spectral assembly.

Adaptive work goes through QUADPACK (L{scipy.integrate.quad}); fixed rules
come from numpy's Gauss polynomial tables. The double-exponential rule
returns the distance of every node to both endpoints so that callers can
form endpoint-singular factors without cancellation.
"""
import logging
import math
import warnings

import numpy as np
from numpy.polynomial import laguerre, legendre
from scipy import integrate

from ._utils import PrecisionError


logger = logging.getLogger(__name__)


DEFAULT_TOL = 1e-10
DEFAULT_LIMIT = 10000


def adaptive(func, lo, hi, points=None, tol=DEFAULT_TOL, limit=DEFAULT_LIMIT):
    """
    Adaptive Gauss-Kronrod quadrature of func over [lo, hi].

    @param points: Optional interior breakpoints.
    @rtype: (L{float}, L{float}) value and absolute error estimate
    """
    if hi <= lo:
        return 0.0, 0.0

    if points is not None:
        points = sorted(p for p in points if lo < p < hi)
        if not points:
            points = None

    with warnings.catch_warnings():
        warnings.simplefilter('ignore', integrate.IntegrationWarning)
        result = integrate.quad(
            func, lo, hi, points=points,
            epsabs=tol, epsrel=tol, limit=limit, full_output=1)

    value, abserr = result[0], result[1]
    if len(result) > 3:
        # QUADPACK flagged the run; accept it only if the estimate is usable
        logger.debug("quad on [%g, %g]: %s (abserr %.3g)",
                     lo, hi, result[3].splitlines()[0], abserr)
        if not abserr <= 100.0 * tol * max(1.0, abs(value)):
            raise PrecisionError(
                "adaptive quadrature did not converge on [%r, %r]: abserr %r"
                % (lo, hi, abserr), estimate=value)

    return value, abserr


def inverse_sqrt_endpoints(g, lo, hi, tol=DEFAULT_TOL, lo_scale=None, hi_scale=None):
    """
    Integrates g(u) / (sqrt(u - lo) * sqrt(hi - u)) over [lo, hi].

    The interval is split at its midpoint and u = lo + t**2 (resp.
    u = hi - t**2) turns each half into a bounded integrand. g is called as
    g(u, below, above) with below = u - lo and above = hi - u formed from t**2
    directly, so factors such as sqrt(c + hi - u) keep full precision for
    tiny c.

    lo_scale / hi_scale are length scales (in t) of any peak that g has near
    the respective endpoint; they become breakpoints for the adaptive rule.

    @rtype: (L{float}, L{float})
    """
    width = hi - lo
    half = 0.5 * width
    tmax = math.sqrt(half)

    def left(t):
        below = t * t
        above = width - below
        return 2.0 * g(lo + below, below, above) / math.sqrt(above)

    def right(t):
        above = t * t
        below = width - above
        return 2.0 * g(hi - above, below, above) / math.sqrt(below)

    total, err = 0.0, 0.0
    for piece, scale in ((left, lo_scale), (right, hi_scale)):
        points = None
        if scale:
            points = [scale * f for f in (1.0, 10.0, 100.0) if scale * f < tmax]
        value, abserr = adaptive(piece, 0.0, tmax, points=points, tol=tol)
        total += value
        err += abserr

    return total, err


def tanh_sinh_rule(level, tmax=4.5):
    """
    Double-exponential nodes on [-1, 1] with step 2**-level.

    Returns (x, w, one_minus, one_plus) where one_minus = 1 - x and
    one_plus = 1 + x are computed without cancellation. The window
    |t| <= tmax must leave an inverse square root endpoint tail of about
    2*exp(-pi/2*sinh(tmax)) per side below double precision, which
    needs tmax above 3.7.
    """
    h = 2.0 ** (-level)
    n = int(math.ceil(tmax / h))
    t = h * np.arange(-n, n + 1)
    v = 0.5 * math.pi * np.sinh(t)
    cv = np.cosh(v)
    x = np.tanh(v)
    w = h * 0.5 * math.pi * np.cosh(t) / cv ** 2
    one_minus = np.exp(-v) / cv
    one_plus = np.exp(v) / cv
    keep = (one_minus > 0.0) & (one_plus > 0.0) & (w > 0.0)
    return x[keep], w[keep], one_minus[keep], one_plus[keep]


def tanh_sinh(func, lo, hi, level=6):
    """
    Fixed-level tanh-sinh quadrature over [lo, hi].

    func receives arrays (x, below, above) with below = x - lo and
    above = hi - x, and must be vectorised over them.
    """
    if hi <= lo:
        return 0.0
    x, w, one_minus, one_plus = tanh_sinh_rule(level)
    half = 0.5 * (hi - lo)
    below = half * one_plus
    above = half * one_minus
    nodes = lo + below
    values = func(nodes, below, above)
    return half * float(np.dot(w, values))


def gauss_legendre_panels(lo, hi, width, order):
    """
    Composite Gauss-Legendre rule with panels of (at most) the given width.

    @rtype: (L{numpy.ndarray}, L{numpy.ndarray}) nodes and weights
    """
    if hi <= lo:
        return np.zeros(0), np.zeros(0)
    npanels = max(1, int(math.ceil((hi - lo) / width)))
    edges = np.linspace(lo, hi, npanels + 1)
    x, w = legendre.leggauss(order)
    mid = 0.5 * (edges[1:] + edges[:-1])
    rad = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + rad[:, None] * x[None, :]).ravel()
    weights = (rad[:, None] * w[None, :]).ravel()
    return nodes, weights


def gauss_laguerre(order):
    """Nodes and weights for the integral of exp(-x) f(x) over [0, inf)."""
    return laguerre.laggauss(order)
