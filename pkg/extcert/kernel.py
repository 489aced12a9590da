"""
The radial kernel rho of the triple autoconvolution of arc-length measure
on the unit circle, evaluated by quadrature, by its closed form in terms of
the complete elliptic integral K, and by its logarithmic asymptotics at
r = 1.
"""
import collections
import logging
import math

import numpy as np

from . import quadrature
from ._utils import DomainError, PrecisionError, SingularityError


logger = logging.getLogger(__name__)


LOG2 = math.log(2.0)

#: Half-width of the band around r = 1 where the asymptotic formula is valid.
ASYMPTOTIC_BAND = 0.1

#: Rounding allowance on the band edge; 1.1 - 1.0 exceeds 0.1 by one ulp.
BAND_SLACK = 1e-12

#: Quadrature refuses radii closer than this to the singularity.
NEAR_SINGULAR = 1e-4

#: Relative stopping criterion of the arithmetic-geometric mean.
AGM_RTOL = 1e-15

QUADRATURE_TOL = 1e-10

METHODS = ('quadrature', 'elliptic', 'asymptotic')


class KernelEstimate(collections.namedtuple(
        'KernelEstimate', ['value', 'method', 'error_bound'])):
    """
    A value of rho together with the method that produced it and an
    absolute error bound (inf if unknown).
    """
    __slots__ = ()

    def __new__(cls, value, method, error_bound):
        assert method in METHODS, "unknown method %r" % (method,)
        assert error_bound >= 0, "negative error bound"
        return super(KernelEstimate, cls).__new__(
            cls, float(value), method, float(error_bound))


def elliptic_k_complement(kprime):
    """
    K as a function of the complementary modulus k' = sqrt(1 - k**2),
    K = pi / (2 * AGM(1, k')). Accepts scalars or arrays.
    """
    b = np.asarray(kprime, dtype=float)
    a = np.ones_like(b)
    for _ in range(64):
        if np.all(np.abs(a - b) <= AGM_RTOL * a):
            break
        a, b = 0.5 * (a + b), np.sqrt(a * b)
    with np.errstate(divide='ignore'):
        out = 0.5 * math.pi / a
    if out.ndim == 0:
        return float(out)
    return out


def elliptic_k(modulus):
    """
    Complete elliptic integral of the first kind,
    K(k) = int_0^1 dx / (sqrt(1 - x^2) sqrt(1 - k^2 x^2)).

    @type modulus: L{float} in [0, 1)
    """
    if modulus == 1.0:
        raise SingularityError("K diverges at modulus 1")
    if not 0.0 <= modulus < 1.0:
        raise DomainError("modulus outside [0, 1): %r" % (modulus,))
    return elliptic_k_complement(math.sqrt((1.0 - modulus) * (1.0 + modulus)))


def rho_values(r, rm1=None):
    """
    Vectorised closed-form rho.

    The complementary modulus comes from the factorisations
    1 - k^2 = (1-r)^3 (3+r) / ((1+r)^3 (3-r)) for r < 1 and
    1 - k^2 = (r-1)^3 (r+3) / (16 r) for r > 1, so the logarithmic
    singularity is resolved to full relative precision in |r - 1|.

    @param rm1: r - 1 if the caller knows it more accurately than r does.
    @return: rho(r); 0 beyond r = 3 and inf at r = 1.
    """
    r = np.asarray(r, dtype=float)
    if rm1 is None:
        rm1 = r - 1.0
    rm1 = np.asarray(rm1, dtype=float)
    d = np.abs(rm1)

    out = np.zeros(np.broadcast(r, rm1).shape)
    r, d, rm1 = np.broadcast_arrays(r, d, rm1)

    inner = rm1 < 0.0
    if np.any(inner):
        ri, di = r[inner], d[inner]
        denom = (1.0 + ri) ** 3 * (3.0 - ri)
        kp = np.sqrt(di ** 3 * (3.0 + ri) / denom)
        out[inner] = 16.0 / np.sqrt(denom) * elliptic_k_complement(kp)

    outer = (rm1 > 0.0) & (r <= 3.0)
    if np.any(outer):
        ro, do = r[outer], d[outer]
        kp = np.sqrt(np.minimum(do ** 3 * (ro + 3.0) / (16.0 * ro), 1.0))
        out[outer] = 4.0 / np.sqrt(ro) * elliptic_k_complement(kp)

    out[rm1 == 0.0] = np.inf
    return out


def excess_times_rho(excess):
    """
    (a - 1) * rho(sqrt(a)) from the excess e = a - 1, vectorised.

    sqrt(a) - 1 is formed as e / (1 + sqrt(1 + e)); |e| <= 1e-12 maps to the
    continuous extension 0.
    """
    e = np.asarray(excess, dtype=float)
    a = np.maximum(1.0 + e, 0.0)
    r = np.sqrt(a)
    rm1 = e / (1.0 + r)
    tiny = np.abs(e) <= 1e-12
    with np.errstate(invalid='ignore'):
        rho = rho_values(r, rm1=np.where(tiny, 1.0, rm1))
    return np.where(tiny, 0.0, e * rho)


def _elliptic_error_bound(r, value):
    """
    Heuristic rounding estimate for the closed form, not a derived bound.

    It allows 1e-14 relative rounding in K plus a term growing like
    r / |r - 1| for the conditioning of rho near the singularity. The
    estimate is validated only empirically, by the rho_quadrature cross-check
    the rho command reports.
    """
    return 1e-14 * (abs(value) + 6.0 * r / abs(r - 1.0))


def rho_elliptic(r):
    """
    rho(r) from its closed form in terms of K.

    @rtype: L{KernelEstimate}
    """
    if r == 1.0:
        raise SingularityError("rho is singular at r = 1")
    if not r > 0.0:
        raise DomainError("radius must be positive: %r" % (r,))
    if r > 3.0:
        return KernelEstimate(0.0, 'elliptic', 0.0)

    value = float(rho_values(r))
    return KernelEstimate(value, 'elliptic', _elliptic_error_bound(r, value))


def rho_quadrature(r, tol=QUADRATURE_TOL):
    """
    rho(r) = (4/r) int_A^1 du / (sqrt(1-u^2) sqrt(al+1-u) sqrt(be+1+u))
    with al = (1-r)^2/(2r), be = (3+r)(1-r)/(2r) and
    A = -1 + max(0, (3+r)(r-1)/(2r)), by adaptive quadrature.

    @rtype: L{KernelEstimate}
    """
    if not r > 0.0:
        raise DomainError("radius must be positive: %r" % (r,))
    if r > 3.0:
        return KernelEstimate(0.0, 'quadrature', 0.0)
    if abs(r - 1.0) < NEAR_SINGULAR:
        raise NearSingularError(
            "quadrature refused within %g of r = 1 (r = %r)" % (NEAR_SINGULAR, r))
    if r == 3.0:
        # the interval collapses; the limit of the integral is pi * g(1)
        return KernelEstimate(2.0 * math.pi / math.sqrt(3.0), 'quadrature', 1e-15)

    alpha = (1.0 - r) ** 2 / (2.0 * r)
    beta = (3.0 + r) * (1.0 - r) / (2.0 * r)

    if r < 1.0:
        lo = -1.0

        def g(u, below, above):
            return 1.0 / (math.sqrt(alpha + above) * math.sqrt(beta + below))
    else:
        lo = -1.0 - beta

        def g(u, below, above):
            return 1.0 / (math.sqrt(-beta + below) * math.sqrt(alpha + above))

    value, abserr = quadrature.inverse_sqrt_endpoints(
        g, lo, 1.0, tol=tol,
        lo_scale=math.sqrt(abs(beta)), hi_scale=math.sqrt(alpha))

    value *= 4.0 / r
    abserr *= 4.0 / r
    if abserr > 1e-9 * value:
        logger.debug("rho_quadrature(%r): relative error %.2g above target",
                     r, abserr / value)
    return KernelEstimate(value, 'quadrature', abserr)


def asymptotic_error_bound(r, sided=False):
    """
    Error bound of -6 log|1-r| + 12 log 2 as an approximation of rho(r).

    With sided=True the sharper bound 14 e log(1/e) + 9 e valid for r > 1
    is returned on that side.
    """
    eps = abs(r - 1.0)
    if sided and r > 1.0:
        return -14.0 * eps * math.log(eps) + 9.0 * eps
    return -22.0 * eps * math.log(eps) + 23.0 * eps


def rho_asymptotic(r):
    """
    @rtype: L{KernelEstimate}
    """
    eps = abs(r - 1.0)
    if eps == 0.0:
        raise SingularityError("rho is singular at r = 1")
    if eps > ASYMPTOTIC_BAND + BAND_SLACK:
        raise ValidityError(
            "asymptotic formula only valid for |r - 1| <= %g, got r = %r"
            % (ASYMPTOTIC_BAND, r))

    value = -6.0 * math.log(eps) + 12.0 * LOG2
    return KernelEstimate(value, 'asymptotic', asymptotic_error_bound(r))


def intermediate_estimate(r, value=None):
    """
    The scaled quantity bounded on the way to the asymptotic bound.

    For r = 1 - e it is (1-e)/4 rho(1-e) - 3 log 2 + 3/2 log e, bounded by
    13/4 e log(1/e) + 3 e; for r = 1 + e it is
    (4-e^2)/16 rho(1+e) - 3 log 2 + 3/2 log e, bounded by
    13/4 e log(1/e) + 9/4 e.

    @rtype: (L{float}, L{float}) residual and bound
    """
    eps = abs(r - 1.0)
    if value is None:
        value = rho_elliptic(r).value
    if r < 1.0:
        scaled = (1.0 - eps) / 4.0 * value
        bound = -3.25 * eps * math.log(eps) + 3.0 * eps
    else:
        scaled = (4.0 - eps * eps) / 16.0 * value
        bound = -3.25 * eps * math.log(eps) + 2.25 * eps
    return scaled - 3.0 * LOG2 + 1.5 * math.log(eps), bound


def rho(r, tol=1e-10):
    """
    Dispatches between the closed form and the asymptotic formula.

    The asymptotic formula is used inside the band |r - 1| <= 0.1 when its
    guaranteed bound meets tol and beats the closed form's rounding
    estimate; otherwise the closed form is used.

    @raise PrecisionError: neither method reaches tol. The best estimate is
        attached.
    @rtype: L{KernelEstimate}
    """
    if not tol > 0.0:
        raise DomainError("tolerance must be positive: %r" % (tol,))
    ell = rho_elliptic(r)
    if r > 3.0:
        return ell

    candidates = [ell]
    if abs(r - 1.0) <= ASYMPTOTIC_BAND + BAND_SLACK:
        asym = rho_asymptotic(r)
        if asym.error_bound < ell.error_bound:
            candidates.insert(0, asym)

    for estimate in candidates:
        if estimate.error_bound <= tol:
            return estimate

    best = min(candidates, key=lambda e: e.error_bound)
    raise PrecisionError(
        "rho(%r) cannot be resolved to %g (best bound %g, %s)"
        % (r, tol, best.error_bound, best.method), estimate=best)


class NearSingularError(DomainError):
    """The radius is too close to 1 for the requested method."""


class ValidityError(DomainError):
    """The radius lies outside the validity band of the asymptotic formula."""
