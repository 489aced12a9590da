"""
How far the support radius can be pushed.

The positivity argument works on V_eps as long as the infimum of the
multiplier per unit |theta|^2 over the eps-ball stays above 18 pi times the
supremum of the Cauchy-Schwarz factor. Both sides are evaluated on grids and
the crossing is located by bisection. This is a grid search, not a bound.
"""
import collections
import csv
import io
import logging
import math

import numpy as np

from . import certifier
from ._utils import DomainError, parallel_map


logger = logging.getLogger(__name__)


DEFAULT_S_POINTS = 400
DEFAULT_ALPHA_POINTS = 720

#: s runs over [eps / S_RANGE_RATIO, eps].
S_RANGE_RATIO = 100.0

EPS_MAX = 0.15
DEFAULT_BRACKET = (0.01, 0.15)
MIN_TOLERANCE = 1e-4

SUP_PREFACTOR = 18.0 * math.pi


def _check_eps(eps):
    if not 0.0 < eps <= EPS_MAX:
        raise DomainError("eps must lie in (0, %g], got %r" % (EPS_MAX, eps))


def default_grid(eps, resolution=1.0):
    """
    400 log-spaced s in [eps/100, eps] times 720 uniform alpha, with both
    counts scaled by resolution.
    """
    _check_eps(eps)
    return certifier.GridSpec(
        [(eps / S_RANGE_RATIO, eps), (0.0, 2.0 * math.pi)],
        [max(2, int(round(DEFAULT_S_POINTS * resolution))),
         max(2, int(round(DEFAULT_ALPHA_POINTS * resolution)))],
        ['log', 'uniform'], names=('s', 'alpha'))


def grid_for(eps, grid=None, resolution=1.0):
    """
    The grid used at radius eps. A given grid whose s range ends elsewhere
    is treated as a template and scaled so that it ends at eps.
    """
    if grid is None:
        return default_grid(eps, resolution)
    lo, hi = grid.ranges[grid.index('s')]
    if hi != eps:
        scale = eps / hi
        grid = grid.with_range('s', lo * scale, eps)
    return grid


def _s_alpha_axes(eps, grid):
    s = grid.axis(grid.index('s'))
    s = s[(s > 0.0) & (s <= eps)]
    # the inf is expected at s = eps; it is always sampled
    s = np.union1d(s, [eps])
    return s, grid.axis(grid.index('alpha'))


def _rowwise(func, s, alpha, jobs):
    chunks = np.array_split(s, max(1, min(jobs, len(s))))
    rows = parallel_map(lambda chunk: func(chunk[:, None], alpha[None, :]),
                        [c for c in chunks if len(c)], jobs=jobs)
    return np.concatenate(rows, axis=0)


def lhs_point(s, alpha):
    """m(embed(s, alpha)) / s^2, vectorised."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0.0):
        raise DomainError("the inf side is defined for s > 0 only")
    return certifier.multiplier_values(s, alpha) / (s * s)


def lhs_inf(eps, grid=None, jobs=1):
    """inf over 0 < s <= eps and all alpha of m(embed(s, alpha)) / s^2."""
    _check_eps(eps)
    s, alpha = _s_alpha_axes(eps, grid_for(eps, grid))
    values = _rowwise(lhs_point, s, alpha, jobs)
    return float(np.min(values))


def rhs_sup(eps, grid=None, jobs=1):
    """18 pi sup over s <= eps and all alpha of 1 / (2 + s psi' / (1 + psi))."""
    _check_eps(eps)
    s, alpha = _s_alpha_axes(eps, grid_for(eps, grid))
    values = _rowwise(certifier.cauchy_schwarz_factor, s, alpha, jobs)
    # the factor tends to 1/2 as s -> 0, which belongs to the sup
    return SUP_PREFACTOR * max(0.5, float(np.max(values)))


def eps_prime_of(eps):
    """The cube half-width sqrt(3/8) eps used for the step-5 comparison."""
    if eps < 0.0:
        raise DomainError("eps must be non-negative, got %r" % (eps,))
    return math.sqrt(3.0 / 8.0) * eps


class ThresholdCurve(object):
    """
    Both sides of the radius condition tabulated over eps.

    @ivar eps_values: Increasing radii.
    @ivar lhs:        inf side; non-increasing.
    @ivar rhs:        sup side; non-decreasing.
    """

    CSV_HEADER = ('eps', 'lhs', 'rhs')

    def __init__(self, eps_values, lhs, rhs):
        eps_values = [float(e) for e in eps_values]
        lhs = [float(v) for v in lhs]
        rhs = [float(v) for v in rhs]
        if not (len(eps_values) == len(lhs) == len(rhs)):
            raise DomainError("curve columns differ in length")
        if not eps_values:
            raise DomainError("a curve needs at least one point")
        if any(b <= a for a, b in zip(eps_values, eps_values[1:])):
            raise DomainError("eps values must be strictly increasing")
        self.eps_values = eps_values
        self.lhs = lhs
        self.rhs = rhs

    def __len__(self):
        return len(self.eps_values)

    def margins(self):
        return [l - r for l, r in zip(self.lhs, self.rhs)]

    def sign_changes(self):
        """Number of sign changes of lhs - rhs along the curve."""
        signs = [m > 0.0 for m in self.margins()]
        return sum(1 for a, b in zip(signs, signs[1:]) if a != b)

    def to_csv(self):
        out = io.StringIO()
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(self.CSV_HEADER)
        for row in zip(self.eps_values, self.lhs, self.rhs):
            writer.writerow(['%.12g' % (v,) for v in row])
        return out.getvalue()

    def to_document(self):
        crossing = curve_crossing(self)
        return collections.OrderedDict([
            ('eps', self.eps_values),
            ('lhs', self.lhs),
            ('rhs', self.rhs),
            ('crossing', crossing),
            ('eps_prime_at_crossing', None if crossing is None else eps_prime_of(crossing)),
        ])

    def __repr__(self):
        return '<ThresholdCurve %d points [%g, %g]>' % (
            len(self), self.eps_values[0], self.eps_values[-1])


def scan(eps_lo, eps_hi, n_points=25, grid=None, jobs=1, resolution=1.0):
    """
    Tabulates both sides on n_points uniformly spaced radii.

    Each side is accumulated along the scan (running min, running max) since
    the ball of radius eps contains every smaller ball.
    """
    if not 0.0 < eps_lo < eps_hi <= EPS_MAX:
        raise DomainError("need 0 < eps_lo < eps_hi <= %g, got %r, %r"
                          % (EPS_MAX, eps_lo, eps_hi))
    if n_points < 2:
        raise DomainError("a scan needs at least 2 points")

    eps_values = np.linspace(eps_lo, eps_hi, n_points)
    lhs, rhs = [], []
    for eps in eps_values:
        g = grid_for(eps, grid, resolution)
        lhs.append(lhs_inf(eps, g, jobs))
        rhs.append(rhs_sup(eps, g, jobs))
        logger.debug("scan eps=%.5f lhs=%.6f rhs=%.6f", eps, lhs[-1], rhs[-1])

    lhs = np.minimum.accumulate(lhs)
    rhs = np.maximum.accumulate(rhs)
    curve = ThresholdCurve(eps_values, lhs, rhs)
    logger.info("scanned %d radii in [%g, %g]; %d sign change(s)",
                n_points, eps_lo, eps_hi, curve.sign_changes())
    return curve


def curve_crossing(curve):
    """
    Linear interpolation of the first change of lhs - rhs from positive to
    non-positive, or None.
    """
    margins = curve.margins()
    eps = curve.eps_values
    for i in range(1, len(margins)):
        if margins[i - 1] > 0.0 >= margins[i]:
            m0, m1 = margins[i - 1], margins[i]
            return eps[i - 1] + (eps[i] - eps[i - 1]) * m0 / (m0 - m1)
    return None


def margin(eps, grid=None, jobs=1, resolution=1.0):
    g = grid_for(eps, grid, resolution)
    return lhs_inf(eps, g, jobs) - rhs_sup(eps, g, jobs)


def max_epsilon(tolerance=1e-3, grid=None, bracket=DEFAULT_BRACKET, jobs=1, resolution=1.0):
    """
    Bisects lhs_inf - rhs_sup on the bracket until it is narrower than
    tolerance and returns its midpoint.
    """
    if not tolerance >= MIN_TOLERANCE:
        raise DomainError("tolerance must be at least %g, got %r" % (MIN_TOLERANCE, tolerance))
    lo, hi = bracket
    f_lo = margin(lo, grid, jobs, resolution)
    f_hi = margin(hi, grid, jobs, resolution)
    if not (f_lo > 0.0 and f_hi <= 0.0):
        raise BracketError(lo, hi, f_lo, f_hi)

    steps = 0
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        f_mid = margin(mid, grid, jobs, resolution)
        steps += 1
        logger.info("bisection step %d: eps=%.6f margin=%+.6f", steps, mid, f_mid)
        if f_mid > 0.0:
            lo = mid
        else:
            hi = mid
    result = 0.5 * (lo + hi)
    logger.info("largest admissible eps %.5f (eps' %.5f) after %d steps",
                result, eps_prime_of(result), steps)
    return result


def refinement_study(tolerance=1e-3, resolutions=(1.0, 2.0), jobs=1):
    """
    max_epsilon at several grid resolutions.

    @return: OrderedDict with 'crossings' (resolution -> eps) and 'shift',
        the spread of the crossings.
    """
    crossings = collections.OrderedDict()
    for resolution in resolutions:
        crossings[resolution] = max_epsilon(tolerance, jobs=jobs, resolution=resolution)
    values = list(crossings.values())
    return collections.OrderedDict([
        ('crossings', crossings),
        ('shift', max(values) - min(values)),
    ])


class BracketError(ValueError):
    def __init__(self, lo, hi, f_lo, f_hi):
        super(BracketError, self).__init__(
            "no sign change of lhs - rhs in [%g, %g]: margins %+.6g, %+.6g"
            % (lo, hi, f_lo, f_hi))
        self.lo = lo
        self.hi = hi
        self.margins = (f_lo, f_hi)
