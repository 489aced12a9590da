"""
Grid verification of the quantitative estimates.

Every certifier evaluates the two sides of one inequality on a L{GridSpec}
and condenses the outcome into a L{CertReport}: the smallest margin
(bound minus quantity for upper bounds, quantity minus bound for lower
bounds), where it occurred and whether it stays above -tolerance. This is
floating-point verification on dense grids, not interval arithmetic; the
reports carry the largest change of the margin between neighbouring grid
points so a reader can judge whether the grid is fine enough.

All certifiers accept a C{tighten} factor. Upper bounds are divided by it
and lower bounds multiplied by it, so C{tighten=100} must make every
certifier fail.
"""
import collections
import logging
import math
import time

import numpy as np

from . import geometry, kernel, quadrature
from ._utils import DomainError, log_and_ignore_exceptions, parallel_map, xlogx


logger = logging.getLogger(__name__)


DEFAULT_TOLERANCE = 1e-12

#: Reports become inconclusive when more points than this fraction fail.
MAX_SKIPPED_FRACTION = 1e-3

#: Points with sqrt(a) this close to 1 are evaluated through the continuation.
NEAR_SINGULAR_RADIUS = 1e-6

#: Radius of the ball around the centres on which the estimates are proven.
BALL_RADIUS = 0.05

STATUSES = ('passed', 'failed', 'inconclusive')

LOG2 = math.log(2.0)
LOG3 = math.log(3.0)
SQRT3 = math.sqrt(3.0)
TWO_PI = 2.0 * math.pi


def _per_axis(value, n, what):
    if isinstance(value, (list, tuple)):
        if len(value) != n:
            raise DomainError("%s needs one entry per axis (%d), got %r" % (what, n, value))
        return tuple(value)
    return (value,) * n


class GridSpec(object):
    """
    A tensor-product grid.

    @ivar names:   Axis names, used for reporting worst points.
    @type names:   L{tuple} of L{str}
    @ivar ranges:  Closed interval per axis.
    @type ranges:  L{tuple} of (L{float}, L{float})
    @ivar points:  Number of points per axis; at least 2 unless the
                   interval is a single value.
    @type points:  L{tuple} of L{int}
    @ivar spacing: 'uniform' or 'log' per axis.
    @type spacing: L{tuple} of L{str}
    """

    SPACINGS = ('uniform', 'log')

    def __init__(self, ranges, points, spacing='uniform', names=None):
        ranges = tuple((float(lo), float(hi)) for lo, hi in ranges)
        n = len(ranges)
        points = tuple(int(p) for p in _per_axis(points, n, 'points'))
        spacing = _per_axis(spacing, n, 'spacing')
        if names is None:
            names = tuple('x%d' % (i,) for i in range(n))
        names = tuple(names)
        if len(names) != n:
            raise DomainError("need %d axis names, got %r" % (n, names))

        for (lo, hi), p, sp, name in zip(ranges, points, spacing, names):
            if sp not in self.SPACINGS:
                raise DomainError("unknown spacing %r for axis %s" % (sp, name))
            if not hi >= lo:
                raise DomainError("empty range %r for axis %s" % ((lo, hi), name))
            if lo == hi:
                if p != 1:
                    raise DomainError("single-valued axis %s takes exactly 1 point" % (name,))
            elif p < 2:
                raise DomainError("axis %s needs at least 2 points, got %d" % (name, p))
            if sp == 'log' and not lo > 0.0:
                raise DomainError("log spacing needs a positive range on axis %s" % (name,))

        self.names = names
        self.ranges = ranges
        self.points = points
        self.spacing = tuple(spacing)

    @classmethod
    def at(cls, names, values):
        """A one-point grid at the given coordinates."""
        return cls([(v, v) for v in values], 1, names=names)

    @property
    def ndim(self):
        return len(self.ranges)

    @property
    def size(self):
        n = 1
        for p in self.points:
            n *= p
        return n

    def axis(self, i):
        lo, hi = self.ranges[i]
        p = self.points[i]
        if p == 1:
            return np.array([lo])
        if self.spacing[i] == 'log':
            return np.geomspace(lo, hi, p)
        return np.linspace(lo, hi, p)

    def axes(self):
        return [self.axis(i) for i in range(self.ndim)]

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing='ij')

    def index(self, name):
        return self.names.index(name)

    def refined(self, factor):
        """The same grid with the point counts scaled by factor."""
        points = [1 if p == 1 else max(2, int(round(p * factor))) for p in self.points]
        return GridSpec(self.ranges, points, self.spacing, self.names)

    def with_range(self, name, lo, hi):
        ranges = list(self.ranges)
        ranges[self.index(name)] = (lo, hi)
        return GridSpec(ranges, self.points, self.spacing, self.names)

    def with_points(self, name, points):
        counts = list(self.points)
        counts[self.index(name)] = points
        return GridSpec(self.ranges, counts, self.spacing, self.names)

    def to_document(self):
        return collections.OrderedDict([
            ('names', list(self.names)),
            ('ranges', [list(r) for r in self.ranges]),
            ('points', list(self.points)),
            ('spacing', list(self.spacing)),
        ])

    def __eq__(self, other):
        if not isinstance(other, GridSpec):
            return NotImplemented
        return self.to_document() == other.to_document()

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __repr__(self):
        return 'GridSpec(%r, %r, %r, names=%r)' % (
            self.ranges, self.points, self.spacing, self.names)


def jsonable(value):
    if isinstance(value, dict):
        return collections.OrderedDict((k, jsonable(v)) for k, v in value.items())
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


class CertReport(object):
    """
    Outcome of one certification run.

    @ivar lemma_id:     Identifier of the verified estimate.
    @ivar grid:         The L{GridSpec} that was scanned.
    @ivar worst_margin: Smallest margin over all points and sub-checks.
    @ivar worst_point:  Coordinates of the worst margin (axis name -> value).
    @ivar tolerance:    passed <=> worst_margin >= -tolerance.
    @ivar status:       'passed', 'failed' or 'inconclusive' (too many
                        points could not be evaluated).
    @ivar details:      Per sub-check margins, skipped counts, grid slack.
    @ivar runtime_ms:   Wall-clock time; left out of serialised output
                        unless asked for.
    """

    def __init__(self, lemma_id, grid, worst_margin, worst_point,
                 tolerance=DEFAULT_TOLERANCE, runtime_ms=0, details=None,
                 inconclusive=False):
        self.lemma_id = lemma_id
        self.grid = grid
        self.worst_margin = float(worst_margin)
        self.worst_point = collections.OrderedDict(worst_point or ())
        self.tolerance = float(tolerance)
        self.runtime_ms = int(runtime_ms)
        self.details = collections.OrderedDict(details or ())
        self.passed = bool(self.worst_margin >= -self.tolerance)
        if inconclusive:
            self.status = 'inconclusive'
        else:
            self.status = 'passed' if self.passed else 'failed'

    @property
    def ok(self):
        return self.status == 'passed'

    def to_document(self, include_timing=False):
        doc = collections.OrderedDict([
            ('lemma_id', self.lemma_id),
            ('status', self.status),
            ('passed', self.passed),
            ('worst_margin', self.worst_margin),
            ('worst_point', self.worst_point),
            ('tolerance', self.tolerance),
            ('grid', self.grid.to_document()),
            ('details', self.details),
        ])
        if include_timing:
            doc['runtime_ms'] = self.runtime_ms
        return jsonable(doc)

    def __repr__(self):
        return '<CertReport %s %s margin=%.3g>' % (
            self.lemma_id, self.status, self.worst_margin)


REPORT_SCHEMA_VERSION = 1


def reports_to_document(reports, include_timing=False):
    return collections.OrderedDict([
        ('schema_version', REPORT_SCHEMA_VERSION),
        ('kind', 'certification'),
        ('all_passed', all(r.ok for r in reports)),
        ('reports', [r.to_document(include_timing) for r in reports]),
    ])


class _Certification(object):
    """Accumulates sub-check margins for one report."""

    def __init__(self, lemma_id, grid, tighten=1.0, tolerance=DEFAULT_TOLERANCE):
        if not tighten > 0.0:
            raise DomainError("tighten factor must be positive: %r" % (tighten,))
        if not tolerance > 0.0:
            raise DomainError("tolerance must be positive: %r" % (tolerance,))
        self.logger = logger.getChild(lemma_id)
        self.lemma_id = lemma_id
        self.grid = grid
        self.tighten = float(tighten)
        self.tolerance = tolerance
        self.checks = collections.OrderedDict()
        self.extra = collections.OrderedDict()
        self.evaluated = 0
        self.skipped = 0
        self._worst = None
        self._started = time.time()
        self.logger.info("certifying %s on %d grid points", lemma_id, grid.size)

    def upper(self, name, quantity, bound, coords):
        """quantity <= bound / tighten."""
        self.add(name, np.asarray(bound) / self.tighten - np.asarray(quantity), coords)

    def lower(self, name, quantity, bound, coords):
        """quantity >= bound * tighten."""
        self.add(name, np.asarray(quantity) - np.asarray(bound) * self.tighten, coords)

    def equal(self, name, lhs, rhs, tol, coords):
        """|lhs - rhs| <= tol; identities are not affected by tightening."""
        self.add(name, np.asarray(tol) - np.abs(np.asarray(lhs) - np.asarray(rhs)), coords)

    def add(self, name, margin, coords):
        margin = np.atleast_1d(np.asarray(margin, dtype=float))
        finite = np.isfinite(margin)
        bad = int(margin.size - np.count_nonzero(finite))
        self.evaluated += margin.size
        self.skipped += bad
        if bad:
            self.logger.debug("%s: %d non-finite points skipped", name, bad)

        entry = collections.OrderedDict()
        entry['skipped'] = bad
        if not finite.any():
            entry['worst_margin'] = None
            self.checks[name] = entry
            return

        masked = np.where(finite, margin, np.inf)
        flat = int(np.argmin(masked))
        idx = np.unravel_index(flat, margin.shape)
        point = collections.OrderedDict()
        for key, values in coords.items():
            values = np.broadcast_to(np.asarray(values, dtype=float), margin.shape)
            point[key] = float(values[idx])
        worst = float(masked[idx])

        entry['worst_margin'] = worst
        entry['worst_point'] = point
        entry['grid_slack'] = _grid_slack(margin)
        self.checks[name] = entry

        if self._worst is None or worst < self._worst[0]:
            self._worst = (worst, point)

    def report(self):
        runtime_ms = int(round(1000.0 * (time.time() - self._started)))
        details = collections.OrderedDict()
        details['tighten'] = self.tighten
        details['points_evaluated'] = self.evaluated
        details['points_skipped'] = self.skipped
        details['checks'] = self.checks
        details.update(self.extra)

        inconclusive = False
        if self._worst is None:
            worst_margin, worst_point, inconclusive = -math.inf, {}, True
        else:
            worst_margin, worst_point = self._worst
        if self.evaluated and self.skipped > MAX_SKIPPED_FRACTION * self.evaluated:
            inconclusive = True

        report = CertReport(
            self.lemma_id, self.grid, worst_margin, worst_point,
            tolerance=self.tolerance, runtime_ms=runtime_ms, details=details,
            inconclusive=inconclusive)
        self.logger.info("%s: %s, worst margin %.6g (%d ms)",
                         self.lemma_id, report.status, report.worst_margin, runtime_ms)
        return report


def _grid_slack(margin):
    """Largest change of the margin between neighbouring grid points."""
    slack = 0.0
    for ax in range(margin.ndim):
        if margin.shape[ax] < 2:
            continue
        diff = np.abs(np.diff(margin, axis=ax))
        diff = diff[np.isfinite(diff)]
        if diff.size:
            slack = max(slack, float(diff.max()))
    return slack


# -- quantities shared with the threshold scan --------------------------------

def multiplier_values(s, alpha):
    """
    m(theta) = 1/(2 sqrt3) sum_{j=2}^{4} (a(theta + c_j) - 1) rho(sqrt(a(theta + c_j)))
    at theta = embed(s, alpha), vectorised over broadcast s and alpha.
    """
    theta = geometry.embed(s, alpha)
    total = 0.0
    for j in (2, 3, 4):
        total = total + kernel.excess_times_rho(geometry.shifted_excess(theta, j))
    return total / (2.0 * SQRT3)


def expansion_main_terms(s, alpha):
    """
    -12 s^2 w log s - 6 s^2 w log|w| + 18 log2 s^2 w with w = weight_factor(alpha).
    """
    s = np.asarray(s, dtype=float)
    w = np.asarray(geometry.weight_factor(alpha), dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        log_s = np.where(s > 0.0, np.log(np.where(s > 0.0, s, 1.0)), 0.0)
    return s * s * (-12.0 * w * log_s - 6.0 * xlogx(w) + 18.0 * LOG2 * w)


def cauchy_schwarz_factor(s, alpha, kmax=geometry.DEFAULT_KMAX):
    """1 / (2 + s psi'(s, alpha) / (1 + psi(s, alpha)))."""
    p = geometry.psi(s, alpha, kmax)[0]
    dp = geometry.psi_prime(s, alpha, kmax)[0]
    return 1.0 / (2.0 + np.asarray(s) * dp / (1.0 + p))


def _s_alpha(grid):
    s, alpha = grid.mesh()
    return s, alpha, collections.OrderedDict([('s', s), ('alpha', alpha)])


# -- certifiers ---------------------------------------------------------------

def certify_rho_asymptotics(grid=None, tighten=1.0, tolerance=DEFAULT_TOLERANCE):
    """
    |rho(r) - (-6 log|1-r| + 12 log 2)| <= -22|r-1| log|r-1| + 23|r-1|
    on both sides of r = 1; the grid axis 'eps' holds the distances |r - 1|.
    """
    grid = grid or default_grid('rho-asymptotics')
    cert = _Certification('rho-asymptotics', grid, tighten, tolerance)
    eps = grid.axis(grid.index('eps'))
    if np.any(eps <= 0.0) or np.any(eps > kernel.ASYMPTOTIC_BAND + kernel.BAND_SLACK):
        raise DomainError("rho asymptotics are certified for 0 < |r - 1| <= 0.1 only")

    worst_ratio = 0.0
    for side, sign in (('below', -1.0), ('above', 1.0)):
        r = 1.0 + sign * eps
        d = np.abs(r - 1.0)
        value = kernel.rho_values(r)
        approx = -6.0 * np.log(d) + 12.0 * LOG2
        err = np.abs(value - approx)
        bound = -22.0 * d * np.log(d) + 23.0 * d
        cert.upper('lemma_' + side, err, bound, collections.OrderedDict([('r', r)]))
        worst_ratio = max(worst_ratio, float(np.max(err / (d * (1.0 - np.log(d))))))

    # the constants were not optimised; report the empirical one
    cert.extra['empirical_constant'] = worst_ratio
    return cert.report()


def certify_rho_intermediate(grid=None, tighten=1.0, tolerance=DEFAULT_TOLERANCE):
    """
    The one-sided estimates the asymptotic bound is built from, and the
    sharper bound 14 e log(1/e) + 9 e valid above r = 1.
    """
    grid = grid or default_grid('rho-intermediate')
    cert = _Certification('rho-intermediate', grid, tighten, tolerance)
    eps = grid.axis(grid.index('eps'))
    if np.any(eps <= 0.0) or np.any(eps > kernel.ASYMPTOTIC_BAND + kernel.BAND_SLACK):
        raise DomainError("intermediate estimates hold for 0 < |r - 1| <= 0.1 only")

    for side, sign in (('below', -1.0), ('above', 1.0)):
        r = 1.0 + sign * eps
        d = np.abs(r - 1.0)
        value = kernel.rho_values(r)
        pairs = np.array([kernel.intermediate_estimate(ri, vi) for ri, vi in zip(r, value)])
        coords = collections.OrderedDict([('r', r)])
        cert.upper('scaled_' + side, np.abs(pairs[:, 0]), pairs[:, 1], coords)
        if sign > 0:
            err = np.abs(value + 6.0 * np.log(d) - 12.0 * LOG2)
            bound = np.array([kernel.asymptotic_error_bound(ri, sided=True) for ri in r])
            cert.upper('sided_above', err, bound, coords)
    return cert.report()


def _aux1_integral(delta):
    value, _ = quadrature.adaptive(
        lambda t: 2.0 / math.sqrt(t * t + delta), 0.0, 1.0,
        points=[math.sqrt(delta)])
    return value


def _aux5_integral(a, b):
    value, _ = quadrature.adaptive(
        lambda t: 2.0 / (math.sqrt(2.0 - t * t) * math.sqrt(a + t * t)
                         * math.sqrt(b + 2.0 - t * t)),
        0.0, 1.0, points=[math.sqrt(a)])
    return value


def _aux6_integral(a):
    value, _ = quadrature.adaptive(
        lambda t: 2.0 / ((2.0 - t * t) * math.sqrt(a + t * t)), 0.0, 1.0,
        points=[math.sqrt(a)])
    return value


def _guarded(func, jobs, args):
    safe = log_and_ignore_exceptions(func, logger=logger.getChild('aux-integrals'))
    results = parallel_map(lambda a: safe(*a), args, jobs=jobs)
    return np.array([np.nan if v is None else v for v in results])


def certify_aux_integrals(grid=None, tighten=1.0, tolerance=DEFAULT_TOLERANCE, jobs=1):
    """
    The three elementary integral estimates, by quadrature after t-substitution:

      - 0 <= int_0^1 du/(sqrt(u) sqrt(u + d)) - log(4/d) <= d/2
      - |I(a, b) - I(a, 0)| <= b/2 (log(4/a) + a/2) with
        I(a, b) = int_0^1 dx / (sqrt(1-x^2) sqrt(a+1-x) sqrt(b+1+x))
      - |int_0^1 dx / ((1+x) sqrt(1-x) sqrt(a+1-x)) - log(8/a)/2| <= a/2 log(1 + 1/a)

    The first is also compared with its closed form -log d + 2 log(1 + sqrt(1 + d)).
    """
    grid = grid or default_grid('aux-integrals')
    cert = _Certification('aux-integrals', grid, tighten, tolerance)

    delta = grid.axis(grid.index('delta'))
    a = grid.axis(grid.index('a'))
    b = grid.axis(grid.index('b'))
    if np.any(delta <= 0.0) or np.any(a <= 0.0) or np.any(a >= 1.0) \
            or np.any(b <= 0.0) or np.any(b >= 1.0):
        raise DomainError("aux integrals need delta > 0 and a, b in (0, 1)")

    i1 = _guarded(_aux1_integral, jobs, [(d,) for d in delta])
    excess = i1 - np.log(4.0 / delta)
    closed = -np.log(delta) + 2.0 * np.log1p(np.sqrt(1.0 + delta))
    coords = collections.OrderedDict([('delta', delta)])
    cert.lower('aux1_lower', excess, 0.0, coords)
    cert.upper('aux1_upper', excess, 0.5 * delta, coords)
    cert.equal('aux1_closed_form', i1, closed, 1e-9 * (1.0 + np.abs(closed)), coords)

    aa, bb = np.meshgrid(a, b, indexing='ij')
    i_ab = _guarded(_aux5_integral, jobs, list(zip(aa.ravel(), bb.ravel()))).reshape(aa.shape)
    i_a0 = _guarded(_aux5_integral, jobs, [(x, 0.0) for x in a])
    cert.upper('aux5', np.abs(i_ab - i_a0[:, None]),
               0.5 * bb * (np.log(4.0 / aa) + 0.5 * aa),
               collections.OrderedDict([('a', aa), ('b', bb)]))

    i6 = _guarded(_aux6_integral, jobs, [(x,) for x in a])
    cert.upper('aux6', np.abs(i6 - 0.5 * np.log(8.0 / a)),
               0.5 * a * np.log1p(1.0 / a), collections.OrderedDict([('a', a)]))
    return cert.report()


def _check_s_range(grid, limit=geometry.PSI_MAX_RADIUS):
    s = grid.axis(grid.index('s'))
    if np.any(s < 0.0) or np.any(s > limit + 1e-15):
        raise DomainError("s grid must lie in [0, %g]" % (limit,))


def certify_psi_bounds(grid=None, tighten=1.0, tolerance=DEFAULT_TOLERANCE,
                       kmax=geometry.DEFAULT_KMAX):
    """
    |psi| <= 7/24 s^2 + 17/720 s^4 + s^6 exp(sqrt2 s),
    |psi'| <= 14/24 s + 17/180 s^3 + 2 s^5 exp(sqrt2 s) and
    |s psi' / (1 + psi)| <= 1/198 for s <= 1/20.

    Series truncation bounds are added to the computed quantities.
    """
    grid = grid or default_grid('psi-bounds')
    _check_s_range(grid)
    cert = _Certification('psi-bounds', grid, tighten, tolerance)
    s, alpha, coords = _s_alpha(grid)

    p, p_tail = geometry.psi(s, alpha, kmax)
    dp, dp_tail = geometry.psi_prime(s, alpha, kmax)
    growth = np.exp(math.sqrt(2.0) * s)
    cert.upper('psi', np.abs(p) + p_tail,
               7.0 / 24.0 * s ** 2 + 17.0 / 720.0 * s ** 4 + s ** 6 * growth, coords)
    cert.upper('psi_prime', np.abs(dp) + dp_tail,
               14.0 / 24.0 * s + 17.0 / 180.0 * s ** 3 + 2.0 * s ** 5 * growth, coords)
    ratio = np.abs(s * dp / (1.0 + p))
    cert.upper('log_derivative', ratio, 1.0 / 198.0, coords)
    cert.extra['max_log_derivative'] = float(np.max(ratio))
    return cert.report()


def certify_psi_small(grid=None, tighten=1.0, tolerance=DEFAULT_TOLERANCE,
                      kmax=geometry.DEFAULT_KMAX):
    """|psi| < 1/100 and |psi'| <= 1/10 for s <= 1/20."""
    grid = grid or default_grid('psi-small')
    _check_s_range(grid)
    cert = _Certification('psi-small', grid, tighten, tolerance)
    s, alpha, coords = _s_alpha(grid)
    p, p_tail = geometry.psi(s, alpha, kmax)
    dp, dp_tail = geometry.psi_prime(s, alpha, kmax)
    cert.upper('psi', np.abs(p) + p_tail, 0.01, coords)
    cert.upper('psi_prime', np.abs(dp) + dp_tail, 0.1, coords)
    return cert.report()


def certify_q_bounds(grid=None, tighten=1.0, tolerance=DEFAULT_TOLERANCE,
                     kmax=geometry.DEFAULT_KMAX):
    """
    On the unit circle: |Q_2k| <= 30 k^2 2^k and |P_2k| <= 6 2^k for
    2 <= k <= kmax, plus |Q_4| <= 7 and |Q_6| <= 17.
    """
    grid = grid or default_grid('q-bounds')
    cert = _Certification('q-bounds', grid, tighten, tolerance)
    alpha = grid.axis(grid.index('alpha'))
    coords = collections.OrderedDict([('alpha', alpha)])
    for k in range(2, kmax + 1):
        q = np.abs(geometry.poly_q(k).on_circle(alpha))
        cert.upper('q_%d' % (2 * k,), q, geometry.q_bound(k), coords)
        cert.upper('p_%d' % (2 * k,), np.abs(geometry.poly_p(k).on_circle(alpha)),
                   6.0 * 2.0 ** k, coords)
        if k in geometry.Q_SMALL_BOUNDS:
            cert.upper('q_%d_explicit' % (2 * k,), q, geometry.Q_SMALL_BOUNDS[k], coords)
    return cert.report()


def certify_expansion_error(grid=None, tighten=1.0, tolerance=DEFAULT_TOLERANCE):
    """
    E = (a(c_4 + theta) - 1) rho(sqrt(a(c_4 + theta))) - main terms satisfies
    |E| <= -180 s^4 log s + 71 s^4 for 0 < s <= 1/20.

    The product is continued by 0 where a(c_4 + theta) = 1 (including the
    directions with vanishing weight factor). Points with sqrt(a) within
    NEAR_SINGULAR_RADIUS of 1 are evaluated through that continuation
    rather than skipped, counted in near_singular_points, and checked
    against the logarithmic asymptotics of rho under 'near_singular_product'.
    """
    grid = grid or default_grid('expansion-error')
    _check_s_range(grid)
    cert = _Certification('expansion-error', grid, tighten, tolerance)
    s, alpha, coords = _s_alpha(grid)
    if np.any(s <= 0.0):
        raise DomainError("expansion error is certified for s > 0 only")

    theta = geometry.embed(s, alpha)
    excess = geometry.shifted_excess(theta, 4)
    product = kernel.excess_times_rho(excess)
    err = np.abs(product - expansion_main_terms(s, alpha))
    bound = -180.0 * s ** 4 * np.log(s) + 71.0 * s ** 4
    cert.upper('remainder', err, bound, coords)
    cert.extra['max_relative_remainder'] = float(np.max(err / bound))

    distance = np.abs(excess) / (1.0 + np.sqrt(np.maximum(1.0 + excess, 0.0)))
    near = distance < NEAR_SINGULAR_RADIUS
    cert.extra['near_singular_points'] = int(np.count_nonzero(near))
    # below this the continuation value 0 is exact to rounding
    resolved = near & (np.abs(excess) > 1e-12)
    if resolved.any():
        e, d = excess[resolved], distance[resolved]
        approx = e * (-6.0 * np.log(d) + 12.0 * LOG2)
        slack = np.abs(e) * (-22.0 * d * np.log(d) + 23.0 * d) + 1e-12 * np.abs(approx)
        cert.equal('near_singular_product', product[resolved], approx, slack,
                   collections.OrderedDict([('s', s[resolved]), ('alpha', alpha[resolved])]))
    return cert.report()


def trig_log_sum(alpha):
    """sum_j w_j log|w_j| with w_j = weight_factor(alpha + 2 pi j / 3), 0 log 0 = 0."""
    alpha = np.asarray(alpha, dtype=float)
    total = 0.0
    for j in (1, 2, 3):
        total = total + xlogx(geometry.weight_factor(alpha + TWO_PI * j / 3.0))
    return total


def certify_trig_log(grid=None, tighten=1.0, tolerance=DEFAULT_TOLERANCE):
    """
    sum_j w_j log|w_j| <= 3 log 3, and the identities sum a_j = 1,
    sum a_j^2 = 1 for a_j = w_j / 3.
    """
    grid = grid or default_grid('trig-log')
    cert = _Certification('trig-log', grid, tighten, tolerance)
    alpha = grid.axis(grid.index('alpha'))
    coords = collections.OrderedDict([('alpha', alpha)])

    total = trig_log_sum(alpha)
    cert.upper('sum', total, 3.0 * LOG3, coords)

    a = np.stack([geometry.weight_factor(alpha + TWO_PI * j / 3.0) / 3.0 for j in (1, 2, 3)])
    cert.equal('sum_a', a.sum(axis=0), 1.0, 1e-12, coords)
    cert.equal('sum_a_squared', (a * a).sum(axis=0), 1.0, 1e-12, coords)
    cert.extra['max_sum'] = float(np.max(total))
    cert.extra['equality_gap'] = float(3.0 * LOG3 - np.max(total))
    return cert.report()


def certify_multiplier_lower(grid=None, tighten=1.0, tolerance=DEFAULT_TOLERANCE):
    """m(theta) >= 30 |theta|^2 for |theta| <= 1/20."""
    grid = grid or default_grid('multiplier-lower')
    _check_s_range(grid)
    cert = _Certification('multiplier-lower', grid, tighten, tolerance)
    s, alpha, coords = _s_alpha(grid)
    if np.any(s <= 0.0):
        raise DomainError("multiplier bound is certified for s > 0 only")

    m = multiplier_values(s, alpha)
    cert.lower('multiplier', m, 30.0 * s * s, coords)
    ratio = m / (s * s)
    cert.extra['min_ratio'] = float(np.nanmin(ratio))
    cert.extra['analytic_floor'] = geometry.multiplier_floor()
    return cert.report()


#: 101/200 - 198/395
CAUCHY_SCHWARZ_GAP = 295.0 / 79000.0


def certify_cauchy_schwarz_factor(grid=None, tighten=1.0, tolerance=DEFAULT_TOLERANCE,
                                  kmax=geometry.DEFAULT_KMAX):
    """1 / (2 + s psi'/(1 + psi)) <= 198/395 < 101/200 for s <= 1/20."""
    grid = grid or default_grid('cauchy-schwarz')
    _check_s_range(grid)
    cert = _Certification('cauchy-schwarz', grid, tighten, tolerance)
    s, alpha, coords = _s_alpha(grid)
    factor = cauchy_schwarz_factor(s, alpha, kmax)
    cert.upper('factor', factor, 101.0 / 200.0, coords)
    cert.upper('factor_sharp', factor, 198.0 / 395.0, coords)
    cert.extra['max_factor'] = float(np.max(factor))
    return cert.report()


def step5_average():
    """
    (2 pi)^-3 int (a - 1) rho(sqrt a) over the three-torus, reduced to
    (2 pi)^-2 int_0^3 (r^2 - 1) rho(r)^2 r dr.
    """
    def integrand(r):
        return (r * r - 1.0) * float(kernel.rho_values(r)) ** 2 * r

    value, abserr = quadrature.adaptive(integrand, 0.0, 3.0, points=[1.0])
    return value / TWO_PI ** 2, abserr / TWO_PI ** 2


def step5_average_angles(n=512):
    """
    Cross-check of L{step5_average}: the same average as a midpoint rule in
    the two angle differences (theta_1 = 0 by rotation invariance).
    """
    phi = (np.arange(n) + 0.5) * TWO_PI / n
    p2, p3 = np.meshgrid(phi, phi, indexing='ij')
    excess = 2.0 + 2.0 * (np.cos(p2) + np.cos(p3) + np.cos(p2 - p3))
    return float(np.mean(kernel.excess_times_rho(excess)))


def step5_local_average(theta):
    """
    1/8 sum over sign vectors of (a_gamma - 1) rho(sqrt(a_gamma)) with
    a_gamma = |sum gamma_i exp(i theta_i)|^2. A sign vector and its negative
    give the same a; a single flip of component f is a shift by the centre
    flipping f.
    """
    theta = np.asarray(theta, dtype=float)
    total = 2.0 * kernel.excess_times_rho(geometry.shifted_excess(theta, 1))
    for j in (2, 3, 4):
        total = total + 2.0 * kernel.excess_times_rho(geometry.shifted_excess(theta, j))
    return total / 8.0


#: Largest support radius for which the step-5 comparison is attempted.
STEP5_MAX_RADIUS = 0.07

#: Relative agreement required between the radial and angular torus averages.
STEP5_CROSS_CHECK_RTOL = 1e-2


def certify_step5(eps_prime, grid=None, tighten=1.0, tolerance=DEFAULT_TOLERANCE):
    """
    max over [-e', e']^3 of the local sign average is at most the torus
    average of (a - 1) rho(sqrt a).
    """
    if not 0.0 < eps_prime <= STEP5_MAX_RADIUS:
        raise DomainError("eps_prime must lie in (0, %g], got %r" % (STEP5_MAX_RADIUS, eps_prime))
    grid = grid or default_grid('step5', eps_prime=eps_prime)
    cert = _Certification('step5', grid, tighten, tolerance)

    t1, t2, t3 = grid.mesh()
    theta = np.stack([t1, t2, t3], axis=-1)
    local = step5_local_average(theta)
    rhs, rhs_err = step5_average()
    coords = collections.OrderedDict([('theta1', t1), ('theta2', t2), ('theta3', t3)])
    cert.upper('max_vs_average', local, rhs - rhs_err, coords)

    cross = step5_average_angles()
    # midpoint rule across the a = 1 crease
    cert.equal('average_cross_check', cross, rhs, STEP5_CROSS_CHECK_RTOL * abs(rhs),
               collections.OrderedDict())
    cert.extra['eps_prime'] = eps_prime
    cert.extra['average'] = rhs
    cert.extra['average_quadrature_error'] = rhs_err
    cert.extra['average_angle_cross_check'] = cross
    cert.extra['average_cross_check_relative'] = abs(cross - rhs) / abs(rhs)
    cert.extra['max_local'] = float(np.nanmax(local))
    return cert.report()


# -- default grids and the registry -------------------------------------------

def default_grid(lemma_id, quick=False, eps=BALL_RADIUS, eps_prime=None):
    """
    The grid a certifier uses when none is given; quick=True gives the
    reduced version used for fast runs.
    """
    f = 0.1 if quick else 1.0

    def n(points):
        return max(2, int(round(points * f)))

    if lemma_id in ('rho-asymptotics', 'rho-intermediate'):
        size = 10000 if lemma_id == 'rho-asymptotics' else 2000
        return GridSpec([(1e-6, 0.1)], n(size), 'log', names=('eps',))
    if lemma_id == 'aux-integrals':
        return GridSpec([(1e-6, 1.0), (1e-4, 0.99), (1e-4, 0.99)],
                        [n(25), n(20), n(20)], 'log', names=('delta', 'a', 'b'))
    if lemma_id in ('psi-bounds', 'psi-small'):
        return GridSpec([(0.0, eps), (0.0, TWO_PI)], n(200), names=('s', 'alpha'))
    if lemma_id == 'q-bounds':
        return GridSpec([(0.0, TWO_PI)], n(3600), names=('alpha',))
    if lemma_id in ('expansion-error', 'multiplier-lower'):
        return GridSpec([(1e-3, eps), (0.0, TWO_PI)], [n(100), n(400)],
                        ['log', 'uniform'], names=('s', 'alpha'))
    if lemma_id == 'cauchy-schwarz':
        return GridSpec([(0.0, eps), (0.0, TWO_PI)], [n(100), n(400)], names=('s', 'alpha'))
    if lemma_id == 'trig-log':
        return GridSpec([(0.0, TWO_PI)], n(100000), names=('alpha',))
    if lemma_id == 'step5':
        if eps_prime is None:
            eps_prime = math.sqrt(3.0 / 8.0) * eps
        return GridSpec([(-eps_prime, eps_prime)] * 3, n(25),
                        names=('theta1', 'theta2', 'theta3'))
    raise DomainError("unknown lemma %r" % (lemma_id,))


CERTIFIERS = collections.OrderedDict([
    ('rho-asymptotics', certify_rho_asymptotics),
    ('rho-intermediate', certify_rho_intermediate),
    ('aux-integrals', certify_aux_integrals),
    ('q-bounds', certify_q_bounds),
    ('psi-bounds', certify_psi_bounds),
    ('psi-small', certify_psi_small),
    ('expansion-error', certify_expansion_error),
    ('trig-log', certify_trig_log),
    ('multiplier-lower', certify_multiplier_lower),
    ('cauchy-schwarz', certify_cauchy_schwarz_factor),
    ('step5', certify_step5),
])


def certify(lemma_id, eps=BALL_RADIUS, eps_prime=None, tighten=1.0,
            tolerance=DEFAULT_TOLERANCE, quick=False, jobs=1, grid=None):
    """Runs one certifier by id with its default grid (or the given one)."""
    if lemma_id not in CERTIFIERS:
        raise DomainError("unknown lemma %r; known: %s" % (lemma_id, ', '.join(CERTIFIERS)))
    if eps_prime is None:
        eps_prime = math.sqrt(3.0 / 8.0) * eps
    if grid is None:
        grid = default_grid(lemma_id, quick=quick, eps=eps, eps_prime=eps_prime)
    func = CERTIFIERS[lemma_id]
    kwargs = dict(grid=grid, tighten=tighten, tolerance=tolerance)
    if lemma_id == 'step5':
        return func(eps_prime, **kwargs)
    if lemma_id == 'aux-integrals':
        kwargs['jobs'] = jobs
    return func(**kwargs)


def certify_all(eps=BALL_RADIUS, eps_prime=None, tighten=1.0,
                tolerance=DEFAULT_TOLERANCE, quick=False, jobs=1, lemmas=None):
    """
    Runs the selected certifiers (all by default) in registry order.

    @rtype: L{list} of L{CertReport}
    """
    lemmas = list(CERTIFIERS) if not lemmas else list(lemmas)
    logger.info("running %d certifiers (eps=%g, tighten=%g, quick=%s)",
                len(lemmas), eps, tighten, quick)
    return [certify(lemma_id, eps=eps, eps_prime=eps_prime, tighten=tighten,
                    tolerance=tolerance, quick=quick, jobs=jobs)
            for lemma_id in lemmas]
