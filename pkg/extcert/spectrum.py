"""
The quadratic form on truncated spaces of antipodal Fourier modes.

Mode products e_k(theta) = exp(i k . theta) with even k are paired against
the constraint omega_1 + omega_2 + omega_3 = omega_4 + omega_5 + omega_6.
In radial form the pairing of two index triples is

    W(k, l) = int_0^inf J_k1 J_k2 J_k3 J_l1 J_l2 J_l3 (r) r dr

times PAIRING_CONSTANT; W is computed with unit prefactor. The integral is
split at a radius R: a composite Gauss-Legendre rule on [0, R] over a
Bessel table from Miller's recurrence, and the Hankel expansion of each
factor beyond R, integrated exactly in its non-oscillating part and along
rotated contours in its oscillating parts.
"""
import collections
import itertools
import json
import logging
import math
import threading

import numpy as np
import scipy.linalg

from . import quadrature
from ._utils import DomainError, LazyFrom, PrecisionError, parallel_map, SingularityError


logger = logging.getLogger(__name__)


PAIRING_CONSTANT = 32.0 * math.pi ** 5

#: shift vectors u with a(theta) - 1 = 2 + sum_u (e^{i u.theta} + e^{-i u.theta})
SHIFTS = ((1, -1, 0), (0, 1, -1), (-1, 0, 1))

MAX_ORDER = 256
MAX_ARGUMENT = 1e6
MAX_RECURRENCE = 2 * 10 ** 6
MAX_TRUNCATION = 64

_RESCALE_AT = 1e250
_MILLER_CHUNK = 512


# -- Bessel functions ---------------------------------------------------------

def _miller_start(nmax, x):
    start = max(nmax + int(math.sqrt(160.0 * max(nmax, 1))) + 20,
                int(x + 10.0 * x ** (1.0 / 3.0)) + 40)
    return start + start % 2


def _miller(nmax, x):
    """J_0 .. J_nmax at the positive entries of x (similar magnitudes)."""
    start = _miller_start(nmax, float(x.max()))
    if start > MAX_RECURRENCE:
        raise PrecisionError("recurrence from order %d is too long" % (start,))

    table = np.zeros((nmax + 1, x.size))
    upper = np.zeros_like(x)
    cur = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    two_over_x = 2.0 / x
    for n in range(start, 0, -1):
        if n <= nmax:
            table[n] = cur
        if n % 2 == 0:
            norm += 2.0 * cur
        upper, cur = cur, n * two_over_x * cur - upper
        big = np.abs(cur) > _RESCALE_AT
        if big.any():
            factor = np.where(big, 1.0 / _RESCALE_AT, 1.0)
            cur *= factor
            upper *= factor
            norm *= factor
            table *= factor
    table[0] = cur
    norm += cur
    return table / norm


def bessel_table(nmax, r):
    """
    J_0(r) .. J_nmax(r) by one downward recurrence per block of arguments,
    normalised with J_0 + 2 sum J_2k = 1.

    @rtype: L{numpy.ndarray} of shape (nmax + 1,) + shape(r)
    """
    if nmax < 0:
        raise DomainError("nmax must be non-negative")
    r = np.asarray(r, dtype=float)
    flat = r.ravel()
    if np.any(flat < 0.0):
        raise DomainError("Bessel arguments must be non-negative")

    out = np.zeros((nmax + 1, flat.size))
    out[0, flat == 0.0] = 1.0
    positive = np.flatnonzero(flat > 0.0)
    order = positive[np.argsort(flat[positive], kind='stable')]
    for lo in range(0, order.size, _MILLER_CHUNK):
        idx = order[lo:lo + _MILLER_CHUNK]
        out[:, idx] = _miller(nmax, flat[idx])
    return out.reshape((nmax + 1,) + r.shape)


def bessel_j(n, r):
    """J_n(r) for integer |n| <= 256 and 0 <= r <= 1e6."""
    n = int(n)
    if abs(n) > MAX_ORDER:
        raise DomainError("order %d exceeds %d" % (n, MAX_ORDER))
    if not 0.0 <= r <= MAX_ARGUMENT:
        raise DomainError("argument %r outside [0, %g]" % (r, MAX_ARGUMENT))
    value = float(bessel_table(abs(n), np.array([float(r)]))[abs(n), 0])
    if n < 0 and n % 2:
        value = -value
    return value


def hankel_coefficients(n, terms):
    """a_m(n) = prod_{j<=m} (4n^2 - (2j-1)^2) / (m! 8^m), m < terms."""
    mu = 4.0 * n * n
    out = np.empty(terms)
    out[0] = 1.0
    for m in range(1, terms):
        out[m] = out[m - 1] * (mu - (2 * m - 1) ** 2) / (8.0 * m)
    return out


def hankel_series(n, z, terms, sign=1):
    """
    sum_m (sign i)^m a_m(n) z^-m, the amplitude of H^(1) (sign=1) or
    H^(2) (sign=-1) after the factor sqrt(2/(pi z)) exp(+-i(z - n pi/2 - pi/4)).
    """
    z = np.asarray(z, dtype=complex)
    coeffs = hankel_coefficients(abs(n), terms) * (1j * sign) ** np.arange(terms)
    inv = 1.0 / z
    acc = np.zeros_like(z)
    for c in coeffs[::-1]:
        acc = acc * inv + c
    return acc


# -- modes --------------------------------------------------------------------

class ModeIndex(collections.namedtuple('ModeIndex', 'k1 k2 k3')):
    """An even index triple; the mode is exp(i (k1 t1 + k2 t2 + k3 t3))."""
    __slots__ = ()

    def __new__(cls, k1, k2, k3):
        assert k1 % 2 == 0 and k2 % 2 == 0 and k3 % 2 == 0, \
            "antipodal modes have even indices"
        return super(ModeIndex, cls).__new__(cls, int(k1), int(k2), int(k3))

    @property
    def degree(self):
        return self.k1 + self.k2 + self.k3

    @property
    def norm(self):
        return math.sqrt(self.k1 ** 2 + self.k2 ** 2 + self.k3 ** 2)

    def permuted(self, perm):
        return ModeIndex(*[self[i] for i in perm])


def enumerate_modes(N, d):
    """Even triples with sum d and entries in [-N, N], lexicographically."""
    if N < 0 or N % 2 or d % 2:
        raise DomainError("N and d must be even and N >= 0, got N=%r, d=%r" % (N, d))
    modes = []
    for k1 in range(-N, N + 1, 2):
        for k2 in range(-N, N + 1, 2):
            k3 = d - k1 - k2
            if -N <= k3 <= N:
                modes.append(ModeIndex(k1, k2, k3))
    return modes


def _add(k, u, sign=1):
    return (k[0] + sign * u[0], k[1] + sign * u[1], k[2] + sign * u[2])


def canonical_key(indices):
    """
    (sorted |n|, sign): the six-fold product of J is symmetric in its
    orders and J_-n = (-1)^n J_n.
    """
    key = tuple(sorted(abs(int(n)) for n in indices))
    odd = sum(-n for n in indices if n < 0) % 2
    return key, (-1.0 if odd else 1.0)


# -- the radial pairing -------------------------------------------------------

PairIntegral = collections.namedtuple('PairIntegral', 'k l value est_error')


_SIGNS = np.array(list(itertools.product((1, -1), repeat=6)))
_FREQUENCIES = (-6, -4, -2, 0, 2, 4, 6)


class RadialIntegrator(object):
    """
    Evaluates int_0^inf prod_{j=1}^6 J_{n_j}(r) r dr for orders up to nmax,
    caching by canonical key.

    @ivar nmax:   Largest order supported.
    @ivar radius: Split point between the Gauss-Legendre head and the
                  Hankel tail.
    @ivar terms:  Hankel terms used in the tail.
    """

    #: The head rule and Bessel table are built on first use.
    head_nodes = LazyFrom('_build_head')
    head_weights = LazyFrom('_build_head')
    bessel = LazyFrom('_build_head')

    MIN_RADIUS = 200.0
    PANEL_WIDTH = 2.0
    PANEL_ORDER = 24
    TAIL_ORDER = 32
    MAX_TERMS = 40
    SERIES_TOL = 1e-17

    def __init__(self, nmax, radius=None):
        if nmax < 0:
            raise DomainError("nmax must be non-negative")
        self.logger = logger.getChild('RadialIntegrator')
        self.nmax = int(nmax)
        if radius is None:
            radius = max(self.MIN_RADIUS, 1.5 * self.nmax ** 2)
        self.radius = 2.0 * math.ceil(radius / 2.0)
        self.terms, self.series_error = self._choose_terms()
        self._cache = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self._build_tail()

    def _choose_terms(self):
        # the largest order has the slowest-decaying coefficients
        coeffs = np.abs(hankel_coefficients(self.nmax, self.MAX_TERMS))
        scaled = coeffs / self.radius ** np.arange(self.MAX_TERMS)
        small = np.flatnonzero(scaled[1:] < self.SERIES_TOL)
        if not small.size:
            raise PrecisionError(
                "Hankel series does not settle at radius %g for order %d"
                % (self.radius, self.nmax), estimate=float(scaled[-1]))
        terms = int(small[0]) + 1
        return terms, float(scaled[terms])

    def _build_head(self):
        nodes, weights = quadrature.gauss_legendre_panels(
            0.0, self.radius, self.PANEL_WIDTH, self.PANEL_ORDER)
        self.logger.info("building Bessel table: orders 0..%d on %d nodes up to r=%g",
                         self.nmax, nodes.size, self.radius)
        self.head_nodes = nodes
        self.head_weights = weights * nodes
        self.bessel = bessel_table(self.nmax, nodes)

    def _build_tail(self):
        R = self.radius
        x, w = np.polynomial.legendre.leggauss(self.TAIL_ORDER)
        lag_x, lag_w = quadrature.gauss_laguerre(self.TAIL_ORDER)
        nodes = np.empty((len(_FREQUENCIES), self.TAIL_ORDER), dtype=complex)
        weights = np.empty_like(nodes)
        for q, omega in enumerate(_FREQUENCIES):
            if omega == 0:
                # r = R / t turns r^-2 dr into dt / R
                t = 0.5 * (x + 1.0)
                nodes[q] = R / t
                weights[q] = 0.5 * w / R
            else:
                sgn = 1.0 if omega > 0 else -1.0
                r = R + 1j * sgn * lag_x / abs(omega)
                nodes[q] = r
                weights[q] = (1j * sgn / abs(omega)) * np.exp(1j * omega * R) * lag_w / r ** 2
        self._tail_weights = weights

        # amplitudes[n, s, q, x]; s = 0 for H^(1), 1 for H^(2)
        amp = np.empty((self.nmax + 1, 2, len(_FREQUENCIES), self.TAIL_ORDER), dtype=complex)
        for n in range(self.nmax + 1):
            amp[n, 0] = hankel_series(n, nodes, self.terms, 1)
            amp[n, 1] = hankel_series(n, nodes, self.terms, -1)
        self._amplitudes = amp

        self._pattern_slot = (_SIGNS < 0).astype(int)
        self._pattern_freq = np.array([_FREQUENCIES.index(int(s)) for s in _SIGNS.sum(axis=1)])

    def _tail(self, orders):
        n = np.asarray(orders)
        amps = self._amplitudes[n[None, :], self._pattern_slot,
                                self._pattern_freq[:, None], :]
        product = amps.prod(axis=1)
        per_pattern = (product * self._tail_weights[self._pattern_freq]).sum(axis=1)
        phase = np.exp(-1j * (_SIGNS * (0.5 * math.pi * n + 0.25 * math.pi)).sum(axis=1))
        return float(np.real((phase * per_pattern).sum())) / (8.0 * math.pi ** 3)

    def _compute(self, orders):
        table = self.bessel
        prod = table[orders[0]] * table[orders[1]]
        for n in orders[2:]:
            prod = prod * table[n]
        terms = self.head_weights * prod
        head = float(terms.sum())
        tail = self._tail(orders)
        err = (abs(tail) * 6.0 * self.series_error
               + 16.0 * np.finfo(float).eps * float(np.abs(terms).sum()))
        return head + tail, err

    def integral(self, indices):
        """(value, est_error) of the six-fold Bessel product integral."""
        if len(indices) != 6:
            raise DomainError("need six orders, got %r" % (indices,))
        key, sign = canonical_key(indices)
        if key[-1] > self.nmax:
            raise DomainError("order %d exceeds integrator capacity %d" % (key[-1], self.nmax))
        cached = self._cache.get(key)
        if cached is None:
            cached = self._compute(key)
            with self._lock:
                self._cache.setdefault(key, cached)
            self.misses += 1
        else:
            self.hits += 1
        return sign * cached[0], cached[1]

    def pairing(self, k, l):
        return self.integral(tuple(k) + tuple(l))[0]

    def __len__(self):
        return len(self._cache)

    CACHE_SCHEMA = 1

    def persist(self, path):
        doc = collections.OrderedDict([
            ('schema_version', self.CACHE_SCHEMA),
            ('radius', self.radius),
            ('terms', self.terms),
            ('entries', collections.OrderedDict(
                (','.join(str(n) for n in key), list(value))
                for key, value in sorted(self._cache.items()))),
        ])
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(doc, f, indent=1)
            f.write('\n')
        self.logger.info("persisted %d radial integrals to %s", len(self._cache), path)

    def load(self, path):
        """
        Merges a persisted cache. Entries computed with a different split
        radius or series length are ignored.
        """
        with open(path, encoding='utf-8') as f:
            doc = json.load(f)
        if (doc.get('schema_version') != self.CACHE_SCHEMA
                or doc.get('radius') != self.radius or doc.get('terms') != self.terms):
            self.logger.warning("ignoring cache %s built with other parameters", path)
            return 0
        loaded = 0
        with self._lock:
            for text, (value, err) in doc['entries'].items():
                key = tuple(int(n) for n in text.split(','))
                if key[-1] <= self.nmax:
                    self._cache.setdefault(key, (float(value), float(err)))
                    loaded += 1
        self.logger.info("loaded %d radial integrals from %s", loaded, path)
        return loaded

    def __repr__(self):
        return '<RadialIntegrator nmax=%d R=%g terms=%d cached=%d>' % (
            self.nmax, self.radius, self.terms, len(self._cache))


_integrators = {}
_integrators_lock = threading.Lock()


def integrator_for(nmax):
    """A shared integrator able to handle orders up to nmax."""
    size = 8 * int(math.ceil(max(nmax, 1) / 8.0))
    with _integrators_lock:
        if size not in _integrators:
            _integrators[size] = RadialIntegrator(size)
        return _integrators[size]


def pair_integral(k, l, integrator=None):
    """
    W(k, l) for integer triples; exactly 0 without integrating when the
    sums differ.

    @rtype: L{PairIntegral}
    """
    k = tuple(int(n) for n in k)
    l = tuple(int(n) for n in l)
    if len(k) != 3 or len(l) != 3:
        raise DomainError("pair_integral takes two index triples")
    if sum(k) != sum(l):
        return PairIntegral(k, l, 0.0, 0.0)
    if integrator is None:
        integrator = integrator_for(max(abs(n) for n in k + l))
    value, err = integrator.integral(k + l)
    return PairIntegral(k, l, value, err)


def modal_autoconvolution(k, r, level=7):
    """
    f_k(r): the density at (r, 0) of the sum of three circle points,
    weighted by exp(i k . theta). f_0 is the triple autoconvolution rho.
    """
    k1, k2, k3 = (int(n) for n in k)
    if r < 0.0:
        raise DomainError("radius must be non-negative")
    if r >= 3.0:
        return 0.0
    if r == 1.0:
        raise SingularityError("f_k is singular at r = 1")

    # |y|^2 < 4 with y = (r, 0) - omega_1 restricts theta_1 to |theta_1| < top
    top = math.pi if r <= 1.0 else math.acos((r * r - 3.0) / (2.0 * r))

    def integrand(t, below, above):
        y2 = (r - 1.0) ** 2 + 4.0 * r * np.sin(0.5 * below) ** 2
        if r > 1.0:
            room = 4.0 * r * np.sin(0.5 * above) * np.sin(0.5 * (top + t))
        else:
            room = 4.0 - y2
        y = np.sqrt(y2)
        phi = np.arctan2(-np.sin(t), r - np.cos(t))
        beta = np.arctan2(np.sqrt(room), y)
        jacobian = 2.0 / (y * np.sqrt(room))
        phase = k1 * t + (k2 + k3) * phi
        return 2.0 * np.cos(phase) * 2.0 * np.cos((k2 - k3) * beta) * jacobian

    # the integrand already folds theta_1 and -theta_1 together
    return quadrature.tanh_sinh(integrand, 0.0, top, level)


def pair_integral_direct(k, l, level=7):
    """
    Physical-space value of W(k, l): 2 pi int_0^3 f_k f_l r dr divided by
    PAIRING_CONSTANT. Slow; used to validate the radial evaluation.
    """
    k = tuple(int(n) for n in k)
    l = tuple(int(n) for n in l)
    if sum(k) != sum(l):
        return 0.0

    def integrand(r, below, above):
        out = np.empty_like(r)
        for i, ri in enumerate(r):
            if ri == 1.0:
                # rounding can place an end node on the singularity
                out[i] = 0.0
                continue
            out[i] = modal_autoconvolution(k, ri, level) * modal_autoconvolution(l, ri, level) * ri
        return out

    total = (quadrature.tanh_sinh(integrand, 0.0, 1.0, level - 1)
             + quadrature.tanh_sinh(integrand, 1.0, 3.0, level - 1))
    return 2.0 * math.pi * total / PAIRING_CONSTANT


# -- the form -----------------------------------------------------------------

def _weighted_pairing(integrator, k, l):
    """Pairing of the weight (a - 1) e_k against e_l."""
    total = 2.0 * integrator.pairing(k, l)
    for u in SHIFTS:
        total += integrator.pairing(_add(k, u), l) + integrator.pairing(_add(k, u, -1), l)
    return total


_ZERO = (0, 0, 0)


def _multiplier(integrator, difference):
    return _weighted_pairing(integrator, difference, _ZERO)


def _check_pair(k, l):
    for m in (k, l):
        if len(m) != 3 or any(n % 2 for n in m):
            raise DomainError("modes must be even index triples, got %r" % (m,))
    if sum(k) != sum(l):
        raise DomainError("modes of different degree are never coupled: %r, %r" % (k, l))


def qform_entry(k, l, integrator=None):
    """
    B(k, l) = D(k, l) - C(k, l) with C the weighted pairing of e_k and e_l
    and D the multiplier term, which depends on k - l only.
    """
    _check_pair(k, l)
    if integrator is None:
        integrator = integrator_for(2 * max(abs(n) for n in tuple(k) + tuple(l)) + 1)
    diff = _add(k, l, -1)
    return _multiplier(integrator, diff) - _weighted_pairing(integrator, tuple(k), tuple(l))


class QFormMatrix(object):
    """
    The form restricted to the modes of one degree.

    @ivar modes:         Row/column labels (L{ModeIndex}).
    @ivar entries:       Symmetric matrix (symmetrised after assembly).
    @ivar normalization: Factor turning entries into the form's values.
    @ivar asymmetry:     max |M - M^T| / ||M||_F before symmetrisation.
    """

    def __init__(self, modes, entries, N, d, normalization=PAIRING_CONSTANT, asymmetry=0.0):
        entries = np.asarray(entries, dtype=float)
        assert entries.shape == (len(modes), len(modes)), "entries do not match modes"
        self.modes = list(modes)
        self.entries = entries
        self.N = N
        self.d = d
        self.normalization = normalization
        self.asymmetry = asymmetry
        self._index = dict((m, i) for i, m in enumerate(self.modes))

    @property
    def dimension(self):
        return len(self.modes)

    @property
    def norm(self):
        """Frobenius norm."""
        return float(np.linalg.norm(self.entries))

    def index_of(self, mode):
        return self._index[tuple(mode)]

    def constant_residual(self):
        """|M e_0| / ||M|| for the constant mode, 0 for an all-zero matrix."""
        if _ZERO not in self._index:
            raise DomainError("the constant mode only exists for d = 0")
        column = self.entries[:, self.index_of(_ZERO)]
        scale = self.norm
        return float(np.linalg.norm(column)) / scale if scale > 0.0 else 0.0

    def without_constant(self):
        """The matrix on the complement of the constant mode."""
        keep = [i for i, m in enumerate(self.modes) if m != _ZERO]
        return QFormMatrix([self.modes[i] for i in keep],
                           self.entries[np.ix_(keep, keep)], self.N, self.d,
                           self.normalization, self.asymmetry)

    def relabeled(self, perm):
        """The same form with coordinates permuted, rows in lexicographic order."""
        modes = sorted(m.permuted(perm) for m in self.modes)
        source = [self.index_of(m.permuted(_inverse(perm))) for m in modes]
        return QFormMatrix(modes, self.entries[np.ix_(source, source)], self.N, self.d,
                           self.normalization, self.asymmetry)

    def to_document(self, eigenvalues=None):
        doc = collections.OrderedDict([
            ('N', self.N),
            ('d', self.d),
            ('dimension', self.dimension),
            ('normalization', self.normalization),
            ('asymmetry', self.asymmetry),
            ('modes', [list(m) for m in self.modes]),
            ('entries', self.entries.tolist()),
        ])
        if eigenvalues is not None:
            doc['eigenvalues'] = [float(v) for v in eigenvalues]
        return doc

    def __repr__(self):
        return '<QFormMatrix N=%d d=%d dim=%d>' % (self.N, self.d, self.dimension)


def _inverse(perm):
    inv = [0] * len(perm)
    for i, p in enumerate(perm):
        inv[p] = i
    return tuple(inv)


def assemble(N, d, integrator=None, jobs=1):
    """
    Fills the matrix of qform_entry over enumerate_modes(N, d).

    @rtype: L{QFormMatrix}
    """
    if N > MAX_TRUNCATION:
        raise DomainError("N=%d exceeds the desk-scale cap %d" % (N, MAX_TRUNCATION))
    if d % 2 or abs(d) > 3 * N:
        raise DomainError("d must be even with |d| <= 3N, got %r" % (d,))
    modes = enumerate_modes(N, d)
    if integrator is None:
        integrator = integrator_for(2 * N + 1)
    elif integrator.nmax < 2 * N + 1:
        raise DomainError("integrator handles orders up to %d, need %d"
                          % (integrator.nmax, 2 * N + 1))

    differences = sorted(set(_add(k, l, -1) for k in modes for l in modes))
    logger.info("assembling N=%d d=%d: %d modes, %d multiplier differences",
                N, d, len(modes), len(differences))
    multiplier = dict(zip(differences, parallel_map(
        lambda m: _multiplier(integrator, m), differences, jobs=jobs)))

    def row(k):
        return [multiplier[_add(k, l, -1)] - _weighted_pairing(integrator, k, l)
                for l in modes]

    raw = np.array(parallel_map(row, [tuple(m) for m in modes], jobs=jobs), dtype=float)
    raw = raw.reshape(len(modes), len(modes))
    scale = float(np.linalg.norm(raw))
    asymmetry = float(np.max(np.abs(raw - raw.T))) / scale if scale > 0.0 else 0.0
    logger.info("assembled %dx%d matrix; %d radial integrals cached (%d hits); asymmetry %.2e",
                len(modes), len(modes), len(integrator), integrator.hits, asymmetry)
    return QFormMatrix(modes, 0.5 * (raw + raw.T), N, d, asymmetry=asymmetry)


# -- eigenvalues --------------------------------------------------------------

def _round_robin(n):
    """n - 1 rounds of disjoint pairs covering every pair once (n even)."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        pairs = [(players[i], players[n - 1 - i]) for i in range(n // 2)]
        rounds.append((np.array([min(p) for p in pairs]), np.array([max(p) for p in pairs])))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(matrix, tol=1e-13, max_sweeps=60):
    """
    Cyclic Jacobi with parallel (round-robin) ordering: each round rotates a
    set of disjoint index pairs at once. Rotations below a threshold are
    skipped during the first sweeps.

    @return: (eigenvalues ascending, eigenvectors as columns)
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError("need a square matrix")
    n = a.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    a = 0.5 * (a + a.T)
    size = n + n % 2
    if size != n:
        # a decoupled padding row keeps the pairing schedule regular
        padded = np.zeros((size, size))
        padded[:n, :n] = a
        a = padded
    v = np.eye(size)
    scale = float(np.linalg.norm(a))
    rounds = _round_robin(size)

    log = logger.getChild('jacobi')
    for sweep in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= tol * scale:
            break
        threshold = 0.2 * off / size ** 2 if sweep < 3 else 0.0
        log.debug("sweep %d: off-diagonal norm %.3e", sweep, off)
        for p, q in rounds:
            apq = a[p, q]
            active = np.abs(apq) > threshold
            if not active.any():
                continue
            app = a[p, p]
            aqq = a[q, q]
            safe = np.where(active, apq, 1.0)
            tau = (aqq - app) / (2.0 * safe)
            t = np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c

            col_p = a[:, p].copy()
            col_q = a[:, q].copy()
            a[:, p] = col_p * c - col_q * s
            a[:, q] = col_p * s + col_q * c
            row_p = a[p, :].copy()
            row_q = a[q, :].copy()
            a[p, :] = c[:, None] * row_p - s[:, None] * row_q
            a[q, :] = s[:, None] * row_p + c[:, None] * row_q
            a[p[active], q[active]] = 0.0
            a[q[active], p[active]] = 0.0

            vp = v[:, p].copy()
            vq = v[:, q].copy()
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c
        a = 0.5 * (a + a.T)
    else:
        raise PrecisionError("Jacobi did not converge in %d sweeps" % (max_sweeps,),
                             estimate=np.sort(np.diag(a)[:n]))

    # the padding index is never rotated, so it keeps the last column
    values = np.diag(a)[:n]
    vectors = v[:n, :n]
    order = np.argsort(values, kind='stable')
    return values[order], vectors[:, order]


JACOBI_MAX_DIMENSION = 256
EIGEN_METHODS = ('auto', 'jacobi', 'lapack')


def smallest_eigenvalues(matrix, count, method='auto'):
    """The count algebraically smallest eigenvalues, ascending."""
    entries = matrix.entries if isinstance(matrix, QFormMatrix) else np.asarray(matrix, float)
    n = entries.shape[0]
    if not 0 < count <= n:
        raise DomainError("count must lie in [1, %d], got %r" % (n, count))
    if method not in EIGEN_METHODS:
        raise DomainError("unknown eigen method %r" % (method,))
    if method == 'auto':
        method = 'jacobi' if n <= JACOBI_MAX_DIMENSION else 'lapack'
    if method == 'jacobi':
        values = jacobi_eigh(entries)[0]
    else:
        values = scipy.linalg.eigh(entries, eigvals_only=True, subset_by_index=[0, count - 1])
    return [float(x) for x in values[:count]]


# -- studies ------------------------------------------------------------------

def scaling_study(N_list, integrator=None, jobs=1, method='auto'):
    """
    lambda_min(N) on d = 0 with the constant mode removed, and a power-law
    fit of lambda_min against N.
    """
    N_list = sorted(set(int(N) for N in N_list))
    if not N_list:
        raise DomainError("need at least one truncation")
    if integrator is None:
        integrator = integrator_for(2 * N_list[-1] + 1)

    rows = []
    for N in N_list:
        matrix = assemble(N, 0, integrator, jobs)
        reduced = matrix.without_constant()
        lam = smallest_eigenvalues(reduced, 1, method)[0] if reduced.dimension else 0.0
        rows.append(collections.OrderedDict([
            ('N', N),
            ('dimension', matrix.dimension),
            ('lambda_min', lam),
            ('norm', matrix.norm),
            ('constant_residual', matrix.constant_residual()),
        ]))
        logger.info("N=%d: dimension %d, lambda_min %.6e", N, matrix.dimension, lam)

    result = collections.OrderedDict([('rows', rows)])
    usable = [(r['N'], r['lambda_min']) for r in rows if r['N'] > 1 and r['lambda_min'] > 0.0]
    if len(usable) >= 2:
        n = np.array([u[0] for u in usable], dtype=float)
        lam = np.array([u[1] for u in usable])
        slope, _ = np.polyfit(np.log(n), np.log(lam), 1)
        shape = np.log(n) / n ** 2
        c = float(np.dot(shape, lam) / np.dot(shape, shape))
        rms = float(np.sqrt(np.mean((c * shape / lam - 1.0) ** 2)))
        result['exponent'] = float(slope)
        result['log_model_constant'] = c
        result['log_model_rms'] = rms
    return result


def concentration_report(N, band_constant=4.0, near=4.0, integrator=None, jobs=1):
    """
    Where the off-diagonal mass of the d = 0 matrix sits: inside the band
    ||k| - |l|| <= C |k|^(1/2), near the diagonal |k - l| <= near, or
    elsewhere; plus the decay of the multiplier term in |k - l|.
    """
    if N > 32:
        raise DomainError("concentration reports are limited to N <= 32")
    matrix = assemble(N, 0, integrator, jobs)
    modes = matrix.modes
    norms = np.array([m.norm for m in modes])
    pts = np.array(modes, dtype=float)
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    gap = np.abs(norms[:, None] ** 2 - norms[None, :] ** 2)
    band = np.abs(norms[:, None] - norms[None, :]) <= band_constant * np.sqrt(norms[:, None])
    diagonal_near = dist <= near
    off = ~np.eye(len(modes), dtype=bool)

    mass = matrix.entries ** 2
    total = float(mass[off].sum())

    def fraction(mask):
        return float(mass[off & mask].sum()) / total if total > 0.0 else 0.0

    bins = collections.OrderedDict()
    for i, j in zip(*np.nonzero(off)):
        key = (int(round(dist[i, j] ** 2)), int(round(gap[i, j])))
        bins[key] = bins.get(key, 0.0) + float(mass[i, j])

    if integrator is None:
        integrator = integrator_for(2 * N + 1)
    differences = sorted(set(_add(k, l, -1) for k in modes for l in modes))
    profile = collections.OrderedDict()
    for m in differences:
        length = int(round(math.sqrt(sum(x * x for x in m))))
        value = abs(_multiplier(integrator, m))
        profile[length] = max(profile.get(length, 0.0), value)
    tail = [(r, v) for r, v in profile.items() if r >= 4 and v > 0.0]
    exponent = None
    if len(tail) >= 2:
        exponent = float(np.polyfit(np.log([t[0] for t in tail]),
                                    np.log([t[1] for t in tail]), 1)[0])

    return collections.OrderedDict([
        ('N', N),
        ('dimension', matrix.dimension),
        ('band_constant', band_constant),
        ('near_diagonal', near),
        ('inside_band', fraction(band)),
        ('near_diagonal_fraction', fraction(diagonal_near)),
        ('inside_union', fraction(band | diagonal_near)),
        ('outside_distance_8', fraction(dist > 8.0)),
        ('bins', [[k[0], k[1], v] for k, v in sorted(bins.items())]),
        ('multiplier_profile', [[r, v] for r, v in profile.items()]),
        ('multiplier_decay_exponent', exponent),
    ])
