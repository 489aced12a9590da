"""
Configuration-space geometry of the reduced problem.

Angle triples are numpy arrays whose last axis has length 3, so every
function here works on a single point as well as on a whole grid. The weight
a(theta) = |w1 + w2 + w3|^2 with w_i = (cos theta_i, sin theta_i), the
plane H = {theta_1 + theta_2 + theta_3 = 0} with its polar coordinates, the
centre lattice and the fundamental prism live here, together with the exact
polynomial families that describe a near the non-trivial centres.
"""
import collections
import fractions
import functools
import logging
import math

import numpy as np

from ._utils import DomainError


logger = logging.getLogger(__name__)


SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)
SQRT6 = math.sqrt(6.0)

#: psi / psi_prime are only defined for s up to this radius.
PSI_MAX_RADIUS = 0.5

DEFAULT_KMAX = 8

#: Component of theta flipped by the centre c_j (0-based).
FLIPPED_COMPONENT = {2: 0, 3: 1, 4: 2}

_E1 = np.array([1.0, -1.0, 0.0]) / SQRT2
_E2 = np.array([1.0, 1.0, -2.0]) / SQRT6


PolarPlane = collections.namedtuple('PolarPlane', ['s', 'alpha'])

Center = collections.namedtuple('Center', ['index', 'theta'])


def _triples(theta):
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != 3:
        raise DomainError("angle triples need a last axis of length 3, got shape %r"
                          % (theta.shape,))
    return theta


def _scalar(value):
    value = np.asarray(value)
    return float(value) if value.ndim == 0 else value


def a_of(theta):
    """
    a = 3 + 2 cos(t1 - t2) + 2 cos(t2 - t3) + 2 cos(t3 - t1).

    @rtype: L{float} or L{numpy.ndarray}
    """
    t = _triples(theta)
    t1, t2, t3 = t[..., 0], t[..., 1], t[..., 2]
    return _scalar(3.0 + 2.0 * (np.cos(t1 - t2) + np.cos(t2 - t3) + np.cos(t3 - t1)))


def omega_sum(theta):
    """w1 + w2 + w3 as a complex number."""
    t = _triples(theta)
    return _scalar(np.exp(1j * t).sum(axis=-1))


def _half_sin2(d):
    return np.sin(0.5 * d) ** 2


def shifted_excess(theta, j):
    """
    a(theta + c_j) - 1 in half-angle form.

    For the three non-trivial centres this is 4 (S_fm + S_fn - S_mn) with
    S_xy = sin^2((t_x - t_y) / 2) and f the component flipped by c_j, so it
    keeps full relative precision when a(theta + c_j) is close to 1.
    """
    t = _triples(theta)
    if j == 1:
        s = (_half_sin2(t[..., 0] - t[..., 1]) + _half_sin2(t[..., 1] - t[..., 2])
             + _half_sin2(t[..., 2] - t[..., 0]))
        return _scalar(8.0 - 4.0 * s)
    if j not in FLIPPED_COMPONENT:
        raise DomainError("no centre with index %r" % (j,))
    f = FLIPPED_COMPONENT[j]
    m, n = [i for i in range(3) if i != f]
    tf, tm, tn = t[..., f], t[..., m], t[..., n]
    return _scalar(4.0 * (_half_sin2(tf - tm) + _half_sin2(tf - tn) - _half_sin2(tm - tn)))


def embed(s, alpha=None):
    """
    Polar coordinates (s, alpha) on H to an angle triple,
    s cos(alpha) (1, -1, 0)/sqrt(2) + s sin(alpha) (1, 1, -2)/sqrt(6).

    Accepts a L{PolarPlane} or separate (broadcastable) s and alpha.
    """
    if alpha is None:
        s, alpha = s
    s = np.asarray(s, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    c = (s * np.cos(alpha))[..., None]
    d = (s * np.sin(alpha))[..., None]
    return c * _E1 + d * _E2


def centers():
    """
    The four centres c_1 = 0 and c_2, c_3, c_4 where a = 1.

    @rtype: L{list} of L{Center}
    """
    third = math.pi / 3.0
    return [
        Center(1, np.zeros(3)),
        Center(2, np.array([2.0 * third, -third, -third])),
        Center(3, np.array([-third, 2.0 * third, -third])),
        Center(4, np.array([-third, -third, 2.0 * third])),
    ]


def center(j):
    return centers()[j - 1].theta


def lattice_basis():
    """The generators v1 = c_2, v2 = c_3 of the centre lattice in H."""
    cs = centers()
    return cs[1].theta.copy(), cs[2].theta.copy()


def rotate_t(theta):
    """The rotation by 2 pi / 3 about (1, 1, 1): a cyclic shift of coordinates."""
    t = _triples(theta)
    return t[..., [2, 0, 1]]


#: Coefficient window searched by L{reduce_mod_lattice}.
REDUCTION_WINDOW = 3


def reduce_mod_lattice(theta_in_H):
    """
    The representative of theta + Lambda of minimal Euclidean norm.

    Ties are broken by the lexicographic order of the coordinates.
    """
    t = np.asarray(theta_in_H, dtype=float)
    if t.shape != (3,):
        raise DomainError("expected a single angle triple, got shape %r" % (t.shape,))
    if abs(t.sum()) > 1e-12:
        raise DomainError("point not in the plane H: coordinate sum %r" % (t.sum(),))

    v1, v2 = lattice_basis()
    basis = np.stack([v1, v2], axis=1)
    coeffs = np.linalg.lstsq(basis, t, rcond=None)[0]
    t = t - basis.dot(np.round(coeffs))

    w = REDUCTION_WINDOW
    candidates = []
    for m in range(-w, w + 1):
        for n in range(-w, w + 1):
            cand = t - m * v1 - n * v2
            candidates.append((float(np.dot(cand, cand)), tuple(cand)))
    smallest = min(norm for norm, _ in candidates)
    slack = 1e-12 * max(1.0, smallest)
    return np.array(min(c for norm, c in candidates if norm <= smallest + slack))


# the base quadrilateral C is the parallelogram V1 + [0,1) e1 + [0,1) e2
_C_ORIGIN = np.array([math.pi, -math.pi, 0.0])
_C_EDGES = np.stack([
    np.array([-math.pi / 3.0, -math.pi / 3.0, 2.0 * math.pi / 3.0]) - _C_ORIGIN,
    np.array([math.pi / 3.0, math.pi / 3.0, -2.0 * math.pi / 3.0]) - _C_ORIGIN,
], axis=1)
_C_GRAM_INV = np.linalg.inv(_C_EDGES.T.dot(_C_EDGES))

#: The prism is C + {(t, t, t) : t in [0, PRISM_SHIFT)}, i.e. of height 2 pi sqrt(3).
PRISM_SHIFT = 2.0 * math.pi


def prism_coordinates(theta):
    """
    (lambda_1, lambda_2, t) with theta = V1 + lambda_1 e1 + lambda_2 e2 + t (1,1,1).
    """
    t = _triples(theta)
    shift = t.sum(axis=-1) / 3.0
    p = t - shift[..., None] - _C_ORIGIN
    lam = p.dot(_C_EDGES).dot(_C_GRAM_INV.T)
    return lam[..., 0], lam[..., 1], shift


def in_fundamental_prism(theta):
    """
    Whether theta lies in the prism over C, with the half-open convention
    lambda_1, lambda_2 in [0, 1) and t in [0, 2 pi).

    @rtype: L{bool} (or boolean array for a grid of triples)
    """
    l1, l2, shift = prism_coordinates(theta)
    inside = ((l1 >= 0.0) & (l1 < 1.0) & (l2 >= 0.0) & (l2 < 1.0)
              & (shift >= 0.0) & (shift < PRISM_SHIFT))
    if np.ndim(inside) == 0:
        return bool(inside)
    return inside


class EvenPolynomial(object):
    """
    A homogeneous polynomial in (X, Y) with exact rational coefficients.

    @ivar degree:       Total degree.
    @type degree:       L{int}
    @ivar coefficients: Mapping (i, j) -> coefficient of X**i Y**j; zero
                        coefficients are never stored.
    @type coefficients: L{dict}
    """

    def __init__(self, coefficients, degree=None):
        coeffs = {}
        for (i, j), c in dict(coefficients).items():
            key = (int(i), int(j))
            coeffs[key] = coeffs.get(key, 0) + fractions.Fraction(c)
        coeffs = dict((k, v) for k, v in coeffs.items() if v)
        degrees = set(i + j for i, j in coeffs)
        assert len(degrees) <= 1, "polynomial is not homogeneous: %r" % (sorted(degrees),)
        if degree is None:
            degree = min(degrees) if degrees else 0
        assert degrees <= set([degree]), "declared degree disagrees with terms"
        self._coefficients = coeffs
        self.degree = degree

    @property
    def coefficients(self):
        return dict(self._coefficients)

    @classmethod
    def monomial(cls, i, j, c=1):
        return cls({(i, j): c}, degree=i + j)

    def is_zero(self):
        return not self._coefficients

    def __eq__(self, other):
        if not isinstance(other, EvenPolynomial):
            return NotImplemented
        if self.is_zero() and other.is_zero():
            return True
        return self.degree == other.degree and self._coefficients == other._coefficients

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __hash__(self):
        return hash((self.degree, frozenset(self._coefficients.items())))

    def __add__(self, other):
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        assert self.degree == other.degree, "cannot add polynomials of different degree"
        coeffs = dict(self._coefficients)
        for k, v in other._coefficients.items():
            coeffs[k] = coeffs.get(k, 0) + v
        return EvenPolynomial(coeffs, degree=self.degree)

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, factor):
        factor = fractions.Fraction(factor)
        return EvenPolynomial(
            dict((k, v * factor) for k, v in self._coefficients.items()),
            degree=self.degree)

    def __mul__(self, other):
        if not isinstance(other, EvenPolynomial):
            return self.scale(other)
        coeffs = {}
        for (i1, j1), c1 in self._coefficients.items():
            for (i2, j2), c2 in other._coefficients.items():
                key = (i1 + i2, j1 + j2)
                coeffs[key] = coeffs.get(key, 0) + c1 * c2
        return EvenPolynomial(coeffs, degree=self.degree + other.degree)

    __rmul__ = __mul__

    def __pow__(self, k):
        result = EvenPolynomial.monomial(0, 0)
        for _ in range(k):
            result = result * self
        return result

    def _x_column(self):
        # coefficient list indexed by the power of X
        col = [fractions.Fraction(0)] * (self.degree + 1)
        for (i, j), c in self._coefficients.items():
            col[i] = c
        return col

    def divmod_by(self, divisor):
        """
        Exact long division by a homogeneous divisor whose X**m coefficient
        (m = divisor degree) is non-zero.

        @rtype: (L{EvenPolynomial}, L{EvenPolynomial}) quotient and remainder
        """
        m = divisor.degree
        dcol = divisor._x_column()
        lead = dcol[m]
        assert lead != 0, "divisor needs a non-zero leading X coefficient"
        n = self.degree
        rem = self._x_column()
        quot = {}
        for i in range(n, m - 1, -1):
            c = rem[i]
            if not c:
                continue
            q = c / lead
            quot[(i - m, n - i)] = q
            for p in range(m + 1):
                rem[i - m + p] -= q * dcol[p]
        remainder = EvenPolynomial(
            dict(((i, n - i), c) for i, c in enumerate(rem) if c), degree=n)
        quotient = EvenPolynomial(quot, degree=max(n - m, 0))
        return quotient, remainder

    def evaluate(self, x, y):
        """Floating-point evaluation; x and y may be numpy arrays."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        total = np.zeros(np.broadcast(x, y).shape)
        for (i, j), c in sorted(self._coefficients.items()):
            total = total + float(c) * x ** i * y ** j
        return _scalar(total)

    def on_circle(self, alpha):
        """Evaluation at (X, Y) = (sin alpha, cos alpha)."""
        alpha = np.asarray(alpha, dtype=float)
        return self.evaluate(np.sin(alpha), np.cos(alpha))

    def max_abs_on_circle(self, samples=3600):
        alpha = np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False)
        return float(np.max(np.abs(self.on_circle(alpha))))

    def __repr__(self):
        if self.is_zero():
            return 'EvenPolynomial(0)'
        terms = []
        for (i, j), c in sorted(self._coefficients.items(), reverse=True):
            terms.append('%s*X^%d*Y^%d' % (c, i, j))
        return 'EvenPolynomial(%s)' % (' + '.join(terms),)


_X2 = EvenPolynomial.monomial(2, 0)
_Y2 = EvenPolynomial.monomial(0, 2)
_XY = EvenPolynomial.monomial(1, 1)

#: 3 X^2 - Y^2, the leading factor of a(c_4 + theta) - 1.
WEIGHT_POLYNOMIAL = _X2.scale(3) - _Y2


def _binomial(n, k):
    return math.factorial(n) // (math.factorial(k) * math.factorial(n - k))


def _difference_power_sum(k):
    """
    2^k [Y^2k - ((Y^2 + 3X^2 + 2 sqrt3 XY)/4)^k - ((Y^2 + 3X^2 - 2 sqrt3 XY)/4)^k],
    i.e. d12^2k - d13^2k - d23^2k at s = 1, with the odd powers of sqrt(3)
    cancelling between the last two terms.
    """
    base = (_Y2 + _X2.scale(3)).scale(fractions.Fraction(1, 4))
    both = EvenPolynomial({}, degree=2 * k)
    for j in range(0, k + 1, 2):
        # (sqrt3 XY / 2)^j for even j
        cross = (_XY ** j).scale(fractions.Fraction(3 ** (j // 2), 2 ** j))
        both = both + (base ** (k - j) * cross).scale(2 * _binomial(k, j))
    return ((_Y2 ** k) - both).scale(2 ** k)


@functools.lru_cache(maxsize=None)
def poly_p(k):
    """
    P_2k in X = sin(alpha), Y = cos(alpha).

    P_2 = -3X^2 + Y^2 and, for k >= 2, P_2k is twice
    (t1 - t2)^2k - (t1 - t3)^2k - (t2 - t3)^2k at s = 1, so that
    a(c_4 + theta) - 1 = s^2 (3X^2 - Y^2) (1 + psi).

    @rtype: L{EvenPolynomial}
    """
    if not isinstance(k, int) or k < 1:
        raise DomainError("poly_p needs an integer k >= 1, got %r" % (k,))
    t = _difference_power_sum(k)
    return t if k == 1 else t.scale(2)


@functools.lru_cache(maxsize=None)
def poly_q(k):
    """
    Q_2k with Q_2k (3X^2 - Y^2) = (-1)^k P_2k.

    @raise ConsistencyError: the division leaves a remainder.
    """
    p = poly_p(k).scale((-1) ** k)
    quotient, remainder = p.divmod_by(WEIGHT_POLYNOMIAL)
    if not remainder.is_zero():
        raise ConsistencyError("3X^2 - Y^2 does not divide P_%d: remainder %r"
                               % (2 * k, remainder))
    return quotient


def q_bound(k):
    """Bound 30 k^2 2^k on |Q_2k(sin alpha, cos alpha)|."""
    return 30.0 * k * k * 2.0 ** k


#: Explicit bounds for the two lowest non-trivial terms.
Q_SMALL_BOUNDS = {2: 7.0, 3: 17.0}


def _check_radius(s):
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0.0):
        raise DomainError("radius must be non-negative")
    if np.any(s_arr > PSI_MAX_RADIUS):
        raise ValidityError("psi series used beyond s = %g" % (PSI_MAX_RADIUS,))
    return s_arr


def _tail(s, kmax, derivative):
    total = np.zeros_like(s)
    for k in range(kmax + 1, kmax + 25):
        if derivative:
            term = (2 * k - 2) * s ** (2 * k - 3) * q_bound(k) / math.factorial(2 * k)
        else:
            term = s ** (2 * k - 2) * q_bound(k) / math.factorial(2 * k)
        total = total + term
    return total


def psi(s, alpha, kmax=DEFAULT_KMAX):
    """
    psi(s, alpha) = sum_{k=2}^{kmax} s^(2k-2) Q_2k(sin, cos) / (2k)!.

    @rtype: (value, truncation_bound); scalars or arrays matching the
        broadcast of s and alpha.
    """
    if kmax < 2:
        raise DomainError("kmax must be at least 2")
    s = _check_radius(s)
    alpha = np.asarray(alpha, dtype=float)
    x, y = np.sin(alpha), np.cos(alpha)
    value = np.zeros(np.broadcast(s, alpha).shape)
    for k in range(2, kmax + 1):
        value = value + s ** (2 * k - 2) * poly_q(k).evaluate(x, y) / math.factorial(2 * k)
    bound = np.broadcast_to(_tail(s, kmax, False), value.shape)
    return _scalar(value), _scalar(bound)


def psi_prime(s, alpha, kmax=DEFAULT_KMAX):
    """Termwise s-derivative of L{psi} with the matching tail bound."""
    if kmax < 2:
        raise DomainError("kmax must be at least 2")
    s = _check_radius(s)
    alpha = np.asarray(alpha, dtype=float)
    x, y = np.sin(alpha), np.cos(alpha)
    value = np.zeros(np.broadcast(s, alpha).shape)
    for k in range(2, kmax + 1):
        value = value + ((2 * k - 2) * s ** (2 * k - 3)
                         * poly_q(k).evaluate(x, y) / math.factorial(2 * k))
    bound = np.broadcast_to(_tail(s, kmax, True), value.shape)
    return _scalar(value), _scalar(bound)


def weight_factor(alpha):
    """3 sin^2(alpha) - cos^2(alpha)."""
    alpha = np.asarray(alpha, dtype=float)
    return _scalar(3.0 * np.sin(alpha) ** 2 - np.cos(alpha) ** 2)


def h_ratio(s, t, alpha, beta, kmax=DEFAULT_KMAX):
    """
    (1 - a(c_4 + theta(t, beta))) / (1 - a(c_4 + theta(s, alpha))) through
    the factorised form (t/s)^2 w(beta)/w(alpha) (1 + psi(t, beta))/(1 + psi(s, alpha)).
    """
    wa = weight_factor(alpha)
    if abs(wa) < 1e-14:
        raise DegenerateDirectionError(
            "weight factor vanishes in direction alpha = %r" % (alpha,))
    for r in (s, t):
        if not 0.0 < r <= 0.05:
            raise DomainError("radii must lie in (0, 1/20], got %r" % (r,))
    psi_t = psi(t, beta, kmax)[0]
    psi_s = psi(s, alpha, kmax)[0]
    return (t * t) / (s * s) * (weight_factor(beta) / wa) * ((1.0 + psi_t) / (1.0 + psi_s))


def multiplier_floor():
    """
    Analytic lower bound for m(theta) / |theta|^2 on the ball of radius 1/20:
    6 sqrt3 log 20 + 9 sqrt3 log 2 - 3 sqrt3 log 3 - (90 sqrt3 / 400) log 20 - 62/400.
    """
    l20, l2, l3 = math.log(20.0), math.log(2.0), math.log(3.0)
    return (6.0 * SQRT3 * l20 + 9.0 * SQRT3 * l2 - 3.0 * SQRT3 * l3
            - 90.0 * SQRT3 / 400.0 * l20 - 62.0 / 400.0)


class ConsistencyError(AssertionError):
    """An exact identity failed; this is a bug, not bad input."""


class DegenerateDirectionError(DomainError):
    pass


class ValidityError(DomainError):
    pass
