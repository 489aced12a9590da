import math
import logging

import numpy as np
import pytest
from scipy import special

from extcert import kernel
from extcert._utils import DomainError, PrecisionError, SingularityError

from tests import slow_testing


logger = logging.getLogger(__name__)


def _hypergeometric_k(k, terms=200):
    total, c = 0.0, 1.0
    for n in range(terms):
        if n:
            c *= (2.0 * n - 1.0) / (2.0 * n)
        total += c * c * k ** (2 * n)
    return 0.5 * math.pi * total


def test_elliptic_k_values():
    assert kernel.elliptic_k(0.0) == pytest.approx(math.pi / 2, abs=1e-15)
    assert abs(kernel.elliptic_k(0.5) - _hypergeometric_k(0.5)) <= 1e-12
    assert kernel.elliptic_k(0.999999) > 7

    # scipy parametrises by m = k**2
    for k in (0.1, 0.3, 0.7, 0.9, 0.99):
        assert kernel.elliptic_k(k) == pytest.approx(special.ellipk(k * k), rel=1e-13)


def test_elliptic_k_errors():
    with pytest.raises(SingularityError):
        kernel.elliptic_k(1.0)
    with pytest.raises(DomainError):
        kernel.elliptic_k(1.5)
    with pytest.raises(DomainError):
        kernel.elliptic_k(-0.1)


def test_rho_elliptic_closed_form():
    at_three = kernel.rho_elliptic(3.0)
    assert at_three.method == 'elliptic'
    assert at_three.value == pytest.approx(2 * math.pi / math.sqrt(3), rel=1e-14)
    assert at_three.value == pytest.approx(3.6275987, abs=1e-7)

    assert kernel.rho_elliptic(3.5).value == 0.0

    with pytest.raises(SingularityError):
        kernel.rho_elliptic(1.0)
    with pytest.raises(DomainError):
        kernel.rho_elliptic(-0.5)


def test_elliptic_rounding_estimate_is_heuristic():
    exact = 2 * math.pi / math.sqrt(3)
    at_three = kernel.rho_elliptic(3.0)
    assert abs(at_three.value - exact) <= at_three.error_bound

    # grows with the conditioning 1 / |r - 1| of rho
    far = kernel.rho_elliptic(1.0 + 1e-4).error_bound
    close = kernel.rho_elliptic(1.0 + 1e-8).error_bound
    assert close / far == pytest.approx(1e4, rel=1e-2)
    for r in (1.0 - 1e-8, 1.0 + 1e-8):
        asym = kernel.rho_asymptotic(r)
        assert abs(kernel.rho_elliptic(r).value - asym.value) <= asym.error_bound


@pytest.mark.parametrize('r', [0.5, 0.9, 1.02, 1.5, 2.99])
def test_dual_formula_agreement(r):
    quad = kernel.rho_quadrature(r)
    ell = kernel.rho_elliptic(r)
    assert quad.method == 'quadrature'
    assert quad.value > 0
    assert abs(quad.value - ell.value) <= 1e-8 * ell.value


@pytest.mark.timeout(120)
def test_dual_formula_agreement_on_grid():
    count = 200 if slow_testing.enabled else 30
    for r in np.geomspace(0.05, 2.95, count):
        if abs(r - 1.0) <= 1e-3:
            continue
        quad = kernel.rho_quadrature(r).value
        ell = kernel.rho_elliptic(r).value
        assert abs(quad - ell) <= 1e-8 * ell, r


def test_rho_quadrature_support_and_errors():
    assert kernel.rho_quadrature(3.5).value == 0.0
    assert kernel.rho_quadrature(3.0).value == pytest.approx(2 * math.pi / math.sqrt(3))

    with pytest.raises(kernel.NearSingularError):
        kernel.rho_quadrature(1.0 + 5e-5)
    with pytest.raises(DomainError):
        kernel.rho_quadrature(0.0)


def test_rho_quadrature_near_singularity_band():
    value = kernel.rho_quadrature(1.05).value
    approx = -6.0 * math.log(0.05) + 12.0 * math.log(2.0)
    assert abs(value - approx) <= kernel.asymptotic_error_bound(1.05)


def test_rho_asymptotic():
    estimate = kernel.rho_asymptotic(1.1)
    assert estimate.method == 'asymptotic'
    assert estimate.value == pytest.approx(-6 * math.log(0.1) + 12 * math.log(2), rel=1e-12)
    assert estimate.value == pytest.approx(22.134, abs=1e-3)
    assert estimate.error_bound == pytest.approx(2.2 * math.log(10) + 2.3, rel=1e-9)
    assert estimate.error_bound == pytest.approx(7.366, abs=1e-3)

    tiny = kernel.rho_asymptotic(1 + 1e-6)
    assert tiny.error_bound == pytest.approx(3.27e-4, rel=1e-2)

    near = kernel.rho_asymptotic(0.95)
    assert abs(near.value - kernel.rho_elliptic(0.95).value) <= near.error_bound


def test_rho_asymptotic_errors():
    with pytest.raises(SingularityError):
        kernel.rho_asymptotic(1.0)
    with pytest.raises(kernel.ValidityError):
        kernel.rho_asymptotic(1.2)
    with pytest.raises(kernel.ValidityError):
        kernel.rho_asymptotic(0.85)


def test_asymptotic_band_containment():
    count = 10 ** 4 if slow_testing.enabled else 2000
    d = np.geomspace(1e-6, 0.1, count)
    approx = -6.0 * np.log(d) + 12.0 * math.log(2.0)
    bound = -22.0 * d * np.log(d) + 23.0 * d
    for sign in (-1.0, 1.0):
        values = kernel.rho_values(1.0 + sign * d, rm1=sign * d)
        assert np.all(np.abs(values - approx) <= bound)


def test_sided_bound_is_sharper_above():
    for e in (1e-4, 1e-2, 0.1):
        assert (kernel.asymptotic_error_bound(1 + e, sided=True)
                < kernel.asymptotic_error_bound(1 + e))
        assert (kernel.asymptotic_error_bound(1 - e, sided=True)
                == kernel.asymptotic_error_bound(1 - e))


@pytest.mark.parametrize('r', [1 - 0.05, 1 - 1e-3, 1 + 1e-3, 1 + 0.05])
def test_intermediate_estimate_within_bound(r):
    residual, bound = kernel.intermediate_estimate(r)
    assert bound > 0
    assert abs(residual) <= bound


def test_support_and_positivity():
    r = np.linspace(0.01, 2.99, 599)
    r = r[np.abs(r - 1.0) > 1e-9]
    assert np.all(kernel.rho_values(r) > 0)
    assert np.all(kernel.rho_values([3.0001, 3.5, 10.0]) == 0)
    assert kernel.rho(4.0).value == 0.0


def test_monotone_divergence():
    below = kernel.rho_values(np.linspace(0.9, 1 - 1e-6, 1000))
    above = kernel.rho_values(np.linspace(1 + 1e-6, 1.1, 1000))
    assert np.all(np.diff(below) > 0)
    assert np.all(np.diff(above) < 0)


def test_excess_times_rho_continuous_at_zero():
    values = kernel.excess_times_rho([0.0, 1e-13, -1e-13])
    assert np.all(values == 0)
    small = kernel.excess_times_rho([1e-8, -1e-8])
    assert np.all(np.abs(small) < 1e-5)

    e = 0.44
    expected = e * kernel.rho_elliptic(math.sqrt(1 + e)).value
    assert kernel.excess_times_rho(e) == pytest.approx(expected, rel=1e-12)


def test_rho_dispatch():
    far = kernel.rho(2.0, tol=1e-8)
    assert far.method == 'elliptic'
    assert far.error_bound <= 1e-8

    close = kernel.rho(1 + 1e-9, tol=1e-3)
    assert close.method == 'asymptotic'
    assert close.error_bound < 1e-3

    mid = kernel.rho(1.02, tol=1e-8)
    assert mid.method == 'elliptic'
    assert abs(mid.value - kernel.rho_quadrature(1.02).value) <= 1e-8 * mid.value


def test_rho_unreachable_tolerance_carries_estimate():
    with pytest.raises(PrecisionError) as info:
        kernel.rho(1 + 1e-12, tol=1e-12)
    assert info.value.estimate is not None
    assert info.value.estimate.method == 'asymptotic'

    with pytest.raises(DomainError):
        kernel.rho(2.0, tol=0.0)


def test_kernel_estimate_rejects_negative_bound():
    with pytest.raises(AssertionError):
        kernel.KernelEstimate(1.0, 'elliptic', -1.0)
    with pytest.raises(AssertionError):
        kernel.KernelEstimate(1.0, 'series', 0.0)
