import itertools
import json
import math

import numpy as np
import pytest
from scipy import special

from extcert import spectrum
from extcert.spectrum import ModeIndex, QFormMatrix, RadialIntegrator
from extcert._utils import DomainError

from tests import slow_testing


def test_bessel_matches_scipy():
    for n in (0, 1, 2, 5, 17, 60):
        for r in (0.3, 1.0, 7.3, 42.0, 390.0):
            assert spectrum.bessel_j(n, r) == pytest.approx(special.jv(n, r), abs=1e-12)
    assert spectrum.bessel_j(0, 0.0) == 1.0
    assert spectrum.bessel_j(3, 0.0) == 0.0


def test_bessel_parity():
    for n in (1, 2, 7):
        assert spectrum.bessel_j(-n, 2.5) == pytest.approx((-1) ** n * spectrum.bessel_j(n, 2.5))


def test_bessel_table_identities():
    table = spectrum.bessel_table(40, np.array([7.3, 0.0, 120.0]))
    assert table.shape == (41, 3)
    # sum over all integer orders of J_n^2 is 1
    squares = table[0] ** 2 + 2 * np.sum(table[1:] ** 2, axis=0)
    assert np.allclose(squares[[0, 1]], 1.0, atol=1e-13)
    normalised = table[0] + 2 * np.sum(table[2::2], axis=0)
    assert np.allclose(normalised[[0, 1]], 1.0, atol=1e-13)


def test_bessel_errors():
    with pytest.raises(DomainError):
        spectrum.bessel_j(300, 1.0)
    with pytest.raises(DomainError):
        spectrum.bessel_j(2, -1.0)
    with pytest.raises(DomainError):
        spectrum.bessel_table(-1, [1.0])


def test_hankel_series_reproduces_bessel():
    z = 500.0
    for n in (0, 3, 8):
        amplitude = spectrum.hankel_series(n, z, 12)
        phase = np.exp(1j * (z - 0.5 * n * math.pi - 0.25 * math.pi))
        value = math.sqrt(2 / (math.pi * z)) * float(np.real(amplitude * phase))
        assert value == pytest.approx(special.jv(n, z), abs=1e-14)


def test_mode_index():
    m = ModeIndex(2, -4, 0)
    assert m.degree == -2
    assert m.norm == pytest.approx(math.sqrt(20))
    assert m.permuted((2, 0, 1)) == (0, 2, -4)
    with pytest.raises(AssertionError):
        ModeIndex(1, 0, -1)


def test_enumerate_modes():
    modes = spectrum.enumerate_modes(2, 0)
    assert len(modes) == 7
    assert modes == sorted(modes)
    assert all(m.degree == 0 for m in modes)
    assert spectrum.enumerate_modes(0, 0) == [(0, 0, 0)]
    assert spectrum.enumerate_modes(0, 2) == []

    plus = spectrum.enumerate_modes(6, 4)
    minus = spectrum.enumerate_modes(6, -4)
    assert sorted(tuple(-n for n in m) for m in plus) == minus


@pytest.mark.parametrize('N,d', [(3, 0), (2, 1), (-2, 0)])
def test_enumerate_modes_rejects_odd(N, d):
    with pytest.raises(DomainError):
        spectrum.enumerate_modes(N, d)


def test_canonical_key():
    assert spectrum.canonical_key((3, -1, 0, 2, 0, 0)) == ((0, 0, 0, 1, 2, 3), -1.0)
    assert spectrum.canonical_key((-2, 1, 1, 0, 0, 0)) == ((0, 0, 0, 1, 1, 2), 1.0)


def test_pair_integral_zero_when_degrees_differ():
    result = spectrum.pair_integral((2, 0, 0), (0, 0, 0))
    assert result.value == 0.0
    assert result.est_error == 0.0
    with pytest.raises(DomainError):
        spectrum.pair_integral((0, 0), (0, 0, 0))


def test_pair_integral_symmetries():
    base = spectrum.pair_integral((2, -2, 0), (0, 2, -2)).value
    assert spectrum.pair_integral((-2, 2, 0), (2, -2, 0)).value == pytest.approx(base)
    assert spectrum.pair_integral((0, 2, -2), (2, -2, 0)).value == pytest.approx(base)
    assert spectrum.pair_integral((-2, 2, 0), (0, -2, 2)).value == pytest.approx(base)


def test_split_radius_does_not_matter():
    near = RadialIntegrator(8, radius=200)
    far = RadialIntegrator(8, radius=320)
    for orders in [(0,) * 6, (1, 1, 0, 0, 2, 2), (3, -1, 2, 0, 0, 2), (5, 4, 1, 3, 2, 1)]:
        a, err_a = near.integral(orders)
        b, err_b = far.integral(orders)
        assert err_a < 1e-10
        assert a == pytest.approx(b, abs=1e-10)


def test_integrator_capacity_and_cache():
    integrator = RadialIntegrator(4)
    assert integrator.radius == 200
    with pytest.raises(DomainError):
        integrator.integral((5, 0, 0, 0, 0, 5))
    with pytest.raises(DomainError):
        integrator.integral((0, 0, 0))

    integrator.integral((1, 2, 0, 0, 0, 3))
    integrator.integral((0, 3, 0, 2, 0, 1))
    assert len(integrator) == 1
    assert integrator.hits == 1
    assert integrator.misses == 1

    assert spectrum.integrator_for(3) is spectrum.integrator_for(7)
    assert spectrum.integrator_for(9).nmax == 16


def test_cache_round_trip(tmp_path):
    path = str(tmp_path / 'radial.json')
    first = RadialIntegrator(8)
    values = [first.integral(o)[0] for o in [(0,) * 6, (2, 2, 0, 0, 1, 3), (4, 0, 0, 2, 2, 0)]]
    first.persist(path)
    with open(path) as f:
        assert json.load(f)['schema_version'] == RadialIntegrator.CACHE_SCHEMA

    second = RadialIntegrator(8)
    assert second.load(path) == 3
    assert [second.integral(o)[0] for o in [(0,) * 6, (2, 2, 0, 0, 1, 3), (4, 0, 0, 2, 2, 0)]] \
        == values
    assert second.misses == 0

    other = RadialIntegrator(8, radius=300)
    assert other.load(path) == 0
    assert len(other) == 0


@pytest.mark.timeout(300)
@pytest.mark.parametrize('k,l', [
    ((0, 0, 0), (0, 0, 0)),
    ((2, -2, 0), (0, 0, 0)),
    ((2, 0, -2), (0, 2, -2)),
])
def test_radial_pairing_matches_direct_quadrature(k, l):
    radial = spectrum.pair_integral(k, l).value
    direct = spectrum.pair_integral_direct(k, l)
    assert direct == pytest.approx(radial, rel=1e-4, abs=1e-8)


def test_modal_autoconvolution_errors():
    assert spectrum.modal_autoconvolution((0, 0, 0), 3.5) == 0.0
    with pytest.raises(DomainError):
        spectrum.modal_autoconvolution((0, 0, 0), -1.0)


def test_qform_entry():
    zero = (0, 0, 0)
    assert spectrum.qform_entry(zero, zero) == 0.0
    k, l = (2, -2, 0), (0, 2, -2)
    assert spectrum.qform_entry(k, l) == pytest.approx(spectrum.qform_entry(l, k), rel=1e-9)
    with pytest.raises(DomainError):
        spectrum.qform_entry((2, 0, 0), zero)
    with pytest.raises(DomainError):
        spectrum.qform_entry((1, -1, 0), zero)


def test_assemble_trivial_truncation():
    matrix = spectrum.assemble(0, 0)
    assert matrix.dimension == 1
    assert matrix.entries.tolist() == [[0.0]]
    assert matrix.constant_residual() == 0.0
    assert matrix.without_constant().dimension == 0


def test_assemble_arguments():
    with pytest.raises(DomainError):
        spectrum.assemble(66, 0)
    with pytest.raises(DomainError):
        spectrum.assemble(4, 1)
    with pytest.raises(DomainError):
        spectrum.assemble(2, 8)
    with pytest.raises(DomainError):
        spectrum.assemble(4, 0, integrator=RadialIntegrator(4))


@pytest.mark.timeout(300)
def test_small_truncation_is_positive_semidefinite():
    matrix = spectrum.assemble(4, 0)
    assert matrix.dimension == 19
    assert matrix.asymmetry < 1e-9
    assert np.all(np.diag(matrix.entries) >= -1e-12 * matrix.norm)
    assert matrix.constant_residual() <= 1e-6
    values = np.linalg.eigvalsh(matrix.entries)
    assert values.min() >= -1e-8 * matrix.norm
    assert np.diag(matrix.without_constant().entries).min() > 0


@pytest.mark.timeout(300)
def test_coordinate_permutations_are_symmetries():
    matrix = spectrum.assemble(4, 0)
    for perm in [(1, 0, 2), (2, 0, 1), (0, 2, 1)]:
        relabeled = matrix.relabeled(perm)
        assert relabeled.modes == matrix.modes
        assert np.allclose(relabeled.entries, matrix.entries, atol=1e-10 * matrix.norm)


@pytest.mark.timeout(300)
def test_degree_sign_flip_keeps_spectrum():
    plus = spectrum.assemble(4, 2)
    minus = spectrum.assemble(4, -2)
    assert np.allclose(np.linalg.eigvalsh(plus.entries), np.linalg.eigvalsh(minus.entries),
                       atol=1e-10 * plus.norm)
    with pytest.raises(DomainError):
        plus.constant_residual()


def test_matrix_document():
    matrix = QFormMatrix([ModeIndex(0, 0, 0), ModeIndex(2, -2, 0)],
                         [[0.0, 0.0], [0.0, 1.5]], 2, 0)
    doc = matrix.to_document(eigenvalues=[0.0, 1.5])
    assert list(doc)[:3] == ['N', 'd', 'dimension']
    assert doc['modes'] == [[0, 0, 0], [2, -2, 0]]
    assert doc['eigenvalues'] == [0.0, 1.5]
    assert matrix.index_of((2, -2, 0)) == 1
    json.dumps(doc, allow_nan=False)


@pytest.mark.parametrize('n', [4, 7, 12])
def test_jacobi_matches_lapack(n):
    rng = np.random.RandomState(n)
    a = rng.standard_normal((n, n))
    a = a + a.T
    values, vectors = spectrum.jacobi_eigh(a)
    assert np.allclose(values, np.linalg.eigvalsh(a), atol=1e-10)
    assert np.allclose(vectors @ np.diag(values) @ vectors.T, a, atol=1e-10)
    assert np.allclose(vectors.T @ vectors, np.eye(n), atol=1e-10)


def test_jacobi_many_small_matrices():
    rng = np.random.RandomState(2024)
    for _ in range(40):
        a = rng.standard_normal((6, 6))
        a = a + a.T
        values, _ = spectrum.jacobi_eigh(a)
        assert np.allclose(values, np.linalg.eigvalsh(a), atol=1e-10)


def test_jacobi_large_diagonal_small_coupling():
    # off-diagonal mass far below the rounding of the diagonal squares
    a = np.diag([1e4, 2e4, 3e4, 4e4, 5e4])
    a[0, 4] = a[4, 0] = 1e-3
    a[1, 2] = a[2, 1] = 2e-3
    values, vectors = spectrum.jacobi_eigh(a)
    assert np.allclose(values, np.linalg.eigvalsh(a), rtol=0.0, atol=1e-9)
    assert abs(vectors[4, 0]) > 1e-9

    near = np.diag([1.0, 2.0, 3.0]) + 1e-12 * (np.ones((3, 3)) - np.eye(3))
    values, _ = spectrum.jacobi_eigh(near)
    assert np.allclose(values, np.linalg.eigvalsh(near), atol=1e-14)


def test_jacobi_against_characteristic_polynomial():
    rng = np.random.RandomState(4)
    a = rng.standard_normal((4, 4))
    a = a + a.T
    # roots of det(x I - A) from its coefficients
    coefficients = np.poly(a)
    roots = np.sort(np.real(np.roots(coefficients)))
    assert np.allclose(spectrum.jacobi_eigh(a)[0], roots, atol=1e-10)


def test_jacobi_edge_cases():
    values, vectors = spectrum.jacobi_eigh(np.zeros((0, 0)))
    assert values.shape == (0,)
    values, _ = spectrum.jacobi_eigh(np.diag([3.0, -1.0, 2.0]))
    assert values.tolist() == [-1.0, 2.0, 3.0]
    with pytest.raises(DomainError):
        spectrum.jacobi_eigh(np.zeros((2, 3)))


def test_smallest_eigenvalues():
    rng = np.random.RandomState(11)
    a = rng.standard_normal((9, 9))
    a = a + a.T
    expected = np.linalg.eigvalsh(a)[:3]
    assert np.allclose(spectrum.smallest_eigenvalues(a, 3, 'jacobi'), expected, atol=1e-10)
    assert np.allclose(spectrum.smallest_eigenvalues(a, 3, 'lapack'), expected, atol=1e-10)
    assert np.allclose(spectrum.smallest_eigenvalues(a, 3), expected, atol=1e-10)

    with pytest.raises(DomainError):
        spectrum.smallest_eigenvalues(a, 0)
    with pytest.raises(DomainError):
        spectrum.smallest_eigenvalues(a, 10)
    with pytest.raises(DomainError):
        spectrum.smallest_eigenvalues(a, 1, 'arpack')


@pytest.mark.timeout(300)
def test_scaling_study_small():
    study = spectrum.scaling_study([2, 4, 6])
    rows = study['rows']
    assert [row['N'] for row in rows] == [2, 4, 6]
    lams = [row['lambda_min'] for row in rows]
    assert all(lam > 0 for lam in lams)
    assert all(b <= a * (1 + 1e-9) for a, b in zip(lams, lams[1:]))
    assert all(row['constant_residual'] <= 1e-6 for row in rows)
    assert study['exponent'] < 0

    with pytest.raises(DomainError):
        spectrum.scaling_study([])


@pytest.mark.timeout(300)
def test_concentration_report_small():
    report = spectrum.concentration_report(4)
    for key in ('inside_band', 'near_diagonal_fraction', 'inside_union', 'outside_distance_8'):
        assert 0.0 <= report[key] <= 1.0
    assert report['inside_union'] >= report['inside_band']
    assert report['inside_union'] >= report['near_diagonal_fraction']
    assert report['multiplier_profile']
    json.dumps(report, allow_nan=False)

    with pytest.raises(DomainError):
        spectrum.concentration_report(34)


if slow_testing.enabled:
    @pytest.mark.timeout(3600)
    def test_scaling_exponent():
        study = spectrum.scaling_study([8, 12, 16, 20, 24], jobs=slow_testing.jobs)
        lams = [row['lambda_min'] for row in study['rows']]
        assert all(lam > 0 for lam in lams)
        assert all(b <= a * (1 + 1e-9) for a, b in zip(lams, lams[1:]))
        assert -2.5 <= study['exponent'] <= -1.5
        for row in study['rows']:
            assert row['constant_residual'] <= 1e-6

    @pytest.mark.timeout(3600)
    @pytest.mark.parametrize('N', [8, 12, 16])
    def test_positive_semidefinite(N):
        matrix = spectrum.assemble(N, 0, jobs=slow_testing.jobs)
        assert matrix.constant_residual() <= 1e-6
        assert spectrum.smallest_eigenvalues(matrix, 1)[0] >= -1e-8 * matrix.norm

    @pytest.mark.timeout(3600)
    def test_radial_pairing_oracle_grid():
        triples = [t for t in itertools.product((-2, 0, 2), repeat=3)]
        pairs = [(k, l) for k in triples for l in triples if sum(k) == sum(l) and k <= l]
        for k, l in pairs:
            radial = spectrum.pair_integral(k, l).value
            direct = spectrum.pair_integral_direct(k, l)
            assert direct == pytest.approx(radial, rel=1e-4, abs=1e-8), (k, l)

    @pytest.mark.timeout(3600)
    def test_multiplier_decay():
        report = spectrum.concentration_report(16, jobs=slow_testing.jobs)
        assert report['multiplier_decay_exponent'] <= -3 + 0.5
