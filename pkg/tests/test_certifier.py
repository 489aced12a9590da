import math
import json

import numpy as np
import pytest

from extcert import certifier
from extcert.certifier import CertReport, GridSpec
from extcert._utils import DomainError

from tests import slow_testing


QUICK_LEMMAS = list(certifier.CERTIFIERS)


def test_grid_spec_axes():
    grid = GridSpec([(0.0, 1.0), (1e-3, 1.0)], [3, 4], ['uniform', 'log'], names=('s', 'r'))
    assert grid.ndim == 2
    assert grid.size == 12
    assert np.allclose(grid.axis(0), [0.0, 0.5, 1.0])
    assert np.allclose(grid.axis(1), [1e-3, 1e-2, 1e-1, 1.0])
    s, r = grid.mesh()
    assert s.shape == r.shape == (3, 4)
    assert grid.index('r') == 1

    refined = grid.refined(2)
    assert refined.points == (6, 8)
    assert refined.ranges == grid.ranges
    assert grid.with_range('s', 0.0, 2.0).ranges[0] == (0.0, 2.0)
    assert grid.with_points('r', 9).points == (3, 9)
    assert grid == GridSpec([(0, 1), (1e-3, 1)], [3, 4], ['uniform', 'log'], names=('s', 'r'))
    assert grid != refined


def test_grid_spec_single_point():
    grid = GridSpec.at(('alpha',), [1.5])
    assert grid.size == 1
    assert list(grid.axis(0)) == [1.5]
    assert grid.refined(10).points == (1,)


@pytest.mark.parametrize('ranges,points,spacing', [
    ([(0.0, 1.0)], 1, 'uniform'),
    ([(1.0, 0.0)], 5, 'uniform'),
    ([(0.0, 1.0)], 5, 'log'),
    ([(1.0, 1.0)], 3, 'uniform'),
    ([(0.0, 1.0)], 5, 'cubic'),
    ([(0.0, 1.0), (0.0, 1.0)], [5], 'uniform'),
])
def test_grid_spec_rejects_bad_axes(ranges, points, spacing):
    with pytest.raises(DomainError):
        GridSpec(ranges, points, spacing)


def test_cert_report_status():
    grid = GridSpec.at(('x',), [0.0])
    assert CertReport('t', grid, 0.5, {'x': 0.0}).status == 'passed'
    assert CertReport('t', grid, -1e-13, {'x': 0.0}, tolerance=1e-12).passed
    failed = CertReport('t', grid, -1e-3, {'x': 0.0})
    assert failed.status == 'failed'
    assert not failed.ok
    murky = CertReport('t', grid, 1.0, {}, inconclusive=True)
    assert murky.passed
    assert murky.status == 'inconclusive'
    assert not murky.ok


def test_cert_report_document_is_json():
    report = CertReport('t', GridSpec.at(('x',), [0.0]), -math.inf, {},
                        runtime_ms=12, details={'values': np.array([1.0, np.nan]).tolist()})
    doc = report.to_document()
    assert 'runtime_ms' not in doc
    assert doc['worst_margin'] is None
    assert doc['details']['values'] == [1.0, None]
    json.dumps(doc, allow_nan=False)
    assert report.to_document(include_timing=True)['runtime_ms'] == 12

    combined = certifier.reports_to_document([report])
    assert combined['schema_version'] == certifier.REPORT_SCHEMA_VERSION
    assert combined['kind'] == 'certification'
    assert combined['all_passed'] is False


def test_jsonable():
    value = certifier.jsonable({'a': np.float64(2.5), 'b': (np.int64(3), np.bool_(True)),
                                'c': float('inf')})
    assert value == {'a': 2.5, 'b': [3, True], 'c': None}


@pytest.mark.timeout(300)
@pytest.mark.parametrize('lemma_id', QUICK_LEMMAS)
def test_quick_grids_pass(lemma_id):
    report = certifier.certify(lemma_id, quick=True)
    assert report.lemma_id == lemma_id
    assert report.status == 'passed', report.to_document()
    assert report.worst_margin >= -report.tolerance
    assert report.details['points_skipped'] == 0


@pytest.mark.timeout(300)
@pytest.mark.parametrize('lemma_id', QUICK_LEMMAS)
def test_tightened_bounds_fail(lemma_id):
    report = certifier.certify(lemma_id, quick=True, tighten=100)
    assert report.status == 'failed'
    assert report.details['tighten'] == 100


if slow_testing.enabled:
    @pytest.mark.timeout(1800)
    def test_default_grids_pass():
        reports = certifier.certify_all(jobs=slow_testing.jobs)
        assert [r.lemma_id for r in reports] == list(certifier.CERTIFIERS)
        failing = [r.to_document() for r in reports if not r.ok]
        assert not failing

    @pytest.mark.timeout(600)
    def test_step5_at_larger_radius():
        assert certifier.certify('step5', eps_prime=0.061).ok


def test_rho_asymptotics_single_point():
    report = certifier.certify_rho_asymptotics(GridSpec.at(('eps',), [0.1]))
    assert report.passed
    assert report.worst_margin > 0
    assert set(report.details['checks']) == set(['lemma_below', 'lemma_above'])
    assert report.details['empirical_constant'] < 22

    with pytest.raises(DomainError):
        certifier.certify_rho_asymptotics(GridSpec.at(('eps',), [0.2]))


def test_aux_integrals_at_delta_one():
    grid = GridSpec.at(('delta', 'a', 'b'), [1.0, 0.5, 0.5])
    report = certifier.certify_aux_integrals(grid)
    assert report.ok
    checks = report.details['checks']
    assert checks['aux1_lower']['worst_margin'] == pytest.approx(
        2 * math.log(1 + math.sqrt(2)) - math.log(4), rel=1e-9)
    assert checks['aux6']['worst_margin'] > 0


def test_aux1_excess_tends_to_zero_from_above():
    delta = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
    grid = GridSpec([(1e-6, 1e-1), (0.5, 0.5), (0.5, 0.5)], [6, 1, 1], ['log', 'uniform', 'uniform'],
                    names=('delta', 'a', 'b'))
    assert np.allclose(grid.axis(0), sorted(delta))
    report = certifier.certify_aux_integrals(grid)
    assert report.ok
    lower = report.details['checks']['aux1_lower']
    assert 0 <= lower['worst_margin'] < 1e-5
    assert lower['worst_point']['delta'] == pytest.approx(1e-6)


def test_aux_integrals_parallel_is_deterministic():
    one = certifier.certify('aux-integrals', quick=True, jobs=1)
    four = certifier.certify('aux-integrals', quick=True, jobs=4)
    assert one.worst_margin == four.worst_margin
    assert one.to_document() == four.to_document()


def test_reports_are_deterministic():
    first = certifier.certify('multiplier-lower', quick=True)
    second = certifier.certify('multiplier-lower', quick=True)
    assert first.worst_margin == second.worst_margin
    assert json.dumps(first.to_document()) == json.dumps(second.to_document())


def test_psi_bounds_details():
    grid = GridSpec([(0.05, 0.05), (0.0, 2 * math.pi)], [1, 721], names=('s', 'alpha'))
    report = certifier.certify_psi_bounds(grid)
    assert report.ok
    assert report.details['checks']['log_derivative']['worst_margin'] > 0
    assert report.details['max_log_derivative'] < 1.0 / 198

    origin = GridSpec([(0.0, 0.0), (0.0, 2 * math.pi)], [1, 9], names=('s', 'alpha'))
    report = certifier.certify_psi_bounds(origin)
    for check in report.details['checks'].values():
        assert check['worst_margin'] == 0.0 or check['worst_margin'] > 0


def test_psi_grids_outside_validity_are_rejected():
    grid = GridSpec([(0.0, 0.6), (0.0, 1.0)], [3, 3], names=('s', 'alpha'))
    with pytest.raises(DomainError):
        certifier.certify_psi_bounds(grid)


def test_expansion_error_on_degenerate_direction():
    alpha = math.pi / 6
    s = np.geomspace(1e-3, 0.05, 20)
    assert np.allclose(certifier.expansion_main_terms(s, alpha), 0.0, atol=1e-14)

    grid = GridSpec([(1e-3, 0.05), (alpha, alpha)], [20, 1], ['log', 'uniform'],
                    names=('s', 'alpha'))
    report = certifier.certify_expansion_error(grid)
    assert report.ok


def test_expansion_error_scales_like_s4_log_s():
    grid = GridSpec([(1e-3, 1e-3), (0.0, 2 * math.pi)], [1, 90], names=('s', 'alpha'))
    report = certifier.certify_expansion_error(grid)
    assert report.ok
    assert report.details['max_relative_remainder'] <= 1.0


def test_expansion_error_near_singular_points_use_continuation():
    # to leading order a(c_4 + theta) - 1 is s^2 times a multiple of (alpha - pi/6)
    alpha = math.pi / 6
    grid = GridSpec([(1e-3, 0.05), (alpha - 1e-3, alpha + 1e-3)], [20, 5],
                    ['log', 'uniform'], names=('s', 'alpha'))
    report = certifier.certify_expansion_error(grid)
    assert report.ok
    assert report.details['points_skipped'] == 0
    assert report.details['near_singular_points'] > 0
    near = report.details['checks']['near_singular_product']
    assert near['skipped'] == 0
    assert near['worst_margin'] >= 0

    far = GridSpec([(0.04, 0.05), (0.0, 0.1)], [2, 2], names=('s', 'alpha'))
    report = certifier.certify_expansion_error(far)
    assert report.details['near_singular_points'] == 0
    assert 'near_singular_product' not in report.details['checks']


def test_too_many_skipped_points_are_inconclusive():
    grid = GridSpec([(0.0, 1.0)], 1000, names=('x',))
    x = grid.axis(0)

    cert = certifier._Certification('t', grid)
    margin = np.ones(1000)
    margin[0] = np.nan
    cert.add('bound', margin, {'x': x})
    report = cert.report()
    assert report.details['points_skipped'] == 1
    assert report.status == 'passed'

    cert = certifier._Certification('t', grid)
    margin[1] = np.inf
    cert.add('bound', margin, {'x': x})
    report = cert.report()
    assert report.details['points_skipped'] == 2
    assert report.status == 'inconclusive'
    assert report.worst_margin == 1.0
    assert report.to_document()['status'] == 'inconclusive'

    cert = certifier._Certification('t', grid)
    cert.add('bound', np.full(1000, np.nan), {'x': x})
    assert cert.report().status == 'inconclusive'


def poison_every(step):
    real = certifier.kernel.excess_times_rho

    def poisoned(excess):
        out = np.array(real(excess), dtype=float)
        out.flat[::step] = np.nan
        return out
    return poisoned


def test_unevaluable_products_make_expansion_error_inconclusive(monkeypatch):
    monkeypatch.setattr(certifier.kernel, 'excess_times_rho', poison_every(50))
    report = certifier.certify('expansion-error', quick=True)
    assert report.status == 'inconclusive'
    details = report.details
    assert details['points_skipped'] > certifier.MAX_SKIPPED_FRACTION * details['points_evaluated']
    assert not report.ok


def test_trig_log_values():
    assert certifier.trig_log_sum(0.0) == pytest.approx(4 * math.log(2))
    assert certifier.trig_log_sum(math.pi / 2) == pytest.approx(3 * math.log(3))
    report = certifier.certify_trig_log(GridSpec.at(('alpha',), [math.pi / 2]))
    assert report.ok


def test_trig_log_equality_case_is_reached():
    report = certifier.certify_trig_log(certifier.default_grid('trig-log'))
    assert report.ok
    assert report.details['max_sum'] <= 3 * math.log(3) + 1e-12
    assert report.details['max_sum'] >= 3 * math.log(3) - 1e-6


def test_multiplier_lower_reports_floor():
    report = certifier.certify('multiplier-lower', quick=True)
    assert report.ok
    assert report.details['min_ratio'] >= 30
    assert report.details['min_ratio'] >= 34.9
    assert report.details['analytic_floor'] == pytest.approx(34.906, abs=1e-3)


def test_multiplier_dominated_by_logarithm_at_small_radius():
    s = 1e-3
    alpha = np.linspace(0.0, 2 * math.pi, 60)
    ratio = certifier.multiplier_values(s, alpha) / s ** 2
    leading = -6 * math.sqrt(3) * math.log(s)
    assert np.all(ratio > 0.8 * leading)


def test_cauchy_schwarz_factor():
    assert certifier.cauchy_schwarz_factor(0.0, 1.0) == 0.5
    report = certifier.certify('cauchy-schwarz', quick=True)
    assert report.ok
    assert report.details['max_factor'] <= 198.0 / 395 + 1e-12
    assert report.worst_margin >= 0


def test_step5_origin_and_average():
    local = certifier.step5_local_average(np.zeros(3))
    assert local == pytest.approx(4 * math.pi / math.sqrt(3), rel=1e-12)

    value, err = certifier.step5_average()
    assert err < 1e-6
    assert value == pytest.approx(certifier.step5_average_angles(), rel=1e-2)
    assert value > local


def test_step5_radius_checks():
    report = certifier.certify('step5', eps_prime=0.03, quick=True)
    assert report.ok
    cross = report.details['checks']['average_cross_check']
    assert cross['worst_margin'] > 0
    assert report.details['average_cross_check_relative'] < certifier.STEP5_CROSS_CHECK_RTOL
    with pytest.raises(DomainError):
        certifier.certify_step5(0.08)
    with pytest.raises(DomainError):
        certifier.certify_step5(0.0)


def test_step5_disagreeing_averages_fail(monkeypatch):
    value, _ = certifier.step5_average()
    monkeypatch.setattr(certifier, 'step5_average_angles', lambda: 1.05 * value)
    report = certifier.certify('step5', eps_prime=0.03, quick=True)
    assert report.status == 'failed'
    assert report.details['checks']['average_cross_check']['worst_margin'] < 0
    assert report.details['checks']['max_vs_average']['worst_margin'] > 0


def test_certify_rejects_unknown_lemma_and_bad_arguments():
    with pytest.raises(DomainError):
        certifier.certify('no-such-lemma')
    with pytest.raises(DomainError):
        certifier.default_grid('no-such-lemma')
    with pytest.raises(DomainError):
        certifier.certify('trig-log', quick=True, tighten=0)
    with pytest.raises(DomainError):
        certifier.certify('trig-log', quick=True, tolerance=-1)


def test_certify_all_runs_selected_lemmas_in_given_order():
    reports = certifier.certify_all(quick=True, lemmas=['trig-log', 'q-bounds'])
    assert [r.lemma_id for r in reports] == ['trig-log', 'q-bounds']
