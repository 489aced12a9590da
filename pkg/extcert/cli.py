"""
Command-line front end.

    extcert rho --r 1.5
    extcert certify --all --eps 0.05
    extcert scan --lo 0.01 --hi 0.13 --points 25 --plot fig.svg
    extcert spectrum --N 8 --d 0
    extcert report --out report.json

Exit status: 0 success, 1 a certification failed, 2 usage error,
3 numerical or I/O failure.
"""
import argparse
import collections
import json
import logging
import sys

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

from . import certifier, kernel, spectrum, threshold  # noqa: E402
from ._utils import DomainError, PrecisionError  # noqa: E402


logger = logging.getLogger(__name__)


EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

SCHEMA_VERSION = 1

#: Threshold grids in quick reports are this fraction of the default.
QUICK_RESOLUTION = 0.1

COMMANDS = ('rho', 'certify', 'scan', 'spectrum', 'report')
FORMATS = ('json', 'csv', 'svg')

LHS_COLOR = '#e6b800'
RHS_COLOR = '#1f4fbf'


class RunConfig(object):
    """
    A validated command with its parameters.

    @ivar command:       One of L{COMMANDS}.
    @ivar parameters:    Defaults merged with the given values.
    @ivar output_format: 'json', 'csv' or 'svg'.
    """

    DEFAULTS = {
        'rho': dict(r=None, tol=1e-10, out=None),
        'certify': dict(eps=certifier.BALL_RADIUS, eps_prime=None, lemmas=(), all=False,
                        tighten=1.0, tol=certifier.DEFAULT_TOLERANCE, quick=False,
                        grid_s=None, grid_alpha=None, jobs=1, out=None),
        'scan': dict(lo=0.01, hi=0.13, points=25, grid_s=None, grid_alpha=None,
                     tol=None, plot=None, jobs=1, out=None),
        'spectrum': dict(N=8, d=0, count=5, scaling=None, concentration=False,
                         method='auto', cache=None, jobs=1, out=None),
        'report': dict(eps=certifier.BALL_RADIUS, eps_prime=None, tighten=1.0,
                       tol=certifier.DEFAULT_TOLERANCE, quick=False, lo=0.01, hi=0.13,
                       points=25, plot=None, N=4, cache=None, jobs=1, out=None),
    }

    POSITIVE = ('tol', 'tighten', 'eps', 'eps_prime', 'lo', 'hi')
    COUNTS = ('points', 'grid_s', 'grid_alpha', 'jobs', 'count')

    def __init__(self, command, parameters=None, output_format='json'):
        if command not in COMMANDS:
            raise ConfigError("unknown command %r" % (command,))
        if output_format not in FORMATS:
            raise ConfigError("unknown output format %r" % (output_format,))
        parameters = dict(parameters or {})
        unknown = sorted(set(parameters) - set(self.DEFAULTS[command]))
        if unknown:
            raise ConfigError("unknown parameter(s) for %s: %s" % (command, ', '.join(unknown)))

        merged = dict(self.DEFAULTS[command])
        merged.update((k, v) for k, v in parameters.items() if v is not None)
        for key in self.POSITIVE:
            value = merged.get(key)
            if value is not None and not value > 0:
                raise ConfigError("%s must be positive, got %r" % (key, value))
        for key in self.COUNTS:
            value = merged.get(key)
            if value is not None and value < 1:
                raise ConfigError("%s must be at least 1, got %r" % (key, value))
        if command == 'rho' and merged['r'] is None:
            raise ConfigError("rho needs --r")
        if output_format == 'csv' and command != 'scan':
            raise ConfigError("csv output is only available for scan")

        self.command = command
        self.parameters = merged
        self.output_format = output_format

    def __getitem__(self, key):
        return self.parameters[key]

    @classmethod
    def from_args(cls, args):
        values = dict((k, v) for k, v in vars(args).items()
                      if k in cls.DEFAULTS[args.command])
        return cls(args.command, values, getattr(args, 'format', None) or 'json')

    def __repr__(self):
        return '<RunConfig %s %r>' % (self.command, sorted(self.parameters.items()))


def _document(kind, payload):
    doc = collections.OrderedDict([('schema_version', SCHEMA_VERSION), ('kind', kind)])
    doc.update(payload)
    return doc


def _dump(doc, path):
    text = json.dumps(certifier.jsonable(doc), indent=2, ensure_ascii=False) + '\n'
    _write(text, path)


def _write(text, path):
    if path is None or path == '-':
        sys.stdout.write(text)
        return
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(text)
    logger.info("wrote %s", path)


def emit_plot(curve, path):
    """
    Writes both sides of a threshold curve as an SVG line chart: the inf
    side in yellow, the sup side in blue, the crossing marked.
    """
    if not len(curve):
        raise DomainError("cannot plot an empty curve")
    matplotlib.rcParams['svg.hashsalt'] = 'extcert'
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    try:
        marker = 'o' if len(curve) == 1 else None
        ax.plot(curve.eps_values, curve.lhs, color=LHS_COLOR, marker=marker,
                label='inf side')
        ax.plot(curve.eps_values, curve.rhs, color=RHS_COLOR, marker=marker,
                label='sup side')
        crossing = threshold.curve_crossing(curve)
        if crossing is not None:
            ax.axvline(crossing, color='0.5', linestyle='--', linewidth=0.8)
            ax.annotate('eps = %.3f' % (crossing,), xy=(crossing, 0.5),
                        xycoords=('data', 'axes fraction'),
                        xytext=(4, 0), textcoords='offset points')
        ax.set_xlabel('eps')
        ax.legend(loc='best')
        fig.tight_layout()
        fig.savefig(path, format='svg', metadata={'Date': None})
    finally:
        plt.close(fig)
    logger.info("plotted %d points to %s", len(curve), path)
    return path


def _grid_override(grid, config):
    for name, key in (('s', 'grid_s'), ('alpha', 'grid_alpha')):
        if config[key] is not None and name in grid.names:
            grid = grid.with_points(name, config[key])
    return grid


def _certify(config):
    eps = config['eps']
    eps_prime = config['eps_prime']
    if eps_prime is None:
        eps_prime = threshold.eps_prime_of(eps)
    lemmas = list(config.parameters.get('lemmas') or ()) or list(certifier.CERTIFIERS)
    reports = []
    for lemma_id in lemmas:
        grid = certifier.default_grid(lemma_id, quick=config['quick'],
                                      eps=eps, eps_prime=eps_prime)
        if 'grid_s' in config.parameters:
            grid = _grid_override(grid, config)
        reports.append(certifier.certify(
            lemma_id, eps=eps, eps_prime=eps_prime, tighten=config['tighten'],
            tolerance=config['tol'], jobs=config['jobs'], grid=grid))
    return reports


def _certification_status(reports):
    if any(r.status == 'inconclusive' for r in reports):
        return EXIT_NUMERICAL
    if not all(r.passed for r in reports):
        return EXIT_FAILED
    return EXIT_OK


def _scan_grid(config):
    if config['grid_s'] is None and config['grid_alpha'] is None:
        return None
    template = threshold.default_grid(config['hi'])
    return _grid_override(template, config)


def _scan(config, lo, hi, points, grid=None, resolution=1.0):
    if not lo < hi:
        raise ConfigError("need lo < hi, got %r, %r" % (lo, hi))
    curve = threshold.scan(lo, hi, points, grid=grid, jobs=config['jobs'],
                           resolution=resolution)
    if config['plot']:
        emit_plot(curve, config['plot'])
    return curve


def run_rho(config):
    r = config['r']
    estimate = kernel.rho(r, tol=config['tol'])
    payload = collections.OrderedDict([
        ('r', r),
        ('value', estimate.value),
        ('method', estimate.method),
        ('error_bound', estimate.error_bound),
    ])
    if 0.0 < r <= 3.0 and abs(r - 1.0) >= kernel.NEAR_SINGULAR:
        quad = kernel.rho_quadrature(r)
        ell = kernel.rho_elliptic(r)
        scale = max(abs(ell.value), 1e-300)
        payload['cross_check'] = collections.OrderedDict([
            ('elliptic', ell.value),
            ('quadrature', quad.value),
            ('relative_difference', abs(quad.value - ell.value) / scale),
        ])
    _dump(_document('rho', payload), config['out'])
    return EXIT_OK


def run_certify(config):
    if not config['all'] and not config['lemmas']:
        raise ConfigError("certify needs --all or at least one --lemma")
    if config['all']:
        config.parameters['lemmas'] = ()
    reports = _certify(config)
    _dump(certifier.reports_to_document(reports), config['out'])
    return _certification_status(reports)


def run_scan(config):
    curve = _scan(config, config['lo'], config['hi'], config['points'], _scan_grid(config))
    if config.output_format == 'csv':
        _write(curve.to_csv(), config['out'])
        return EXIT_OK
    payload = curve.to_document()
    if config['tol'] is not None:
        eps = threshold.max_epsilon(config['tol'], grid=_scan_grid(config), jobs=config['jobs'])
        payload['max_epsilon'] = eps
        payload['max_eps_prime'] = threshold.eps_prime_of(eps)
    _dump(_document('scan', payload), config['out'])
    return EXIT_OK


def _integrator(config, nmax):
    integrator = spectrum.integrator_for(nmax)
    if config['cache']:
        try:
            integrator.load(config['cache'])
        except FileNotFoundError:
            logger.info("no cache at %s yet", config['cache'])
    return integrator


def _persist(config, N):
    if config['cache']:
        spectrum.integrator_for(2 * N + 1).persist(config['cache'])


def _spectrum_payload(config, N, d, count):
    integrator = _integrator(config, 2 * N + 1)
    matrix = spectrum.assemble(N, d, integrator, jobs=config['jobs'])
    count = min(count, matrix.dimension)
    values = spectrum.smallest_eigenvalues(matrix, count, config.parameters.get('method', 'auto'))
    payload = collections.OrderedDict([
        ('N', N),
        ('d', d),
        ('dimension', matrix.dimension),
        ('norm', matrix.norm),
        ('asymmetry', matrix.asymmetry),
        ('smallest_eigenvalues', values),
    ])
    if d == 0:
        payload['constant_residual'] = matrix.constant_residual()
    return payload


def run_spectrum(config):
    N, d = config['N'], config['d']
    if N % 2 or d % 2:
        raise ConfigError("N and d must be even")
    payload = _spectrum_payload(config, N, d, config['count'])
    if config['scaling']:
        Ns = sorted(config['scaling'])
        payload['scaling'] = spectrum.scaling_study(
            Ns, _integrator(config, 2 * Ns[-1] + 1), jobs=config['jobs'],
            method=config['method'])
    if config['concentration']:
        payload['concentration'] = spectrum.concentration_report(
            N, integrator=_integrator(config, 2 * N + 1), jobs=config['jobs'])
    _persist(config, max([N] + list(config['scaling'] or ())))
    _dump(_document('spectrum', payload), config['out'])
    return EXIT_OK


def run_report(config):
    reports = _certify(config)
    curve = _scan(config, config['lo'], config['hi'], config['points'],
                  resolution=QUICK_RESOLUTION if config['quick'] else 1.0)
    payload = collections.OrderedDict([
        ('certification', certifier.reports_to_document(reports)),
        ('scan', curve.to_document()),
        ('spectrum', _spectrum_payload(config, config['N'], 0, 3)),
    ])
    _persist(config, config['N'])
    _dump(_document('report', payload), config['out'])
    return _certification_status(reports)


RUNNERS = {
    'rho': run_rho,
    'certify': run_certify,
    'scan': run_scan,
    'spectrum': run_spectrum,
    'report': run_report,
}


def run(config):
    """Executes a L{RunConfig}; returns the exit status."""
    logger.info("running %r", config)
    try:
        return RUNNERS[config.command](config)
    except ConfigError:
        raise
    except (PrecisionError, ArithmeticError, OSError, threshold.BracketError) as e:
        logger.error("%s failed: %s", config.command, e)
        partial = getattr(e, 'estimate', None)
        doc = _document('error', collections.OrderedDict([
            ('command', config.command),
            ('error', '%s: %s' % (type(e).__name__, e)),
            ('estimate', _estimate_document(partial)),
        ]))
        try:
            _dump(doc, config['out'])
        except OSError:
            _dump(doc, None)
        return EXIT_NUMERICAL


def _estimate_document(estimate):
    if estimate is None:
        return None
    if isinstance(estimate, kernel.KernelEstimate):
        return collections.OrderedDict(estimate._asdict())
    try:
        return [float(x) for x in estimate]
    except TypeError:
        return float(estimate)


def _int_list(text):
    try:
        return [int(x) for x in text.split(',') if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers: %r" % (text,))


def build_parser():
    parser = argparse.ArgumentParser(
        prog='extcert',
        description='Numerical certification for the sharp extension inequality on the circle.')
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help='-v for progress, -vv for debugging output')
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    def common(p, jobs=True):
        p.add_argument('--out', metavar='PATH', help='output file (default: stdout)')
        if jobs:
            p.add_argument('--jobs', type=int, metavar='INT', help='worker threads')

    p = sub.add_parser('rho', help='evaluate the triple autoconvolution')
    p.add_argument('--r', type=float, required=True)
    p.add_argument('--tol', type=float)
    common(p, jobs=False)

    p = sub.add_parser('certify', help='run grid certifications')
    p.add_argument('--all', action='store_true', help='run every certifier')
    p.add_argument('--lemma', dest='lemmas', action='append', choices=list(certifier.CERTIFIERS),
                   metavar='ID', help='certifier to run (repeatable)')
    p.add_argument('--eps', type=float)
    p.add_argument('--eps-prime', dest='eps_prime', type=float)
    p.add_argument('--tighten', type=float, help='scale every bound by this factor')
    p.add_argument('--tol', type=float, help='pass tolerance on margins')
    p.add_argument('--quick', action='store_true', help='reduced grids')
    p.add_argument('--grid-s', dest='grid_s', type=int, metavar='INT')
    p.add_argument('--grid-alpha', dest='grid_alpha', type=int, metavar='INT')
    common(p)

    p = sub.add_parser('scan', help='tabulate both sides of the radius condition')
    p.add_argument('--lo', type=float)
    p.add_argument('--hi', type=float)
    p.add_argument('--points', type=int)
    p.add_argument('--grid-s', dest='grid_s', type=int, metavar='INT')
    p.add_argument('--grid-alpha', dest='grid_alpha', type=int, metavar='INT')
    p.add_argument('--tol', type=float, help='also bisect for the crossing to this tolerance')
    p.add_argument('--plot', metavar='PATH', help='write an SVG plot')
    p.add_argument('--format', choices=('json', 'csv'), default='json')
    common(p)

    p = sub.add_parser('spectrum', help='assemble the form and compute eigenvalues')
    p.add_argument('--N', type=int)
    p.add_argument('--d', type=int)
    p.add_argument('--count', type=int)
    p.add_argument('--scaling', type=_int_list, metavar='N1,N2,...')
    p.add_argument('--concentration', action='store_true')
    p.add_argument('--method', choices=spectrum.EIGEN_METHODS)
    p.add_argument('--cache', metavar='PATH', help='radial integral cache file')
    common(p)

    p = sub.add_parser('report', help='certify, scan and a small spectrum in one document')
    p.add_argument('--eps', type=float)
    p.add_argument('--eps-prime', dest='eps_prime', type=float)
    p.add_argument('--tighten', type=float)
    p.add_argument('--tol', type=float)
    p.add_argument('--quick', action='store_true')
    p.add_argument('--lo', type=float)
    p.add_argument('--hi', type=float)
    p.add_argument('--points', type=int)
    p.add_argument('--plot', metavar='PATH')
    p.add_argument('--N', type=int)
    p.add_argument('--cache', metavar='PATH')
    common(p)
    return parser


def _configure_logging(verbosity):
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(
        format="%(asctime)s %(levelname)s %(name)s: %(message)s", level=level)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        config = RunConfig.from_args(args)
        return run(config)
    except (ConfigError, DomainError) as e:
        parser.print_usage(sys.stderr)
        sys.stderr.write('extcert: error: %s\n' % (e,))
        return EXIT_USAGE


class ConfigError(ValueError):
    pass


if __name__ == '__main__':
    sys.exit(main())
