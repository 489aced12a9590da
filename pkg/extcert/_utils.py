# encoding: utf-8
"""
Small helpers shared by the numerical modules: exception bases, the
exception-swallowing wrapper used for per-point grid evaluation, a lazy
attribute descriptor and an order-preserving parallel map.
"""
import concurrent.futures
import functools
import logging
import weakref

import numpy as np


def log_and_ignore_exceptions(
    f, exceptions=Exception, logger=logging.getLogger('exceptions')
):
    """
    Wraps a function to catch its exceptions, log them, and return None.

    Grid scans use this so that a single failing point is counted as skipped
    instead of aborting the whole scan.
    """
    @functools.wraps(f)
    def wrapper(*a, **kw):
        try:
            return f(*a, **kw)
        except exceptions:
            logger.exception("ignored numerical failure in %s%r", f.__name__, a)
            return None

    return wrapper


class LazyFrom(object):
    """
    Attribute filled on first access by a shared builder method.

    Several attributes can name the same builder, as the head rule nodes,
    weights and Bessel table of a L{RadialIntegrator} do; one call to the
    builder then fills all of them. Values are held per instance in a weak
    dictionary, so deleting the attribute makes the next read rebuild it.
    """
    def __init__(self, builder):
        """
        builder is the name of a method without arguments that assigns this
        attribute (and usually its siblings) through the descriptor.
        """
        self.builder = builder
        self.name = builder
        self.values = weakref.WeakKeyDictionary()

    def __set_name__(self, owner, name):
        self.name = name

    def __get__(self, obj, cls):
        if obj is None:
            return self
        if obj not in self.values:
            getattr(obj, self.builder)()
        assert obj in self.values, "%s() did not assign %s" % (self.builder, self.name)
        return self.values[obj]

    def __set__(self, obj, value):
        self.values[obj] = value

    def __delete__(self, obj):
        self.values.pop(obj, None)


def parallel_map(func, items, jobs=1):
    """
    Applies func to every item and returns the results in input order.

    With jobs > 1 the calls run on a thread pool; the result list does not
    depend on the number of workers, so reductions over it stay deterministic.
    """
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


def xlogx(x):
    """x * log|x| with the continuous extension 0 at x = 0."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    with np.errstate(divide='ignore', invalid='ignore'):
        out = np.where(ax > 0.0, x * np.log(np.where(ax > 0.0, ax, 1.0)), 0.0)
    return out


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class SingularityError(DomainError):
    """Evaluation requested exactly at a singular point."""


class PrecisionError(ArithmeticError):
    """
    The requested accuracy could not be reached.

    @ivar estimate: Best-effort value computed before giving up, or None.
    """
    def __init__(self, message, estimate=None):
        super(PrecisionError, self).__init__(message)
        self.estimate = estimate
