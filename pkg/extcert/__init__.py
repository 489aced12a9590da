"""
Numerical certification for the sharp Fourier extension inequality on the
circle: the triple autoconvolution kernel, the local geometry near the
antipodal lattice, grid certificates for the quantitative estimates, the
admissible-radius scan and the spectral study of the quadratic form.
"""
from . import quadrature

from . import kernel
from . import geometry
from . import certifier
from . import threshold
from . import spectrum


rho = kernel.rho

GridSpec = certifier.GridSpec
CertReport = certifier.CertReport
certify_all = certifier.certify_all

ThresholdCurve = threshold.ThresholdCurve

QFormMatrix = spectrum.QFormMatrix

__all__ = [
    'quadrature', 'kernel', 'geometry', 'certifier', 'threshold', 'spectrum',
    'rho', 'GridSpec', 'CertReport', 'certify_all', 'ThresholdCurve',
    'QFormMatrix']
