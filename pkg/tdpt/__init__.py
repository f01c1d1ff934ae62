"""
TDPT Imaging

Frequency- and time-dependent polarization tensors of small 2D acoustic inclusions:
boundary integral solvers, multi-static response synthesis, and reconstruction of
size, contrast, equivalent ellipse and fine boundary shape from noisy measurements.
"""

__version__ = "0.1.0"
__author__ = "TDPT Imaging Team"
__description__ = "Polarization-tensor imaging of small acoustic inclusions"
