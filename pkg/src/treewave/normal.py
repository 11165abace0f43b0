"""Standard normal helpers shared by every module.

The CDF goes through ``erfc`` so that the lower tail keeps full relative
precision; ``math.erfc`` is also what the numba kernels call, so scalar,
vectorised and compiled paths agree.
"""

import math

import numpy as np
from scipy import special

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_cdf(x):
    """Phi(x), scalar or array."""
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(-float(x) / SQRT2)
    return 0.5 * special.erfc(-np.asarray(x, dtype=float) / SQRT2)


def norm_pdf(x):
    if np.ndim(x) == 0:
        return INV_SQRT_2PI * math.exp(-0.5 * float(x) ** 2)
    x = np.asarray(x, dtype=float)
    return INV_SQRT_2PI * np.exp(-0.5 * x * x)


def gaussian_tail_bound(r: float) -> float:
    """Upper bound exp(-r^2/2) / (r sqrt(2 pi)) on P(Z > r), valid for r > 0."""
    if r <= 0:
        raise ValueError("tail bound needs r > 0")
    return math.exp(-0.5 * r * r) / (r * math.sqrt(2.0 * math.pi))


def bivariate_normal_pdf(u, v, rho: float):
    """Density of a centered bivariate normal with unit variances and correlation rho."""
    one_m = 1.0 - rho * rho
    q = (u * u - 2.0 * rho * u * v + v * v) / one_m
    return np.exp(-0.5 * q) / (2.0 * math.pi * math.sqrt(one_m))
