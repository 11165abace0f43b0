"""Finite-cluster certificate for the threshold percolation {X_v <= tau}.

For d = 3 and lam = -2 sqrt(2) the sufficient condition along paths of four
vertices reduces to bounding, over d1, the probability
``f(d1) = P(Z1 <= d1, Z2/q <= Z1 + a - d1)`` with ``q = sqrt(2)`` and
``a = tau (2 sqrt 6 + 2 sqrt 3 - sqrt(3/2))``. Clusters are finite whenever
``max f < 1/4``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from treewave.normal import INV_SQRT_2PI, gaussian_tail_bound, norm_cdf, norm_pdf

Q = math.sqrt(2.0)
A_PER_TAU = 2 * math.sqrt(6) + 2 * math.sqrt(3) - math.sqrt(3) / math.sqrt(2)
LOWER_CUTOFF = -10.0
PANEL = 1e-3
DEFAULT_DECLARED_ERROR = 1e-7
ROOT_BRACKET = (-3.0, 3.0)
ROOT_XTOL = 1e-9


def shift_constant(tau: float) -> float:
    """The x-independent sum a = tau (2 sqrt 6 + 2 sqrt 3 - sqrt 3 / sqrt 2)."""
    return tau * A_PER_TAU


def f_of_d1(d1: float, a: float, q: float = Q) -> float:
    """P(Z1 <= d1, Z2 <= q (Z1 + a - d1)) for independent standard normals.

    Composite Simpson on [-10, d1] of phi(z) Phi(q (z + a - d1)); the mass
    below -10 is under 1e-23.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    if d1 <= LOWER_CUTOFF:
        return 0.0
    n = int(math.ceil((d1 - LOWER_CUTOFF) / PANEL))
    n += n % 2
    z = np.linspace(LOWER_CUTOFF, d1, n + 1)
    g = norm_pdf(z) * norm_cdf(q * (z + a - d1))
    h = (d1 - LOWER_CUTOFF) / n
    val = h / 3.0 * (g[0] + g[-1] + 4.0 * g[1:-1:2].sum() + 2.0 * g[2:-1:2].sum())
    return float(min(max(val, 0.0), 1.0))


def f_prime(d1: float, a: float, q: float = Q) -> float:
    """Closed-form derivative of :func:`f_of_d1` in d1.

    phi(d1) Phi(q a) - q/sqrt(1+q^2) phi(d2) Phi(sqrt(1+q^2) a - d2/q) with
    d2 = q (a - d1) / sqrt(1+q^2); the second term is the Gaussian product
    phi(z) phi(q (z + a - d1)) integrated up to d1.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    s = math.sqrt(1.0 + q * q)
    d2 = q / s * (a - d1)
    return (INV_SQRT_2PI * math.exp(-0.5 * d1 * d1) * norm_cdf(q * a)
            - q / s * INV_SQRT_2PI * math.exp(-0.5 * d2 * d2) * norm_cdf(s * a - d2 / q))


def quadrature_error_bound(d1: float, a: float, q: float = Q) -> float:
    """Simpson error plus the neglected tail for :func:`f_of_d1`.

    Simpson is exact to h^4/180 * (b - a) * sup|g''''|; sup|g''''| is estimated
    on a fine grid and doubled.
    """
    z = np.linspace(LOWER_CUTOFF, d1, 20001)
    g = norm_pdf(z) * norm_cdf(q * (z + a - d1))
    dz = z[1] - z[0]
    g4 = np.abs(np.diff(g, 4)) / dz ** 4
    return 2.0 * PANEL ** 4 / 180.0 * (d1 - LOWER_CUTOFF) * float(g4.max()) + gaussian_tail_bound(-LOWER_CUTOFF)


@dataclass(frozen=True)
class Certificate:
    tau: float
    d: int
    m: int
    q: float
    a: float
    d1_star: float
    f_max: float
    bound: float
    margin: float
    declared_error: float
    valid: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def certify_finite_components(tau: float, declared_error: float = DEFAULT_DECLARED_ERROR) -> Certificate:
    """Maximise f over d1 by bisection on f' and compare with 1/(d-1)^m = 1/4."""
    d, m = 3, 2
    a = shift_constant(tau)
    lo, hi = ROOT_BRACKET
    flo, fhi = f_prime(lo, a), f_prime(hi, a)
    if not (flo > 0 > fhi):
        # for a << 0, f' underflows to 0 across the bracket
        if flo == 0.0 and fhi == 0.0 and a < 0:
            return _degenerate_certificate(tau, a, declared_error)
        raise RuntimeError(f"f' does not change sign on {ROOT_BRACKET} for tau={tau}: "
                           f"f'({lo})={flo:.3e}, f'({hi})={fhi:.3e}")
    d1_star = optimize.bisect(lambda x: f_prime(x, a), lo, hi, xtol=ROOT_XTOL, maxiter=200)
    f_max = f_of_d1(d1_star, a)
    bound = 1.0 / (d - 1) ** m
    return Certificate(
        tau=float(tau), d=d, m=m, q=Q, a=a, d1_star=float(d1_star), f_max=f_max,
        bound=bound, margin=bound - f_max, declared_error=float(declared_error),
        valid=bool(f_max + declared_error < bound),
    )


def _degenerate_certificate(tau, a, declared_error):
    # Z1 <= d1 forces Z2 <= q (Z1 + a - d1) <= q a, so f <= Phi(q a) for every d1
    f_max = norm_cdf(Q * a)
    return Certificate(tau=float(tau), d=3, m=2, q=Q, a=a, d1_star=float("nan"), f_max=f_max,
                       bound=0.25, margin=0.25 - f_max, declared_error=float(declared_error),
                       valid=bool(f_max + declared_error < 0.25))


def percolation_density(tau: float) -> float:
    """P(X_v <= tau) = Phi(tau)."""
    return norm_cdf(tau)
