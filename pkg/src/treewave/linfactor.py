"""Spherically symmetric linear factors approximating a wave function.

A linear factor puts weight ``alpha_k`` on every i.i.d. input at distance k.
Damping a bounded solution ``beta`` of the rescaled eigen-recurrence by
``rho**k`` gives coefficients of finite norm whose eigen-defect ``delta``
has norm of order ``1 - rho`` relative to the coefficient norm.

Internally everything is carried in the scaled form
``s_k = rho**k * beta_k`` (so ``alpha_k = (d-1)**(-k/2) * s_k``): the tree
weights ``d (d-1)**(k-1)`` cancel the geometric factor exactly and long
truncations never underflow.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from treewave.tree import RootedTree
from treewave.wavefield import covariance_sequence

DEFAULT_LAMBDA_OFFSET = 1e-6
TRUNCATION_RTOL = 1e-12


def _spectral_edge(d: int) -> float:
    return 2.0 * math.sqrt(d - 1)


def beta_sequence(d: int, lam: float, K: int) -> np.ndarray:
    """beta_0..beta_K: beta_0 = 1, d*beta_1 = lam*sqrt(d-1), then a unit-circle recurrence."""
    if d < 3:
        raise ValueError("degree must be at least 3")
    if abs(lam) >= _spectral_edge(d):
        raise ValueError(f"need |lambda| < 2 sqrt(d-1) = {_spectral_edge(d)}, got {lam}")
    if K < 1:
        raise ValueError("K must be at least 1")
    r = math.sqrt(d - 1)
    beta = np.empty(K + 1)
    beta[0] = 1.0
    beta[1] = lam * r / d
    t = lam / r
    for k in range(1, K):
        beta[k + 1] = t * beta[k] - beta[k - 1]
    return beta


def beta_amplitude(d: int, lam: float) -> float:
    """Exact sup of |beta_k|: beta_k = A cos(k theta) + B sin(k theta)."""
    r = math.sqrt(d - 1)
    theta = math.acos(lam / (2.0 * r))
    b1 = lam * r / d
    B = (b1 - math.cos(theta)) / math.sin(theta)
    return math.hypot(1.0, B)


@dataclass(frozen=True)
class FactorCoefficients:
    degree: int
    eigenvalue: float
    rho: float
    truncation: int
    alpha: np.ndarray
    norm_sq: float
    delta: np.ndarray
    delta_norm_sq: float
    scaled: np.ndarray = field(repr=False)

    def preview(self, n: int = 8) -> list:
        return self.alpha[:n].tolist()


def _delta_from_alpha(d: int, lam: float, alpha: np.ndarray) -> np.ndarray:
    a = np.concatenate([alpha, [0.0, 0.0]])
    n = len(alpha)
    delta = np.empty(n + 1)
    delta[0] = d * a[1] - lam * a[0]
    k = np.arange(1, n + 1)
    delta[1:] = (d - 1) * a[k + 1] - lam * a[k] + a[k - 1]
    return delta


def _scaled_delta_norm_sq(d: int, lam: float, s: np.ndarray) -> float:
    """delta_0^2 + sum_k d (d-1)^(k-1) delta_k^2 evaluated from the scaled sequence."""
    r = math.sqrt(d - 1)
    z = np.concatenate([s, [0.0, 0.0]])
    n = len(s)
    d0 = d * z[1] / r - lam * z[0]
    k = np.arange(1, n + 1)
    dk = r * z[k + 1] - lam * z[k] + r * z[k - 1]
    return float(d0 * d0 + d / (d - 1) * np.dot(dk, dk))


def alpha_coefficients(d: int, lam: float, rho: float, N: int = None,
                       lambda_offset: float = DEFAULT_LAMBDA_OFFSET) -> FactorCoefficients:
    """Normalized damped coefficients alpha_0..alpha_N.

    At the spectral edge |lam| = 2 sqrt(d-1) the construction is applied to
    ``lam`` moved inward by ``lambda_offset``. With ``N=None`` the sequence
    is cut where the norm-weighted term drops below 1e-12 of its maximum.
    """
    if not 0.5 <= rho < 1.0:
        raise ValueError(f"rho must lie in [1/2, 1), got {rho}")
    edge = _spectral_edge(d)
    if abs(lam) > edge + 1e-12:
        raise ValueError(f"|lambda| must not exceed 2 sqrt(d-1) = {edge}")
    lam_eff = math.copysign(edge - lambda_offset, lam) if abs(lam) >= edge else float(lam)

    if N is None:
        # bounded beta: rho^k * amp < tol * amp once k > log(tol)/log(rho)
        N = max(1, int(math.ceil(math.log(TRUNCATION_RTOL) / math.log(rho))))
    if N < 1:
        raise ValueError("N must be at least 1")
    beta = beta_sequence(d, lam_eff, N)
    s = rho ** np.arange(N + 1) * beta

    weights = np.full(N + 1, d / (d - 1))
    weights[0] = 1.0
    norm = math.sqrt(float(np.dot(weights, s * s)))
    s = s / norm
    alpha = s * (d - 1) ** (-0.5 * np.arange(N + 1))
    delta = _delta_from_alpha(d, lam_eff, alpha)
    return FactorCoefficients(
        degree=d,
        eigenvalue=lam_eff,
        rho=float(rho),
        truncation=N,
        alpha=alpha,
        norm_sq=float(np.dot(weights, s * s)),
        delta=delta,
        delta_norm_sq=_scaled_delta_norm_sq(d, lam_eff, s),
        scaled=s,
    )


def delta_norm_sq_from_alpha(coeffs: FactorCoefficients) -> float:
    """Direct (unscaled) evaluation; only meaningful while alpha does not underflow."""
    d = coeffs.degree
    w = d * (d - 1.0) ** np.arange(len(coeffs.delta) - 1)
    return float(coeffs.delta[0] ** 2 + np.dot(w, coeffs.delta[1:] ** 2))


def factor_covariance(coeffs: FactorCoefficients, distance: int) -> float:
    """Exact covariance of the factor at two vertices ``distance`` apart.

    Every vertex w projects onto the u-v path at some p_t and hangs h below it,
    so it sits at distance t + h from u and D - t + h from v. For h >= 1 there
    are (branches at p_t) * (d-1)^(h-1) such w.
    """
    if distance < 0:
        raise ValueError("distance must be nonnegative")
    d, s, N = coeffs.degree, coeffs.scaled, coeffs.truncation
    D = distance
    if D > 2 * N:
        return 0.0
    scale = (d - 1.0) ** (-0.5 * D)
    total = 0.0
    for t in range(D + 1):
        i0, j0 = t, D - t
        if i0 > N or j0 > N:
            continue
        # h = 0: the path vertex itself
        total += s[i0] * s[j0] * scale
        if D == 0:
            branches = d
        elif t == 0 or t == D:
            branches = d - 1
        else:
            branches = d - 2
        hmax = N - max(i0, j0)
        if hmax >= 1 and branches:
            h = np.arange(1, hmax + 1)
            # (d-1)^(h-1) alpha_{i0+h} alpha_{j0+h} = (d-1)^(-1-D/2) s s
            total += branches * scale / (d - 1) * float(np.dot(s[i0 + h], s[j0 + h]))
    return total


def factor_weights(coeffs: FactorCoefficients, tree: RootedTree, v: int) -> np.ndarray:
    """Weight vector w with X_v = w @ Z over the vertices of ``tree``."""
    dist = tree.distances_from(v)
    N = coeffs.truncation
    # ball must hold every vertex within distance N of v
    for u in np.nonzero(dist < N)[0]:
        if not tree.is_full(int(u)):
            raise ValueError(f"radius-{N} neighbourhood of vertex {v} is not contained in the ball")
    w = np.zeros(tree.n_vertices)
    inside = dist <= N
    w[inside] = coeffs.alpha[dist[inside]]
    return w


def apply_factor(coeffs: FactorCoefficients, tree: RootedTree, z: np.ndarray, v: int):
    """X_v = sum_k alpha_k * (sum of z over vertices at distance k from v).

    ``z`` has shape (V,) or (n, V); the result is a scalar or length-n array.
    """
    return np.asarray(z) @ factor_weights(coeffs, tree, v)


def fit_delta_constant(rhos, delta_norms) -> float:
    """Smallest C with delta_norm_sq <= C (1 - rho) over the sweep."""
    rhos = np.asarray(rhos, dtype=float)
    return float(np.max(np.asarray(delta_norms) / (1.0 - rhos)))


def convergence_sweep(d: int = 3, lam: float = None, js=range(1, 11),
                      lambda_offset: float = DEFAULT_LAMBDA_OFFSET, n_factor: float = 50.0,
                      max_distance: int = 3):
    """delta_norm_sq and covariance error along rho = 1 - 2^-j with N = n_factor/(1-rho)."""
    lam = -_spectral_edge(d) if lam is None else lam
    rows = []
    for j in js:
        rho = 1.0 - 2.0 ** (-j)
        N = int(math.ceil(n_factor / (1.0 - rho)))
        c = alpha_coefficients(d, lam, rho, N, lambda_offset)
        sigma = covariance_sequence(d, c.eigenvalue, max_distance).values
        cov = [factor_covariance(c, k) for k in range(max_distance + 1)]
        rows.append({"j": j, "rho": rho, "N": N, "delta_norm_sq": c.delta_norm_sq,
                     "covariance": cov,
                     "max_cov_error": float(np.max(np.abs(np.array(cov) - sigma)))})
    return rows
