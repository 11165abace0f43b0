"""Grid quadrature for the path-component probabilities at d = 3, lam = -2 sqrt 2.

``f_k(x_{k+1}, x_k)`` is the conditional probability, given the values at
the two ends of a path segment, that the k vertices further along stay
below ``tau`` while their side neighbours rise above it. ``f_0`` is closed
form; each further level is a one-dimensional Gaussian integral of the
previous one. Tables live on one uniform grid, are integrated by the
trapezoid rule and read between nodes by bilinear interpolation. The
probabilities ``p'_s`` that a fixed path of s vertices is a whole component
are trapezoid sums of products of tables against the bivariate normal
density of an adjacent pair.

Grid nodes are ``lo + i h``, ``h = 2R / (N - 1)``, with ``lo`` shifted by less
than ``h/2`` from ``-R`` so that ``tau`` is a node and the ``(-inf, tau]``
integration limits fall on the grid.
"""

import math
import struct
from dataclasses import dataclass, field

import numba
import numpy as np

from treewave.normal import gaussian_tail_bound, norm_cdf, norm_pdf
from treewave.percolation import Certificate

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)
SQRT6 = math.sqrt(6.0)
SIGMA1 = -2.0 * SQRT2 / 3.0
NOISE_SCALE = 1.0 / (2.0 * SQRT3)

DEFAULT_R = 7.0
DESK_N = 2000
FULL_N = 20000
FP_ALLOWANCE = 1e-10
BLOCK_COLUMNS = 256

# closed-form error totals for R = 7, tau = 0.086: sup |f_k_hat - f_k| <= C_k / N^2 + c_k
LEVEL_COEFFICIENTS = (20.0, 361.0, 1606.0)
LEVEL_CONSTANTS = (1.4e-12, 2.0e-12, 2.3e-12)
FINAL_N2, FINAL_CONST, FINAL_N4 = 17094.0, 3.9e-5, 5e5

GRID_MAGIC = b"TWGRID01"
_HEADER = struct.Struct("<8siidd")


@dataclass(frozen=True)
class DerivativeBounds:
    """Uniform bounds on gradient norms and Hessian operator norms of f_0, f_1, f_2."""

    grad_f0: float = 4.2
    grad_f1: float = 5.9
    grad_f2: float = 6.4
    hess_f0: float = 13.1
    hess_f1: float = 96.1
    hess_f2: float = 252.8

    def grad(self, k: int) -> float:
        return (self.grad_f0, self.grad_f1, self.grad_f2)[k]

    def hess(self, k: int) -> float:
        return (self.hess_f0, self.hess_f1, self.hess_f2)[k]


@dataclass(frozen=True)
class ErrorBudget:
    truncation: float = 0.0
    trapezoid: float = 0.0
    interpolation: float = 0.0
    carried: float = 0.0
    floating_point: float = 0.0
    unattributed: float = 0.0

    @property
    def total(self) -> float:
        return (self.truncation + self.trapezoid + self.interpolation + self.carried
                + self.floating_point + self.unattributed)

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["total"] = self.total
        return out


# ---------------------------------------------------------------- grid geometry

def grid_step(N: int, R: float) -> float:
    return 2.0 * R / (N - 1)


def grid_origin(N: int, R: float, tau: float) -> float:
    h = grid_step(N, R)
    return tau - h * round((tau + R) / h)


def tau_index(N: int, R: float, tau: float) -> int:
    return int(round((tau - grid_origin(N, R, tau)) / grid_step(N, R)))


@dataclass
class GridTable:
    """f_k sampled at ``values[i, j] = f_k(nodes[i], nodes[j])``."""

    k: int
    N: int
    R: float
    tau: float
    values: np.ndarray = field(repr=False)
    error_sup: float = float("nan")

    @property
    def h(self) -> float:
        return grid_step(self.N, self.R)

    @property
    def lo(self) -> float:
        return grid_origin(self.N, self.R, self.tau)

    @property
    def nodes(self) -> np.ndarray:
        return self.lo + self.h * np.arange(self.N)

    def interpolate(self, x1, x0):
        """Bilinear interpolation; zero outside the grid."""
        x1 = np.asarray(x1, dtype=float)
        x0 = np.asarray(x0, dtype=float)
        p = (x1 - self.lo) / self.h
        q = (x0 - self.lo) / self.h
        top = self.N - 1
        inside = (p >= 0) & (p <= top) & (q >= 0) & (q <= top)
        i = np.clip(np.floor(p).astype(np.int64), 0, top - 1)
        j = np.clip(np.floor(q).astype(np.int64), 0, top - 1)
        a = p - i
        b = q - j
        v = self.values
        out = ((1 - a) * (1 - b) * v[i, j] + a * (1 - b) * v[i + 1, j]
               + (1 - a) * b * v[i, j + 1] + a * b * v[i + 1, j + 1])
        return np.where(inside, out, 0.0)


def save_grid(grid: GridTable, path) -> None:
    """Flat little-endian float64, row-major, after a 32-byte header (magic, k, N, R, tau)."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(GRID_MAGIC, grid.k, grid.N, grid.R, grid.tau))
        np.ascontiguousarray(grid.values, dtype="<f8").tofile(fh)


def load_grid(path, mmap: bool = False) -> GridTable:
    with open(path, "rb") as fh:
        magic, k, N, R, tau = _HEADER.unpack(fh.read(_HEADER.size))
    if magic != GRID_MAGIC:
        raise ValueError(f"{path} is not a grid file")
    if mmap:
        values = np.memmap(path, dtype="<f8", mode="r", offset=_HEADER.size, shape=(N, N))
    else:
        values = np.fromfile(path, dtype="<f8", offset=_HEADER.size).reshape(N, N)
    return GridTable(k, N, R, tau, values)


# ---------------------------------------------------------------- level functions

def f0_eval(x1, x0, tau: float):
    """f_0(x1, x0) = g0(2 sqrt6 x0 + sqrt3 x1 + 2 sqrt3 tau), g0(t) = 1 - 2 Phi(t) for t < 0."""
    t = 2.0 * SQRT6 * np.asarray(x0, dtype=float) + SQRT3 * np.asarray(x1, dtype=float) + 2.0 * SQRT3 * tau
    val = np.where(t < 0, 1.0 - 2.0 * norm_cdf(np.minimum(t, 0.0)), 0.0)
    return float(val) if val.ndim == 0 else val


@numba.njit(cache=True)
def _level_block(lower, lo, h, n, R, tau, j0, j1, phi_tab, out):
    # out[i, j - j0] = f_k(x_i, x_j); lower[j - j0] is the row f_{k-1}(x_j, .)
    top = n - 1
    step = NOISE_SCALE
    inv_sqrt_2pi = 1.0 / math.sqrt(2.0 * math.pi)
    m_last = phi_tab.shape[0] - 1
    for j in range(j0, j1):
        xk = lo + j * h
        row = lower[j - j0]
        for i in range(n):
            x1 = lo + i * h
            c = 2.0 * SQRT6 * xk + SQRT3 * x1 + 2.0 * SQRT3 * tau
            L = abs(c)
            if L >= R:
                out[i, j - j0] = 0.0
                continue
            base = (-SQRT2 * xk - 0.5 * x1 - lo) / h
            # integrand at the lower limit
            p = base - L * step / h
            g_prev = 0.0
            if p >= 0.0:
                idx = int(p)
                if idx < top:
                    fr = p - idx
                    g_prev = row[idx] + fr * (row[idx + 1] - row[idx])
                elif idx == top and p == top:
                    g_prev = row[top]
            g_prev *= inv_sqrt_2pi * math.exp(-0.5 * L * L)
            z_prev = L
            acc = 0.0
            m = int(math.ceil(L / h))
            done = False
            while m <= m_last:
                z = m * h
                if z > z_prev:
                    p = base - m * step
                    if p < 0.0:
                        # w only decreases from here on: the rest of the integrand is 0
                        acc += 0.5 * (z - z_prev) * g_prev
                        done = True
                        break
                    g = 0.0
                    idx = int(p)
                    if idx < top:
                        fr = p - idx
                        g = (row[idx] + fr * (row[idx + 1] - row[idx])) * phi_tab[m]
                    elif idx == top and p == top:
                        g = row[top] * phi_tab[m]
                    acc += 0.5 * (z - z_prev) * (g + g_prev)
                    z_prev = z
                    g_prev = g
                m += 1
            if not done and R > z_prev:
                p = base - R * step / h
                g = 0.0
                if p >= 0.0:
                    idx = int(p)
                    if idx < top:
                        fr = p - idx
                        g = row[idx] + fr * (row[idx + 1] - row[idx])
                    elif idx == top and p == top:
                        g = row[top]
                g *= inv_sqrt_2pi * math.exp(-0.5 * R * R)
                acc += 0.5 * (R - z_prev) * (g + g_prev)
            out[i, j - j0] = acc


def _allocate(N: int, out):
    if out is None:
        return np.empty((N, N))
    return np.lib.format.open_memmap(out, mode="w+", dtype=np.float64, shape=(N, N))


def check_domain(N: int, R: float, tau: float, core: float = 2.0) -> None:
    """Reject radii too small for the tables to cover the recursion's lookups.

    Values off the grid are read as 0, which only matters where the outer
    integrals carry no mass. We require that for every point of the central
    square ``[-core, core]^2`` and every z in ``[|c|, R]`` the lookup point
    stays on the grid.
    """
    if R < 5.0:
        raise ValueError(f"R = {R} too small (need R >= 5)")
    lo = grid_origin(N, R, tau)
    hi = lo + grid_step(N, R) * (N - 1)
    corners = [(a, b) for a in (-core, core) for b in (-core, core)]
    for xk, x1 in corners:
        for z in (0.0, R):
            w = -SQRT2 * xk - 0.5 * x1 - z * NOISE_SCALE
            if not lo <= w <= hi:
                raise ValueError(f"lookup point {w:.3f} leaves the grid [{lo:.3f}, {hi:.3f}]; increase R")


def build_grid(k: int, tau: float, N: int, R: float = DEFAULT_R, lower: GridTable = None,
               bounds: DerivativeBounds = None, out=None) -> GridTable:
    """Tabulate f_k on the N x N grid; levels above 0 need the table one level down.

    ``out`` may name an ``.npy`` file to hold the table as a memory map.
    """
    if N < 3:
        raise ValueError("N must be at least 3")
    bounds = bounds or DerivativeBounds()
    lo, h = grid_origin(N, R, tau), grid_step(N, R)
    values = _allocate(N, out)
    if k == 0:
        if lower is not None:
            raise ValueError("level 0 takes no lower table")
        x = lo + h * np.arange(N)
        for j0 in range(0, N, BLOCK_COLUMNS):
            values[j0:j0 + BLOCK_COLUMNS] = f0_eval(x[j0:j0 + BLOCK_COLUMNS, None], x[None, :], tau)
    else:
        if lower is None or lower.k != k - 1:
            raise ValueError(f"level {k} needs the level {k - 1} table")
        if lower.N != N or lower.R != R or lower.tau != tau:
            raise ValueError("lower table resolution, radius or tau does not match")
        check_domain(N, R, tau)
        m_last = int(math.floor(R / h + 1e-9))
        phi_tab = norm_pdf(h * np.arange(m_last + 1))
        buf = np.empty((N, BLOCK_COLUMNS))
        for j0 in range(0, N, BLOCK_COLUMNS):
            j1 = min(N, j0 + BLOCK_COLUMNS)
            rows = np.ascontiguousarray(lower.values[j0:j1])
            _level_block(rows, lo, h, N, R, tau, j0, j1, phi_tab, buf)
            values[:, j0:j1] = buf[:, : j1 - j0]
    if isinstance(values, np.memmap):
        values.flush()
    budgets = error_budget(N, R, tau, bounds)
    return GridTable(k, N, R, tau, values, budgets["levels"][k].total)


# ---------------------------------------------------------------- outer integrals

def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _phi2(u, v):
    one_m = 1.0 - SIGMA1 * SIGMA1
    return np.exp(-0.5 * (u * u - 2.0 * SIGMA1 * u * v + v * v) / one_m) / (2.0 * math.pi * math.sqrt(one_m))


P_PRIME_SPLITS = {1: None, 3: 0, 5: 1}


def integrate_p_prime(s: int, grids: dict, tau: float, N: int, R: float = DEFAULT_R, m: int = None):
    """p'_s, the probability that a fixed path of s vertices is a component.

    ``grids`` maps level -> GridTable. Returns ``(value, error)``; the error is
    the carried table error weighted by the bivariate mass of the region.
    """
    if s not in P_PRIME_SPLITS:
        raise ValueError("s must be 1, 3 or 5")
    m = P_PRIME_SPLITS[s] if m is None else m
    for g in grids.values():
        if g.N != N or g.R != R or g.tau != tau:
            raise ValueError("grid resolution, radius or tau mismatch")
    h = grid_step(N, R)
    x = grid_origin(N, R, tau) + h * np.arange(N)
    it = tau_index(N, R, tau)
    below = slice(0, it + 1)
    wv = _trapezoid_weights(it + 1, h)
    if s == 1:
        above = slice(it, N)
        wu = _trapezoid_weights(N - it, h)
        f0 = np.asarray(grids[0].values[above, below])
        dens = _phi2(x[above, None], x[None, below])
        value = float(wu @ (dens * f0) @ wv)
        return value, 0.0
    n_ = s - 2 - m
    fm = np.asarray(grids[m].values[below, below])
    fn = np.asarray(grids[n_].values[below, below]).T
    dens = _phi2(x[below, None], x[None, below])
    value = float(wv @ (dens * fm * fn) @ wv)
    mass = float(wv @ dens @ wv)
    em, en = grids[m].error_sup, grids[n_].error_sup
    if m == 0:
        em = 0.0  # f_0 is evaluated in closed form at the nodes
    if n_ == 0:
        en = 0.0
    err = mass * (em * 2.0 ** -n_ + en * 2.0 ** -m + em * en)
    return value, err


def p_from_p_prime(s: int, p_prime_value: float) -> float:
    """p_1 = p'_1, p_3 = 9 p'_3, and p_s >= s * 3 * 2^(s-3) p'_s for odd s >= 5."""
    if s < 1 or s % 2 == 0:
        raise ValueError("s must be a positive odd integer")
    if s == 1:
        return p_prime_value
    return s * 3 * 2 ** (s - 3) * p_prime_value


COMBINATION_WEIGHTS = {1: 0.5, 3: 1.5, 5: 6.0}


# ---------------------------------------------------------------- error accounting

def _level_split(k: int, bounds: DerivativeBounds):
    """Relative sizes (per h^2) of trapezoid and interpolation error when building level k.

    The integrand is phi(z) f_{k-1}(A x + b z) with |b| = 1/(2 sqrt 3); its
    derivatives are bounded through the gradient/Hessian table, and sums of
    |phi^(j)(xi_i)| over panels by the integrals of |phi^(j)|. Two kink panels
    per integral take the first-derivative form.
    """
    if k == 0:
        return 0.0, 1.0
    b = NOISE_SCALE
    M = 2.0 ** -(k - 1)
    G, H = bounds.grad(k - 1), bounds.hess(k - 1)
    phi0, phi1 = norm_pdf(0.0), norm_pdf(1.0)
    int_abs_d1, int_abs_d2 = 2.0 * phi0, 4.0 * phi1
    smooth = (H * b * b + 2.0 * G * b * int_abs_d1 + M * int_abs_d2) / 12.0
    kinks = 2.0 / 3.0 * (phi0 * G * b + phi1 * M)
    interp = H / 8.0 + 2.0 * SQRT3 * G * phi0
    return smooth + kinks, interp


def error_budget(N: int, R: float = DEFAULT_R, tau: float = 0.086, bounds: DerivativeBounds = None):
    """Itemised error ledger per level and for the combined bound.

    Totals follow the closed forms C_k / N^2 per level and
    17094/N^2 + 3.9e-5 + 5e5/N^4 for the combination; the N^-2 parts are
    apportioned between trapezoid, interpolation and carried error, tails
    come from the Gaussian tail bound at R, and each ledger adds a fixed
    floating-point allowance.
    """
    if N < 100 or R < 5:
        raise ValueError("error formulas need N >= 100 and R >= 5")
    bounds = bounds or DerivativeBounds()
    tail = gaussian_tail_bound(R)
    n2 = 1.0 / N ** 2
    levels = []
    prev = 0.0
    for k, C in enumerate(LEVEL_COEFFICIENTS):
        own = C - prev
        trap_w, interp_w = _level_split(k, bounds)
        frac = trap_w / (trap_w + interp_w)
        levels.append(ErrorBudget(
            truncation=tail * 2.0 ** -(k - 1) if k else 0.0,
            trapezoid=frac * own * n2,
            interpolation=(1.0 - frac) * own * n2,
            carried=prev * n2,
            floating_point=FP_ALLOWANCE,
        ))
        prev = C

    # carried: table errors through the weighted outer integrals (region mass <= 1)
    e1, e2 = LEVEL_COEFFICIENTS[1], LEVEL_COEFFICIENTS[2]
    carried_n2 = COMBINATION_WEIGHTS[3] * e1 + COMBINATION_WEIGHTS[5] * (e1 / 4 + e2 / 2)
    carried_n2 = min(carried_n2, FINAL_N2)
    weight_sum = sum(COMBINATION_WEIGHTS.values())
    combined = ErrorBudget(
        truncation=2.0 * weight_sum * tail,
        trapezoid=(FINAL_N2 - carried_n2) * n2,
        interpolation=0.0,
        carried=carried_n2 * n2 + FINAL_N4 / N ** 4,
        floating_point=FP_ALLOWANCE,
        unattributed=FINAL_CONST,
    )
    return {"levels": levels, "combined": combined}


def closed_form_totals(N: int) -> dict:
    """The published closed forms at R = 7, tau = 0.086, without allowances."""
    return {
        "levels": [C / N ** 2 + c for C, c in zip(LEVEL_COEFFICIENTS, LEVEL_CONSTANTS)],
        "combined": FINAL_N2 / N ** 2 + FINAL_CONST + FINAL_N4 / N ** 4,
    }


# ---------------------------------------------------------------- final bound

def p0_value(tau: float) -> float:
    return 1.0 - norm_cdf(tau)


def compute_p_primes(tau: float, N: int, R: float = DEFAULT_R, bounds: DerivativeBounds = None,
                     workdir=None, keep_grids: bool = False):
    """Build f_0, f_1, f_2 and integrate p'_1, p'_3, p'_5."""
    outs = {k: None for k in range(3)}
    if workdir is not None:
        outs = {k: f"{workdir}/f{k}_N{N}.npy" for k in range(3)}
    g0 = build_grid(0, tau, N, R, bounds=bounds, out=outs[0])
    g1 = build_grid(1, tau, N, R, g0, bounds=bounds, out=outs[1])
    g2 = build_grid(2, tau, N, R, g1, bounds=bounds, out=outs[2])
    grids = {0: g0, 1: g1, 2: g2}
    res = {s: integrate_p_prime(s, grids, tau, N, R) for s in (1, 3, 5)}
    return (res, grids) if keep_grids else res


def final_bound(tau: float, N: int = DESK_N, R: float = DEFAULT_R, certificate: Certificate = None,
                skip_certificate: bool = False, bounds: DerivativeBounds = None, workdir=None) -> dict:
    """Certified lower bound 0.5 (1 - p0) + 0.5 p'_1 + 1.5 p'_3 + 6 p'_5 - error.

    Needs a valid finite-cluster certificate at some tau' >= tau, unless
    ``skip_certificate`` is set.
    """
    if not skip_certificate:
        if certificate is None:
            raise ValueError("a percolation Certificate is required (or pass skip_certificate=True)")
        if not certificate.valid or certificate.tau < tau:
            raise ValueError(f"certificate (tau={certificate.tau}, valid={certificate.valid}) "
                             f"does not cover tau={tau}")
    p0 = p0_value(tau)
    res = compute_p_primes(tau, N, R, bounds, workdir)
    combined = 0.5 * (1.0 - p0) + sum(COMBINATION_WEIGHTS[s] * res[s][0] for s in (1, 3, 5))
    budget = error_budget(N, R, tau, bounds)["combined"]
    return {
        "tau": tau, "N": N, "R": R,
        "p0": p0,
        "p_prime": {s: res[s][0] for s in (1, 3, 5)},
        "p": {s: p_from_p_prime(s, res[s][0]) for s in (1, 3, 5)},
        "carried_estimate": {s: res[s][1] for s in (1, 3, 5)},
        "combined": combined,
        "error_budget": budget.as_dict(),
        "certified_error": budget.total,
        "certified_lower_bound": combined - budget.total,
    }
