"""Independent sets read off a wave function with negative eigenvalue.

Two constructions. Local maxima: choose v when X_v beats every neighbour;
for d = 3 its density is a trivariate orthant probability. Threshold
components: drop vertices above ``tau``, and in each remaining finite tree
component keep the larger colour class of its bipartition (ties go to the
class of the largest value); components above ``max_size`` contribute
nothing. Component statistics come from lazy exploration that samples
values only where the component can grow, using the Markov rule across
each known edge.
"""

import math
import warnings
from collections import deque
from dataclasses import dataclass, field

import numba
import numpy as np

from treewave.montecarlo import run_chunked
from treewave.wavefield import (
    coupling_constants,
    covariance_sequence,
    extension_values,
    sample_balls,
    sample_root_edge,
)

CERTIFIED_TAU = 0.086
LAM3 = -2.0 * math.sqrt(2.0)


# ---------------------------------------------------------------- closed forms

def orthant_prob3(r12: float, r13: float, r23: float) -> float:
    """P(Y1 > 0, Y2 > 0, Y3 > 0) for a centered Gaussian with the given correlations."""
    rs = (r12, r13, r23)
    det = 1.0 + 2.0 * r12 * r13 * r23 - r12 * r12 - r13 * r13 - r23 * r23
    if any(abs(r) >= 1.0 for r in rs) or det <= 0.0:
        raise ValueError(f"correlations {rs} do not form a positive definite matrix")
    return 0.5 - sum(math.acos(r) for r in rs) / (4.0 * math.pi)


def local_max_correlation(d: int, lam: float) -> float:
    """corr(X0 - Xi, X0 - Xj) for distinct neighbours i, j of vertex 0."""
    s = covariance_sequence(d, lam, 2).values
    return (1.0 + s[2] - 2.0 * s[1]) / (2.0 - 2.0 * s[1])


def first_approach_size(d: int, lam: float, trials: int = 1_000_000, seed: int = 0) -> float:
    """Density of strict local maxima of the wave function.

    Exact for d = 3 via the orthant formula; for d > 3 a Monte Carlo
    estimate over ``trials`` radius-1 balls.
    """
    if d != 3:
        est, _ = local_max_monte_carlo(d, lam, trials, seed)
        return est
    if lam >= d:
        return 0.0  # constant field
    r = local_max_correlation(d, lam)
    if r >= 1.0 - 1e-15:
        # all three differences coincide: X0 - Xi = 2 X0 when lam = -d
        return 0.5
    return orthant_prob3(r, r, r)


def local_max_monte_carlo(d: int, lam: float, trials: int, seed: int, workers: int = 1):
    """Fraction of sampled radius-1 balls whose centre beats all d neighbours, with SE."""
    def task(n, rng):
        _, x = sample_balls(d, lam, 1, n, rng)
        return int(np.count_nonzero(np.all(x[:, :1] > x[:, 1:], axis=1)))

    hits = sum(run_chunked(task, trials, seed, workers))
    p = hits / trials
    return p, math.sqrt(p * (1.0 - p) / trials)


def bipartite_theorem_constant() -> float:
    """1 - (3 / 4 pi) arccos(5/6): induced bipartite fraction at tau = 0."""
    value = 1.0 - 3.0 / (4.0 * math.pi) * math.acos(5.0 / 6.0)
    assert value > 0.86
    return value


def tau_zero_bound() -> float:
    """1/2 - (3 / 8 pi) arccos(5/6), the second approach at tau = 0 with p_3 = p_5 = 0."""
    return 0.5 - 3.0 / (8.0 * math.pi) * math.acos(5.0 / 6.0)


def combine_bound(p0: float, p_odd: dict) -> float:
    """1/2 (1 - p0) + sum_k p_{2k-1} / (2 (2k - 1)).

    ``p_odd`` maps k = 1, 2, ... to the probability p_{2k-1} that the root
    lies in a component of 2k - 1 vertices.
    """
    for k in p_odd:
        if k < 1:
            raise ValueError(f"keys must be k >= 1, got {k}")
    mass = p0 + sum(p_odd.values())
    if mass > 1.0 + 1e-9:
        raise ValueError(f"probabilities sum to {mass} > 1")
    return 0.5 * (1.0 - p0) + sum(p / (2.0 * (2 * k - 1)) for k, p in p_odd.items())


# ---------------------------------------------------------------- single-trial explorer

@dataclass
class ComponentReport:
    size: int
    truncated: bool
    chosen_count: int
    root_chosen: bool
    values: list = field(default_factory=list, repr=False)
    edges: list = field(default_factory=list, repr=False)
    chosen: set = field(default_factory=set, repr=False)

    def is_path(self) -> bool:
        deg = [0] * self.size
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return all(x <= 2 for x in deg)


def choose_class(parity: list, values: list) -> int:
    """Colour class kept by the bipartition rule: larger class, ties to the class of the max."""
    ones = sum(parity)
    zeros = len(parity) - ones
    if zeros != ones:
        return 0 if zeros > ones else 1
    best = max(range(len(values)), key=lambda i: (values[i], -i))
    return parity[best]


@dataclass(frozen=True)
class ComponentParams:
    """Exploration settings: degree, eigenvalue, threshold and size cap N'."""

    d: int = 3
    lam: float = LAM3
    tau: float = CERTIFIED_TAU
    max_size: int = 200

    def __post_init__(self):
        if self.max_size <= 0:
            raise ValueError("max_size must be positive")


def explore_component(params: ComponentParams, rng: np.random.Generator) -> ComponentReport:
    """Sample the threshold component of a root vertex, growing it lazily.

    Component vertices are indexed in discovery order (root = 0).
    """
    d, lam, tau, max_size = params.d, params.lam, params.tau, params.max_size
    cc = coupling_constants(d, lam)
    xr, xn = (float(v) for v in sample_root_edge(d, lam, rng))
    if xr > tau:
        return ComponentReport(0, False, 0, False)
    values, parity, edges = [xr], [0], []
    queue = deque([(0, xn)])
    if xn <= tau:
        values.append(xn)
        parity.append(1)
        edges.append((0, 1))
        queue.append((1, xr))
    truncated = False
    while queue and not truncated:
        v, x_nbr = queue.popleft()
        for x in extension_values(d, lam, values[v], x_nbr, rng, cc):
            if x <= tau:
                values.append(float(x))
                parity.append(1 - parity[v])
                edges.append((v, len(values) - 1))
                queue.append((len(values) - 1, values[v]))
                if len(values) > max_size:
                    truncated = True
                    break
    size = len(values)
    if truncated:
        return ComponentReport(size, True, 0, False, values, edges)
    keep = choose_class(parity, values)
    chosen = {i for i in range(size) if parity[i] == keep}
    return ComponentReport(size, False, len(chosen), keep == 0, values, edges, chosen)


# ---------------------------------------------------------------- compiled batch explorer

@numba.njit(cache=True, nogil=True)
def _explore_batch(d, lam, tau, max_size, s1, noise, normals, start, n_trials,
                   hist, chosen_hist, path_hist, vals, par, nbrv, deg):
    """Run up to n_trials explorations drawing from ``normals[start:]``.

    Returns ``(trials_done, position)``; stops early when the buffer might not
    cover a worst-case trial. Truncated trials land in ``hist[max_size + 1]``.
    """
    need = 2 + (max_size + 2) * (d - 1)
    pos = start
    cap = normals.shape[0]
    g = np.empty(d - 1)
    rho_c = math.sqrt(max(0.0, 1.0 - s1 * s1))
    done = 0
    while done < n_trials and pos + need <= cap:
        xr = normals[pos]
        xn = s1 * xr + rho_c * normals[pos + 1]
        pos += 2
        done += 1
        if xr > tau:
            hist[0] += 1
            continue
        n = 1
        vals[0] = xr
        par[0] = 0
        nbrv[0] = xn
        deg[0] = 0
        if xn <= tau:
            vals[1] = xn
            par[1] = 1
            nbrv[1] = xr
            deg[0] = 1
            deg[1] = 1
            n = 2
        head = 0
        truncated = False
        while head < n and not truncated:
            v = head
            head += 1
            gbar = 0.0
            for i in range(d - 1):
                g[i] = normals[pos + i]
                gbar += g[i]
            pos += d - 1
            gbar /= d - 1
            drift = (lam * vals[v] - nbrv[v]) / (d - 1)
            for i in range(d - 1):
                x = drift + noise * (g[i] - gbar)
                if x <= tau:
                    vals[n] = x
                    par[n] = 1 - par[v]
                    nbrv[n] = vals[v]
                    deg[n] = 1
                    deg[v] += 1
                    n += 1
                    if n > max_size:
                        truncated = True
                        break
        if truncated:
            hist[max_size + 1] += 1
            continue
        hist[n] += 1
        ones = 0
        best = 0
        is_path = True
        for i in range(n):
            ones += par[i]
            if vals[i] > vals[best]:
                best = i
            if deg[i] > 2:
                is_path = False
        zeros = n - ones
        if zeros > ones:
            keep = 0
        elif ones > zeros:
            keep = 1
        else:
            keep = par[best]
        if keep == 0:
            chosen_hist[n] += 1
        if is_path:
            path_hist[n] += 1
    return done, pos


BUFFER_NORMALS = 1 << 20


def _explore_chunk(d, lam, tau, max_size, n_trials, rng):
    cc = coupling_constants(d, lam)
    s1 = lam / d
    noise = math.sqrt(cc.c)
    hist = np.zeros(max_size + 2, dtype=np.int64)
    chosen_hist = np.zeros(max_size + 2, dtype=np.int64)
    path_hist = np.zeros(max_size + 2, dtype=np.int64)
    scratch = max_size + d + 2
    vals = np.empty(scratch)
    nbrv = np.empty(scratch)
    par = np.empty(scratch, dtype=np.int64)
    deg = np.empty(scratch, dtype=np.int64)
    need = 2 + (max_size + 2) * (d - 1)
    size = max(BUFFER_NORMALS, 4 * need)
    buf = rng.standard_normal(size)
    pos = 0
    left = n_trials
    while left:
        done, pos = _explore_batch(d, lam, tau, max_size, s1, noise, buf, pos, left,
                                   hist, chosen_hist, path_hist, vals, par, nbrv, deg)
        left -= done
        if left:
            buf = np.concatenate([buf[pos:], rng.standard_normal(size)])
            pos = 0
    return hist, chosen_hist, path_hist


def path_count(s: int) -> int:
    """Paths with s vertices through a fixed vertex of T_3."""
    if s == 1:
        return 1
    if s == 2:
        return 3
    return s * 3 * 2 ** (s - 3)


def _seed_of(seed) -> int:
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(2 ** 63))
    return int(seed)


def simulate_components(params: ComponentParams, trials: int, seed=0, workers: int = 1,
                        chunk: int = 1_000_000, warn: bool = True) -> dict:
    """Monte Carlo statistics of the root's threshold component.

    Returns the inclusion rate and its SE, the component-size histogram, the
    truncation rate, empirical p_0 and p_s, path-component probabilities
    p'_s = P(size s and path) / (number of s-vertex paths through a vertex),
    and the gap between the inclusion rate and :func:`combine_bound` on the
    empirical p_0, p_1, p_3, p_5 with its per-trial standard error.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    d, lam, tau, max_size = params.d, params.lam, params.tau, params.max_size
    seed = _seed_of(seed)
    if warn and d == 3 and tau > CERTIFIED_TAU:
        warnings.warn(f"tau = {tau} exceeds the certified finite-cluster threshold {CERTIFIED_TAU}; "
                      "components are not known to be finite", stacklevel=2)

    parts = run_chunked(lambda n, rng: _explore_chunk(d, lam, tau, max_size, n, rng),
                        trials, seed, workers, chunk)
    hist = sum(p[0] for p in parts)
    chosen_hist = sum(p[1] for p in parts)
    path_hist = sum(p[2] for p in parts)

    n = float(trials)
    inclusion = chosen_hist.sum() / n
    se = math.sqrt(inclusion * (1.0 - inclusion) / n)
    sizes = np.arange(max_size + 2)
    finite = sizes <= max_size
    p = hist / n

    # per-trial bound contribution b(size) = 1/2 [size > 0] + 1/(2 size) [size in {1, 3, 5}]
    b = np.where(sizes > 0, 0.5, 0.0)
    for s in (1, 3, 5):
        if s <= max_size:
            b[s] += 1.0 / (2.0 * s)
    bound_est = float(np.dot(p, b))
    # D = chosen - b(size); chosen is 0 on truncated trials
    mean_d = inclusion - bound_est
    e_d2 = float(np.dot(p, b * b) + inclusion - 2.0 * np.dot(chosen_hist / n, b))
    se_d = math.sqrt(max(e_d2 - mean_d ** 2, 0.0) / n)

    odd = {s: float(p[s]) for s in (1, 3, 5) if s <= max_size}
    p_prime = {s: path_hist[s] / n / path_count(s) for s in (1, 3, 5) if s <= max_size}
    p_prime_se = {s: math.sqrt(path_hist[s] / n * (1 - path_hist[s] / n) / n) / path_count(s)
                  for s in p_prime}
    return {
        "d": d, "lambda": lam, "tau": tau, "max_size": max_size, "trials": trials, "seed": seed,
        "inclusion": float(inclusion),
        "se": se,
        "size_histogram": {int(s): int(c) for s, c in zip(sizes[finite], hist[finite]) if c},
        "truncation_rate": float(hist[max_size + 1] / n),
        "p0": float(p[0]),
        "p_odd": odd,
        "p_prime": {s: float(v) for s, v in p_prime.items()},
        "p_prime_se": p_prime_se,
        "combine_bound_empirical": combine_bound(float(p[0]), {(s + 1) // 2: v for s, v in odd.items()}),
        "inclusion_minus_bound": float(mean_d),
        "inclusion_minus_bound_se": se_d,
    }


def estimate_inclusion(params: ComponentParams, trials: int, seed=0, workers: int = 1,
                       chunk: int = 1_000_000, warn: bool = True):
    """Probability that the root is chosen, with its binomial standard error.

    ``seed`` is an integer or a Generator (one integer is drawn from it);
    results do not depend on ``workers``.
    """
    r = simulate_components(params, trials, seed, workers, chunk, warn)
    return r["inclusion"], r["se"]


def star_orthant_bruteforce(d: int = 3, lam: float = LAM3, n: int = 241, span: float = 6.0) -> float:
    """P(X0 > X1, ..., X0 > Xd) by a tensor midpoint grid over the latent normals.

    The (d+1)-vector of a centre and its neighbours has rank d; it is written
    as a linear image of d i.i.d. standard normals discretised on a regular
    grid, and the indicator is summed cell by cell.
    """
    s = covariance_sequence(d, lam, 2).values
    cov = np.full((d + 1, d + 1), s[2])
    cov[0, :] = cov[:, 0] = s[1]
    np.fill_diagonal(cov, 1.0)
    w, V = np.linalg.eigh(cov)
    keep = w > 1e-12
    L = V[:, keep] * np.sqrt(w[keep])
    # differences X0 - Xi as linear forms in the latent normals
    D = L[0][None, :] - L[1:]
    r = L.shape[1]
    h = 2.0 * span / n
    t = -span + h * (np.arange(n) + 0.5)
    wt = np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi) * h
    grids = np.meshgrid(*([t] * (r - 1)), indexing="ij")
    rest = np.stack([g.ravel() for g in grids], axis=1)
    rest_w = np.prod(np.meshgrid(*([wt] * (r - 1)), indexing="ij"), axis=0).ravel()
    total = 0.0
    for a, wa in zip(t, wt):
        pts = D[:, :1] * a + D[:, 1:] @ rest.T
        ok = np.all(pts > 0, axis=0)
        total += wa * float(rest_w[ok].sum())
    return total
