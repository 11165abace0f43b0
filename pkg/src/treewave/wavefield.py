"""Gaussian wave functions on the d-regular tree.

A Gaussian wave function with eigenvalue ``lam`` is the unit-variance
invariant Gaussian process with ``sum_{u ~ v} X_u = lam * X_v`` at every
vertex. Its covariances depend only on distance and obey a three-term
recurrence. The process can be sampled exactly on any finite subtree: start
from an adjacent pair and repeatedly give a leaf its missing ``d - 1``
neighbours, each equal to an affine function of the leaf and its one sampled
neighbour plus a singular Gaussian noise vector that sums to zero.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from treewave.montecarlo import run_chunked
from treewave.tree import DEFAULT_VERTEX_CAP, RootedTree, ball_size, regular_ball


def _check_params(d: int, lam: float) -> None:
    if d < 3:
        raise ValueError(f"degree must be at least 3, got {d}")
    if abs(lam) > d:
        raise ValueError(f"|lambda| = {abs(lam)} exceeds d = {d}: no wave function exists")


@dataclass(frozen=True)
class CovarianceSequence:
    degree: int
    eigenvalue: float
    values: np.ndarray

    def __getitem__(self, k):
        return self.values[k]

    def __len__(self):
        return len(self.values)

    def residuals(self) -> np.ndarray:
        """Defects of the recurrence: first entry is d*s1 - lam*s0, then one per k >= 1."""
        d, lam, s = self.degree, self.eigenvalue, self.values
        if len(s) < 2:
            return np.zeros(0)
        first = [d * s[1] - lam * s[0]]
        rest = (d - 1) * s[2:] - lam * s[1:-1] + s[:-2]
        return np.concatenate([first, rest])


def covariance_sequence(d: int, lam: float, K: int) -> CovarianceSequence:
    """sigma_0..sigma_K of the wave function with eigenvalue ``lam`` on T_d."""
    _check_params(d, lam)
    if K < 0:
        raise ValueError("K must be nonnegative")
    s = np.empty(K + 1)
    s[0] = 1.0
    if K >= 1:
        s[1] = lam / d
    for k in range(1, K):
        s[k + 1] = (lam * s[k] - s[k - 1]) / (d - 1)
    return CovarianceSequence(d, float(lam), s)


@dataclass(frozen=True)
class CouplingConstants:
    degree: int
    eigenvalue: float
    a: float
    b: float
    c: float


def coupling_constants(d: int, lam: float) -> CouplingConstants:
    """Variance ``a`` and pairwise covariance ``b`` of the extension noise.

    ``c = a - b`` is the scale in the representation
    ``Y_i = sqrt(c) * (G_i - mean(G))`` with i.i.d. standard normals ``G``.
    """
    _check_params(d, lam)
    gap = (d * d - lam * lam) / (d * (d - 1) ** 2)
    a = (d - 2) * gap
    b = -gap
    return CouplingConstants(d, float(lam), a, b, a - b)


def sample_root_edge(d: int, lam: float, rng: np.random.Generator, size=None):
    """Values at two adjacent vertices: unit variances, correlation lam/d."""
    _check_params(d, lam)
    s1 = lam / d
    xu = rng.standard_normal(size)
    xv = s1 * xu + math.sqrt(max(0.0, 1.0 - s1 * s1)) * rng.standard_normal(size)
    return xu, xv


def extension_values(d, lam, x_leaf, x_nbr, rng, coupling=None):
    """Values of the ``d - 1`` new neighbours of a leaf.

    ``x_leaf`` and ``x_nbr`` may be arrays (one entry per independent sample);
    the result has a trailing axis of length ``d - 1``.
    """
    cc = coupling if coupling is not None else coupling_constants(d, lam)
    x_leaf = np.asarray(x_leaf, dtype=float)
    x_nbr = np.asarray(x_nbr, dtype=float)
    g = rng.standard_normal(x_leaf.shape + (d - 1,))
    noise = math.sqrt(cc.c) * (g - g.mean(axis=-1, keepdims=True))
    drift = (lam * x_leaf - x_nbr) / (d - 1)
    return drift[..., None] + noise


@dataclass
class WaveSample:
    """Values of a wave function on a finite rooted subtree of T_d.

    Vertex 0 is the root; the initial adjacent pair is (0, 1). ``frontier``
    holds vertices that still miss some of their ``d`` neighbours.
    """

    degree: int
    eigenvalue: float
    parent: list
    children: list
    values: list
    frontier: set
    rng: np.random.Generator = field(repr=False)
    vertex_cap: int = DEFAULT_VERTEX_CAP

    @property
    def n_vertices(self) -> int:
        return len(self.values)

    def neighbors(self, v: int) -> list:
        p = self.parent[v]
        return ([] if p < 0 else [p]) + list(self.children[v])

    def as_tree(self) -> RootedTree:
        parent = np.asarray(self.parent, dtype=np.int64)
        depth = np.zeros(len(parent), dtype=np.int64)
        for v in range(1, len(parent)):
            depth[v] = depth[parent[v]] + 1
        return RootedTree(parent, depth, self.degree, tuple(tuple(c) for c in self.children))

    def value_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def max_residual(self) -> float:
        """Largest eigenvector-equation defect over vertices with all d neighbours."""
        x = self.values
        worst = 0.0
        for v in range(self.n_vertices):
            nb = self.neighbors(v)
            if len(nb) == self.degree:
                worst = max(worst, abs(sum(x[u] for u in nb) - self.eigenvalue * x[v]))
        return worst


def new_sample(d: int, lam: float, rng: np.random.Generator,
               vertex_cap: int = DEFAULT_VERTEX_CAP) -> WaveSample:
    """A WaveSample holding only the root edge (0, 1)."""
    xu, xv = sample_root_edge(d, lam, rng)
    return WaveSample(d, float(lam), [-1, 0], [[1], []], [float(xu), float(xv)], {0, 1},
                      rng, vertex_cap)


def extend_leaf(sample: WaveSample, leaf: int, rng: np.random.Generator = None) -> WaveSample:
    """Attach the ``d - 1`` missing neighbours of ``leaf`` (in place) and return the sample."""
    nb = sample.neighbors(leaf)
    if len(nb) != 1:
        raise ValueError(f"vertex {leaf} has {len(nb)} sampled neighbours; only leaves extend")
    d = sample.degree
    if sample.n_vertices + d - 1 > sample.vertex_cap:
        raise MemoryError(f"vertex cap {sample.vertex_cap} reached")
    rng = sample.rng if rng is None else rng
    kids = extension_values(d, sample.eigenvalue, sample.values[leaf], sample.values[nb[0]], rng)
    for x in kids:
        idx = sample.n_vertices
        sample.parent.append(leaf)
        sample.children.append([])
        sample.values.append(float(x))
        sample.children[leaf].append(idx)
        sample.frontier.add(idx)
    sample.frontier.discard(leaf)
    return sample


def sample_ball(d: int, lam: float, radius: int, rng: np.random.Generator,
                vertex_cap: int = DEFAULT_VERTEX_CAP) -> WaveSample:
    """Exact sample on the radius-``radius`` ball around vertex 0, grown breadth-first."""
    _check_params(d, lam)
    if radius < 1:
        raise ValueError("radius must be at least 1")
    if ball_size(d, radius) > vertex_cap:
        raise MemoryError(f"ball of radius {radius} exceeds vertex cap {vertex_cap}")
    sample = new_sample(d, lam, rng, vertex_cap)
    depth = [0, 1]
    v = 0
    while v < sample.n_vertices:
        if depth[v] < radius:
            extend_leaf(sample, v)
            depth.extend([depth[v] + 1] * (d - 1))
        v += 1
    return sample


def sample_balls(d: int, lam: float, radius: int, n: int, rng: np.random.Generator,
                 vertex_cap: int = DEFAULT_VERTEX_CAP):
    """``n`` independent ball samples sharing one tree; returns ``(tree, values[n, V])``.

    Same construction as :func:`sample_ball`, vectorised across samples.
    """
    _check_params(d, lam)
    if radius < 1:
        raise ValueError("radius must be at least 1")
    tree = regular_ball(d, radius, vertex_cap)
    cc = coupling_constants(d, lam)
    x = np.empty((n, tree.n_vertices))
    x[:, 0], x[:, 1] = sample_root_edge(d, lam, rng, n)
    for v in range(tree.n_vertices):
        if tree.depth[v] == radius:
            continue
        if v == 0:
            nbr, kids = 1, tree.children[0][1:]
        else:
            nbr, kids = tree.parent[v], tree.children[v]
        x[:, list(kids)] = extension_values(d, lam, x[:, v], x[:, nbr], rng, cc)
    return tree, x


def ball_residuals(tree: RootedTree, values: np.ndarray, lam: float) -> np.ndarray:
    """Per-sample max eigenvector defect over interior (full-neighbourhood) vertices."""
    values = np.atleast_2d(values)
    worst = np.zeros(values.shape[0])
    for v in range(tree.n_vertices):
        if tree.is_full(v):
            nb = tree.neighbors(v)
            worst = np.maximum(worst, np.abs(values[:, nb].sum(axis=1) - lam * values[:, v]))
    return worst


def pooled_covariances(tree: RootedTree, values: np.ndarray, max_distance: int):
    """Per-distance empirical covariance pooled over all vertex pairs of the ball.

    Each sample contributes the average of ``x_u * x_v`` over pairs at distance k;
    the returned standard errors come from the spread of those per-sample
    averages, so correlation between pairs is accounted for.
    """
    dist = tree.distance_matrix()
    means, ses = [], []
    for k in range(max_distance + 1):
        iu, iv = np.nonzero(np.triu(dist == k) if k > 0 else dist == 0)
        per_sample = np.einsum("ij,ij->i", values[:, iu], values[:, iv]) / len(iu)
        means.append(per_sample.mean())
        ses.append(per_sample.std(ddof=1) / math.sqrt(len(per_sample)))
    return np.array(means), np.array(ses)


def markov_residual_correlation(values: np.ndarray, u: int, v: int, a: int, b: int):
    """Correlation of x_a and x_b after regressing both on (x_u, x_v).

    With (u, v) adjacent and a, b on opposite sides of that edge the true value
    is 0. Returns ``(r, se)`` with ``se = 1/sqrt(n)``.
    """
    design = values[:, [u, v]]
    ra = values[:, a] - design @ np.linalg.lstsq(design, values[:, a], rcond=None)[0]
    rb = values[:, b] - design @ np.linalg.lstsq(design, values[:, b], rcond=None)[0]
    r = float(np.corrcoef(ra, rb)[0, 1])
    return r, 1.0 / math.sqrt(len(ra))


def monte_carlo_covariances(d: int, lam: float, radius: int, trials: int, seed: int,
                            max_distance: int = None, workers: int = 1, chunk: int = 20_000):
    """Pooled covariance estimates per distance plus residual maxima, chunked and seeded."""
    max_distance = min(2 * radius, 5) if max_distance is None else max_distance
    tree = regular_ball(d, radius)
    dist = tree.distance_matrix()
    pairs = []
    for k in range(max_distance + 1):
        iu, iv = np.nonzero(np.triu(dist == k) if k > 0 else dist == 0)
        pairs.append((iu, iv))

    def task(n, rng):
        _, x = sample_balls(d, lam, radius, n, rng)
        stats = np.stack([np.einsum("ij,ij->i", x[:, iu], x[:, iv]) / len(iu) for iu, iv in pairs], 1)
        return stats.sum(0), (stats ** 2).sum(0), float(ball_residuals(tree, x, lam).max()), n

    parts = run_chunked(task, trials, seed, workers, chunk)
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    n = sum(p[3] for p in parts)
    mean = s1 / n
    var = (s2 - n * mean ** 2) / max(n - 1, 1)
    exact = covariance_sequence(d, lam, max_distance).values
    return {
        "distances": list(range(max_distance + 1)),
        "empirical": mean.tolist(),
        "standard_error": np.sqrt(var / n).tolist(),
        "exact": exact.tolist(),
        "max_residual": max(p[2] for p in parts),
        "trials": n,
    }
