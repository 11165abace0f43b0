"""End-to-end reproduction checks, one per acceptance criterion.

Each check returns :class:`CheckResult` rows; :func:`run_profile` runs them in
order and never lets one failure stop the others.
"""

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from treewave.indepset import (
    LAM3,
    ComponentParams,
    bipartite_theorem_constant,
    first_approach_size,
    simulate_components,
    tau_zero_bound,
)
from treewave.linfactor import alpha_coefficients, convergence_sweep, factor_covariance
from treewave.percolation import certify_finite_components, f_of_d1, f_prime, shift_constant
from treewave.quadrature import error_budget, final_bound, p0_value
from treewave.tree import regular_ball
from treewave.wavefield import (
    ball_residuals,
    covariance_sequence,
    markov_residual_correlation,
    monte_carlo_covariances,
    sample_balls,
)

PROFILES = ("desk", "full")
TAU = 0.086
PAPER_P_PRIME = {1: 0.3272861614, 3: 0.0025551311, 5: 0.0002640467}
PAPER_COMBINED = 0.43619355


@dataclass
class CheckResult:
    criterion: str
    name: str
    passed: bool
    value: object = None
    target: str = ""
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.criterion:<3} {self.name}: {self.value} (target {self.target})"

    def as_dict(self) -> dict:
        return asdict(self)


def _close(name, crit, value, target, tol):
    return CheckResult(crit, name, bool(abs(value - target) <= tol), value, f"{target} +/- {tol:g}")


def check_closed_forms():
    t = time.perf_counter()
    s = covariance_sequence(3, LAM3, 2).values
    rows = [
        _close("first_approach_size", "1", first_approach_size(3, LAM3), 0.4298245, 1e-6),
        _close("bipartite constant", "1", bipartite_theorem_constant(), 0.8601778, 1e-6),
        _close("tau=0 bound", "1", tau_zero_bound(), 0.4300889, 1e-6),
        _close("sigma_1", "1", s[1], -2 * math.sqrt(2) / 3, 1e-12),
        _close("sigma_2", "1", s[2], 5 / 6, 1e-12),
        _close("p0(0.086)", "1", p0_value(TAU), 0.46573321, 1e-7),
    ]
    rows.append(CheckResult("1", "bipartite constant > 0.86", bipartite_theorem_constant() > 0.86,
                            bipartite_theorem_constant(), "> 0.86"))
    dt = time.perf_counter() - t
    rows.append(CheckResult("1", "runtime", dt < 1.0, round(dt, 4), "< 1 s"))
    return rows


def check_certificate():
    t = time.perf_counter()
    c = certify_finite_components(TAU)
    dt = time.perf_counter() - t
    return [
        _close("d1*", "2", c.d1_star, 0.555487, 1e-4),
        _close("f(d1*)", "2", c.f_max, 0.249958, 1e-5),
        CheckResult("2", "certificate valid with margin", c.valid and c.margin > 3e-5,
                    c.margin, "valid, margin > 3e-5"),
        CheckResult("2", "runtime", dt < 10.0, round(dt, 3), "< 10 s"),
    ]


def check_desk_quadrature(N=2000):
    cert = certify_finite_components(TAU)
    r = final_bound(TAU, N=N, certificate=cert)
    rows = [_close(f"p'_{s}", "3", r["p_prime"][s], PAPER_P_PRIME[s], 5e-4) for s in (1, 3, 5)]
    rows.append(_close("combined value", "3", r["combined"], PAPER_COMBINED, 1e-3))
    return rows, r


def check_cauchy(Ns=(500, 1000, 2000)):
    rows = []
    cache = {}

    def value(n):
        if n not in cache:
            cache[n] = final_bound(TAU, N=n, skip_certificate=True)["combined"]
        return cache[n]

    for n in Ns:
        gap = abs(value(n) - value(2 * n))
        budget = error_budget(n, 7.0, TAU)["combined"].total
        rows.append(CheckResult("4", f"Cauchy |v({n}) - v({2 * n})| <= budget({n})", gap <= budget,
                                gap, f"<= {budget:.3e}"))
    return rows


def check_full_quadrature(workdir=None):
    cert = certify_finite_components(TAU)
    r = final_bound(TAU, N=20000, certificate=cert, workdir=workdir)
    return [
        CheckResult("4", "full-scale certified bound", r["certified_lower_bound"] > 0.4361,
                    r["certified_lower_bound"], "> 0.4361"),
        CheckResult("4", "full-scale error budget", r["certified_error"] < 8.2e-5,
                    r["certified_error"], "< 8.2e-5"),
    ]


def check_sampler(seed=0, balls=1000, radius=6, M=100_000, workers=1):
    rng = np.random.default_rng(seed)
    tree, x = sample_balls(3, LAM3, radius, balls, rng)
    res = float(ball_residuals(tree, x, LAM3).max())
    rows = [CheckResult("5", f"eigenvector residual on {balls} radius-{radius} balls", res < 1e-10,
                        res, "< 1e-10")]
    mc = monte_carlo_covariances(3, LAM3, 3, M, seed + 1, max_distance=5, workers=workers)
    err = np.abs(np.array(mc["empirical"]) - np.array(mc["exact"]))
    tol = 3.5 / math.sqrt(M)
    rows.append(CheckResult("5", f"sigma_k, k <= 5, M = {M}", bool(np.all(err <= tol)),
                            float(err.max()), f"<= {tol:.3e}"))
    # Markov regression: grandchildren on opposite sides of the root edge (0, 1)
    tree1 = regular_ball(3, 2)
    _, y = sample_balls(3, LAM3, 2, M, np.random.default_rng(seed + 2))
    a = tree1.children[1][0]
    b = tree1.children[0][1]
    r, se = markov_residual_correlation(y, 0, 1, a, b)
    rows.append(CheckResult("5", "Markov conditional independence", abs(r) <= 3 * se, r, f"|r| <= {3 * se:.3e}"))
    return rows


def check_factor():
    rows = convergence_sweep(3, js=range(1, 11), lambda_offset=1e-6)
    norms = [row["delta_norm_sq"] for row in rows]
    dec = all(b < a for a, b in zip(norms, norms[1:]))
    c = alpha_coefficients(3, -2 * math.sqrt(2), 0.999, N=10_000, lambda_offset=1e-6)
    sigma = covariance_sequence(3, c.eigenvalue, 3).values
    err = max(abs(factor_covariance(c, k) - sigma[k]) for k in range(4))
    return [
        CheckResult("6", "delta_norm_sq strictly decreasing, j = 1..10", dec, norms[-1], "decreasing"),
        CheckResult("6", "factor covariance at rho = 0.999", err <= 0.01, err, "<= 0.01"),
    ]


def check_simulation(trials=10_000_000, seed=0, workers=1, desk_p_prime=None):
    r1 = simulate_components(ComponentParams(3, LAM3, TAU, 200), trials, seed, workers)
    gap, se = r1["inclusion_minus_bound"], r1["inclusion_minus_bound_se"]
    r2 = simulate_components(ComponentParams(3, LAM3, 0.12, 200), trials, seed + 1, workers, warn=False)
    rows = [
        CheckResult("7", "inclusion >= combine_bound(empirical) at tau = 0.086", gap >= -3 * se,
                    gap, f">= -3 SE = {-3 * se:.3e}"),
        CheckResult("7", "inclusion at tau = 0.12", r2["inclusion"] >= 0.437, r2["inclusion"], ">= 0.437"),
    ]
    ref = desk_p_prime or PAPER_P_PRIME
    for s in (1, 3):
        diff = r1["p_prime"][s] - ref[s]
        sd = r1["p_prime_se"][s]
        rows.append(CheckResult("8", f"Monte Carlo p'_{s} vs quadrature", abs(diff) <= 4 * sd,
                                r1["p_prime"][s], f"{ref[s]:.10f} +/- 4 SE = {4 * sd:.2e}"))
    return rows, r1, r2


def check_f_prime(points=np.linspace(-2.0, 2.0, 41), h=1e-4):
    a = shift_constant(TAU)
    worst = max(abs(f_prime(x, a) - (f_of_d1(x + h, a) - f_of_d1(x - h, a)) / (2 * h)) for x in points)
    return [CheckResult("8", "f_prime vs central differences", worst <= 1e-6, worst, "<= 1e-6")]


def run_profile(profile="desk", seed=0, workers=1, trials=10_000_000, workdir=None, report=print):
    """Run every check of ``profile``; returns the list of CheckResult."""
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {PROFILES}")
    results = []

    def stage(crit, fn, *args, **kw):
        t = time.perf_counter()
        try:
            out = fn(*args, **kw)
        except Exception as exc:  # report and continue
            out = [CheckResult(crit, f"{fn.__name__} raised", False, repr(exc), "no error")]
        rows = out[0] if isinstance(out, tuple) else out
        for row in rows:
            row.seconds = round(time.perf_counter() - t, 3)
            results.append(row)
            report(row.line())
        return out

    stage("1", check_closed_forms)
    stage("2", check_certificate)
    desk = stage("3", check_desk_quadrature)
    desk_pp = desk[1]["p_prime"] if isinstance(desk, tuple) else None
    if profile == "full":
        stage("4", check_full_quadrature, workdir)
    else:
        stage("4", check_cauchy)
    stage("6", check_factor)
    stage("5", check_sampler, seed, workers=workers)
    stage("7", check_simulation, trials, seed, workers, desk_pp)
    stage("8", check_f_prime)
    return results
