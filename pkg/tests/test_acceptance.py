"""Acceptance criteria 1-8, each at its stated tolerance.

Every check prints one PASS/FAIL line (also repeated in the pytest terminal
summary). The full-scale quadrature (criterion 4, N = 20000, about an hour
and 10 GB of disk-backed tables) runs only with ``TREEWAVE_FULL=1``; the
Cauchy-convergence substitute always runs.
"""

import math
import os
import time

import numpy as np
import pytest
from conftest import report

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

TAU = 0.086
P_PRIME_REF = {1: 0.3272861614, 3: 0.0025551311, 5: 0.0002640467}
MC_TRIALS = 10_000_000


def check(criterion, name, passed, detail=""):
    report(criterion, name, bool(passed), detail)
    return bool(passed)


@pytest.fixture(scope="module")
def desk_bound():
    t = time.perf_counter()
    r = final_bound(TAU, N=2000, certificate=certify_finite_components(TAU))
    r["seconds"] = time.perf_counter() - t
    return r


@pytest.fixture(scope="module")
def sim_0086():
    return simulate_components(ComponentParams(3, LAM3, TAU, 200), MC_TRIALS, seed=2024)


def test_criterion_1_closed_forms():
    t = time.perf_counter()
    s = covariance_sequence(3, LAM3, 2).values
    vals = [
        ("first_approach_size(3, -2sqrt2)", first_approach_size(3, LAM3), 0.4298245, 1e-6),
        ("bipartite constant", bipartite_theorem_constant(), 0.8601778, 1e-6),
        ("tau=0 bound", tau_zero_bound(), 0.4300889, 1e-6),
        ("sigma_1", s[1], -2 * math.sqrt(2) / 3, 1e-12),
        ("sigma_2", s[2], 5 / 6, 1e-12),
        ("p0(0.086)", p0_value(TAU), 0.46573321, 1e-7),
    ]
    dt = time.perf_counter() - t
    ok = [check("1", name, abs(v - ref) <= tol, f"value={v:.12g} ref={ref:.12g} tol={tol:g}")
          for name, v, ref, tol in vals]
    ok.append(check("1", "bipartite constant > 0.86", bipartite_theorem_constant() > 0.86))
    ok.append(check("1", "runtime < 1 s", dt < 1.0, f"{dt:.4f} s"))
    assert all(ok)


def test_criterion_2_certificate():
    t = time.perf_counter()
    c = certify_finite_components(TAU)
    dt = time.perf_counter() - t
    ok = [
        check("2", "d1*", abs(c.d1_star - 0.555487) <= 1e-4, f"{c.d1_star:.9f}"),
        check("2", "f(d1*)", abs(c.f_max - 0.249958) <= 1e-5, f"{c.f_max:.10f}"),
        check("2", "valid with margin > 3e-5", c.valid and c.margin > 3e-5, f"margin={c.margin:.3e}"),
        check("2", "runtime < 10 s", dt < 10.0, f"{dt:.2f} s"),
    ]
    assert all(ok)


def test_criterion_3_desk_quadrature(desk_bound):
    r = desk_bound
    ok = [check("3", f"p'_{s}", abs(r["p_prime"][s] - ref) <= 5e-4,
                f"{r['p_prime'][s]:.10f} ref={ref} tol=5e-4") for s, ref in P_PRIME_REF.items()]
    ok.append(check("3", "combined value", abs(r["combined"] - 0.43619355) <= 1e-3,
                    f"{r['combined']:.10f} ref=0.43619355 tol=1e-3"))
    ok.append(check("3", "runtime <= 30 min", r["seconds"] <= 1800, f"{r['seconds']:.1f} s"))
    assert all(ok)


def test_criterion_4_cauchy_substitute(desk_bound):
    vals = {2000: desk_bound["combined"]}
    for n in (500, 1000, 4000):
        vals[n] = final_bound(TAU, N=n, skip_certificate=True)["combined"]
    ok = []
    for n in (500, 1000, 2000):
        gap = abs(vals[n] - vals[2 * n])
        budget = error_budget(n, 7.0, TAU)["combined"].total
        ok.append(check("4", f"|value({n}) - value({2 * n})| <= budget({n})", gap <= budget,
                        f"gap={gap:.3e} budget={budget:.3e}"))
    assert all(ok)


@pytest.mark.skipif(os.environ.get("TREEWAVE_FULL") != "1", reason="set TREEWAVE_FULL=1 for N = 20000")
def test_criterion_4_full_scale(tmp_path):
    r = final_bound(TAU, N=20000, certificate=certify_finite_components(TAU), workdir=str(tmp_path))
    ok = [
        check("4", "value - budget > 0.4361", r["certified_lower_bound"] > 0.4361,
              f"{r['certified_lower_bound']:.10f}"),
        check("4", "budget < 8.2e-5", r["certified_error"] < 8.2e-5, f"{r['certified_error']:.4e}"),
    ]
    assert all(ok)


def test_criterion_5_sampler():
    rng = np.random.default_rng(5)
    tree, x = sample_balls(3, LAM3, 6, 1000, rng)
    res = float(ball_residuals(tree, x, LAM3).max())
    M = 100_000
    mc = monte_carlo_covariances(3, LAM3, 3, M, seed=55, max_distance=5)
    err = np.abs(np.array(mc["empirical"]) - np.array(mc["exact"]))
    tol = 3.5 / math.sqrt(M)
    tree2 = regular_ball(3, 2)
    _, y = sample_balls(3, LAM3, 2, M, np.random.default_rng(555))
    r, se = markov_residual_correlation(y, 0, 1, tree2.children[1][0], tree2.children[0][1])
    ok = [
        check("5", "eigenvector residual, 1e3 radius-6 balls", res < 1e-10, f"max={res:.2e}"),
        check("5", "sigma_k within 3.5/sqrt(M), k <= 5", np.all(err <= tol),
              f"max err={err.max():.2e} tol={tol:.2e}"),
        check("5", "Markov conditional independence at 3 SE", abs(r) <= 3 * se, f"r={r:.2e} se={se:.2e}"),
    ]
    assert all(ok)


def test_criterion_6_factor_convergence():
    rows = convergence_sweep(3, js=range(1, 11), lambda_offset=1e-6)
    norms = [row["delta_norm_sq"] for row in rows]
    c = alpha_coefficients(3, -2 * math.sqrt(2), 0.999, N=10_000, lambda_offset=1e-6)
    sigma = covariance_sequence(3, c.eigenvalue, 3).values
    err = max(abs(factor_covariance(c, k) - sigma[k]) for k in range(4))
    ok = [
        check("6", "delta_norm_sq strictly decreasing, j = 1..10",
              all(b < a for a, b in zip(norms, norms[1:])), f"last={norms[-1]:.3e}"),
        check("6", "|factor_covariance(k) - sigma_k| <= 0.01, k <= 3, rho = 0.999", err <= 0.01,
              f"max err={err:.3e}"),
    ]
    assert all(ok)


def test_criterion_7_second_approach(sim_0086):
    gap, se = sim_0086["inclusion_minus_bound"], sim_0086["inclusion_minus_bound_se"]
    hi = simulate_components(ComponentParams(3, LAM3, 0.12, 200), MC_TRIALS, seed=2025, warn=False)
    ok = [
        check("7", "inclusion(0.086) >= combine_bound(empirical p) within 3 SE", gap >= -3 * se,
              f"inclusion={sim_0086['inclusion']:.6f} bound={sim_0086['combine_bound_empirical']:.6f} "
              f"se={se:.2e}"),
        check("7", "inclusion(0.12) >= 0.437", hi["inclusion"] >= 0.437,
              f"{hi['inclusion']:.6f} +/- {hi['se']:.1e} truncation={hi['truncation_rate']:.1e}"),
    ]
    assert all(ok)


def test_criterion_8_oracles(sim_0086, desk_bound):
    ok = []
    for s in (1, 3):
        mc, se = sim_0086["p_prime"][s], sim_0086["p_prime_se"][s]
        q = desk_bound["p_prime"][s]
        ok.append(check("8", f"Monte Carlo p'_{s} vs quadrature within 4 SE", abs(mc - q) <= 4 * se,
                        f"mc={mc:.8f} quad={q:.8f} se={se:.1e}"))
    a = shift_constant(TAU)
    h = 1e-4
    worst = max(abs(f_prime(x, a) - (f_of_d1(x + h, a) - f_of_d1(x - h, a)) / (2 * h))
                for x in np.linspace(-2.5, 2.5, 101))
    ok.append(check("8", "f_prime vs finite differences <= 1e-6", worst <= 1e-6, f"max={worst:.2e}"))
    assert all(ok)
