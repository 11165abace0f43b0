import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from treewave.percolation import (
    Q,
    certify_finite_components,
    f_of_d1,
    f_prime,
    percolation_density,
    quadrature_error_bound,
    shift_constant,
)


def bivariate_oracle(d1, a, q=Q):
    # P(Z1 <= d1, Z2 - q Z1 <= q (a - d1)) from the joint normal CDF
    cov = [[1.0, -q], [-q, 1.0 + q * q]]
    return multivariate_normal(mean=[0, 0], cov=cov).cdf([d1, q * (a - d1)])


@pytest.mark.parametrize("d1,a", [(0.0, 0.0), (0.55, 0.5), (-1.0, 1.2), (1.5, -0.3)])
def test_f_matches_bivariate_cdf(d1, a):
    assert f_of_d1(d1, a) == pytest.approx(bivariate_oracle(d1, a), abs=1e-6)


def test_f_limits():
    assert f_of_d1(-20.0, 0.3) == 0.0
    # q -> infinity: the second event becomes Z1 > d1 - a
    expected = percolation_density(0.3) - percolation_density(-0.2)
    assert f_of_d1(0.3, 0.5, q=1e6) == pytest.approx(expected, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2.5, 2.5), st.floats(-1.0, 1.5))
def test_f_prime_matches_central_difference(d1, a):
    h = 1e-4
    fd = (f_of_d1(d1 + h, a) - f_of_d1(d1 - h, a)) / (2 * h)
    assert f_prime(d1, a) == pytest.approx(fd, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-1.0, 1.0), st.floats(0.01, 1.0))
def test_f_increasing_in_a(d1, a, da):
    assert f_of_d1(d1, a + da) >= f_of_d1(d1, a) - 1e-12


def test_certificate_at_0086():
    c = certify_finite_components(0.086)
    assert c.d1_star == pytest.approx(0.555487, abs=1e-4)
    assert c.f_max == pytest.approx(0.249958, abs=1e-5)
    assert c.valid and c.margin > 3e-5
    assert c.bound == 0.25
    assert c.a == pytest.approx(shift_constant(0.086))


def test_maximum_is_global_on_scan():
    c = certify_finite_components(0.086)
    grid = np.linspace(-3.0, 3.0, 1000)
    assert max(f_of_d1(x, c.a) for x in grid) <= c.f_max + 1e-8


def test_certificate_fails_above_threshold():
    assert not certify_finite_components(0.5).valid


@pytest.mark.parametrize("tau", [-5.0, -1.0, 0.0, 0.05, 0.08])
def test_certificate_monotone_in_tau(tau):
    assert certify_finite_components(tau).valid


def test_certificate_degenerate_branch():
    c = certify_finite_components(-5.0)
    assert math.isnan(c.d1_star)
    assert c.f_max < 1e-10


def test_quadrature_error_small():
    a = shift_constant(0.086)
    assert quadrature_error_bound(0.555, a) < 1e-9


def test_density():
    assert percolation_density(0.0) == 0.5
    assert 1 - percolation_density(0.086) == pytest.approx(0.46573321, abs=1e-7)
