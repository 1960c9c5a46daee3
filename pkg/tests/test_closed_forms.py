import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from harnack_lab import closed_forms as cf
from harnack_lab.errors import DomainError

# 30-digit reference values, computed once with mpmath and frozen here
COTH1 = 1.31303528549933130
SINH1 = 1.17520119364380146
FUND_1_1_HALF_0 = 0.501776257663205540
COST_N1 = -0.343482357250334348
COST_N2 = -1.34348235725033435
SINH1_OVER_SINH2 = 0.324027136831942700
A_2_HALF = 1.65499859264117671  # sqrt(2) cot(sqrt(2)/2)
B_2_HALF = 0.459362684932784219


def test_a_comparison_values():
    assert cf.a_comparison(0, 2) == 0.5
    assert cf.a_comparison(-1, 1) == pytest.approx(COTH1, rel=1e-14)
    assert cf.a_comparison(2, 0.5) == pytest.approx(A_2_HALF, rel=1e-14)
    for K in (1e-8, -1e-8):
        assert abs(cf.a_comparison(K, 1.0) - 1.0) < 1e-7


def test_b_comparison_values():
    assert cf.b_comparison(0, 3) == 3.0
    assert cf.b_comparison(-1, 1) == pytest.approx(SINH1, rel=1e-14)
    assert cf.b_comparison(2, 0.5) == pytest.approx(B_2_HALF, rel=1e-14)
    assert cf.b_comparison(-4, 0.0) == 0.0


def test_domain_errors():
    for args in [(0, 0.0), (0, -1.0), (1.0, math.pi), (4.0, 2.0)]:
        with pytest.raises(DomainError):
            cf.a_comparison(*args)
    with pytest.raises(DomainError):
        cf.b_comparison(1.0, 4.0)


def test_taylor_branch_agrees_with_closed_form_at_switch():
    for sign in (1, -1):
        t = 1.0
        K = sign * cf.TAYLOR_SWITCH * 1.0001
        s = math.sqrt(abs(K))
        exact_a = s / math.tan(s * t) if sign > 0 else s / math.tanh(s * t)
        assert abs(cf.a_comparison(sign * cf.TAYLOR_SWITCH * 0.9999, t) - exact_a) < 1e-10
        exact_b = math.sin(s * t) / s if sign > 0 else math.sinh(s * t) / s
        assert abs(cf.b_comparison(sign * cf.TAYLOR_SWITCH * 0.9999, t) - exact_b) < 1e-10


def _random_params(rng, count):
    out = []
    while len(out) < count:
        K = rng.uniform(-4, 4)
        t = rng.uniform(0.05, 2.0)
        if K > 0 and t > 0.8 * math.pi / math.sqrt(K):
            continue
        out.append((K, t))
    return out


def test_riccati_and_b_equation_by_finite_differences():
    rng = np.random.default_rng(11)
    h = 1e-5
    for K, t in _random_params(rng, 100):
        a = cf.a_comparison(K, t)
        da = (cf.a_comparison(K, t + h) - cf.a_comparison(K, t - h)) / (2 * h)
        assert abs(da + a * a + K) <= 1e-6 * max(1.0, a * a)
        b = cf.b_comparison(K, t)
        db = (cf.b_comparison(K, t + h) - cf.b_comparison(K, t - h)) / (2 * h)
        assert abs(db / b - a) <= 1e-6 * max(1.0, abs(a))


def test_log_b_large_argument():
    assert cf.log_b_comparison(-1.0, 50.0) == pytest.approx(50.0 - math.log(2.0), rel=1e-14)
    assert cf.log_b_comparison(-1.0, 1.0) == pytest.approx(math.log(SINH1), rel=1e-14)


def test_fundamental_solution_value_and_limits():
    assert cf.gaussian_like_solution(1, 1.0, 0.5, [0.0]) == pytest.approx(FUND_1_1_HALF_0, rel=1e-13)
    x = np.array([[0.3, -0.4], [1.0, 2.0]])
    near_heat = cf.gaussian_like_solution(2, 1e-6, 0.8, x)
    assert np.max(np.abs(near_heat - cf.heat_kernel(2, 0.8, x))) < 1e-6


def test_fundamental_solution_mass_grows_like_exp_knt():
    n, k, t = 1, 1.0, 0.5
    half = 10 * math.sqrt(2 * t)
    x = np.linspace(-half, half, 20001)[:, None]
    mass = np.trapezoid(cf.gaussian_like_solution(n, k, t, x), x[:, 0])
    # the advective drift -k<x, grad rho> feeds mass at rate kn, so the
    # profile carries e^{knt}; dividing it out leaves a probability density
    assert abs(mass * math.exp(-k * n * t) - 1.0) < 1e-6


@pytest.mark.parametrize("n", [1, 2, 3])
def test_fundamental_solution_solves_drift_equation(n):
    rng = np.random.default_rng(n)
    k, t = 0.8, 0.37
    x = rng.normal(size=(50, n)) * 2
    D = cf.gaussian_like_log_derivatives(n, k, t, x)
    rho = np.exp(D["log"])
    grad = rho[:, None] * D["grad"]
    lap = rho * (D["lap"] + np.sum(D["grad"] ** 2, axis=-1))
    drho = rho * D["dt"]
    residual = drho - lap + k * np.sum(x * grad, axis=-1)
    assert np.max(np.abs(residual)) < 1e-8


def test_log_time_derivative_by_finite_difference():
    k, t, h = 1.3, 0.6, 1e-5
    x = np.array([[0.7, -1.1]])
    D = cf.gaussian_like_log_derivatives(2, k, t, x)
    fd = (cf.gaussian_like_log(2, k, t + h, x) - cf.gaussian_like_log(2, k, t - h, x)) / (2 * h)
    assert abs(fd[0] - D["dt"][0]) < 1e-8


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 3), k=st.floats(0.05, 3.0), t=st.floats(0.05, 3.0))
def test_li_yau_equality_for_fundamental_solution(n, k, t):
    x = np.linspace(-2, 2, 5 * n).reshape(5, n)
    D = cf.gaussian_like_log_derivatives(n, k, t, x)
    # U1 = -k|x|^2/2 has Laplacian -kn and Hessian -k I
    lhs = D["lap"] - 0.5 * k * n
    assert np.max(np.abs(lhs + 0.5 * n * k * cf.coth(k * t))) <= 1e-10 * max(1.0, n * k * cf.coth(k * t))
    hess = D["hess"] - 0.5 * k * np.eye(n)
    assert np.max(np.abs(hess + 0.5 * k * cf.coth(k * t) * np.eye(n))) <= 1e-10 * max(1.0, k * cf.coth(k * t))


def test_quadratic_cost_values():
    assert cf.quadratic_cost(1, 1.0, 1.0, [1.0]) == pytest.approx(COST_N1, rel=1e-14)
    assert cf.quadratic_cost(2, 1.0, 1.0, [1.0, 0.0]) == pytest.approx(COST_N2, rel=1e-14)
    assert cf.quadratic_cost(3, 0.5, 2.0, [0.0, 0.0, 0.0]) == -3.0


def test_quadratic_minimizer():
    y = np.array([1.0, 0.0])
    assert np.all(cf.quadratic_minimizer(1.0, 2.0, y, 0.0) == 0.0)
    assert np.all(cf.quadratic_minimizer(1.0, 2.0, y, 2.0) == y)
    mid = cf.quadratic_minimizer(1.0, 2.0, y, 1.0)
    assert mid == pytest.approx([SINH1_OVER_SINH2, 0.0], rel=1e-14)
    with pytest.raises(DomainError):
        cf.quadratic_minimizer(1.0, 2.0, y, 2.5)


def test_minimizer_solves_euler_lagrange():
    k, t = 1.0, 1.5
    s = np.linspace(0, t, 1024)
    path = cf.quadratic_minimizer(k, t, [0.8, -0.3], s)
    ds = s[1] - s[0]
    accel = (path[2:] - 2 * path[1:-1] + path[:-2]) / ds**2
    assert np.max(np.abs(accel - k * k * path[1:-1])) < 1e-6


def test_oscillator_cost_reduces_to_quadratic_cost_shape():
    # the oscillator cost from the origin equals the quadratic cost without the -knt shift
    k, t, y = 0.9, 1.2, np.array([0.4, 1.1])
    assert cf.oscillator_cost(k, t, y) == pytest.approx(cf.quadratic_cost(2, k, t, y) + 2 * k * t, rel=1e-14)


def test_barenblatt_pressure_is_parabola():
    n, m, t, C = 1, 2.0, 1.5, 0.4
    x = np.linspace(-0.5, 0.5, 11)[:, None]
    rho = cf.barenblatt(n, m, t, x, C)
    alpha = 1 / 3
    expected = t**-alpha * (C - x[:, 0] ** 2 / 12 / t ** (2 / 3))
    assert np.allclose(rho, expected, rtol=1e-14)
    r = cf.barenblatt_radius(n, m, t, C)
    assert cf.barenblatt(n, m, t, [[r * 1.0000001]], C)[0] == 0.0
