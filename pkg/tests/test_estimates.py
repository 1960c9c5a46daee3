import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnack_lab import closed_forms as cf
from harnack_lab import estimates as E
from harnack_lab import pde
from harnack_lab.errors import HypothesisError, MissingSnapshot, NotSteadyError
from harnack_lab.fields import GridSpec, ScalarField
from harnack_lab.pde import SolverConfig
from harnack_lab.potentials import PotentialSpec as P
from harnack_lab.potentials import audit_hypotheses

L = 2 * math.pi


def _sharp_trajectory(n, k, times, extent=16.0, count=801):
    grid = GridSpec.cube(n, extent, count, "box")
    snaps = [ScalarField(grid, cf.gaussian_like_solution(n, k, t, grid.coords())) for t in times]
    return pde.Trajectory(list(times), snaps, "linear", {"U1": P.quadratic(n, -k), "U2": P.zero(n)})


@pytest.fixture(scope="module")
def torus_run():
    grid = GridSpec(2, L, 64, "periodic")
    U1 = P.trig(2, [0.4, 0.3], [[1, 0], [1, 1]], L)
    U2 = P.trig(2, [0.2], [[0, 1]], L)
    rho0 = ScalarField.from_function(
        grid, lambda x: 1.5 + 0.5 * np.sin(x[..., 0]) * np.cos(2 * x[..., 1]) + 0.3 * np.cos(x[..., 0] + x[..., 1]))
    traj = pde.solve_linear(rho0, U1, U2, SolverConfig(dt=1e-3, t_end=1.0, snapshots=(0.05, 0.2, 0.5)))
    audit = audit_hypotheses(U1, U2, grid, 0.0)
    return traj, U1, U2, audit


# -- Li-Yau ----------------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("t", [0.3, 0.7, 1.5])
def test_sharp_equality_analytic(n, t):
    pts = np.random.default_rng(0).uniform(-3, 3, size=(40, n))
    assert E.check_li_yau_sharp(n, 1.0, t, pts).max_abs_margin <= 1e-10
    assert E.check_matrix_li_yau_sharp(n, 1.0, t, pts).max_abs_margin <= 1e-10


@pytest.mark.parametrize("n,count", [(1, 513), (2, 129)])
def test_sharp_equality_stencils(n, count):
    traj = _sharp_trajectory(n, 1.0, (0.3, 0.7, 1.5), count=count)
    for t in traj.times:
        r = E.check_li_yau(traj, P.quadratic(n, -1.0), 1.0, t)
        m = E.check_matrix_li_yau(traj, P.quadratic(n, -1.0), 1.0, t)
        assert r.passed and r.max_abs_margin <= 5e-3
        assert m.passed and m.max_abs_margin <= 5e-3


def test_heat_kernel_is_classical_equality():
    grid = GridSpec.cube(2, 8.0, 65, "box")
    t = 0.4
    rho = ScalarField(grid, cf.heat_kernel(2, t, grid.coords()))
    r = E.check_li_yau(rho, P.zero(2), 0.0, t, U2=P.zero(2))
    m = E.check_matrix_li_yau(rho, P.zero(2), 0.0, t, U2=P.zero(2))
    assert r.bound == -1.0 / t
    assert np.allclose(r.observed[r.mask], -2 / (2 * t), rtol=0, atol=1e-9)
    assert r.max_abs_margin <= 1e-9 and m.max_abs_margin <= 1e-9


@pytest.mark.parametrize("t,expected", [(0.05, 18.5876916875), (0.2, 4.13189792995), (1.0, 0.770687196094)])
def test_li_yau_random_torus_regression(torus_run, t, expected):
    traj, U1, _, audit = torus_run
    r = E.check_li_yau(traj, U1, audit.k_min_laplacian, t)
    assert r.passed and r.min_margin >= -5e-3
    assert r.min_margin == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("t,expected", [(0.05, 8.94177008778), (0.2, 1.83649247766), (1.0, 0.342572709610)])
def test_matrix_li_yau_random_torus_regression(torus_run, t, expected):
    traj, U1, _, audit = torus_run
    r = E.check_matrix_li_yau(traj, U1, audit.k_min_hessian, t)
    assert r.passed
    assert r.min_margin == pytest.approx(expected, rel=1e-6)


def test_li_yau_refuses_unaudited_k(torus_run):
    traj, U1, _, audit = torus_run
    with pytest.raises(HypothesisError):
        E.check_li_yau(traj, U1, 0.5 * audit.k_min_laplacian, 0.2)
    with pytest.raises(HypothesisError):
        E.check_matrix_li_yau(traj, U1, 0.5 * audit.k_min_hessian, 0.2)
    with pytest.raises(MissingSnapshot):
        E.check_li_yau(traj, U1, audit.k_min_laplacian, 0.3)


def test_early_snapshots_are_excluded():
    grid = GridSpec(1, L, 64, "periodic")
    traj = pde.solve_linear(ScalarField(grid, np.ones(64)), P.zero(1), P.zero(1),
                            SolverConfig(dt=0.01, t_end=0.2, snapshots=(0.05,)))
    early = E.check_li_yau(traj, P.zero(1), 0.0, 0.05)
    assert early.checked == 0 and not early.passed
    assert early.excluded["early_time"] == 64
    assert E.check_li_yau(traj, P.zero(1), 0.0, 0.2).passed


def test_h_form_doubles_margins():
    traj = _sharp_trajectory(1, 1.0, (0.7,), count=257)
    r = E.check_li_yau(traj, P.quadratic(1, -1.0), 1.0, 0.7)
    h = E.li_yau_h_form(r)
    assert np.array_equal(h.margin, 2 * r.margin)
    assert E.li_yau_h_bound(3, -3 * 0.8**2, 0.7) == pytest.approx(2 * E.li_yau_bound(3, 0.8, 0.7), rel=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_margins_ignore_constant_factor(torus_run, c):
    traj, U1, _, audit = torus_run
    rho = traj.at(0.5)
    base = E.check_li_yau(rho, U1, audit.k_min_laplacian, 0.5, U2=traj.potentials["U2"])
    scaled = E.check_li_yau(rho * c, U1, audit.k_min_laplacian, 0.5, U2=traj.potentials["U2"])
    assert np.max(np.abs(base.margin - scaled.margin)) <= 1e-9 * max(1.0, np.max(np.abs(base.margin)))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 3.0), st.integers(1, 3), st.floats(0.05, 5.0), st.floats(1.001, 3.0))
def test_bounds_increase_in_time(k, n, t1, ratio):
    t2 = t1 * ratio
    assert E.li_yau_bound(n, k, t1) <= E.li_yau_bound(n, k, t2)
    assert E.matrix_li_yau_bound(k, t1) <= E.matrix_li_yau_bound(k, t2)


def test_classical_limits():
    k, n, s, t, d2 = 1e-8, 2, 0.3, 1.1, 2.5
    pairs = [
        (E.li_yau_bound(n, k, t), E.classical_li_yau_bound(n, t)),
        (E.matrix_li_yau_bound(k, t), E.classical_matrix_li_yau_bound(t)),
        (E.harnack_log_prefactor(n, k, s, t) - d2 / (4 * (t - s)), E.classical_harnack_log_bound(n, s, t, d2)),
        (E.cheeger_yau_log_prefactor(n, k, t) - d2 / (4 * t), E.classical_cheeger_yau_log_bound(n, t, d2)),
    ]
    for gen, classical in pairs:
        assert gen == pytest.approx(classical, rel=1e-6)


# -- Harnack -------------------------------------------------------------------------

def test_harnack_tight_along_characteristics():
    k, s, t = 1.0, 0.5, 1.0
    traj = _sharp_trajectory(1, k, (s, t))
    ys = np.linspace(-2, 2, 9)
    pairs = [[[y * math.sinh(k * s) / math.sinh(k * t)], [y]] for y in ys]
    r = E.check_harnack(traj, P.quadratic(1, -k), k, s, t, pairs)
    assert r.max_abs_margin <= 1e-3


def test_harnack_pairs_from_origin_have_closed_form_slack():
    k, s, t = 1.0, 0.5, 1.0
    traj = _sharp_trajectory(1, k, (s, t))
    ys = np.linspace(-2, 2, 9)
    r = E.check_harnack(traj, P.quadratic(1, -k), k, s, t, [[[0.0], [y]] for y in ys])
    slack = k * ys**2 / 4 * (1 / math.tanh(k * (t - s)) - 1 / math.tanh(k * t))
    assert np.max(np.abs(r.margin - slack)) <= 1e-4


def test_harnack_free_limit_matches_classical_form():
    s, t = 0.4, 0.9
    grid = GridSpec.cube(1, 16.0, 801, "box")
    snaps = [ScalarField(grid, cf.heat_kernel(1, tt, grid.coords())) for tt in (s, t)]
    traj = pde.Trajectory([s, t], snaps, "linear", {"U1": P.zero(1), "U2": P.zero(1)})
    xs, ys = np.array([-0.5, 0.0, 1.0]), np.array([0.7, -1.2, 1.0])
    r = E.check_harnack(traj, P.zero(1), 0.0, s, t, np.stack([xs, ys], 1)[..., None])
    classical = [E.classical_harnack_log_bound(1, s, t, d) for d in (ys - xs) ** 2]
    assert np.allclose(r.bound, classical, rtol=0, atol=1e-9)
    assert r.min_margin >= -1e-3


def test_harnack_random_torus_pairs(torus_run):
    traj, U1, _, audit = torus_run
    rng = np.random.default_rng(1)
    x = rng.uniform(0, L, size=(50, 2))
    y = x + 0.8 * rng.normal(size=(50, 2))
    r = E.check_harnack(traj, U1, audit.k_min_laplacian, 0.2, 0.5, np.stack([x, y], 1))
    assert r.checked == 50 and r.min_margin >= -1e-2
    assert r.min_margin == pytest.approx(0.937465183809, rel=1e-5)


# -- Cheeger-Yau ---------------------------------------------------------------------------

def _kernel(U1, U2, t=0.5):
    grid = GridSpec.cube(1, 16.0, 801, "box")
    return pde.fundamental_solution_approx([0.0], t, U1, U2, grid, SolverConfig(dt=1e-4))


def test_cheeger_yau_sharp():
    r = E.check_cheeger_yau(_kernel(P.quadratic(1, -1.0), P.zero(1)), [0.0], P.quadratic(1, -1.0), 1.0, 0.5)
    assert r.checked > 400 and r.max_abs_margin <= 2e-2


def test_cheeger_yau_exact_kernel_is_equality():
    grid = GridSpec.cube(1, 16.0, 401, "box")
    p = ScalarField(grid, cf.gaussian_like_solution(1, 1.0, 0.5, grid.coords()))
    r = E.check_cheeger_yau(p, [0.0], P.quadratic(1, -1.0), 1.0, 0.5)
    assert r.max_abs_margin <= 1e-4


def test_cheeger_yau_gaussian_kernel():
    r = E.check_cheeger_yau(_kernel(P.zero(1), P.zero(1)), [0.0], P.zero(1), 0.0, 0.5)
    assert r.min_margin >= -1e-2


def test_cheeger_yau_bump_reaction():
    U2 = P.gaussian_bump(1, -0.5, [0.5], 0.7)
    grid = GridSpec.cube(1, 16.0, 801, "box")
    k = audit_hypotheses(P.zero(1), U2, grid, 0.0).k_min_laplacian
    r = E.check_cheeger_yau(_kernel(P.zero(1), U2), [0.0], P.zero(1), k, 0.5, U2=U2)
    assert r.min_margin >= -1e-2
    assert np.max(r.margin[r.mask]) > 2e-2


# -- Aronson-Benilan ---------------------------------------------------------------------------

def _barenblatt_field(grid, t, C=0.5):
    return ScalarField(grid, np.maximum(cf.barenblatt(1, 2.0, t, grid.coords(), C), 1e-30))


@pytest.mark.parametrize("t", [1.0, 2.0])
def test_aronson_benilan_barenblatt_closed_form(t):
    grid = GridSpec(1, 10.0, 501, "box")
    r = E.check_aronson_benilan(_barenblatt_field(grid, t), 2.0, 0.0, t)
    assert r.bound == pytest.approx(2 / (3 * t))
    assert r.max_abs_margin <= 1e-9


def test_aronson_benilan_barenblatt_solver():
    grid = GridSpec(1, 10.0, 1001, "box")
    traj = pde.solve_porous_medium(_barenblatt_field(grid, 0.5), 2.0, P.zero(1),
                                   SolverConfig(dt=1e-3, t_start=0.5, t_end=2.0, snapshots=(1.0,)))
    for t in (1.0, 2.0):
        assert E.check_aronson_benilan(traj, 2.0, 0.0, t, band=10).max_abs_margin <= 5e-3


def test_aronson_benilan_torus():
    grid = GridSpec(1, 1.0, 128, "periodic")
    const = pde.solve_porous_medium(ScalarField(grid, np.full(128, 0.7)), 2.0, P.zero(1),
                                    SolverConfig(dt=1e-3, t_end=0.1))
    r = E.check_aronson_benilan(const, 2.0, 0.0, 0.1)
    assert r.passed and np.allclose(r.observed, 0.0)
    rho0 = ScalarField.from_function(grid, lambda x: 1 + 0.5 * np.sin(2 * np.pi * x[..., 0])
                                     + 0.2 * np.cos(6 * np.pi * x[..., 0]))
    traj = pde.solve_porous_medium(rho0, 2.0, P.zero(1), SolverConfig(dt=1e-4, t_end=0.5, snapshots=(0.1,)))
    for t in (0.1, 0.5):
        assert E.check_aronson_benilan(traj, 2.0, 0.0, t).min_margin >= -5e-3


def test_aronson_benilan_hypothesis():
    grid = GridSpec(1, 10.0, 101, "box")
    with pytest.raises(HypothesisError):
        E.check_aronson_benilan(_barenblatt_field(grid, 1.0), 2.0, 0.0, 1.0, U=P.quadratic(1, -1.0))
    with pytest.raises(ValueError):
        traj = pde.Trajectory([1.0], [_barenblatt_field(grid, 1.0)], "porous", {"U": P.zero(1), "m": 3.0})
        E.check_aronson_benilan(traj, 2.0, 0.0, 1.0)


# -- Liouville ---------------------------------------------------------------------------------

def test_liouville_ground_state():
    a = 0.5
    U1 = P.trig(1, [a], [[1]], L)
    # U2 = Lap U1 / 2 + |grad U1|^2 / 4 makes V vanish
    U2 = P.trig(1, [-a / 2, -a * a / 8], [[1], [2]], L) + P.constant(1, a * a / 8)
    grid = GridSpec(1, L, 1024, "periodic")
    rho0 = ScalarField.from_function(grid, lambda x: 1 + 0.3 * np.sin(x[..., 0]))
    rho = pde.solve_linear(rho0, U1, U2, SolverConfig(dt=0.05, t_end=30.0)).at(30.0)
    r = E.check_liouville(rho, U1, U2)
    assert r.params["constant_ratio_deviation"] <= 1e-4
    assert r.passed


def test_liouville_constant():
    grid = GridSpec(2, 1.0, 16, "periodic")
    r = E.check_liouville(ScalarField(grid, np.full(grid.shape, 3.0)), P.zero(2), P.zero(2))
    assert r.max_abs_margin == 0.0 and r.params["constant_ratio_deviation"] == 0.0


def test_liouville_negative_potential_has_no_solution():
    grid = GridSpec.cube(1, 8.0, 161, "box")
    rho = ScalarField(grid, np.exp(0.25 * grid.coords()[..., 0] ** 2))
    with pytest.raises(HypothesisError):
        E.check_liouville(rho, P.quadratic(1, -1.0), P.zero(1))


def test_liouville_requires_steady_state():
    grid = GridSpec(1, L, 64, "periodic")
    rho = ScalarField.from_function(grid, lambda x: 2 + np.sin(x[..., 0]))
    with pytest.raises(NotSteadyError):
        E.check_liouville(rho, P.zero(1), P.zero(1))
