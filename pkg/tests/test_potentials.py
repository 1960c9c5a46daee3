import math

import numpy as np
import pytest

from harnack_lab import fields
from harnack_lab import potentials as pot
from harnack_lab.errors import PotentialError
from harnack_lab.fields import GridSpec
from harnack_lab.potentials import PotentialSpec


def _catalogue(d):
    q = PotentialSpec.quadratic(d, -0.7, np.linspace(0.1, 0.3, d), 0.2)
    g = PotentialSpec.gaussian_bump(d, 0.8, np.full(d, 0.1), 0.6)
    modes = np.eye(d, dtype=int)[:1] + 1
    t = PotentialSpec.trig(d, [0.3], modes, 2.0, [0.4])
    return {"quadratic": q, "gaussian": g, "trig": t, "sum": q + g + t,
            "lap_trig": PotentialSpec.laplacian_of(t), "lap_quad": PotentialSpec.laplacian_of(q)}


def _fd_grad(f, x, h=1e-5):
    out = np.zeros(x.shape)
    for i in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[i] = h
        out[..., i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("name", ["quadratic", "gaussian", "trig", "sum", "lap_trig", "lap_quad"])
def test_analytic_derivatives_match_finite_differences(d, name):
    U = _catalogue(d)[name]
    x = np.random.default_rng(d).uniform(-1, 1, size=(7, d))
    assert np.allclose(U.grad(x), _fd_grad(U.value, x), atol=1e-7)
    hess_fd = np.stack([_fd_grad(lambda p, i=i: U.grad(p)[..., i], x) for i in range(d)], axis=-2)
    assert np.allclose(U.hess(x), hess_fd, atol=1e-6)
    assert np.allclose(U.laplacian(x), np.trace(U.hess(x), axis1=-2, axis2=-1), atol=1e-12)
    if name != "lap_trig" or d == 1:
        assert np.allclose(U.grad_laplacian(x), _fd_grad(U.laplacian, x), atol=1e-6)


def test_gaussian_laplacian_of_is_not_closed_form():
    U = PotentialSpec.laplacian_of(PotentialSpec.gaussian_bump(2, 1.0, 0.0, 1.0))
    with pytest.raises(PotentialError):
        U.hess(np.zeros((1, 2)))


def test_validation():
    with pytest.raises(PotentialError):
        PotentialSpec.gaussian_bump(1, 1.0, 0.0, 0.0)
    with pytest.raises(PotentialError):
        PotentialSpec.trig(1, [1.0], [[1]], -1.0)
    with pytest.raises(PotentialError):
        PotentialSpec("cubic", 1)
    with pytest.raises(PotentialError):
        PotentialSpec.sum(PotentialSpec.zero(1), PotentialSpec.zero(2))


def test_trig_requires_compatible_periodic_grid():
    U = PotentialSpec.trig(1, [1.0], [[1]], 2 * math.pi)
    U.check_grid(GridSpec(1, 4 * math.pi, 32, "periodic"))
    with pytest.raises(PotentialError):
        U.check_grid(GridSpec(1, 4 * math.pi, 32, "box"))
    with pytest.raises(PotentialError):
        U.check_grid(GridSpec(1, 5.0, 32, "periodic"))


def test_specs_with_different_params_are_distinct():
    a = PotentialSpec.quadratic(1, 1.0)
    b = PotentialSpec.quadratic(1, 2.0)
    assert a != b
    assert a.describe() == {"family": "quadratic", "a": 1.0, "b": [0.0], "c": 0.0}
    assert (a + b).quadratic_coefficients()[0] == 3.0


def test_schrodinger_potential_of_sharp_case():
    k, n = 1.3, 2
    grid = GridSpec.cube(n, 6.0, 31, "box")
    U1 = PotentialSpec.quadratic(n, -k)
    V, gV, lV, hV = pot.schrodinger_potential(U1, PotentialSpec.zero(n), grid)
    x = grid.coords()
    assert np.allclose(V.values, -k * n + 0.5 * k * k * np.sum(x**2, axis=-1), atol=1e-13)
    assert np.allclose(gV.values, k * k * x, atol=1e-13)
    assert np.allclose(lV.values, n * k * k)
    assert np.allclose(hV.matrix(), k * k * np.eye(n))


def test_quadratic_routes_agree_with_stencil_route():
    # a quadratic written as a sum with a zero-amplitude bump is forced down the stencil path
    n = 2
    grid = GridSpec.cube(n, 4.0, 41, "box")
    U1 = PotentialSpec.quadratic(n, -0.8, [0.2, -0.1])
    U2 = PotentialSpec.quadratic(n, 0.3, [0.1, 0.0], 0.5)
    forced = U1 + PotentialSpec.gaussian_bump(n, 0.0, 0.0, 1.0)
    exact = pot.schrodinger_potential(U1, U2, grid)
    stencil = pot.schrodinger_potential(forced, U2, grid)
    mask = grid.interior_mask(2)
    for a, b in zip(exact, stencil):
        assert np.max(np.abs(a.values - b.values)[mask]) < 1e-9


def _two_route_gap(N, extent=6.0):
    # analytic V sampled then differenced, against V assembled from stencils of sampled U1
    U1 = PotentialSpec.gaussian_bump(2, 0.5, [0.2, -0.1], 1.0)
    grid = GridSpec.cube(2, extent, N, "box")
    _, _, lV, _ = pot.schrodinger_potential(U1, PotentialSpec.zero(2), grid)
    u = U1.field(grid)
    V_st = fields.laplacian(u).values + 0.5 * fields.gradient(u).norm_squared().values
    lV_st = fields.laplacian(fields.ScalarField(grid, V_st)).values
    return float(np.max(np.abs(lV.values - lV_st)[grid.interior_mask(4)]))


def test_gaussian_bump_laplacian_two_routes():
    assert _two_route_gap(1025) < 1e-4
    assert _two_route_gap(97) / _two_route_gap(193) > 3.5


def test_gaussian_bump_stencil_laplacian_converges_to_analytic_divergence():
    n = 2
    U1 = PotentialSpec.gaussian_bump(n, 0.5, [0.2, -0.1], 0.7)
    U2 = PotentialSpec.gaussian_bump(n, -0.3, 0.0, 0.9)
    errs = []
    for N in (81, 161):
        grid = GridSpec.cube(n, 4.0, N, "box")
        _, _, lV, _ = pot.schrodinger_potential(U1, U2, grid)
        x = grid.coords()
        h = 1e-4
        div = sum((pot.schrodinger_gradient(U1, U2, x + h * e)[..., i]
                   - pot.schrodinger_gradient(U1, U2, x - h * e)[..., i]) / (2 * h)
                  for i, e in enumerate(np.eye(n)))
        errs.append(np.max(np.abs(lV.values - div)[grid.interior_mask(2)]))
    assert errs[0] / errs[1] > 3.5


def test_audit_sharp_case_boundary():
    k, n = 1.0, 2
    grid = GridSpec.cube(n, 6.0, 31, "box")
    U1 = PotentialSpec.quadratic(n, -k)
    ok = pot.audit_hypotheses(U1, PotentialSpec.zero(n), grid, k)
    assert ok.laplacian_ok and ok.hessian_ok
    assert ok.k_min_laplacian == pytest.approx(k) and ok.k_min_hessian == pytest.approx(k)
    bad = pot.audit_hypotheses(U1, PotentialSpec.zero(n), grid, 0.99)
    assert not bad.laplacian_ok and not bad.hessian_ok
    with pytest.raises(PotentialError):
        pot.audit_hypotheses(U1, PotentialSpec.zero(n), grid, -1.0)


def test_trig_k_min_against_dense_sampling():
    # U1 = eps cos x: Lap V = eps cos x + eps^2 cos 2x, maximal at x = 0
    eps = 0.2
    grid = GridSpec(1, 2 * math.pi, 256, "periodic")
    U1 = PotentialSpec.trig(1, [eps], [[1]], 2 * math.pi)
    audit = pot.audit_hypotheses(U1, PotentialSpec.zero(1), grid, 1.0)
    xs = np.linspace(0, 2 * math.pi, 100001)
    oracle = math.sqrt(np.max(eps * np.cos(xs) + eps**2 * np.cos(2 * xs)))
    assert audit.k_min_laplacian == pytest.approx(oracle, rel=1e-2)
    assert oracle == pytest.approx(math.sqrt(eps + eps**2), rel=1e-9)


def test_sign_adapters():
    assert pot.k3_laplacian(2.0, 3) == -12.0
    assert pot.k3_hessian(2.0) == -4.0


def test_comparison_audit_sharp_case():
    k, n = 1.0, 2
    grid = GridSpec.cube(n, 4.0, 21, "box")
    U2 = PotentialSpec.quadratic(n, -k * k)
    W, gW, lW, hW = pot.comparison_potential(PotentialSpec.zero(n), U2, grid)
    assert np.allclose(lW.values, -n * k * k)
    audit = pot.audit_comparison(PotentialSpec.zero(n), U2, grid, pot.k3_laplacian(k, n))
    assert audit.laplacian_ok
    assert not pot.audit_comparison(PotentialSpec.zero(n), U2, grid, -1.9).laplacian_ok


def test_porous_and_flow_audits():
    grid = GridSpec.cube(2, 4.0, 21, "box")
    U = PotentialSpec.quadratic(2, 0.5)
    assert pot.audit_porous(U, grid, 2.0, 0.0).ok
    assert not pot.audit_porous(PotentialSpec.quadratic(2, -0.5), grid, 2.0, 0.0).ok
    k = 1.0
    fa = pot.audit_flow(PotentialSpec.quadratic(2, -k), grid, k, K=-k)
    assert fa.hessian_ok and fa.lower_ok
    assert fa.k_min == pytest.approx(k)
    assert not pot.audit_flow(PotentialSpec.quadratic(2, -k), grid, k, K=0.0).lower_ok


def test_field_helpers_share_grid():
    grid = GridSpec.cube(2, 2.0, 9, "box")
    U = PotentialSpec.quadratic(2, 1.0)
    assert isinstance(U.field(grid), fields.ScalarField)
    assert U.hess_field(grid).matrix().shape == grid.shape + (2, 2)
    with pytest.raises(PotentialError):
        PotentialSpec.quadratic(3, 1.0).field(grid)
