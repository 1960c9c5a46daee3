"""Inequality checkers.

Each checker evaluates both sides of one estimate on grid data and returns an
:class:`EstimateReport` whose margin is non-negative where the estimate holds.
The bounds are written through the comparison functions ``a_K`` and ``b_K``
with ``K = -k**2``, so ``k = 0`` falls back to the classical ``1/t`` and ``t``
forms without special cases.

Ratio inequalities (Harnack, Cheeger-Yau) are compared in log space.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from . import action, fields, pde
from .closed_forms import a_comparison, gaussian_like_log_derivatives, log_b_comparison
from .errors import HypothesisError, NotSteadyError, SolverDivergence
from .fields import ScalarField
from .potentials import SLACK, PotentialSpec, audit_hypotheses, audit_porous, schrodinger_value
from .report import DEFAULT_TOLERANCE, EstimateReport, field_report

# snapshots earlier than this many steps are left out of verdicts
EARLY_STEPS = 10
DEFAULT_FLOOR = 1e-30
SUPPORT_FACTOR = 1e3


# -- bounds --------------------------------------------------------------------------

def li_yau_bound(n: int, k: float, t: float) -> float:
    """``-(n k / 2) coth(k t)``; ``-n / (2t)`` at ``k = 0``."""
    return -0.5 * n * a_comparison(-k * k, t)


def matrix_li_yau_bound(k: float, t: float) -> float:
    """``-(k / 2) coth(k t)``; ``-1 / (2t)`` at ``k = 0``."""
    return -0.5 * a_comparison(-k * k, t)


def li_yau_h_bound(n: int, k3: float, t: float) -> float:
    """Bound ``-n a_{k3/n}(t)`` on ``2 Lap log rho + Lap U1``, twice the Li-Yau bound at ``k3 = -n k^2``."""
    return -n * a_comparison(k3 / n, t)


def harnack_log_prefactor(n: int, k: float, s: float, t: float) -> float:
    """``log (sinh(kt)/sinh(ks))^{-n/2}``; ``log (t/s)^{-n/2}`` at ``k = 0``."""
    K = -k * k
    return -0.5 * n * (log_b_comparison(K, t) - log_b_comparison(K, s))


def cheeger_yau_log_prefactor(n: int, k: float, t: float) -> float:
    """``log (k / (4 pi sinh(kt)))^{n/2}``; ``log (4 pi t)^{-n/2}`` at ``k = 0``."""
    return -0.5 * n * (math.log(4.0 * math.pi) + log_b_comparison(-k * k, t))


def aronson_benilan_bound(n: int, m: float, k3: float, t: float) -> float:
    """``(2n / (2 + n(m-1))) a_K(t)`` with ``K = k3 (2 + n(m-1)) / (2n)``."""
    q = 2.0 + n * (m - 1.0)
    return 2.0 * n / q * a_comparison(k3 * q / (2.0 * n), t)


# classical counterparts, used for the k -> 0 regression

def classical_li_yau_bound(n: int, t: float) -> float:
    return -n / (2.0 * t)


def classical_matrix_li_yau_bound(t: float) -> float:
    return -1.0 / (2.0 * t)


def classical_harnack_log_bound(n: int, s: float, t: float, d2: float) -> float:
    """``log[(t/s)^{-n/2} exp(-d^2 / (4(t-s)))]``."""
    return -0.5 * n * math.log(t / s) - d2 / (4.0 * (t - s))


def classical_cheeger_yau_log_bound(n: int, t: float, d2: float) -> float:
    """``log[(4 pi t)^{-n/2} exp(-d^2 / 4t)]``."""
    return -0.5 * n * math.log(4.0 * math.pi * t) - d2 / (4.0 * t)


# -- helpers -------------------------------------------------------------------------

def _snapshot(source, t):
    """``(rho_t, dt, potentials)`` from a Trajectory or a bare field."""
    if isinstance(source, pde.Trajectory):
        return source.at(t), source.dt, source.potentials
    if isinstance(source, ScalarField):
        return source, 0.0, {}
    raise TypeError("expected a Trajectory or a ScalarField")


def _early(t, dt):
    return dt > 0 and t < EARLY_STEPS * dt


def _verdict_mask(rho, margin, region, floor, t, dt):
    """Nodes entering the verdict, plus the per-reason exclusion counts."""
    grid = rho.grid
    inner = grid.interior_mask(margin)
    alive = rho.values > SUPPORT_FACTOR * floor
    mask = inner & alive
    excluded = {"boundary": int((~inner).sum()), "support": int((inner & ~alive).sum())}
    if region is not None:
        region = np.asarray(region, bool)
        excluded["region"] = int((mask & ~region).sum())
        mask = mask & region
    if _early(t, dt):
        excluded["early_time"] = int(mask.sum())
        mask = np.zeros_like(mask)
    return mask, excluded


def _pick_U2(U2, potentials, dim):
    if U2 is not None:
        return U2
    return potentials.get("U2", PotentialSpec.zero(dim))


def _log_field(rho: ScalarField) -> ScalarField:
    return ScalarField(rho.grid, np.log(np.maximum(rho.values, np.finfo(float).tiny)))


# -- Li-Yau ----------------------------------------------------------------------------

def check_li_yau(traj, U1: PotentialSpec, k: float, t: float, *, n: int | None = None, U2=None,
                 tolerance: float = DEFAULT_TOLERANCE, region=None, margin: int = 2,
                 floor: float = DEFAULT_FLOOR, audit: bool = True) -> EstimateReport:
    """Check ``Lap log rho_t + Lap U1 / 2 >= -(nk/2) coth(kt)`` on a snapshot.

    ``Lap log rho`` uses the grid stencils; ``Lap U1`` is analytic.  Nodes in
    the box boundary layer, below ``1e3 * floor`` or outside ``region`` are
    excluded, as is the whole snapshot when ``t < 10 dt``.
    """
    rho, dt, pots = _snapshot(traj, t)
    grid = rho.grid
    n = grid.dim if n is None else n
    U2 = _pick_U2(U2, pots, grid.dim)
    if audit:
        a = audit_hypotheses(U1, U2, grid, k, n)
        if not a.laplacian_ok:
            raise HypothesisError(f"sup Lap V = {a.sup_lap_V:.6g} exceeds n k^2 = {n * k * k:.6g}", a)
    observed = fields.laplacian(_log_field(rho)).values + 0.5 * U1.laplacian(grid.coords())
    bound = li_yau_bound(n, k, t)
    mask, excluded = _verdict_mask(rho, margin, region, floor, t, dt)
    return field_report("li_yau", {"n": n, "k": k, "t": t}, ScalarField(grid, observed - bound), mask,
                        tolerance, observed, bound, excluded)


def check_matrix_li_yau(traj, U1: PotentialSpec, k: float, t: float, *, U2=None,
                        tolerance: float = DEFAULT_TOLERANCE, region=None, margin: int = 2,
                        floor: float = DEFAULT_FLOOR, audit: bool = True) -> EstimateReport:
    """Check ``Hess log rho_t + Hess U1 / 2 >= -(k/2) coth(kt) I`` via the smallest eigenvalue."""
    rho, dt, pots = _snapshot(traj, t)
    grid = rho.grid
    U2 = _pick_U2(U2, pots, grid.dim)
    if audit:
        a = audit_hypotheses(U1, U2, grid, k)
        if not a.hessian_ok:
            raise HypothesisError(f"sup Hess V = {a.sup_hess_V:.6g} exceeds k^2 = {k * k:.6g}", a)
    H = fields.hessian(_log_field(rho)) + U1.hess_field(grid) * 0.5
    observed = fields.min_eigenvalue_field(H).values
    bound = matrix_li_yau_bound(k, t)
    mask, excluded = _verdict_mask(rho, margin, region, floor, t, dt)
    return field_report("matrix_li_yau", {"k": k, "t": t}, ScalarField(grid, observed - bound), mask,
                        tolerance, observed, bound, excluded)


def li_yau_h_form(report: EstimateReport) -> EstimateReport:
    """The same check for ``2 Lap log rho + Lap U1 >= -n a_{k3/n}(t)``: every margin doubles."""
    return report.scaled(2.0, "li_yau_h_form")


def _sharp_points(n, points):
    pts = np.asarray(points, float)
    return pts.reshape(-1, n)


def check_li_yau_sharp(n: int, k: float, t: float, points, tolerance: float = DEFAULT_TOLERANCE) -> EstimateReport:
    """Li-Yau margin of the Gaussian-type solution from its analytic derivatives.

    With ``U1 = -k|x|^2/2`` this is the equality case, so every margin is zero
    up to round-off.
    """
    pts = _sharp_points(n, points)
    d = gaussian_like_log_derivatives(n, k, t, pts)
    observed = d["lap"] + 0.5 * (-k * n)
    bound = li_yau_bound(n, k, t)
    return EstimateReport("li_yau_sharp", {"n": n, "k": k, "t": t}, observed - bound, pts,
                          np.ones(len(pts), bool), tolerance, observed, bound)


def check_matrix_li_yau_sharp(n: int, k: float, t: float, points,
                              tolerance: float = DEFAULT_TOLERANCE) -> EstimateReport:
    """Matrix counterpart of :func:`check_li_yau_sharp`; reports the worst eigenvalue deviation."""
    pts = _sharp_points(n, points)
    d = gaussian_like_log_derivatives(n, k, t, pts)
    H = d["hess"] + 0.5 * (-k) * np.eye(n)
    eig = np.linalg.eigvalsh(H)
    bound = matrix_li_yau_bound(k, t)
    dev = eig - bound
    worst = dev[np.arange(len(pts)), np.argmax(np.abs(dev), axis=1)]
    return EstimateReport("matrix_li_yau_sharp", {"n": n, "k": k, "t": t}, worst, pts,
                          np.ones(len(pts), bool), tolerance, eig[:, 0], bound)


# -- Harnack and Cheeger-Yau ----------------------------------------------------------------

def _require_harnack_audit(U1, U2, grid, k, n):
    a = audit_hypotheses(U1, U2, grid, k, n)
    if not (a.laplacian_ok and a.bounded_below):
        raise HypothesisError("Harnack hypotheses fail: need Lap V <= n k^2 and V bounded below", a)
    return a


def check_harnack(traj, U1: PotentialSpec, k: float, s: float, t: float, pairs, *, n: int | None = None,
                  U2=None, nodes: int = action.DEFAULT_NODES, restarts: int | None = None,
                  tolerance: float = DEFAULT_TOLERANCE, audit: bool = True) -> EstimateReport:
    """Log-space Harnack margins for pairs ``(x, y)``.

    ``margin = log rho_t(y) - log rho_s(x) - log rhs`` where the right-hand side
    is ``(sinh kt / sinh ks)^{-n/2} exp(-(c_{s,t}(x,y) + U1(y) - U1(x)) / 2)``
    and ``c`` is minimized with the potential ``V``.  Off-node values come from
    multilinear interpolation of ``log rho``.
    """
    if not t > s > 0:
        raise ValueError("need 0 < s < t")
    rho_s, _, pots = _snapshot(traj, s)
    rho_t = _snapshot(traj, t)[0]
    grid = rho_t.grid
    n = grid.dim if n is None else n
    U2 = _pick_U2(U2, pots, grid.dim)
    if audit:
        _require_harnack_audit(U1, U2, grid, k, n)
    pairs = np.asarray(pairs, float).reshape(-1, 2, grid.dim)
    xs, ys = pairs[:, 0], pairs[:, 1]
    fn = action.CostFunctional.from_potentials(U1, U2)
    costs = np.empty(len(pairs))
    for i, (x, y) in enumerate(zip(xs, ys)):
        res = action.minimize_cost(x, y, s, t, fn, nodes, restarts=restarts)
        if not res.converged:
            raise SolverDivergence(f"cost optimizer did not converge for pair {i} (grad {res.grad_norm:.2e})")
        costs[i] = res.value
    lhs = fields.interpolate(_log_field(rho_t), ys) - fields.interpolate(_log_field(rho_s), xs)
    rhs = harnack_log_prefactor(n, k, s, t) - 0.5 * (costs + U1.value(ys) - U1.value(xs))
    locs = np.concatenate([xs, ys], axis=1)
    return EstimateReport("harnack", {"n": n, "k": k, "s": s, "t": t}, lhs - rhs, locs,
                          np.ones(len(pairs), bool), tolerance, lhs, rhs)


def check_cheeger_yau(kernel: ScalarField, x0, U1: PotentialSpec, k: float, t: float, *, n: int | None = None,
                      U2=None, region=None, margin: int = 2, nodes: int = action.DEFAULT_NODES,
                      restarts: int | None = None, tolerance: float = DEFAULT_TOLERANCE,
                      audit: bool = True) -> EstimateReport:
    """Log-space margin of ``p_t(x0, y) >= (k / 4 pi sinh kt)^{n/2} exp(-(c + U1(y) - U1(x0)) / 2)``.

    Costs are computed only on the checked nodes: the box interior intersected
    with ``region`` (default: nodes where the kernel exceeds ``1e-3`` of its
    maximum, which keeps the far tail, where the kernel carries little relative
    accuracy, out of the verdict).
    """
    grid = kernel.grid
    n = grid.dim if n is None else n
    U2 = PotentialSpec.zero(grid.dim) if U2 is None else U2
    if audit:
        _require_harnack_audit(U1, U2, grid, k, n)
    if region is None:
        region = kernel.values >= 1e-3 * np.max(kernel.values)
    mask = grid.interior_mask(margin) & np.asarray(region, bool) & (kernel.values > 0)
    excluded = {"boundary_or_region": int((~mask).sum())}
    x0 = np.asarray(x0, float).reshape(grid.dim)
    coords = grid.coords()
    order = [idx for idx in action._serpentine(grid.shape) if mask[idx]]
    fn = action.CostFunctional.from_potentials(U1, U2)
    results = action.costs_to(x0, [coords[idx] for idx in order], 0.0, t, fn, nodes, restarts)
    costs = np.full(grid.shape, np.nan)
    for idx, res in zip(order, results):
        if not res.converged:
            raise SolverDivergence(f"cost optimizer did not converge at node {idx}")
        costs[idx] = res.value
    rhs = cheeger_yau_log_prefactor(n, k, t) - 0.5 * (costs + U1.value(coords) - float(U1.value(x0)))
    lhs = np.where(mask, np.log(np.where(mask, kernel.values, 1.0)), np.nan)
    margin_field = np.where(mask, lhs - rhs, 0.0)
    return field_report("cheeger_yau", {"n": n, "k": k, "t": t, "x0": x0}, ScalarField(grid, margin_field),
                        mask, tolerance, lhs, rhs, excluded)


# -- porous medium -------------------------------------------------------------------------

def check_aronson_benilan(traj, m: float, k3: float, t: float, *, U=None, tolerance: float = DEFAULT_TOLERANCE,
                          band: int = 1, margin: int = 2, floor: float = DEFAULT_FLOOR,
                          audit: bool = True) -> EstimateReport:
    """Check ``(2m/(1-m)) Lap(rho^{m-1}) <= (2n/(2+n(m-1))) a_K(t)`` for the porous-medium equation.

    The pressure is ``h = (2m/(1-m)) rho^{m-1}``, for which the Barenblatt
    profile gives equality.  Nodes with ``rho < 1e3 * floor`` and every node
    within ``band`` nodes of them are excluded, as the front is not smooth.
    """
    rho, dt, pots = _snapshot(traj, t)
    grid = rho.grid
    n = grid.dim
    if "m" in pots and not math.isclose(pots["m"], m):
        raise ValueError(f"trajectory was solved with m={pots['m']}, not {m}")
    U = pots.get("U", PotentialSpec.zero(n)) if U is None else U
    if audit:
        a = audit_porous(U, grid, m, k3)
        if not a.ok:
            raise HypothesisError(f"inf Lap U = {a.inf_lap_U:.6g} is below k3/(2m) = {k3 / (2 * m):.6g}", a)
    observed = 2.0 * m / (1.0 - m) * fields.laplacian(rho.map(lambda v: v ** (m - 1.0))).values
    bound = aronson_benilan_bound(n, m, k3, t)
    dead = rho.values < SUPPORT_FACTOR * floor
    if band > 0 and dead.any():
        dead = ndimage.binary_dilation(dead, np.ones((3,) * n, bool), iterations=band)
    inner = grid.interior_mask(margin)
    mask = inner & ~dead
    excluded = {"boundary": int((~inner).sum()), "support": int((inner & dead).sum())}
    if _early(t, dt):
        excluded["early_time"] = int(mask.sum())
        mask = np.zeros_like(mask)
    return field_report("aronson_benilan", {"n": n, "m": m, "k3": k3, "t": t},
                        ScalarField(grid, bound - observed), mask, tolerance, observed, bound, excluded)


# -- Liouville -----------------------------------------------------------------------------

def check_liouville(rho: ScalarField, U1: PotentialSpec, U2: PotentialSpec, *, steady_tol: float = 1e-6,
                    zero_tol: float = 1e-10, tolerance: float = DEFAULT_TOLERANCE,
                    margin: int = 2) -> EstimateReport:
    """Check ``|grad log rho + grad U1 / 2|^2 <= V / 2`` on an approximate steady state.

    A potential ``V`` that is negative somewhere admits no positive steady
    state, so that case raises :class:`HypothesisError` before any margin is
    formed.  When ``V`` vanishes identically the report's params also carry
    the spread of ``rho e^{U1/2}``, which must be constant.
    """
    grid = rho.grid
    x = grid.coords()
    inner = grid.interior_mask(margin)
    V = schrodinger_value(U1, U2, x)
    if np.min(V[inner]) < -SLACK:
        raise HypothesisError(f"V takes the negative value {np.min(V[inner]):.6g}; no positive solution exists")
    res = pde.steady_residual(rho, U1, U2)
    if res > steady_tol:
        raise NotSteadyError(f"steady residual {res:.3e} exceeds {steady_tol:.1e}")
    g = fields.gradient(_log_field(rho)).values + 0.5 * U1.grad(x)
    observed = np.sum(g * g, axis=-1)
    params = {"steady_residual": res}
    if np.max(np.abs(V)) <= zero_tol:
        w = rho.values * np.exp(0.5 * U1.value(x))
        lo, hi = float(np.min(w[inner])), float(np.max(w[inner]))
        params.update(constant_inf=lo, constant_sup=hi, constant_ratio_deviation=hi / lo - 1.0)
    return field_report("liouville", params, ScalarField(grid, 0.5 * V - observed), inner, tolerance,
                        observed, 0.5 * V, {"boundary": int((~inner).sum())})
