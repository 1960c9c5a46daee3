"""Cost functions by direct minimization over discretized paths.

Two Lagrangians are supported:

``kinetic_plus_potential``
    ``L = |v|^2/2 + V(x)`` with ``V = Lap U1 + |grad U1|^2/2 - 2 U2`` (or any
    potential supplied directly).
``drift_form``
    ``L = |v - grad U1(x)|^2/2 - U2(x)``.

A path is a polyline through ``P`` nodes at uniform times.  Velocities are
forward differences on segments; potential terms use the trapezoid rule on
segment endpoints.  For the drift form the cross term ``<v, grad U1>`` is
paired with the trapezoid average of ``grad U1``, which integrates exactly to
``U1(y) - U1(x)`` whenever ``U1`` is quadratic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from . import fields
from .closed_forms import a_comparison
from .errors import DomainError, GridError, HypothesisError
from .fields import GridSpec, ScalarField
from .potentials import PotentialSpec, schrodinger_gradient, schrodinger_value
from .report import DEFAULT_TOLERANCE, EstimateReport

VARIANTS = ("kinetic_plus_potential", "drift_form")
GRAD_TOL = 1e-8
MAX_ITER = 10_000
DEFAULT_NODES = 256


@dataclass(frozen=True, eq=False)
class CostFunctional:
    variant: str
    U1: PotentialSpec | None = None
    U2: PotentialSpec | None = None
    V: PotentialSpec | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.variant == "drift_form" and (self.U1 is None or self.U2 is None):
            raise ValueError("drift_form needs U1 and U2")
        if self.variant == "kinetic_plus_potential":
            if (self.V is None) == (self.U1 is None or self.U2 is None):
                raise ValueError("give either V or both U1 and U2")

    @classmethod
    def kinetic(cls, V: PotentialSpec):
        """``L = |v|^2/2 + V`` for a directly supplied potential."""
        return cls("kinetic_plus_potential", V=V)

    @classmethod
    def from_potentials(cls, U1, U2, variant="kinetic_plus_potential"):
        return cls(variant, U1=U1, U2=U2)

    @property
    def dim(self) -> int:
        return (self.V or self.U1).dim

    @property
    def is_quadratic(self) -> bool:
        parts = [p for p in (self.U1, self.U2, self.V) if p is not None]
        return all(p.is_quadratic for p in parts)

    # pointwise pieces -------------------------------------------------------
    def potential(self, x):
        """The zeroth-order part: ``V`` or ``|grad U1|^2/2 - U2``."""
        if self.variant == "drift_form":
            g = self.U1.grad(x)
            return 0.5 * np.sum(g * g, axis=-1) - self.U2.value(x)
        if self.V is not None:
            return self.V.value(x)
        return schrodinger_value(self.U1, self.U2, x)

    def potential_grad(self, x):
        if self.variant == "drift_form":
            g = self.U1.grad(x)
            return np.einsum("...ij,...j->...i", self.U1.hess(x), g) - self.U2.grad(x)
        if self.V is not None:
            return self.V.grad(x)
        return schrodinger_gradient(self.U1, self.U2, x)


@dataclass
class PathCurve:
    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.points = np.asarray(self.points, float)
        if self.points.ndim != 2 or self.points.shape[0] != self.times.size or self.times.size < 3:
            raise ValueError("path needs at least 3 nodes with matching times")
        dt = np.diff(self.times)
        if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
            raise ValueError("path times must be uniform and increasing")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("path has non-finite coordinates")

    @classmethod
    def straight(cls, x, y, s, t, nodes=DEFAULT_NODES):
        x, y = np.asarray(x, float), np.asarray(y, float)
        tau = np.linspace(s, t, nodes)
        lam = ((tau - s) / (t - s))[:, None]
        return cls(tau, (1 - lam) * x + lam * y)

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def start(self):
        return self.points[0]

    @property
    def end(self):
        return self.points[-1]

    def velocities(self):
        return np.diff(self.points, axis=0) / self.step

    def terminal_velocity(self):
        """Second-order one-sided estimate of the velocity at the final time."""
        p = self.points
        return (3 * p[-1] - 4 * p[-2] + p[-3]) / (2 * self.step)

    def with_interior(self, interior) -> "PathCurve":
        pts = self.points.copy()
        pts[1:-1] = interior
        return PathCurve(self.times, pts)


@dataclass
class CostResult:
    value: float
    path: PathCurve
    grad_norm: float
    iterations: int
    converged: bool
    el_residual: float = float("nan")
    multiplicity: int = 1
    restarts: list = field(default_factory=list)


# -- discrete action and its gradient ----------------------------------------------

def action_value(path: PathCurve, fn: CostFunctional) -> float:
    return _action(path.points, path.step, fn)[0]


def _action(points, dtau, fn, want_grad=False):
    v = np.diff(points, axis=0) / dtau
    W = fn.potential(points)
    value = dtau * (0.5 * np.sum(v * v) + 0.5 * np.sum(W[:-1] + W[1:]))
    if fn.variant == "drift_form":
        g = fn.U1.grad(points)
        gbar = 0.5 * (g[:-1] + g[1:])
        value -= dtau * np.sum(v * gbar)
    if not want_grad:
        return value, None
    x = points
    grad = (2 * x[1:-1] - x[:-2] - x[2:]) / dtau + dtau * fn.potential_grad(x[1:-1])
    if fn.variant == "drift_form":
        H = fn.U1.hess(x[1:-1])
        chord = x[2:] - x[:-2]
        grad += 0.5 * (g[2:] - g[:-2]) - 0.5 * np.einsum("...ij,...j->...i", H, chord)
    return value, grad


def _kinetic_solve(rhs, dtau):
    """Apply the inverse of the interior kinetic Hessian ``tridiag(-1, 2, -1)/dtau``."""
    m = rhs.shape[0]
    ab = np.empty((3, m))
    ab[0] = -1.0
    ab[1] = 2.0
    ab[2] = -1.0
    return solve_banded((1, 1), ab, rhs * dtau)


def _kinetic_apply(z, dtau):
    out = 2 * z
    out[1:] -= z[:-1]
    out[:-1] -= z[1:]
    return out / dtau


def _descend(path: PathCurve, fn: CostFunctional, tol=GRAD_TOL, max_iter=MAX_ITER):
    """Barzilai-Borwein descent preconditioned by the kinetic Hessian, with backtracking."""
    dtau = path.step
    pts = path.points.copy()
    f, g = _action(pts, dtau, fn, True)
    alpha = 1.0
    it = 0
    prev = None
    while np.max(np.abs(g)) > tol and it < max_iter:
        z = _kinetic_solve(g, dtau)
        if prev is not None:
            s, y = prev
            sy = np.sum(s * y)
            sKs = np.sum(s * _kinetic_apply(s, dtau))
            alpha = sKs / sy if sy > 0 else 1.0
            alpha = min(max(alpha, 1e-6), 1e3)
        slope = np.sum(g * z)
        for _ in range(60):
            trial = pts.copy()
            trial[1:-1] -= alpha * z
            f_new, g_new = _action(trial, dtau, fn, True)
            if f_new <= f - 1e-4 * alpha * slope or abs(f_new - f) <= 1e-15 * max(1.0, abs(f)):
                break
            alpha *= 0.5
        prev = (trial[1:-1] - pts[1:-1], g_new - g)
        pts, f, g = trial, f_new, g_new
        it += 1
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    return PathCurve(path.times, pts), float(f), gnorm, it


def el_residual(path: PathCurve, fn: CostFunctional) -> float:
    """Euler-Lagrange audit of the kinetic variant: ``max |x'' - grad V|`` at interior nodes."""
    x = path.points
    acc = (x[2:] - 2 * x[1:-1] + x[:-2]) / path.step**2
    if fn.variant == "kinetic_plus_potential":
        return float(np.max(np.abs(acc - fn.potential_grad(x[1:-1]))))
    _, g = _action(x, path.step, fn, True)
    return float(np.max(np.abs(g)) / path.step)


def _perturbed_starts(x, y, s, t, nodes, count, seed):
    rng = np.random.default_rng(seed)
    base = PathCurve.straight(x, y, s, t, nodes)
    scale = max(1.0, float(np.linalg.norm(np.asarray(y, float) - np.asarray(x, float))))
    bump = np.sin(np.pi * (base.times - s) / (t - s))[:, None]
    starts = []
    for _ in range(count):
        direction = rng.normal(size=base.points.shape[1])
        direction /= np.linalg.norm(direction)
        starts.append(PathCurve(base.times, base.points + 0.5 * scale * bump * direction))
    return starts


def minimize_cost(x, y, s: float, t: float, fn: CostFunctional, nodes: int = DEFAULT_NODES,
                  initial: PathCurve | None = None, restarts: int | None = None, tol: float = GRAD_TOL,
                  max_iter: int = MAX_ITER, seed: int = 0) -> CostResult:
    """Minimize the discrete action over paths from ``(s, x)`` to ``(t, y)``.

    Non-quadratic functionals get three extra perturbed starts by default; the
    least value wins and ``multiplicity`` counts distinct minimizers whose
    values tie with it.
    """
    if not t > s:
        raise DomainError("need t > s")
    x = np.asarray(x, float).reshape(fn.dim)
    y = np.asarray(y, float).reshape(fn.dim)
    first = initial if initial is not None else PathCurve.straight(x, y, s, t, nodes)
    if not (np.allclose(first.start, x) and np.allclose(first.end, y)):
        raise ValueError("initial path does not join x and y")
    if restarts is None:
        restarts = 0 if fn.is_quadratic else 3
    starts = [first] + _perturbed_starts(x, y, s, t, first.times.size, restarts, seed)
    runs = [_descend(p, fn, tol, max_iter) for p in starts]
    iters = sum(r[3] for r in runs)
    best = min(range(len(runs)), key=lambda i: (runs[i][2] > tol, runs[i][1]))
    path, value, gnorm, _ = runs[best]
    tie = 1e-4 * (1.0 + abs(value))
    distinct = [path.points]
    for p, v, gn, _ in runs:
        if gn <= tol and v - value <= tie and all(np.max(np.abs(p.points - q)) > 1e-3 for q in distinct):
            distinct.append(p.points)
    return CostResult(value, path, gnorm, iters, gnorm <= tol, el_residual(path, fn), len(distinct),
                      [float(r[1]) for r in runs])


# -- cost fields -------------------------------------------------------------------

@dataclass
class CostField:
    """Nodal costs ``c_{s,t}(x0, .)`` with per-node optimizer diagnostics."""

    values: ScalarField
    converged: np.ndarray
    multiplicity: np.ndarray
    terminal_velocity: np.ndarray
    t: float
    s: float = 0.0
    x0: tuple = ()
    iterations: int = 0

    @property
    def grid(self) -> GridSpec:
        return self.values.grid

    @property
    def flagged(self) -> np.ndarray:
        return ~self.converged | (self.multiplicity > 1)

    def stencil_mask(self, margin: int = 2) -> np.ndarray:
        """Nodes whose 3^d stencil avoids flagged nodes and the box faces."""
        bad = self.flagged.copy()
        grown = bad.copy()
        for offset in np.ndindex(*(3,) * self.grid.dim):
            shift = tuple(o - 1 for o in offset)
            grown |= np.roll(bad, shift, axis=tuple(range(self.grid.dim)))
        return ~grown & self.grid.interior_mask(margin)


def _serpentine(shape):
    """Node order in which consecutive nodes are grid neighbours."""
    idx = np.indices(shape).reshape(len(shape), -1).T
    order = []
    for i in np.ndindex(*shape[:-1]):
        row = [tuple(i) + (j,) for j in range(shape[-1])]
        parity = sum(i) % 2 if i else 0
        order.extend(reversed(row) if parity else row)
    return order if shape[:-1] else [tuple(p) for p in idx]


def cost_field(x0, t: float, fn: CostFunctional, grid: GridSpec, s: float = 0.0, nodes: int = DEFAULT_NODES,
               restarts: int | None = None, tol: float = GRAD_TOL) -> CostField:
    """Costs from ``x0`` to every node, warm-starting each solve from its neighbour.

    Only box grids are supported: on a torus the cost would be an infimum over
    lifts, which this routine does not enumerate.
    """
    if grid.periodic:
        raise GridError("cost fields are computed on box grids only")
    x0 = np.asarray(x0, float).reshape(grid.dim)
    coords = grid.coords()
    order = _serpentine(grid.shape)
    results = costs_to(x0, [coords[idx] for idx in order], s, t, fn, nodes, restarts, tol)
    values = np.empty(grid.shape)
    conv = np.zeros(grid.shape, bool)
    mult = np.ones(grid.shape, int)
    vel = np.empty(grid.shape + (grid.dim,))
    for idx, res in zip(order, results):
        values[idx] = res.value
        conv[idx] = res.converged
        mult[idx] = res.multiplicity
        vel[idx] = res.path.terminal_velocity()
    total = sum(r.iterations for r in results)
    return CostField(ScalarField(grid, values), conv, mult, vel, float(t), float(s), tuple(x0), total)


def costs_to(x0, targets, s: float, t: float, fn: CostFunctional, nodes: int = DEFAULT_NODES,
             restarts: int | None = None, tol: float = GRAD_TOL) -> list:
    """``minimize_cost`` from ``x0`` to each target in turn, warm-starting from the previous path.

    Warm starts help only when consecutive targets are close, so pass them in
    a neighbour-to-neighbour order.
    """
    x0 = np.asarray(x0, float).reshape(fn.dim)
    tau = np.linspace(s, t, nodes)
    lam = ((tau - s) / (t - s))[:, None]
    out = []
    prev = None
    for y in targets:
        y = np.asarray(y, float).reshape(fn.dim)
        init = None
        if prev is not None:
            init = PathCurve(tau, prev.path.points + lam * (y - prev.path.end))
        prev = minimize_cost(x0, y, s, t, fn, nodes, init, restarts, tol)
        out.append(prev)
    return out


def _as_cost_field(costfield):
    if isinstance(costfield, CostField):
        return costfield.values, costfield.stencil_mask()
    return costfield, costfield.grid.interior_mask(2)


# -- Hamilton-Jacobi residual ------------------------------------------------------------

def _three_point_derivative(ts, fs):
    t0, t1, t2 = ts
    f0, f1, f2 = fs
    h0, h1 = t1 - t0, t2 - t1
    return (-h1 / (h0 * (h0 + h1))) * f0 + ((h1 - h0) / (h0 * h1)) * f1 + (h0 / (h1 * (h0 + h1))) * f2


def hj_residual(costs, U1: PotentialSpec, U2: PotentialSpec) -> ScalarField:
    """``c' + |grad c|^2/2 + <grad U1, grad c> + U2`` at the middle of three time levels."""
    costs = sorted(((float(tj), _as_cost_field(c)[0]) for tj, c in costs), key=lambda p: p[0])
    if len(costs) < 3:
        raise ValueError("need at least three time levels")
    mid = len(costs) // 2
    (ta, fa), (tb, fb), (tc, fc) = costs[mid - 1], costs[mid], costs[mid + 1]
    if not (fa.grid == fb.grid == fc.grid):
        raise GridError("cost fields live on different grids")
    grid = fb.grid
    dcdt = _three_point_derivative((ta, tb, tc), (fa.values, fb.values, fc.values))
    gc = fields.gradient(fb).values
    x = grid.coords()
    res = dcdt + 0.5 * np.sum(gc * gc, axis=-1) + np.sum(U1.grad(x) * gc, axis=-1) + U2.value(x)
    return ScalarField(grid, res)


# -- comparison theorems ------------------------------------------------------------------

def laplacian_comparison_bound(k3: float, n: int, t: float) -> float:
    """``sqrt(-k3 n) coth(sqrt(-k3/n) t)``, i.e. ``n a_{k3/n}(t)``."""
    return n * a_comparison(k3 / n, t)


def hessian_comparison_bound(k3: float, t: float) -> float:
    return a_comparison(k3, t)


def _require_audit(audit):
    if audit is not None and not (getattr(audit, "laplacian_ok", True) and getattr(audit, "hessian_ok", True)):
        raise HypothesisError("comparison hypothesis fails its audit", audit)


def check_laplacian_comparison(costfield, k3: float, n: int, t: float, tolerance: float = DEFAULT_TOLERANCE,
                               audit=None, mask=None) -> EstimateReport:
    """Margin ``n a_{k3/n}(t) - Lap c`` over nodes with clean stencils."""
    _require_audit(audit)
    values, clean = _as_cost_field(costfield)
    if mask is not None:
        clean = clean & mask
    observed = fields.laplacian(values).values
    bound = laplacian_comparison_bound(k3, n, t)
    margin = bound - observed
    return EstimateReport("laplacian_comparison", {"k3": k3, "n": n, "t": t}, margin, values.grid.points(),
                          clean, tolerance, observed, bound, {"stencil_or_flagged": int((~clean).sum())})


def check_hessian_comparison(costfield, k3: float, t: float, tolerance: float = DEFAULT_TOLERANCE,
                             audit=None, mask=None) -> EstimateReport:
    """Margin ``a_{k3}(t) - lambda_max(Hess c)``."""
    _require_audit(audit)
    values, clean = _as_cost_field(costfield)
    if mask is not None:
        clean = clean & mask
    observed = fields.max_eigenvalue_field(fields.hessian(values)).values
    bound = hessian_comparison_bound(k3, t)
    margin = bound - observed
    return EstimateReport("hessian_comparison", {"k3": k3, "t": t}, margin, values.grid.points(), clean,
                          tolerance, observed, bound, {"stencil_or_flagged": int((~clean).sum())})


def richardson_check(x, y, s, t, fn, nodes=DEFAULT_NODES) -> float:
    """Relative change of the converged cost when the node count is doubled."""
    a = minimize_cost(x, y, s, t, fn, nodes)
    b = minimize_cost(x, y, s, t, fn, 2 * nodes)
    return abs(b.value - a.value) / max(1.0, abs(b.value))
