"""Weighted mean curvature flow of closed plane curves and its monotone quantities.

Curves are counter-clockwise closed polylines.  At each node the outward unit
normal is ``nu`` and the signed curvature ``kappa`` is positive on convex
curves, so the mean curvature vector is ``H = -kappa nu``.  The flow moves
every node with normal velocity ``-kappa + <grad U, nu>``.

The ambient density of the monotonicity formula solves the drift equation
with ``U1 = U`` and ``U2 = Lap U``; it is computed forward in time and read
backward, ``u_t = rho_{T - t}``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from shapely.geometry import LinearRing

from . import closed_forms, fields
from .closed_forms import b_comparison
from .errors import CFLError, CurveCollapseError, CurveError, GridError, SelfIntersectionError
from .fields import GridSpec, ScalarField
from .pde import solve_linear
from .potentials import PotentialSpec, flow_potential_pair

MIN_NODES = 64
CFL_FACTOR = 0.4
REDISTRIBUTE_EVERY = 10
# codimension data for curves in the plane
AMBIENT_DIM = 2
CURVE_DIM = 1


def _roll(a, shift):
    return np.roll(a, shift, axis=0)


@dataclass
class CurveState:
    """Closed polyline with counter-clockwise orientation."""

    points: np.ndarray
    t: float = 0.0
    reference_spacing: float | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise CurveError("points must have shape (Q, 2)")
        if pts.shape[0] < MIN_NODES:
            raise CurveError(f"need at least {MIN_NODES} nodes, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise CurveError("non-finite node coordinates")
        if _signed_area(pts) < 0:
            pts = pts[::-1].copy()
        self.points = pts
        if self.reference_spacing is None:
            self.reference_spacing = self.length / len(pts)

    @classmethod
    def circle(cls, radius, count=512, center=(0.0, 0.0)):
        th = 2 * np.pi * np.arange(count) / count
        return cls(np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)]))

    @classmethod
    def ellipse(cls, a, b, count=512, center=(0.0, 0.0)):
        th = 2 * np.pi * np.arange(count) / count
        return cls(np.column_stack([center[0] + a * np.cos(th), center[1] + b * np.sin(th)]))

    def moved(self, points, t) -> "CurveState":
        return CurveState(points, t, self.reference_spacing)

    @property
    def count(self) -> int:
        return len(self.points)

    @property
    def edges(self) -> np.ndarray:
        return _roll(self.points, -1) - self.points

    @property
    def edge_lengths(self) -> np.ndarray:
        return np.hypot(*self.edges.T)

    @property
    def length(self) -> float:
        return float(np.sum(self.edge_lengths))

    @property
    def area(self) -> float:
        return _signed_area(self.points)

    @property
    def isoperimetric_ratio(self) -> float:
        return self.length**2 / (4 * np.pi * self.area)

    @property
    def tangents(self) -> np.ndarray:
        d = _roll(self.points, -1) - _roll(self.points, 1)
        return d / np.hypot(*d.T)[:, None]

    @property
    def normals(self) -> np.ndarray:
        """Outward unit normals (tangent rotated clockwise)."""
        tan = self.tangents
        return np.column_stack([tan[:, 1], -tan[:, 0]])

    @property
    def curvature_vector(self) -> np.ndarray:
        """Discrete ``d^2 x / ds^2``: turning of unit edges over the dual length."""
        e = self.edges
        ln = np.hypot(*e.T)
        unit = e / ln[:, None]
        return 2.0 * (unit - _roll(unit, 1)) / (ln + _roll(ln, 1))[:, None]

    @property
    def curvature(self) -> np.ndarray:
        """Signed curvature, positive on convex curves."""
        return -np.sum(self.curvature_vector * self.normals, axis=1)

    @property
    def dual_lengths(self) -> np.ndarray:
        """Half the two adjacent edge lengths: the arclength weight of each node."""
        ln = self.edge_lengths
        return 0.5 * (ln + _roll(ln, 1))

    def radii(self, center=(0.0, 0.0)) -> np.ndarray:
        return np.hypot(*(self.points - np.asarray(center)).T)

    def is_simple(self) -> bool:
        return bool(LinearRing(self.points).is_simple)


def _signed_area(pts) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def line_integral(curve: CurveState, values) -> float:
    """Trapezoid rule for ``int f ds`` from nodal values."""
    return float(np.sum(np.asarray(values) * curve.dual_lengths))


def weighted_length(curve: CurveState, U: PotentialSpec) -> float:
    """``int e^{-U} ds``, which the flow decreases."""
    return line_integral(curve, np.exp(-U.value(curve.points)))


# -- stepping -------------------------------------------------------------------------

def max_stable_dt(curve: CurveState) -> float:
    """Curvature CFL ``0.4 h_min^2 / 2``."""
    return CFL_FACTOR * float(np.min(curve.edge_lengths)) ** 2 / 2.0


def normal_speed(curve: CurveState, U: PotentialSpec) -> np.ndarray:
    return -curve.curvature + np.sum(U.grad(curve.points) * curve.normals, axis=1)


def check_simple(curve: CurveState):
    if not curve.is_simple():
        raise SelfIntersectionError(f"curve self-intersects at t={curve.t}")


def flow_step(curve: CurveState, U: PotentialSpec, dt: float) -> CurveState:
    """One forward Euler step of ``x' = H + (grad U)^perp``."""
    if dt > max_stable_dt(curve) * (1 + 1e-12):
        raise CFLError(f"dt={dt:.3e} exceeds the curvature limit {max_stable_dt(curve):.3e}")
    speed = normal_speed(curve, U)
    new = curve.moved(curve.points + dt * speed[:, None] * curve.normals, curve.t + dt)
    if new.length < 10 * curve.reference_spacing:
        raise CurveCollapseError(f"length {new.length:.3e} is below ten initial element lengths")
    return new


def redistribute(curve: CurveState) -> CurveState:
    """Resample at uniform arclength on a periodic cubic spline through the nodes.

    Nodes only slide along the curve, so the geometric flow is unchanged.
    """
    pts = curve.points
    s = np.concatenate([[0.0], np.cumsum(curve.edge_lengths)])
    closed = np.vstack([pts, pts[:1]])
    spline = CubicSpline(s, closed, bc_type="periodic")
    # arclength of the spline itself, by Gauss-Legendre per element
    g, w = np.polynomial.legendre.leggauss(4)
    mid, half = 0.5 * (s[1:] + s[:-1]), 0.5 * np.diff(s)
    nodes = mid[:, None] + half[:, None] * g
    speed = np.hypot(*spline(nodes, 1).transpose(2, 0, 1))
    arc = np.concatenate([[0.0], np.cumsum(half * (speed @ w))])
    targets = np.linspace(0.0, arc[-1], curve.count, endpoint=False)
    params = np.interp(targets, arc, s)
    return curve.moved(spline(params), curve.t)


@dataclass
class FlowHistory:
    times: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    weighted_lengths: list = field(default_factory=list)
    steps: int = 0

    def at(self, t: float) -> CurveState:
        for s, c in zip(self.times, self.curves):
            if abs(s - t) <= 1e-12 * max(1.0, abs(t)):
                return c
        raise KeyError(f"no curve snapshot at t={t}")


def _landing_steps(t0, t1, dt):
    count = max(1, math.ceil((t1 - t0) / dt - 1e-9))
    return [(t1 - t0) / count] * count


def evolve(curve: CurveState, U: PotentialSpec, times, dt: float | None = None,
           redistribute_every: int = REDISTRIBUTE_EVERY, audit_every: int = 50,
           safety: float = 0.5) -> FlowHistory:
    """Advance ``curve`` through the increasing output ``times``, landing on each exactly.

    The step is ``dt`` if given, otherwise ``safety`` times the CFL limit of the
    initial curve (rescaled down if elements shrink).  The curve is checked
    for self-intersection every ``audit_every`` steps and at every output.
    """
    times = sorted(float(t) for t in times)
    if times and times[0] < curve.t:
        raise ValueError("output times precede the curve's time")
    hist = FlowHistory()
    cur = curve
    if not times or times[0] > cur.t:
        hist.times.append(cur.t)
        hist.curves.append(cur)
        hist.weighted_lengths.append(weighted_length(cur, U))
    for target in times:
        while target - cur.t > 1e-14 * max(1.0, target):
            step = dt if dt is not None else safety * max_stable_dt(cur)
            for h in _landing_steps(cur.t, target, step):
                cur = flow_step(cur, U, h)
                hist.steps += 1
                if hist.steps % redistribute_every == 0:
                    cur = redistribute(cur)
                if hist.steps % audit_every == 0:
                    check_simple(cur)
                if dt is None and h > max_stable_dt(cur):
                    break
            if abs(target - cur.t) <= 1e-12 * max(1.0, target):
                cur = cur.moved(cur.points, target)
        check_simple(cur)
        hist.times.append(target)
        hist.curves.append(cur)
        hist.weighted_lengths.append(weighted_length(cur, U))
    return hist


def circle_radius(r0: float, k: float, t: float) -> float:
    """Radius of the circle solving ``r' = -1/r - k r`` (``k = 0``: curve shortening)."""
    if k == 0:
        r2 = r0 * r0 - 2 * t
    else:
        r2 = (r0 * r0 + 1 / k) * math.exp(-2 * k * t) - 1 / k
    if r2 <= 0:
        raise CurveCollapseError("circle has vanished")
    return math.sqrt(r2)


def circle_extinction_time(r0: float, k: float) -> float:
    return r0 * r0 / 2 if k == 0 else math.log1p(k * r0 * r0) / (2 * k)


# -- ambient densities ---------------------------------------------------------------------

class TrajectoryDensity:
    """Ambient density read from solver snapshots by multilinear interpolation.

    Points are required to stay ``margin`` nodes away from the faces of a box grid.
    """

    def __init__(self, traj, margin: int = 2):
        self.traj = traj
        self.margin = margin
        self._grads = {}

    def _check(self, grid: GridSpec, points):
        if grid.periodic:
            return
        lo = np.asarray(grid.origin) + self.margin * np.asarray(grid.spacing)
        hi = np.asarray(grid.origin) + (np.asarray(grid.counts) - 1 - self.margin) * np.asarray(grid.spacing)
        if np.any(points < lo) or np.any(points > hi):
            raise GridError("curve leaves the core region of the ambient grid")

    def value(self, tau, points):
        f = self.traj.at(tau)
        self._check(f.grid, points)
        return fields.interpolate(f, points)

    def grad(self, tau, points):
        f = self.traj.at(tau)
        self._check(f.grid, points)
        key = self.traj.index(tau)
        if key not in self._grads:
            self._grads[key] = fields.gradient(f)
        return fields.interpolate_array(self._grads[key].values, f.grid, points)


class SharpDensity:
    """Closed-form ambient density for ``U = -k|x|^2/2`` in the plane.

    ``rho_tau = fund_tau e^{-kn tau}``: the Gaussian-type profile divided by
    its mass ``e^{kn tau}``, which solves the ambient equation with
    ``U2 = Lap U = -kn``.  At ``k = 0`` it is the heat kernel.
    """

    def __init__(self, k: float, n: int = AMBIENT_DIM):
        self.k, self.n = float(k), n

    def value(self, tau, points):
        if self.k == 0:
            return closed_forms.heat_kernel(self.n, tau, points)
        return closed_forms.gaussian_like_solution(self.n, self.k, tau, points) * math.exp(-self.k * self.n * tau)

    def grad(self, tau, points):
        if self.k == 0:
            return -np.asarray(points) / (2.0 * tau) * self.value(tau, points)[:, None]
        d = closed_forms.gaussian_like_log_derivatives(self.n, self.k, tau, points)
        return d["grad"] * self.value(tau, points)[:, None]


def ambient_trajectory(U: PotentialSpec, rho0: ScalarField, tau0: float, T: float, times, cfg):
    """Solve the ambient equation from ``tau0`` to ``T`` with snapshots at ``T - t`` for each flow time ``t``."""
    taus = sorted({T - float(t) for t in times} - {tau0, T})
    if any(tau <= tau0 for tau in taus):
        raise ValueError("every flow time must satisfy T - t > tau0")
    U1, U2 = flow_potential_pair(U)
    return solve_linear(rho0, U1, U2, cfg.replace(t_start=tau0, t_end=T, snapshots=tuple(taus)))


# -- Huisken quantity ------------------------------------------------------------------------

HUISKEN_VARIANTS = ("sinh", "b", "weighted")


def huisken_prefactor(variant: str, tau: float, k: float | None = None, k3: float | None = None,
                      K: float | None = None, n: int = AMBIENT_DIM, m: int = CURVE_DIM) -> float:
    """Time weight of the monotone quantity at ``tau = T - t``.

    ``sinh``: ``(sinh(k tau)/k)^{(n-m)/2}``, which is ``b_{-k^2}`` and tends to
    ``tau^{(n-m)/2}`` as ``k -> 0``; ``b``: ``b_{k3}(tau)^{(n-m)/2}``;
    ``weighted``: ``e^{-K(n-m) tau/2}`` times the ``sinh`` weight.
    """
    p = 0.5 * (n - m)
    if variant == "sinh":
        return b_comparison(-k * k, tau) ** p
    if variant == "b":
        return b_comparison(k3, tau) ** p
    if variant == "weighted":
        return math.exp(-K * (n - m) * tau / 2.0) * b_comparison(-k * k, tau) ** p
    raise ValueError(f"unknown variant {variant!r}; expected one of {HUISKEN_VARIANTS}")


def _density(rho):
    if isinstance(rho, ScalarField):
        return lambda pts: fields.interpolate(rho, pts)
    return rho


def huisken_quantity(curve: CurveState, rho, t: float, T: float, variant: str = "sinh", *, k=None, k3=None,
                     K=None) -> float:
    """``prefactor(T - t) * int rho ds`` with ``rho`` the ambient density at ``T - t``.

    ``rho`` is a ScalarField (interpolated multilinearly) or a callable on points.
    """
    if not T > t:
        raise ValueError("need T > t")
    values = _density(rho)(curve.points)
    if np.any(values <= 0):
        raise ValueError("ambient density must be positive on the curve")
    return huisken_prefactor(variant, T - t, k, k3, K) * line_integral(curve, values)


def normal_hessian_trace(curve: CurveState, U: PotentialSpec) -> np.ndarray:
    """``<Hess U nu, nu>`` at the nodes, the normal part of the Laplacian of ``U``."""
    nu = curve.normals
    return np.einsum("qi,qij,qj->q", nu, U.hess(curve.points), nu)


def dissipation_integrand(curve: CurveState, rho_values, rho_grad, U: PotentialSpec) -> float:
    """``int rho (Lap_perp U / 2 + |grad_perp rho / rho - H|^2) ds`` from nodal density data."""
    nu = curve.normals
    rho_values = np.asarray(rho_values, float)
    dn = np.sum(np.asarray(rho_grad) * nu, axis=1) / rho_values
    # grad_perp rho / rho - H = (d_nu log rho + kappa) nu
    mismatch = (dn + curve.curvature) ** 2
    return line_integral(curve, rho_values * (0.5 * normal_hessian_trace(curve, U) + mismatch))


@dataclass
class HuiskenRecord:
    variant: str
    T: float
    times: np.ndarray
    Q: np.ndarray
    dissipation: np.ndarray
    mass: np.ndarray
    prefactor: np.ndarray
    curves: list
    params: dict

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.Q) / np.diff(self.times)

    @property
    def relative_drift(self) -> float:
        return float((np.max(self.Q) - np.min(self.Q)) / abs(self.Q[0]))

    @property
    def max_relative_slope(self) -> float:
        """Largest finite-difference slope of ``Q / Q(0)``."""
        return float(np.max(self.slopes) / abs(self.Q[0]))

    def balance(self) -> np.ndarray:
        """``dQ/dt + prefactor * (D - K (n-m)/2 * int rho)`` at interval midpoints.

        ``D`` is the dissipation integral.  The ``K`` shift applies to the
        weighted variant only; zero means the monotonicity is an equality.
        """
        shift = self.params.get("K", 0.0) * (AMBIENT_DIM - CURVE_DIM) / 2 if self.variant == "weighted" else 0.0
        rate = self.prefactor * (self.dissipation - shift * self.mass)
        return self.slopes + 0.5 * (rate[1:] + rate[:-1])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "Q", "dissipation", "slope"])
            slopes = np.append(self.slopes, np.nan)
            for row in zip(self.times, self.Q, self.dissipation, slopes):
                w.writerow([repr(float(v)) for v in row])


def huisken_run(curve: CurveState, U: PotentialSpec, density, T: float, times, variant: str = "sinh", *,
                k=None, k3=None, K=None, dt: float | None = None) -> HuiskenRecord:
    """Co-evolve ``curve`` and record ``Q``, the dissipation integral and ``int rho ds`` at ``times``.

    ``density`` exposes ``value(tau, points)`` and ``grad(tau, points)``:
    a :class:`TrajectoryDensity` over a solve from :func:`ambient_trajectory`,
    or :class:`SharpDensity`.
    """
    if not (hasattr(density, "value") and hasattr(density, "grad")):
        raise TypeError("density must provide value(tau, points) and grad(tau, points)")
    hist = evolve(curve, U, times, dt)
    Q, D, M, P = [], [], [], []
    for t, c in zip(hist.times, hist.curves):
        tau = T - t
        vals = density.value(tau, c.points)
        if np.any(vals <= 0):
            raise ValueError("ambient density must be positive on the curve")
        pref = huisken_prefactor(variant, tau, k, k3, K)
        mass = line_integral(c, vals)
        Q.append(pref * mass)
        M.append(mass)
        P.append(pref)
        D.append(dissipation_integrand(c, vals, density.grad(tau, c.points), U))
    params = {"k": k, "k3": k3, "K": K, "steps": hist.steps}
    return HuiskenRecord(variant, T, np.asarray(hist.times), np.asarray(Q), np.asarray(D), np.asarray(M),
                         np.asarray(P), hist.curves, params)


def write_curves_csv(curves, path):
    """Curve snapshots as rows ``t, node, x, y``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "node", "x", "y"])
        for c in curves:
            for i, (x, y) in enumerate(c.points):
                w.writerow([repr(float(c.t)), i, repr(float(x)), repr(float(y))])


# -- volume audit ------------------------------------------------------------------------------

@dataclass
class VolumeAudit:
    times: np.ndarray
    volumes: np.ndarray
    normalized: np.ndarray
    k3: float
    tolerance: float
    positions: np.ndarray

    @property
    def relative_steps(self) -> np.ndarray:
        return np.diff(self.normalized) / self.normalized[:-1]

    @property
    def max_increase(self) -> float:
        return float(np.max(self.relative_steps))

    @property
    def relative_drift(self) -> float:
        return float((np.max(self.normalized) - np.min(self.normalized)) / self.normalized[0])

    @property
    def passed(self) -> bool:
        return self.max_increase <= self.tolerance


def volume_audit(traj, seeds, t0: float, t1: float, k3: float, *, U1=None, volume: float = 1.0,
                 tolerance: float = 1e-3, margin: int = 2) -> VolumeAudit:
    """Track ``b_{k3/n}(t)^{-n} vol(phi_t(D))`` for the flow of ``X_t = grad h_t``, ``h_t = -2 log rho_t - U1``.

    ``D`` is represented by equal-volume ``seeds``; each carries its Jacobian,
    advanced by ``d/dt log J = div X = Lap h``.  Positions and Jacobians use
    Heun steps between consecutive snapshots in ``[t0, t1]``, so the snapshots
    must be dense enough for second-order particle advection.
    """
    grid = traj.grid
    n = grid.dim
    U1 = traj.potentials.get("U1") if U1 is None else U1
    times = [t for t in traj.times if t0 - 1e-12 <= t <= t1 + 1e-12]
    if len(times) < 2:
        raise ValueError("need at least two snapshots in [t0, t1]")
    x = np.array(seeds, dtype=float).reshape(-1, n)
    coords = grid.coords()
    u1 = U1.value(coords)
    inner = None
    if not grid.periodic:
        lo = np.asarray(grid.origin) + margin * np.asarray(grid.spacing)
        hi = np.asarray(grid.origin) + (np.asarray(grid.counts) - 1 - margin) * np.asarray(grid.spacing)
        inner = (lo, hi)

    def fields_at(t):
        h = ScalarField(grid, -2.0 * np.log(traj.at(t).values) - u1)
        return fields.gradient(h).values, fields.laplacian(h).values

    def sample(arrays, pts):
        if inner is not None and (np.any(pts < inner[0]) or np.any(pts > inner[1])):
            raise GridError("a particle left the core region")
        g, lap = arrays
        return fields.interpolate_array(g, grid, pts), fields.interpolate_array(lap, grid, pts)

    logJ = np.zeros(len(x))
    cur = fields_at(times[0])
    vols = [volume]
    path = [x.copy()]
    for ta, tb in zip(times[:-1], times[1:]):
        h = tb - ta
        nxt = fields_at(tb)
        va, da = sample(cur, x)
        xp = x + h * va
        vb = sample(nxt, xp)[0]
        x = x + 0.5 * h * (va + vb)
        db = sample(nxt, x)[1]
        logJ += 0.5 * h * (da + db)
        vols.append(volume * float(np.mean(np.exp(logJ))))
        path.append(x.copy())
        cur = nxt
    times = np.asarray(times)
    norm = np.asarray(vols) * np.array([b_comparison(k3 / n, t) ** (-n) for t in times])
    return VolumeAudit(times, np.asarray(vols), norm, float(k3), tolerance, np.asarray(path))
