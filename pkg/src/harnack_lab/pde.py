"""Time integration of the drift-diffusion-reaction and porous-medium equations.

The linear equation is kept in advective form,

    rho' = Lap rho + <grad U1, grad rho> + U2 rho,

with the drift coefficient ``grad U1`` evaluated analytically.  Box grids use
homogeneous Neumann faces (ghost-node reflection), so the solver Laplacian
differs from :func:`fields.laplacian` on the two outermost layers; estimate
checks exclude those layers anyway.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from . import closed_forms, fields
from .errors import CFLError, DomainError, GridError, MissingSnapshot, PositivityError, SolverDivergence
from .fields import GridSpec, ScalarField
from .potentials import PotentialSpec

SCHEMES = ("explicit", "imex")
CFL_SAFETY = 0.25


@dataclass
class SolverConfig:
    """Time-stepping parameters.

    ``snapshots`` lists the output times besides ``t_start`` and ``t_end``,
    which are always recorded.
    """

    scheme: str = "imex"
    dt: float = 1e-3
    t_start: float = 0.0
    t_end: float = 1.0
    floor: float = 1e-30
    snapshots: tuple = ()
    cg_rtol: float = 1e-10

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.floor < 0:
            raise ValueError("floor must be non-negative")
        for s in self.snapshots:
            if not self.t_start <= s <= self.t_end:
                raise ValueError(f"snapshot time {s} outside [{self.t_start}, {self.t_end}]")

    def output_times(self) -> list:
        times = sorted({float(self.t_start), float(self.t_end), *map(float, self.snapshots)})
        return times

    def replace(self, **changes) -> "SolverConfig":
        d = dict(self.__dict__)
        d.update(changes)
        return SolverConfig(**d)


@dataclass
class Trajectory:
    """Snapshots ``(t, rho_t)`` of one solve, with the equation that produced them."""

    times: list
    snapshots: list
    equation: str
    potentials: dict = field(default_factory=dict)
    floor_activations: int = 0
    steps: int = 0
    dt: float = 0.0

    def __post_init__(self):
        if len(self.times) != len(self.snapshots):
            raise ValueError("times and snapshots differ in length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("snapshot times must be strictly increasing")

    @property
    def grid(self) -> GridSpec:
        return self.snapshots[0].grid

    def index(self, t: float) -> int:
        for i, s in enumerate(self.times):
            if abs(s - t) <= 1e-12 * max(1.0, abs(t)):
                return i
        raise MissingSnapshot(f"no snapshot at t={t}; available {self.times}")

    def at(self, t: float) -> ScalarField:
        return self.snapshots[self.index(t)]

    def __iter__(self):
        return iter(zip(self.times, self.snapshots))

    def __len__(self):
        return len(self.times)


# -- sparse operators -------------------------------------------------------------

def _laplacian_1d(N, h, periodic):
    main = np.full(N, -2.0)
    off = np.ones(N - 1)
    A = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    if periodic:
        A[0, N - 1] = 1.0
        A[N - 1, 0] = 1.0
    else:
        A[0, 1] = 2.0
        A[N - 1, N - 2] = 2.0
    return A.tocsr() / (h * h)


def _central_1d(N, h, periodic):
    off = np.full(N - 1, 0.5 / h)
    D = sp.diags([-off, off], [-1, 1], format="lil")
    if periodic:
        D[0, N - 1] = -0.5 / h
        D[N - 1, 0] = 0.5 / h
    else:
        D[0, :] = 0.0
        D[N - 1, :] = 0.0
    return D.tocsr()


def _weights_1d(N, periodic):
    w = np.ones(N)
    if not periodic:
        w[[0, -1]] = 0.5
    return w


def _embed(op, ax, counts):
    before = int(np.prod(counts[:ax]))
    after = int(np.prod(counts[ax + 1:]))
    return sp.kron(sp.kron(sp.identity(before), op), sp.identity(after), format="csr")


@dataclass(frozen=True)
class _Operators:
    lap: sp.csr_matrix
    grads: tuple
    weights: np.ndarray


@functools.lru_cache(maxsize=16)
def _operators(grid: GridSpec) -> _Operators:
    counts = grid.counts
    lap = sum(_embed(_laplacian_1d(N, h, grid.periodic), ax, counts)
              for ax, (N, h) in enumerate(zip(counts, grid.spacing)))
    grads = tuple(_embed(_central_1d(N, h, grid.periodic), ax, counts)
                  for ax, (N, h) in enumerate(zip(counts, grid.spacing)))
    w = np.ones(1)
    for N in counts:
        w = np.kron(w, _weights_1d(N, grid.periodic))
    return _Operators(lap.tocsr(), grads, w)


def solver_laplacian(f: ScalarField) -> ScalarField:
    """The Laplacian the solvers use (Neumann faces on boxes)."""
    ops = _operators(f.grid)
    return ScalarField(f.grid, (ops.lap @ f.values.ravel()).reshape(f.grid.shape))


def max_explicit_dt(grid: GridSpec) -> float:
    return CFL_SAFETY * min(grid.spacing) ** 2


# -- stepping helpers ---------------------------------------------------------------

def _segments(times, dt):
    """Yield ``(step, is_output)`` pairs so that steps land on every output time."""
    for start, target in zip(times, times[1:]):
        count = max(1, math.ceil((target - start) / dt - 1e-9))
        for i in range(count - 1):
            yield dt, False
        yield target - (start + (count - 1) * dt), True


def _apply_floor(u, floor):
    low = u < floor
    n = int(np.count_nonzero(low))
    if n:
        u[low] = floor
    return n


def _require_positive(rho0: ScalarField, floor: float):
    if np.any(rho0.values <= 0) or np.any(rho0.values < floor):
        raise PositivityError("initial data must be strictly positive and at least the floor")


class _LinearStepper:
    def __init__(self, grid, U1, U2, cfg):
        self.grid = grid
        self.cfg = cfg
        self.ops = _operators(grid)
        x = grid.coords()
        self.g = [np.ascontiguousarray(U1.grad(x)[..., ax].ravel()) for ax in range(grid.dim)]
        self.c = np.ascontiguousarray(U2.value(x).ravel())
        self._matrices = {}

    def explicit_part(self, u):
        out = self.c * u
        for G, g in zip(self.ops.grads, self.g):
            out += g * (G @ u)
        return out

    def explicit(self, u, dt):
        return u + dt * (self.ops.lap @ u + self.explicit_part(u))

    def _system(self, dt):
        key = round(dt, 15)
        if key not in self._matrices:
            n = self.grid.size
            W = sp.diags(self.ops.weights)
            M = W @ (sp.identity(n) - 0.5 * dt * self.ops.lap)
            self._matrices[key] = M.tocsr()
            if len(self._matrices) > 4:
                self._matrices.pop(next(iter(self._matrices)))
        return self._matrices[key]

    def imex(self, u, dt):
        rhs = u + 0.5 * dt * (self.ops.lap @ u) + dt * self.explicit_part(u)
        M = self._system(dt)
        b = self.ops.weights * rhs
        sol, info = cg(M, b, x0=rhs, rtol=self.cfg.cg_rtol, atol=0.0, maxiter=10 * self.grid.size)
        if info != 0:
            raise SolverDivergence(f"conjugate-gradient iteration stagnated (info={info})")
        return sol


def solve_linear(rho0: ScalarField, U1: PotentialSpec, U2: PotentialSpec, cfg: SolverConfig) -> Trajectory:
    """Advance ``rho0`` from ``cfg.t_start`` under the drift-diffusion-reaction equation."""
    grid = rho0.grid
    U1.check_grid(grid)
    U2.check_grid(grid)
    _require_positive(rho0, cfg.floor)
    if cfg.scheme == "explicit" and cfg.dt > max_explicit_dt(grid) * (1 + 1e-12):
        raise CFLError(f"dt={cfg.dt} exceeds the explicit limit {max_explicit_dt(grid):.3e}")
    stepper = _LinearStepper(grid, U1, U2, cfg)
    advance = stepper.explicit if cfg.scheme == "explicit" else stepper.imex

    times = cfg.output_times()
    u = rho0.values.ravel().copy()
    snaps = [ScalarField(grid, rho0.values)]
    floors = steps = 0
    for step, is_output in _segments(times, cfg.dt):
        u = advance(u, step)
        steps += 1
        if not np.all(np.isfinite(u)):
            raise SolverDivergence(f"non-finite values after {steps} steps")
        floors += _apply_floor(u, cfg.floor)
        if is_output:
            snaps.append(ScalarField(grid, u.reshape(grid.shape)))
    return Trajectory(times, snaps, "linear", {"U1": U1, "U2": U2}, floors, steps, cfg.dt)


def solve_porous_medium(rho0: ScalarField, m: float, U: PotentialSpec, cfg: SolverConfig) -> Trajectory:
    """Explicit solve of ``rho' = Lap(rho^m) + U rho^(2-m)``.

    The step is capped each iteration by ``0.25 h^2 / (m max rho^(m-1))``; for
    ``m < 1`` that limit shrinks with ``min rho``, so fast diffusion is only
    accepted for strictly positive data.
    """
    grid = rho0.grid
    n = grid.dim
    if not m > 0 or m == 1 or not m - 1 + 2.0 / n > 0:
        raise DomainError(f"m={m} violates m - 1 + 2/n > 0 (m != 1)")
    U.check_grid(grid)
    if np.any(rho0.values < cfg.floor) or (m < 1 and np.any(rho0.values <= 0)):
        raise PositivityError("initial data must be at least the floor")
    ops = _operators(grid)
    react = U.value(grid.coords()).ravel()
    h2 = min(grid.spacing) ** 2

    times = cfg.output_times()
    u = rho0.values.ravel().copy()
    snaps = [ScalarField(grid, rho0.values)]
    floors = steps = 0
    t = times[0]
    for target in times[1:]:
        while t < target:
            diffusivity = m * np.max(u ** (m - 1.0))
            if not np.isfinite(diffusivity) or diffusivity <= 0:
                raise CFLError("cannot bound the porous-medium diffusivity")
            step = min(cfg.dt, CFL_SAFETY * h2 / diffusivity)
            if step < 1e-14 * max(1.0, abs(t)):
                raise CFLError("CFL step underflow")
            if target - t <= step * (1 + 1e-9):
                step, t = target - t, target
            else:
                t += step
            u = u + step * (ops.lap @ (u**m) + react * u ** (2.0 - m))
            steps += 1
            if not np.all(np.isfinite(u)):
                raise SolverDivergence(f"non-finite values after {steps} steps")
            floors += _apply_floor(u, cfg.floor)
        snaps.append(ScalarField(grid, u.reshape(grid.shape)))
    return Trajectory(times, snaps, "porous", {"U": U, "m": float(m)}, floors, steps, cfg.dt)


def fundamental_solution_approx(x0, t: float, U1: PotentialSpec, U2: PotentialSpec, grid: GridSpec,
                                cfg: SolverConfig, sigma0: float | None = None) -> ScalarField:
    """Approximate ``p_t(x0, .)`` by evolving a narrow heat kernel.

    The datum is the Euclidean heat kernel at time ``s0 = sigma0**2`` centred
    at ``x0``; it is advanced from ``s0`` to ``t``.  The bias is O(sigma0^2).
    ``sigma0`` defaults to four grid spacings.
    """
    h = max(grid.spacing)
    sigma0 = 4.0 * h if sigma0 is None else float(sigma0)
    if sigma0 < 4.0 * h * (1 - 1e-12):
        raise GridError(f"sigma0={sigma0} is below four grid spacings ({4 * h:.3e})")
    s0 = sigma0**2
    if not t > s0:
        raise DomainError(f"t={t} must exceed the start time sigma0^2={s0}")
    x0 = np.asarray(x0, float).reshape(grid.dim)
    init = closed_forms.heat_kernel(grid.dim, s0, grid.coords(), x0)
    init = np.maximum(init, cfg.floor)
    run = cfg.replace(t_start=s0, t_end=float(t), snapshots=())
    return solve_linear(ScalarField(grid, init), U1, U2, run).at(t)


def mass(f: ScalarField) -> float:
    return fields.integrate(f)


def steady_residual(rho: ScalarField, U1: PotentialSpec, U2: PotentialSpec) -> float:
    """Max of ``|Lap rho + <grad U1, grad rho> + U2 rho|`` relative to ``max rho``."""
    stepper = _LinearStepper(rho.grid, U1, U2, SolverConfig())
    u = rho.values.ravel()
    r = stepper.ops.lap @ u + stepper.explicit_part(u)
    return float(np.max(np.abs(r)) / np.max(np.abs(u)))


def relative_error(numeric: ScalarField, exact: np.ndarray, mask=None) -> float:
    """``max |numeric - exact| / max |exact|`` over the mask."""
    diff = np.abs(numeric.values - exact)
    scale = np.max(np.abs(exact)) if mask is None else np.max(np.abs(exact[mask]))
    if mask is not None:
        diff = diff[mask]
    return float(np.max(diff) / scale) if math.isfinite(scale) and scale > 0 else float("inf")
