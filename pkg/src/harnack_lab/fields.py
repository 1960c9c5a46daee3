"""Grids, sampled fields and second-order finite-difference operators.

All experiments live on either a flat torus (``topology="periodic"``) or a
truncated Euclidean box (``topology="box"``).  Box grids are centred at the
origin and include both faces; periodic grids start at the origin and exclude
the right end point.

The operators use second-order stencils everywhere: central differences in the
interior and across periodic seams, and second-order one-sided stencils on box
faces.  The diagonal of :func:`hessian` and :func:`laplacian` share the same
second-difference stencil, so ``trace(hessian(f)) == laplacian(f)`` up to
round-off.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import GridError

TOPOLOGIES = ("periodic", "box")
MIN_NODES = 8


@dataclass(frozen=True)
class GridSpec:
    dim: int
    extent: tuple
    counts: tuple
    topology: str = "box"

    def __post_init__(self):
        extent = tuple(float(e) for e in np.atleast_1d(self.extent))
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        if len(extent) == 1:
            extent = extent * self.dim
        if len(counts) == 1:
            counts = counts * self.dim
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "counts", counts)
        if self.dim not in (1, 2, 3):
            raise GridError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if len(extent) != self.dim or len(counts) != self.dim:
            raise GridError("extent and counts need one entry per axis")
        if self.topology not in TOPOLOGIES:
            raise GridError(f"unknown topology {self.topology!r}")
        if min(counts) < MIN_NODES:
            raise GridError(f"need at least {MIN_NODES} nodes per axis, got {counts}")
        h = self.spacing
        if not all(np.isfinite(h)) or min(h) <= 0:
            raise GridError(f"grid spacing must be positive and finite, got {h}")

    @classmethod
    def cube(cls, dim, extent, count, topology="box"):
        return cls(dim, (extent,) * dim, (count,) * dim, topology)

    @property
    def periodic(self) -> bool:
        return self.topology == "periodic"

    @property
    def shape(self) -> tuple:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def spacing(self) -> tuple:
        if self.periodic:
            return tuple(L / N for L, N in zip(self.extent, self.counts))
        return tuple(L / (N - 1) for L, N in zip(self.extent, self.counts))

    @property
    def origin(self) -> tuple:
        if self.periodic:
            return (0.0,) * self.dim
        return tuple(-0.5 * L for L in self.extent)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list:
        return [o + h * np.arange(N) for o, h, N in zip(self.origin, self.spacing, self.counts)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``counts + (dim,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def points(self) -> np.ndarray:
        return self.coords().reshape(-1, self.dim)

    def interior_mask(self, margin: int = 2) -> np.ndarray:
        """Boolean mask that drops ``margin`` layers next to each box face."""
        mask = np.ones(self.shape, dtype=bool)
        if self.periodic or margin <= 0:
            return mask
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[ax] = slice(0, margin)
            mask[tuple(idx)] = False
            idx[ax] = slice(self.counts[ax] - margin, None)
            mask[tuple(idx)] = False
        return mask

    def radius_mask(self, center, radius) -> np.ndarray:
        r = np.linalg.norm(self.coords() - np.asarray(center, float), axis=-1)
        return r <= radius

    def contains(self, points) -> np.ndarray:
        points = np.atleast_2d(points)
        if self.periodic:
            return np.ones(points.shape[0], dtype=bool)
        lo = np.asarray(self.origin)
        hi = lo + np.asarray(self.extent)
        return np.all((points >= lo - 1e-12) & (points <= hi + 1e-12), axis=1)


def _readonly(a: np.ndarray) -> np.ndarray:
    view = a.view()
    view.flags.writeable = False
    return view


class _Field:
    trailing: int = 0

    def __init__(self, grid: GridSpec, values):
        values = np.asarray(values, dtype=float)
        want = grid.shape + self._trailing_shape(grid)
        if values.shape != want:
            raise GridError(f"{type(self).__name__} expects shape {want}, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise GridError(f"{type(self).__name__} values must be finite")
        self.grid = grid
        self.values = _readonly(values)

    @staticmethod
    def _trailing_shape(grid):
        return ()

    def _binary(self, other, op):
        if isinstance(other, _Field):
            if type(other) is not type(self) or other.grid != self.grid:
                raise GridError("fields live on different grids")
            other = other.values
        return type(self)(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self):
        return type(self)(self.grid, -self.values)

    def __repr__(self):
        return f"{type(self).__name__}(grid={self.grid}, shape={self.values.shape})"


class ScalarField(_Field):
    """One real value per grid node."""

    @classmethod
    def from_function(cls, grid: GridSpec, fn):
        """Sample ``fn(coords)`` where coords has shape ``grid.shape + (dim,)``."""
        return cls(grid, np.broadcast_to(fn(grid.coords()), grid.shape))

    def map(self, fn) -> "ScalarField":
        return ScalarField(self.grid, fn(self.values))

    def log(self) -> "ScalarField":
        if np.any(self.values <= 0):
            raise GridError("log of a non-positive field")
        return ScalarField(self.grid, np.log(self.values))


class VectorField(_Field):
    """One ``dim``-vector per node, stored in the trailing axis."""

    @staticmethod
    def _trailing_shape(grid):
        return (grid.dim,)

    def norm_squared(self) -> ScalarField:
        return ScalarField(self.grid, np.sum(self.values**2, axis=-1))

    def dot(self, other: "VectorField") -> ScalarField:
        return ScalarField(self.grid, np.sum(self.values * other.values, axis=-1))


def _triu_pairs(d):
    return [(i, j) for i in range(d) for j in range(i, d)]


class SymmetricMatrixField(_Field):
    """Symmetric ``dim x dim`` matrix per node, upper triangle stored row-major."""

    @staticmethod
    def _trailing_shape(grid):
        return (grid.dim * (grid.dim + 1) // 2,)

    @classmethod
    def from_matrix(cls, grid: GridSpec, mats) -> "SymmetricMatrixField":
        mats = np.asarray(mats, dtype=float)
        packed = np.stack([mats[..., i, j] for i, j in _triu_pairs(grid.dim)], axis=-1)
        return cls(grid, packed)

    @classmethod
    def identity(cls, grid: GridSpec, scale=1.0):
        mats = np.broadcast_to(np.eye(grid.dim) * scale, grid.shape + (grid.dim, grid.dim))
        return cls.from_matrix(grid, mats)

    def matrix(self) -> np.ndarray:
        d = self.grid.dim
        out = np.empty(self.grid.shape + (d, d))
        for k, (i, j) in enumerate(_triu_pairs(d)):
            out[..., i, j] = self.values[..., k]
            out[..., j, i] = self.values[..., k]
        return out

    def entry(self, i, j) -> np.ndarray:
        i, j = min(i, j), max(i, j)
        return self.values[..., _triu_pairs(self.grid.dim).index((i, j))]

    def trace(self) -> ScalarField:
        d = self.grid.dim
        return ScalarField(self.grid, sum(self.entry(i, i) for i in range(d)))

    def quadratic_form(self, v) -> np.ndarray:
        v = np.asarray(v, float)
        return np.einsum("...i,...ij,...j->...", v, self.matrix(), v)


# -- stencils on raw arrays ---------------------------------------------------

def first_difference(values: np.ndarray, grid: GridSpec, axis: int) -> np.ndarray:
    h = grid.spacing[axis]
    if grid.periodic:
        return (np.roll(values, -1, axis) - np.roll(values, 1, axis)) / (2 * h)
    return np.gradient(values, h, axis=axis, edge_order=2)


def second_difference(values: np.ndarray, grid: GridSpec, axis: int) -> np.ndarray:
    h2 = grid.spacing[axis] ** 2
    if grid.periodic:
        return (np.roll(values, -1, axis) - 2 * values + np.roll(values, 1, axis)) / h2
    f = np.moveaxis(values, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / h2
    out[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / h2
    out[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / h2
    return np.moveaxis(out, 0, axis)


def laplacian_array(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return sum(second_difference(values, grid, ax) for ax in range(grid.dim))


def gradient_array(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.stack([first_difference(values, grid, ax) for ax in range(grid.dim)], axis=-1)


def hessian_array(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Packed upper-triangle Hessian of a raw nodal array."""
    comps = []
    for i, j in _triu_pairs(grid.dim):
        if i == j:
            comps.append(second_difference(values, grid, i))
        else:
            dij = first_difference(first_difference(values, grid, i), grid, j)
            dji = first_difference(first_difference(values, grid, j), grid, i)
            comps.append(0.5 * (dij + dji))
    return np.stack(comps, axis=-1)


# -- public operators -----------------------------------------------------------

def gradient(f: ScalarField) -> VectorField:
    return VectorField(f.grid, gradient_array(f.values, f.grid))


def laplacian(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, laplacian_array(f.values, f.grid))


def hessian(f: ScalarField) -> SymmetricMatrixField:
    return SymmetricMatrixField(f.grid, hessian_array(f.values, f.grid))


def integrate(f: ScalarField) -> float:
    """Node sum times cell volume on tori, tensor trapezoid rule on boxes."""
    grid = f.grid
    if grid.periodic:
        return float(np.sum(f.values) * grid.cell_volume)
    return float(np.sum(f.values * trapezoid_weights(grid)) * grid.cell_volume)


def trapezoid_weights(grid: GridSpec) -> np.ndarray:
    w = np.ones(grid.shape)
    if grid.periodic:
        return w
    for ax in range(grid.dim):
        wa = np.ones(grid.counts[ax])
        wa[[0, -1]] = 0.5
        shape = [1] * grid.dim
        shape[ax] = -1
        w = w * wa.reshape(shape)
    return w


# -- eigenvalues ------------------------------------------------------------------

def symmetric_eigenvalues(packed: np.ndarray, dim: int) -> np.ndarray:
    """Ascending eigenvalues of packed symmetric matrices, closed form for dim <= 3."""
    packed = np.asarray(packed, float)
    if dim == 1:
        return packed[..., :1].copy()
    if dim == 2:
        a, b, c = packed[..., 0], packed[..., 1], packed[..., 2]
        mean = 0.5 * (a + c)
        rad = np.hypot(0.5 * (a - c), b)
        return np.stack([mean - rad, mean + rad], axis=-1)
    if dim != 3:
        raise GridError("closed-form eigenvalues implemented for dim <= 3")
    a11, a12, a13, a22, a23, a33 = (packed[..., k] for k in range(6))
    q = (a11 + a22 + a33) / 3.0
    p1 = a12**2 + a13**2 + a23**2
    b11, b22, b33 = a11 - q, a22 - q, a33 - q
    p2 = b11**2 + b22**2 + b33**2 + 2 * p1
    p = np.sqrt(p2 / 6.0)
    safe = np.where(p > 0, p, 1.0)
    det_b = (b11 * (b22 * b33 - a23**2) - a12 * (a12 * b33 - a23 * a13)
             + a13 * (a12 * a23 - b22 * a13)) / safe**3
    r = np.clip(0.5 * det_b, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    lam_max = q + 2 * p * np.cos(phi)
    lam_min = q + 2 * p * np.cos(phi + 2 * np.pi / 3)
    lam_mid = 3 * q - lam_max - lam_min
    out = np.stack([lam_min, lam_mid, lam_max], axis=-1)
    # p == 0 means a multiple of the identity
    return np.where((p > 0)[..., None], out, q[..., None])


def min_eigenvalue_field(S: SymmetricMatrixField) -> ScalarField:
    return ScalarField(S.grid, symmetric_eigenvalues(S.values, S.grid.dim)[..., 0])


def max_eigenvalue_field(S: SymmetricMatrixField) -> ScalarField:
    return ScalarField(S.grid, symmetric_eigenvalues(S.values, S.grid.dim)[..., -1])


# -- interpolation ---------------------------------------------------------------

def interpolate_array(values: np.ndarray, grid: GridSpec, points) -> np.ndarray:
    """Multilinear interpolation of nodal (possibly vector-valued) data.

    Periodic axes wrap; points outside a box grid raise :class:`GridError`.
    """
    points = np.atleast_2d(np.asarray(points, float))
    if points.shape[-1] != grid.dim:
        raise GridError(f"points must have {grid.dim} coordinates")
    if not np.all(grid.contains(points)):
        raise GridError("interpolation point outside the grid")
    lo_idx, frac = [], []
    for ax in range(grid.dim):
        s = (points[:, ax] - grid.origin[ax]) / grid.spacing[ax]
        N = grid.counts[ax]
        if grid.periodic:
            i0 = np.floor(s).astype(int)
            frac.append(s - i0)
            lo_idx.append(np.mod(i0, N))
        else:
            i0 = np.clip(np.floor(s).astype(int), 0, N - 2)
            frac.append(s - i0)
            lo_idx.append(i0)
    out = 0.0
    for corner in range(2 ** grid.dim):
        w = np.ones(points.shape[0])
        idx = []
        for ax in range(grid.dim):
            bit = (corner >> ax) & 1
            w = w * (frac[ax] if bit else 1.0 - frac[ax])
            i = lo_idx[ax] + bit
            if grid.periodic:
                i = np.mod(i, grid.counts[ax])
            idx.append(i)
        sample = values[tuple(idx)]
        out = out + (w.reshape((-1,) + (1,) * (sample.ndim - 1)) * sample)
    return out


def interpolate(f: ScalarField, points) -> np.ndarray:
    return interpolate_array(f.values, f.grid, points)


def argmin_location(values: np.ndarray, grid: GridSpec, mask: np.ndarray | None = None):
    """Index tuple and coordinates of the smallest masked entry."""
    v = np.where(mask, values, np.inf) if mask is not None else values
    flat = int(np.argmin(v))
    idx = np.unravel_index(flat, grid.shape)
    coord = [grid.origin[a] + grid.spacing[a] * idx[a] for a in range(grid.dim)]
    return tuple(int(i) for i in idx), coord


def stack_points(points: Sequence) -> np.ndarray:
    return np.atleast_2d(np.asarray(points, dtype=float))
