"""Closed-form potential families and the hypotheses built from them.

Sign conventions live here and nowhere else.  The canonical combination is

    V = Lap U1 + |grad U1|^2 / 2 - 2 U2,

and the constants used by the comparison functions are derived from a
non-negative ``k`` through :func:`k3_laplacian` (``-n k^2``, trace-type bounds)
and :func:`k3_hessian` (``-k^2``, matrix-type bounds).  The cost-comparison
estimates use ``W = U2 - |grad U1|^2 / 2`` instead (see
:func:`comparison_potential`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fields
from .errors import GridError, PotentialError

FAMILIES = ("zero", "quadratic", "gaussian_bump", "trig", "sum", "laplacian_of")


def _sq(x):
    return np.sum(x * x, axis=-1)


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """A potential ``U: R^d -> R`` with analytic derivatives.

    Build instances with the class-method constructors; ``params`` holds the
    family's numeric parameters as tuples so specs are hashable.
    """

    family: str
    dim: int
    params: dict = field(default_factory=dict)
    terms: tuple = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise PotentialError(f"unknown potential family {self.family!r}")
        if self.family == "gaussian_bump" and self.params["width"] <= 0:
            raise PotentialError("gaussian width must be positive")
        if self.family == "trig" and np.any(np.asarray(self.params["periods"]) <= 0):
            raise PotentialError("trig periods must be positive")

    # constructors ----------------------------------------------------------
    @classmethod
    def zero(cls, dim):
        return cls("zero", dim)

    @classmethod
    def quadratic(cls, dim, a, b=None, c=0.0):
        """``U(x) = a|x|^2/2 + <b, x> + c``."""
        b = np.zeros(dim) if b is None else np.broadcast_to(np.asarray(b, float), (dim,))
        return cls("quadratic", dim, {"a": float(a), "b": tuple(b), "c": float(c)})

    @classmethod
    def constant(cls, dim, c):
        return cls.quadratic(dim, 0.0, None, c)

    @classmethod
    def gaussian_bump(cls, dim, amplitude, center, width):
        center = np.broadcast_to(np.asarray(center, float), (dim,))
        return cls("gaussian_bump", dim, {"amplitude": float(amplitude),
                                          "center": tuple(center), "width": float(width)})

    @classmethod
    def trig(cls, dim, amplitudes, modes, periods, phases=None):
        """``U(x) = sum_j A_j cos(<2 pi m_j / L, x> + phi_j)`` with integer modes."""
        amplitudes = np.atleast_1d(np.asarray(amplitudes, float))
        modes = np.asarray(modes, dtype=int).reshape(len(amplitudes), dim)
        periods = np.broadcast_to(np.asarray(periods, float), (dim,))
        phases = np.zeros(len(amplitudes)) if phases is None else np.atleast_1d(np.asarray(phases, float))
        return cls("trig", dim, {"amplitudes": tuple(amplitudes),
                                 "modes": tuple(map(tuple, modes)),
                                 "periods": tuple(periods), "phases": tuple(phases)})

    @classmethod
    def sum(cls, *terms):
        dims = {t.dim for t in terms}
        if len(dims) != 1:
            raise PotentialError("summed potentials must share a dimension")
        return cls("sum", dims.pop(), terms=tuple(terms))

    @classmethod
    def laplacian_of(cls, base):
        """The potential ``Lap(base)`` (used for the reaction term ``U2 = Lap U``)."""
        return cls("laplacian_of", base.dim, terms=(base,))

    def __add__(self, other):
        return PotentialSpec.sum(self, other)

    # structure -------------------------------------------------------------
    def describe(self) -> dict:
        if self.family in ("sum", "laplacian_of"):
            return {"family": self.family, "terms": [t.describe() for t in self.terms]}
        return {"family": self.family, **{k: _plain(v) for k, v in self.params.items()}}

    def quadratic_coefficients(self):
        """``(a, b, c)`` when the potential is exactly quadratic, else ``None``."""
        if self.family == "zero":
            return 0.0, np.zeros(self.dim), 0.0
        if self.family == "quadratic":
            return self.params["a"], np.asarray(self.params["b"]), self.params["c"]
        if self.family == "sum":
            parts = [t.quadratic_coefficients() for t in self.terms]
            if any(p is None for p in parts):
                return None
            return (sum(p[0] for p in parts), sum(p[1] for p in parts), sum(p[2] for p in parts))
        if self.family == "laplacian_of":
            base = self.terms[0].quadratic_coefficients()
            if base is None:
                return None
            return 0.0, np.zeros(self.dim), base[0] * self.dim
        return None

    @property
    def is_quadratic(self) -> bool:
        return self.quadratic_coefficients() is not None

    def check_grid(self, grid: fields.GridSpec):
        if grid.dim != self.dim:
            raise PotentialError(f"potential has dimension {self.dim}, grid has {grid.dim}")
        if self.family == "trig":
            if not grid.periodic:
                raise PotentialError("trig potentials require a periodic grid")
            ratio = np.asarray(grid.extent) / np.asarray(self.params["periods"])
            if not np.allclose(ratio, np.round(ratio), atol=1e-9) or np.any(np.round(ratio) < 1):
                raise PotentialError("grid extent must be a multiple of the trig periods")
        for t in self.terms:
            t.check_grid(grid)

    # pointwise evaluation ----------------------------------------------------
    def _x(self, x):
        x = np.asarray(x, float)
        if x.shape[-1] != self.dim:
            raise PotentialError(f"points must have {self.dim} coordinates")
        return x

    def _trig_phase(self, x):
        p = self.params
        q = 2 * np.pi * np.asarray(p["modes"], float) / np.asarray(p["periods"])
        theta = x @ q.T + np.asarray(p["phases"])
        return q, theta, np.asarray(p["amplitudes"])

    def _gauss(self, x):
        p = self.params
        r = x - np.asarray(p["center"])
        w2 = p["width"] ** 2
        return r, w2, p["amplitude"] * np.exp(-_sq(r) / (2 * w2))

    def value(self, x):
        x = self._x(x)
        f = self.family
        if f == "zero":
            return np.zeros(x.shape[:-1])
        if f == "quadratic":
            p = self.params
            return 0.5 * p["a"] * _sq(x) + x @ np.asarray(p["b"]) + p["c"]
        if f == "gaussian_bump":
            return self._gauss(x)[2]
        if f == "trig":
            _, theta, A = self._trig_phase(x)
            return np.cos(theta) @ A
        if f == "sum":
            return sum(t.value(x) for t in self.terms)
        return self.terms[0].laplacian(x)

    def grad(self, x):
        x = self._x(x)
        f = self.family
        if f == "zero":
            return np.zeros_like(x)
        if f == "quadratic":
            return self.params["a"] * x + np.asarray(self.params["b"])
        if f == "gaussian_bump":
            r, w2, g = self._gauss(x)
            return -(g / w2)[..., None] * r
        if f == "trig":
            q, theta, A = self._trig_phase(x)
            return -(np.sin(theta) * A) @ q
        if f == "sum":
            return sum(t.grad(x) for t in self.terms)
        return self.terms[0].grad_laplacian(x)

    def hess(self, x):
        """Hessian matrices, shape ``x.shape[:-1] + (d, d)``."""
        x = self._x(x)
        d = self.dim
        eye = np.eye(d)
        f = self.family
        if f == "zero":
            return np.zeros(x.shape[:-1] + (d, d))
        if f == "quadratic":
            return np.broadcast_to(self.params["a"] * eye, x.shape[:-1] + (d, d)).copy()
        if f == "gaussian_bump":
            r, w2, g = self._gauss(x)
            outer = r[..., :, None] * r[..., None, :]
            return g[..., None, None] * (outer / w2**2 - eye / w2)
        if f == "trig":
            q, theta, A = self._trig_phase(x)
            qq = q[:, :, None] * q[:, None, :]
            return -np.einsum("...j,jab->...ab", np.cos(theta) * A, qq)
        if f == "sum":
            return sum(t.hess(x) for t in self.terms)
        base = self.terms[0]
        if base.is_quadratic:
            return np.zeros(x.shape[:-1] + (d, d))
        if base.family == "trig":
            q, theta, A = base._trig_phase(x)
            qq = q[:, :, None] * q[:, None, :]
            return np.einsum("...j,jab->...ab", np.cos(theta) * A * _sq(q), qq)
        raise PotentialError("Hessian of Lap(U) is only closed-form for quadratic and trig U")

    def laplacian(self, x):
        x = self._x(x)
        f = self.family
        if f == "zero":
            return np.zeros(x.shape[:-1])
        if f == "quadratic":
            return np.full(x.shape[:-1], self.params["a"] * self.dim)
        if f == "gaussian_bump":
            r, w2, g = self._gauss(x)
            return g * (_sq(r) / w2**2 - self.dim / w2)
        if f == "trig":
            q, theta, A = self._trig_phase(x)
            return -(np.cos(theta) * A) @ _sq(q)
        if f == "sum":
            return sum(t.laplacian(x) for t in self.terms)
        return np.trace(self.hess(x), axis1=-2, axis2=-1)

    def grad_laplacian(self, x):
        """Gradient of the Laplacian (third derivatives)."""
        x = self._x(x)
        f = self.family
        if f in ("zero", "quadratic"):
            return np.zeros_like(x)
        if f == "gaussian_bump":
            r, w2, g = self._gauss(x)
            d = self.dim
            coef = g * (-(_sq(r) / w2**2 - d / w2) / w2 + 2.0 / w2**2)
            return coef[..., None] * r
        if f == "trig":
            q, theta, A = self._trig_phase(x)
            return (np.sin(theta) * A * _sq(q)) @ q
        if f == "sum":
            return sum(t.grad_laplacian(x) for t in self.terms)
        base = self.terms[0]
        if base.is_quadratic:
            return np.zeros_like(x)
        if base.family == "trig":
            q, theta, A = base._trig_phase(x)
            return -(np.sin(theta) * A * _sq(q) ** 2) @ q
        raise PotentialError("third derivatives of Lap(U) only closed-form for quadratic and trig U")

    # sampled on a grid ------------------------------------------------------
    def field(self, grid):
        self.check_grid(grid)
        return fields.ScalarField(grid, self.value(grid.coords()))

    def grad_field(self, grid):
        self.check_grid(grid)
        return fields.VectorField(grid, self.grad(grid.coords()))

    def laplacian_field(self, grid):
        self.check_grid(grid)
        return fields.ScalarField(grid, self.laplacian(grid.coords()))

    def hess_field(self, grid):
        self.check_grid(grid)
        return fields.SymmetricMatrixField.from_matrix(grid, self.hess(grid.coords()))


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(e) for e in v]
    return v


# -- the Schrodinger-type potential V ------------------------------------------

def schrodinger_value(U1: PotentialSpec, U2: PotentialSpec, x):
    """Pointwise ``V = Lap U1 + |grad U1|^2/2 - 2 U2``."""
    return U1.laplacian(x) + 0.5 * _sq(U1.grad(x)) - 2.0 * U2.value(x)


def schrodinger_gradient(U1: PotentialSpec, U2: PotentialSpec, x):
    g = U1.grad(x)
    return U1.grad_laplacian(x) + np.einsum("...ij,...j->...i", U1.hess(x), g) - 2.0 * U2.grad(x)


def _check_pair(U1, U2, grid):
    if U1.dim != U2.dim or U1.dim != grid.dim:
        raise PotentialError(f"dimension mismatch: U1 {U1.dim}, U2 {U2.dim}, grid {grid.dim}")
    U1.check_grid(grid)
    U2.check_grid(grid)


def _quadratic_schrodinger(grid, q1, q2):
    a1, b1, _ = q1
    a2, b2, c2 = q2
    d = grid.dim
    x = grid.coords()
    g1 = a1 * x + b1
    val = a1 * d + 0.5 * _sq(g1) - 2.0 * (0.5 * a2 * _sq(x) + x @ b2 + c2)
    grad = a1 * g1 - 2.0 * (a2 * x + b2)
    hc = a1 * a1 - 2.0 * a2
    return (fields.ScalarField(grid, val), fields.VectorField(grid, grad),
            fields.ScalarField(grid, np.full(grid.shape, hc * d)),
            fields.SymmetricMatrixField.identity(grid, hc))


def _stencil_derivatives(V: fields.ScalarField):
    return V, fields.gradient(V), fields.laplacian(V), fields.hessian(V)


def schrodinger_potential(U1: PotentialSpec, U2: PotentialSpec, grid: fields.GridSpec):
    """``(V, grad V, Lap V, Hess V)`` on the grid.

    Quadratic families are assembled fully analytically; otherwise ``V`` is
    analytic at the nodes and its derivatives come from the grid stencils.
    """
    _check_pair(U1, U2, grid)
    q1, q2 = U1.quadratic_coefficients(), U2.quadratic_coefficients()
    if q1 is not None and q2 is not None:
        return _quadratic_schrodinger(grid, q1, q2)
    V = fields.ScalarField(grid, schrodinger_value(U1, U2, grid.coords()))
    return _stencil_derivatives(V)


def comparison_potential(U1: PotentialSpec, U2: PotentialSpec, grid: fields.GridSpec):
    """``(W, grad W, Lap W, Hess W)`` for ``W = U2 - |grad U1|^2/2``."""
    _check_pair(U1, U2, grid)
    q1, q2 = U1.quadratic_coefficients(), U2.quadratic_coefficients()
    if q1 is not None and q2 is not None:
        a1, b1, _ = q1
        a2, b2, c2 = q2
        x = grid.coords()
        g1 = a1 * x + b1
        val = 0.5 * a2 * _sq(x) + x @ np.asarray(b2) + c2 - 0.5 * _sq(g1)
        grad = a2 * x + b2 - a1 * g1
        hc = a2 - a1 * a1
        return (fields.ScalarField(grid, val), fields.VectorField(grid, grad),
                fields.ScalarField(grid, np.full(grid.shape, hc * grid.dim)),
                fields.SymmetricMatrixField.identity(grid, hc))
    x = grid.coords()
    W = fields.ScalarField(grid, U2.value(x) - 0.5 * _sq(U1.grad(x)))
    return _stencil_derivatives(W)


# -- sign adapters -----------------------------------------------------------

def k3_laplacian(k: float, n: int) -> float:
    """Trace-type constant: ``Lap V <= n k^2`` reads ``Lap(-V) >= -n k^2``."""
    return -n * k * k


def k3_hessian(k: float) -> float:
    """Matrix-type constant: ``Hess V <= k^2 I`` reads ``-Hess V >= -k^2 I``."""
    return -k * k


# -- audits ------------------------------------------------------------------

SLACK = 1e-9


def _le(value, bound):
    return value <= bound + SLACK * max(1.0, abs(bound))


def _ge(value, bound):
    return value >= bound - SLACK * max(1.0, abs(bound))


@dataclass
class HypothesisAudit:
    sup_lap_V: float
    sup_hess_V: float
    sup_grad_V: float
    inf_V: float
    k_min_laplacian: float
    k_min_hessian: float
    k: float
    n: int
    laplacian_ok: bool
    hessian_ok: bool
    grad_bounded: bool
    bounded_below: bool

    def as_dict(self):
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else v) for k, v in self.__dict__.items()}


def audit_hypotheses(U1, U2, grid, k: float, n: int | None = None, margin: int = 2) -> HypothesisAudit:
    """Audit ``Lap V <= n k^2``, ``Hess V <= k^2 I``, boundedness of grad V and V."""
    if k < 0:
        raise PotentialError("k must be non-negative")
    n = grid.dim if n is None else n
    V, gV, lV, hV = schrodinger_potential(U1, U2, grid)
    mask = grid.interior_mask(margin)
    sup_lap = float(np.max(lV.values[mask]))
    sup_hess = float(np.max(fields.max_eigenvalue_field(hV).values[mask]))
    sup_grad = float(np.sqrt(np.max(gV.norm_squared().values[mask])))
    inf_V = float(np.min(V.values[mask]))
    return HypothesisAudit(
        sup_lap_V=sup_lap,
        sup_hess_V=sup_hess,
        sup_grad_V=sup_grad,
        inf_V=inf_V,
        k_min_laplacian=math.sqrt(max(0.0, sup_lap / n)),
        k_min_hessian=math.sqrt(max(0.0, sup_hess)),
        k=float(k),
        n=int(n),
        laplacian_ok=_le(sup_lap, n * k * k),
        hessian_ok=_le(sup_hess, k * k),
        grad_bounded=bool(np.isfinite(sup_grad)),
        bounded_below=bool(np.isfinite(inf_V)),
    )


@dataclass
class ComparisonAudit:
    inf_lap_W: float
    inf_hess_W: float
    k3: float
    laplacian_ok: bool
    hessian_ok: bool

    def as_dict(self):
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else v) for k, v in self.__dict__.items()}


def audit_comparison(U1, U2, grid, k3: float, margin: int = 2) -> ComparisonAudit:
    """Audit ``Lap W >= k3`` and ``Hess W >= k3 I`` for ``W = U2 - |grad U1|^2/2``."""
    _, _, lW, hW = comparison_potential(U1, U2, grid)
    mask = grid.interior_mask(margin)
    inf_lap = float(np.min(lW.values[mask]))
    inf_hess = float(np.min(fields.min_eigenvalue_field(hW).values[mask]))
    return ComparisonAudit(inf_lap, inf_hess, float(k3), _ge(inf_lap, k3), _ge(inf_hess, k3))


@dataclass
class PorousAudit:
    inf_lap_U: float
    k3: float
    m: float
    ok: bool


def audit_porous(U: PotentialSpec, grid, m: float, k3: float, margin: int = 2) -> PorousAudit:
    """Audit ``Lap U >= k3 / (2m)``."""
    U.check_grid(grid)
    mask = grid.interior_mask(margin)
    inf_lap = float(np.min(U.laplacian(grid.coords())[mask]))
    return PorousAudit(inf_lap, float(k3), float(m), _ge(inf_lap, k3 / (2.0 * m)))


@dataclass
class FlowAudit:
    """Hypotheses of the weighted monotonicity formula for a potential ``U``."""

    sup_hess_Vflow: float
    inf_hess_U: float
    k_min: float
    k: float
    K: float
    hessian_ok: bool
    lower_ok: bool


def flow_potential_pair(U: PotentialSpec):
    """The drift/reaction pair ``(U1, U2) = (U, Lap U)`` of the ambient equation."""
    return U, PotentialSpec.laplacian_of(U)


def audit_flow(U: PotentialSpec, grid, k: float, K: float | None = None, margin: int = 2) -> FlowAudit:
    """Audit ``Hess(-Lap U + |grad U|^2/2) <= k^2 I`` and ``Hess U >= K I``."""
    U1, U2 = flow_potential_pair(U)
    _, _, _, hV = schrodinger_potential(U1, U2, grid)
    mask = grid.interior_mask(margin)
    sup_h = float(np.max(fields.max_eigenvalue_field(hV).values[mask]))
    inf_u = float(np.min(fields.min_eigenvalue_field(U.hess_field(grid)).values[mask]))
    K_eff = inf_u if K is None else float(K)
    return FlowAudit(sup_h, inf_u, math.sqrt(max(0.0, sup_h)), float(k), K_eff,
                     _le(sup_h, k * k), _ge(inf_u, K_eff))


def require_grid_match(a: fields.GridSpec, b: fields.GridSpec):
    if a != b:
        raise GridError("fields live on different grids")
