"""Exact reference solutions.

``a_comparison`` and ``b_comparison`` are the cot / 1/t / coth comparison
functions solving ``a' + a**2 + K = 0`` and ``b' = a b`` with ``b(0) = 0``.
The remaining functions are closed forms tied to the quadratic drift
potential ``U1(x) = -k|x|^2 / 2``: the Gaussian-type fundamental solution of
``rho' = Lap rho - k <x, grad rho>``, its analytic log-derivatives, the
associated cost function and its minimizing paths.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

# |K| t^2 below this switches to the Taylor branch
TAYLOR_SWITCH = 1e-6


def _check_domain(K, t, allow_zero=False):
    if t < 0 or (t == 0 and not allow_zero):
        raise DomainError(f"time must be positive, got t={t}")
    if K > 0 and t >= math.pi / math.sqrt(K):
        raise DomainError(f"t={t} is past the first conjugate time pi/sqrt(K) for K={K}")


def a_comparison(K: float, t: float) -> float:
    """Comparison function ``sqrt(K) cot(sqrt(K) t)`` and its K <= 0 branches."""
    K, t = float(K), float(t)
    _check_domain(K, t)
    x2 = K * t * t
    if abs(x2) < TAYLOR_SWITCH:
        return (1.0 - x2 / 3.0 - x2**2 / 45.0 - 2.0 * x2**3 / 945.0) / t
    if K > 0:
        s = math.sqrt(K)
        return s / math.tan(s * t)
    s = math.sqrt(-K)
    return s / math.tanh(s * t)


def b_comparison(K: float, t: float) -> float:
    """``sin(sqrt(K) t)/sqrt(K)``, ``t`` or ``sinh(sqrt(-K) t)/sqrt(-K)``."""
    K, t = float(K), float(t)
    _check_domain(K, t, allow_zero=True)
    x2 = K * t * t
    if abs(x2) < TAYLOR_SWITCH:
        return t * (1.0 - x2 / 6.0 + x2**2 / 120.0 - x2**3 / 5040.0)
    if K > 0:
        s = math.sqrt(K)
        return math.sin(s * t) / s
    s = math.sqrt(-K)
    return math.sinh(s * t) / s


def log_b_comparison(K: float, t: float) -> float:
    """``log b_K(t)`` without overflow for large ``sqrt(-K) t``."""
    K, t = float(K), float(t)
    if K < 0 and math.sqrt(-K) * t > 20:
        s = math.sqrt(-K)
        return s * t - math.log(2 * s) + math.log1p(-math.exp(-2 * s * t))
    return math.log(b_comparison(K, t))


def coth(x):
    return 1.0 / np.tanh(x)


# -- Gaussian-type fundamental solution -------------------------------------

def _sq_norm(x):
    x = np.asarray(x, float)
    return np.sum(x * x, axis=-1)


def _variance_scale(k, t):
    """``2 pi (e^{2kt}-1)/(k e^{2kt})``, i.e. ``4 pi`` times the heat variance."""
    return 2.0 * math.pi * (-math.expm1(-2.0 * k * t)) / k


def gaussian_like_log(n: int, k: float, t: float, x) -> np.ndarray:
    """Log of the Gaussian-type solution, evaluated at points ``x[..., n]``."""
    if n < 1 or k <= 0 or t <= 0:
        raise DomainError("need n >= 1, k > 0, t > 0")
    return -0.5 * n * math.log(_variance_scale(k, t)) - k * _sq_norm(x) / (2.0 * math.expm1(2.0 * k * t))


def gaussian_like_solution(n: int, k: float, t: float, x) -> np.ndarray:
    """``rho_t(x)`` solving ``rho' = Lap rho - k <x, grad rho>`` on R^n."""
    return np.exp(gaussian_like_log(n, k, t, x))


def gaussian_like_log_derivatives(n: int, k: float, t: float, x) -> dict:
    """Closed-form ``log rho`` and its space/time derivatives.

    Returns a dict with keys ``log``, ``grad`` (shape ``x.shape``), ``hess``
    (``x.shape[:-1] + (n, n)``), ``lap`` and ``dt``.
    """
    x = np.asarray(x, float)
    em1 = math.expm1(2.0 * k * t)
    e = em1 + 1.0
    c = k / em1
    hess = np.broadcast_to(-c * np.eye(n), x.shape[:-1] + (n, n))
    return {
        "log": gaussian_like_log(n, k, t, x),
        "grad": -c * x,
        "hess": hess,
        "lap": np.full(x.shape[:-1], -n * c),
        "dt": -n * c + k * k * _sq_norm(x) * e / em1**2,
    }


def heat_kernel(n: int, t: float, x, x0=None) -> np.ndarray:
    """Euclidean heat kernel ``(4 pi t)^{-n/2} exp(-|x-x0|^2 / 4t)``."""
    x = np.asarray(x, float)
    if x0 is not None:
        x = x - np.asarray(x0, float)
    return (4.0 * math.pi * t) ** (-0.5 * n) * np.exp(-_sq_norm(x) / (4.0 * t))


# -- cost of the quadratic potential ---------------------------------------

def quadratic_cost(n: int, k: float, t: float, y) -> float:
    """``k|y|^2 coth(kt)/2 - knt`` for ``V(x) = -kn + k^2|x|^2/2`` from 0."""
    if k <= 0 or t <= 0:
        raise DomainError("need k > 0 and t > 0")
    return 0.5 * k * float(_sq_norm(y)) / math.tanh(k * t) - k * n * t


def quadratic_minimizer(k: float, t: float, y, s) -> np.ndarray:
    """Point at time ``s`` on the minimizer ``sinh(ks)/sinh(kt) * y``.

    ``s`` may be a scalar or an array of times; the result then stacks one point
    per time along the leading axis.
    """
    s = np.asarray(s, float)
    if np.any(s < 0) or np.any(s > t):
        raise DomainError("s must lie in [0, t]")
    y = np.asarray(y, float)
    ratio = np.sinh(k * s) / math.sinh(k * t)
    ratio = np.where(s == t, 1.0, ratio)
    return ratio[..., None] * y if ratio.ndim else float(ratio) * y


def oscillator_cost(k: float, t: float, y, x=None, s: float = 0.0) -> float:
    """Cost of ``L = |v|^2/2 + k^2 |x|^2/2`` from ``(s, x)`` to ``(t, y)``.

    This is the drift-free cost with reaction ``U2 = -k^2|x|^2/2`` whose
    Laplacian and Hessian are ``kn coth(kt)`` and ``k coth(kt) I``.
    """
    y = np.asarray(y, float)
    x = np.zeros_like(y) if x is None else np.asarray(x, float)
    T = t - s
    return 0.5 * k * ((float(_sq_norm(x)) + float(_sq_norm(y))) / math.tanh(k * T)
                      - 2.0 * float(np.dot(x, y)) / math.sinh(k * T))


def barenblatt(n: int, m: float, t: float, x, C: float) -> np.ndarray:
    """Barenblatt profile of ``rho' = Lap(rho^m)`` with free constant ``C``."""
    alpha = n / (n * (m - 1.0) + 2.0)
    beta = alpha / n
    inner = C - beta * (m - 1.0) / (2.0 * m) * _sq_norm(x) / t ** (2.0 * beta)
    return t ** (-alpha) * np.maximum(inner, 0.0) ** (1.0 / (m - 1.0))


def barenblatt_radius(n: int, m: float, t: float, C: float) -> float:
    alpha = n / (n * (m - 1.0) + 2.0)
    beta = alpha / n
    return math.sqrt(C * 2.0 * m / (beta * (m - 1.0))) * t**beta
