"""Fundamental solution of the Laplacian and its multi-index derivatives.

Convention: S_d(x) = 1 / ((2 - d) s_d |x|^(d-2)), which is negative for d >= 3.
Derivatives are written as

    D^beta S_d(x) = P_beta(x) / ((2 - d) s_d |x|^(d - 2 + 2|beta|))

with integer-coefficient numerators obtained from the recursion

    P_{beta + e_j} = |x|^2 d_j P_beta - (d - 2 + 2|beta|) x_j P_beta,   P_0 = 1.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from math import gamma, pi

import numpy as np

from .errors import SingularityError
from .taylor import TaylorPoly, monomial_values, multi_indices, multi_indices_upto, radial_power

DEFAULT_MAX_ORDER = 12
SINGULAR_RADIUS = 1e-14

_max_order = DEFAULT_MAX_ORDER
_cache: dict = {}
_lock = threading.Lock()


def unit_sphere_measure(d: int) -> float:
    """Surface measure s_d = 2 pi^(d/2) / Gamma(d/2) of the unit sphere in R^d."""
    if int(d) != d or d < 3:
        raise ValueError(f"dimension must be an integer >= 3, got {d}")
    return 2.0 * pi ** (d / 2) / gamma(d / 2)


def _norm_factor(d: int) -> float:
    return (2 - d) * unit_sphere_measure(d)


def fundamental_solution(x, d: int = 3):
    """S_d at one point (1-D input) or at each row of a 2-D array."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r < SINGULAR_RADIUS):
        raise SingularityError("fundamental solution evaluated at the origin")
    out = 1.0 / (_norm_factor(d) * r ** (d - 2))
    return float(out) if np.ndim(out) == 0 else out


def grad_fundamental_solution(x, d: int = 3) -> np.ndarray:
    """grad S_d(x) = x / (s_d |x|^d)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(r < SINGULAR_RADIUS):
        raise SingularityError("gradient of the fundamental solution at the origin")
    return x / (unit_sphere_measure(d) * r ** d)


@dataclass(frozen=True)
class KernelDerivative:
    """D^beta S_d represented as numerator / ((2-d) s_d |x|^power)."""

    beta: tuple
    numerator: TaylorPoly
    power: int
    d: int

    @property
    def order(self) -> int:
        return sum(self.beta)

    def __call__(self, x):
        return eval_kernel_derivative(self, x)


def set_max_order(order: int) -> None:
    """Change the derivative order cap (default 12)."""
    global _max_order
    if order < 0:
        raise ValueError("max order must be non-negative")
    _max_order = int(order)


def get_max_order() -> int:
    return _max_order


def kernel_derivative(beta, d: int | None = None) -> KernelDerivative:
    """Memoized D^beta S_d.  ``d`` defaults to ``len(beta)``."""
    beta = tuple(int(b) for b in beta)
    d = len(beta) if d is None else d
    if len(beta) != d:
        raise ValueError("multi-index length must equal the dimension")
    if min(beta) < 0:
        raise ValueError("negative multi-index entry")
    if sum(beta) > _max_order:
        raise ValueError(f"|beta| = {sum(beta)} exceeds the configured max order {_max_order}")
    key = (beta, d)
    kd = _cache.get(key)
    if kd is not None:
        return kd
    with _lock:
        kd = _cache.get(key)
        if kd is None:
            kd = _build(beta, d)
            _cache[key] = kd
    return kd


def _build(beta, d) -> KernelDerivative:
    if sum(beta) == 0:
        return KernelDerivative(beta, TaylorPoly.constant(1, d), d - 2, d)
    # peel off the last non-zero direction so the parent is already cached
    j = max(i for i, b in enumerate(beta) if b)
    parent_beta = list(beta)
    parent_beta[j] -= 1
    parent = _cache.get((tuple(parent_beta), d)) or _build(tuple(parent_beta), d)
    _cache.setdefault((tuple(parent_beta), d), parent)
    num = numerator_step(parent.numerator, j, sum(parent_beta), d)
    return KernelDerivative(beta, num, d - 2 + 2 * sum(beta), d)


def numerator_step(p: TaylorPoly, j: int, order: int, d: int) -> TaylorPoly:
    """One application of the numerator recursion in direction j."""
    return radial_power(1, d) * p.diff(j) - (d - 2 + 2 * order) * TaylorPoly.coordinate(j, d) * p


def eval_kernel_derivative(kd: KernelDerivative, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    r = np.linalg.norm(pts, axis=1)
    if np.any(r < SINGULAR_RADIUS):
        raise SingularityError("kernel derivative evaluated at the origin")
    val = kd.numerator(pts) / (_norm_factor(kd.d) * r ** kd.power)
    return float(val[0]) if single else val


def grad_kernel_derivative(kd: KernelDerivative, x) -> np.ndarray:
    """Gradient of D^beta S_d, component j being D^(beta + e_j) S_d."""
    x = np.asarray(x, dtype=float)
    comps = []
    for j in range(kd.d):
        b = list(kd.beta)
        b[j] += 1
        comps.append(eval_kernel_derivative(kernel_derivative(tuple(b), kd.d), x))
    return np.array(comps) if x.ndim == 1 else np.stack(comps, axis=-1)


def derivative_table(points, max_order: int, d: int = 3) -> dict:
    """Values of D^beta S_d at each point for every |beta| <= max_order.

    Evaluated as one matrix product between the monomial table and the
    numerator coefficient matrix.  Returns ``{beta: array}``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.linalg.norm(pts, axis=1)
    if np.any(r < SINGULAR_RADIUS):
        raise SingularityError("kernel derivative table requested at the origin")
    betas = multi_indices_upto(max_order, d)
    kds = [kernel_derivative(b, d) for b in betas]
    monos = multi_indices_upto(max_order, d)
    pos = {b: i for i, b in enumerate(monos)}
    coef = np.zeros((len(monos), len(kds)))
    for k, kd in enumerate(kds):
        for b, v in kd.numerator.items():
            coef[pos[b], k] = float(v)
    vals = monomial_values(pts, monos) @ coef
    nf = _norm_factor(d)
    out = {}
    for k, kd in enumerate(kds):
        out[kd.beta] = vals[:, k] / (nf * r ** kd.power)
    return out


def clear_cache() -> None:
    with _lock:
        _cache.clear()


def prepopulate(max_order: int | None = None, d: int = 3) -> None:
    """Fill the cache up to ``max_order`` before any parallel section."""
    top = _max_order if max_order is None else max_order
    for j in range(top + 1):
        for b in multi_indices(j, d):
            kernel_derivative(b, d)
