"""Sparse multivariate polynomials keyed by multi-index exponents.

A :class:`TaylorPoly` stores ``{beta: coefficient}`` where ``beta`` is a
d-tuple of non-negative integers.  Coefficients may be Python ints (the kernel
numerators are built with exact integer arithmetic) or floats.
"""
from __future__ import annotations

import itertools
from math import comb, factorial
from typing import Iterable, Mapping

import numpy as np


def multi_indices(order: int, d: int = 3) -> list[tuple[int, ...]]:
    """All multi-indices of total degree ``order`` in graded-lex order.

    Within one degree the tuples are sorted lexicographically descending, so
    for d = 3 and order 2 the sequence is (2,0,0), (1,1,0), (1,0,1), (0,2,0), ...
    """
    if order < 0:
        return []
    if d == 1:
        return [(order,)]
    out = []
    for first in range(order, -1, -1):
        for rest in multi_indices(order - first, d - 1):
            out.append((first,) + rest)
    return out


def multi_indices_upto(order: int, d: int = 3) -> list[tuple[int, ...]]:
    """Concatenation of :func:`multi_indices` for degrees 0..order."""
    out = []
    for j in range(order + 1):
        out.extend(multi_indices(j, d))
    return out


def count_multi_indices(order: int, d: int = 3) -> int:
    return comb(order + d - 1, d - 1)


def mi_factorial(beta) -> int:
    out = 1
    for b in beta:
        out *= factorial(b)
    return out


def monomial_values(points: np.ndarray, betas) -> np.ndarray:
    """Matrix ``M[i, k] = points[i] ** betas[k]`` (product over coordinates)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    betas = list(betas)
    if not betas:
        return np.zeros((points.shape[0], 0))
    top = max(max(b) for b in betas)
    n, d = points.shape
    powers = np.ones((top + 1, n, d))
    for p in range(1, top + 1):
        powers[p] = powers[p - 1] * points
    out = np.ones((n, len(betas)))
    for k, beta in enumerate(betas):
        for j, e in enumerate(beta):
            if e:
                out[:, k] *= powers[e, :, j]
    return out


class TaylorPoly:
    """Polynomial in ``dim`` variables, ``sum_beta c_beta x^beta``."""

    __slots__ = ("dim", "_c")

    def __init__(self, coeffs: Mapping | None = None, dim: int = 3):
        self.dim = dim
        c = {}
        for beta, val in (coeffs or {}).items():
            beta = tuple(int(b) for b in beta)
            if len(beta) != dim or min(beta) < 0:
                raise ValueError(f"bad exponent {beta} for dim {dim}")
            if val != 0:
                c[beta] = c.get(beta, 0) + val
        self._c = {b: v for b, v in c.items() if v != 0}

    # construction helpers -------------------------------------------------
    @classmethod
    def constant(cls, value, dim: int = 3) -> "TaylorPoly":
        return cls({(0,) * dim: value}, dim)

    @classmethod
    def monomial(cls, beta, value=1, dim: int | None = None) -> "TaylorPoly":
        beta = tuple(beta)
        return cls({beta: value}, dim or len(beta))

    @classmethod
    def coordinate(cls, j: int, dim: int = 3) -> "TaylorPoly":
        beta = [0] * dim
        beta[j] = 1
        return cls({tuple(beta): 1}, dim)

    @classmethod
    def from_terms(cls, terms: Iterable, dim: int = 3) -> "TaylorPoly":
        """Build from rows ``[e_1, ..., e_d, coefficient]``."""
        coeffs: dict = {}
        for row in terms:
            row = list(row)
            if len(row) != dim + 1:
                raise ValueError(f"term {row!r} must have {dim} exponents and a coefficient")
            beta = tuple(int(e) for e in row[:dim])
            coeffs[beta] = coeffs.get(beta, 0) + row[dim]
        return cls(coeffs, dim)

    def to_terms(self) -> list[list]:
        return [list(b) + [float(v)] for b, v in self.items()]

    # container protocol ---------------------------------------------------
    @property
    def coeffs(self) -> dict:
        return dict(self._c)

    def items(self):
        """Terms in graded-lex order."""
        return sorted(self._c.items(), key=lambda kv: (sum(kv[0]), tuple(-e for e in kv[0])))

    def __getitem__(self, beta) -> float:
        return self._c.get(tuple(beta), 0)

    def __len__(self):
        return len(self._c)

    def __repr__(self):
        if not self._c:
            return "TaylorPoly(0)"
        parts = []
        for beta, v in self.items():
            mono = "*".join(f"x{j + 1}^{e}" if e > 1 else f"x{j + 1}" for j, e in enumerate(beta) if e)
            parts.append(f"{v}" + (f"*{mono}" if mono else ""))
        return "TaylorPoly(" + " + ".join(parts) + ")"

    def __eq__(self, other):
        if isinstance(other, (int, float)):
            other = TaylorPoly.constant(other, self.dim)
        if not isinstance(other, TaylorPoly):
            return NotImplemented
        return self.dim == other.dim and self._c == other._c

    __hash__ = None

    def allclose(self, other: "TaylorPoly", atol: float = 1e-12) -> bool:
        keys = set(self._c) | set(other._c)
        return all(abs(self[k] - other[k]) <= atol for k in keys)

    # algebra -------------------------------------------------------------
    def _coerce(self, other) -> "TaylorPoly":
        if isinstance(other, TaylorPoly):
            if other.dim != self.dim:
                raise ValueError("dimension mismatch")
            return other
        return TaylorPoly.constant(other, self.dim)

    def __add__(self, other):
        other = self._coerce(other)
        c = dict(self._c)
        for b, v in other._c.items():
            c[b] = c.get(b, 0) + v
        return TaylorPoly(c, self.dim)

    __radd__ = __add__

    def __neg__(self):
        return TaylorPoly({b: -v for b, v in self._c.items()}, self.dim)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, TaylorPoly):
            return TaylorPoly({b: v * other for b, v in self._c.items()}, self.dim)
        other = self._coerce(other)
        c: dict = {}
        for b1, v1 in self._c.items():
            for b2, v2 in other._c.items():
                b = tuple(x + y for x, y in zip(b1, b2))
                c[b] = c.get(b, 0) + v1 * v2
        return TaylorPoly(c, self.dim)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return TaylorPoly({b: v / scalar for b, v in self._c.items()}, self.dim)

    def __pow__(self, n: int):
        out = TaylorPoly.constant(1, self.dim)
        for _ in range(n):
            out = out * self
        return out

    # calculus ------------------------------------------------------------
    def diff(self, j: int) -> "TaylorPoly":
        c = {}
        for b, v in self._c.items():
            if b[j]:
                nb = list(b)
                nb[j] -= 1
                c[tuple(nb)] = v * b[j]
        return TaylorPoly(c, self.dim)

    def derivative(self, beta) -> "TaylorPoly":
        out = self
        for j, e in enumerate(beta):
            for _ in range(e):
                out = out.diff(j)
        return out

    def gradient(self) -> list["TaylorPoly"]:
        return [self.diff(j) for j in range(self.dim)]

    def laplacian(self) -> "TaylorPoly":
        out = TaylorPoly({}, self.dim)
        for j in range(self.dim):
            out = out + self.diff(j).diff(j)
        return out

    # structure -----------------------------------------------------------
    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(b) for b in self._c), default=-1)

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(v) <= tol for v in self._c.values())

    def homogeneous_part(self, k: int) -> "TaylorPoly":
        return TaylorPoly({b: v for b, v in self._c.items() if sum(b) == k}, self.dim)

    def truncate(self, k: int) -> "TaylorPoly":
        """Terms of total degree <= k."""
        return TaylorPoly({b: v for b, v in self._c.items() if sum(b) <= k}, self.dim)

    def is_homogeneous(self) -> bool:
        return len({sum(b) for b in self._c}) <= 1

    def max_abs(self) -> float:
        return max((abs(float(v)) for v in self._c.values()), default=0.0)

    def vanishing_order(self, rtol: float = 0.0) -> int | None:
        """Smallest degree whose block exceeds ``rtol * max_abs``; None if zero."""
        scale = self.max_abs()
        if scale == 0:
            return None
        thr = rtol * scale
        for k in range(self.degree + 1):
            blk = [abs(float(v)) for b, v in self._c.items() if sum(b) == k]
            if blk and max(blk) > thr:
                return k
        return None

    def scale_argument(self, eps: float) -> "TaylorPoly":
        """Polynomial x -> p(eps * x)."""
        return TaylorPoly({b: v * eps ** sum(b) for b, v in self._c.items()}, self.dim)

    def astype_float(self) -> "TaylorPoly":
        return TaylorPoly({b: float(v) for b, v in self._c.items()}, self.dim)

    # evaluation ----------------------------------------------------------
    def __call__(self, points) -> np.ndarray | float:
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if not self._c:
            out = np.zeros(pts.shape[0])
        else:
            betas = list(self._c)
            vals = np.array([float(self._c[b]) for b in betas])
            out = monomial_values(pts, betas) @ vals
        return float(out[0]) if single else out

    def eval_gradient(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([g(pts) for g in self.gradient()], axis=-1)


def radial_power(n: int, dim: int = 3) -> TaylorPoly:
    """The polynomial |x|^(2n)."""
    r2 = TaylorPoly({tuple(2 if i == j else 0 for i in range(dim)): 1 for j in range(dim)}, dim)
    return r2 ** n


def all_exponents(max_degree: int, dim: int = 3):
    """Iterator over every exponent of total degree <= max_degree (graded-lex)."""
    return itertools.chain.from_iterable(multi_indices(j, dim) for j in range(max_degree + 1))
