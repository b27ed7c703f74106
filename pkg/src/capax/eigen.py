"""Eigenvalue shifts of the Dirichlet Laplacian caused by a small hole.

Eigenfunctions enter only through Taylor data at the origin.  Ground truth
comes from the concentric spherical shell, whose eigenvalues are roots of
cross products of spherical Bessel functions.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import factorial, pi, sqrt

import numpy as np
from scipy.optimize import brentq

from .direct_solver import capacity_direct, frak_C
from .geometry import Surface
from .layer_ops import DIM
from .taylor import TaylorPoly, multi_indices_upto, radial_power

ZERO_RTOL = 1e-10
RANK_RTOL = 1e-9
GRAM_TOL = 1e-6


@dataclass(frozen=True)
class AdmissibleFunction:
    taylor: TaylorPoly
    label: str = ""

    def __add__(self, other):
        return AdmissibleFunction(self.taylor + other.taylor, f"{self.label}+{other.label}")

    def scaled(self, c: float) -> "AdmissibleFunction":
        return AdmissibleFunction(self.taylor * c, self.label)


def _poly(f) -> TaylorPoly:
    return f.taylor if isinstance(f, AdmissibleFunction) else f


def vanishing_order(f, rtol: float = ZERO_RTOL) -> int:
    """Smallest degree whose coefficient block exceeds rtol * (max coefficient)."""
    k = _poly(f).vanishing_order(rtol)
    if k is None:
        raise ValueError("function is identically zero within tolerance")
    return k


def principal_part(f, rtol: float = ZERO_RTOL) -> TaylorPoly:
    return _poly(f).homogeneous_part(vanishing_order(f, rtol))


def capacity_asymptotics_pair(omega: Surface, u, v, rtol: float = ZERO_RTOL):
    """(kappa(u) + kappa(v) + d - 2, Q(u, v)); Q = 0 if either input vanishes."""
    pu, pv = _poly(u), _poly(v)
    ku, kv = pu.vanishing_order(rtol), pv.vanishing_order(rtol)
    if ku is None or kv is None:
        return None, 0.0
    return ku + kv + DIM - 2, frak_C(omega, pu.homogeneous_part(ku), pv.homogeneous_part(kv))


@dataclass
class SimplePrediction:
    eigenvalue: float
    exponent: int
    coefficient: float
    epsilons: list
    values: list

    @property
    def shifts(self):
        return [v - self.eigenvalue for v in self.values]


def predict_simple(eigenvalue: float, u_N, omega: Surface, eps_list) -> SimplePrediction:
    """lambda_N + frak_C(omega, (u_N)_#) eps^(2k + d - 2) for a simple eigenvalue."""
    k = vanishing_order(u_N)
    p = principal_part(u_N)
    coef = frak_C(omega, p, p)
    expo = 2 * k + DIM - 2
    vals = [eigenvalue + coef * e ** expo for e in eps_list]
    return SimplePrediction(eigenvalue, expo, coef, list(eps_list), vals)


# ---------------------------------------------------------------------------
# multiple eigenvalues

@dataclass
class EigenSpace:
    eigenvalue: float
    basis: list
    gram: np.ndarray | None = None
    index: int = 1  # position N of the first eigenvalue of the cluster

    @property
    def multiplicity(self) -> int:
        return len(self.basis)


@dataclass
class OrderBlock:
    order: int
    coeffs: np.ndarray  # (m, m_j) combination coefficients, L2-orthonormal columns
    functions: list

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]


def _coefficient_matrix(basis):
    polys = [_poly(f) for f in basis]
    D = max(p.degree for p in polys)
    monos = multi_indices_upto(max(D, 0), DIM)
    C = np.array([[float(p[b]) for p in polys] for b in monos])
    deg = np.array([sum(b) for b in monos])
    return C, deg, max(D, 0)


def _null_space(A, tol):
    if A.shape[0] == 0:
        return np.eye(A.shape[1])
    _, s, vt = np.linalg.svd(A)
    rank = int((s > tol).sum())
    return vt[rank:].T


def order_decomposition(space: EigenSpace) -> list[OrderBlock]:
    """Split the eigenspace into L2-orthogonal blocks of constant vanishing order.

    Blocks are returned with strictly decreasing orders k_1 > k_2 > ...
    """
    m = space.multiplicity
    G = np.eye(m) if space.gram is None else np.asarray(space.gram, float)
    if G.shape != (m, m) or not np.allclose(G, G.T, atol=GRAM_TOL):
        raise ValueError("Gram witness must be a symmetric m x m matrix")
    if np.abs(G - np.eye(m)).max() > GRAM_TOL:
        raise ValueError(f"basis is not L2-orthonormal (Gram deviation {np.abs(G - np.eye(m)).max():.2e})")
    Lc = np.linalg.cholesky(G)
    Linv_t = np.linalg.inv(Lc).T  # alpha = Linv_t z
    C, deg, D = _coefficient_matrix(space.basis)
    Cz = C @ Linv_t
    tol = RANK_RTOL * max(np.abs(Cz).max(), 1e-300)
    nulls = [_null_space(Cz[deg < k], tol) for k in range(D + 2)]
    if nulls[D + 1].shape[1]:
        raise ValueError("a combination of the basis is identically zero within tolerance")
    blocks = []
    for k in range(D + 1):
        Zk, Zn = nulls[k], nulls[k + 1]
        if Zk.shape[1] == Zn.shape[1]:
            continue
        Q = Zk - Zn @ (Zn.T @ Zk)
        u, s, _ = np.linalg.svd(Q, full_matrices=False)
        E = u[:, s > 0.5][:, :Zk.shape[1] - Zn.shape[1]]
        alpha = Linv_t @ E
        funcs = [AdmissibleFunction(sum((space.basis[i].taylor * alpha[i, j] for i in range(m)),
                                        TaylorPoly({}, DIM)), f"E{k}_{j}") for j in range(alpha.shape[1])]
        blocks.append(OrderBlock(k, alpha, funcs))
    blocks.sort(key=lambda b: -b.order)
    return blocks


@dataclass
class BlockResult:
    order: int
    dim: int
    mu: list
    Q: np.ndarray = field(repr=False)
    basis: list = field(repr=False)


@dataclass
class EigenPrediction:
    eigenvalue: float
    multiplicity: int
    blocks: list
    branches: list  # (index, exponent, mu)
    basis_out: list = field(repr=False)
    predictions: list = field(default_factory=list)
    oracle: list | None = None

    def report(self) -> dict:
        return {
            "eigenvalue": float(self.eigenvalue),
            "multiplicity": int(self.multiplicity),
            "blocks": [{"order": b.order, "dim": b.dim, "mu": [float(x) for x in b.mu]} for b in self.blocks],
            "predictions": self.predictions,
            "oracle": self.oracle,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.report(), fh, indent=2, sort_keys=True)


def q_matrix(omega: Surface, functions, order: int) -> np.ndarray:
    parts = [_poly(f).homogeneous_part(order) for f in functions]
    n = len(parts)
    Q = np.empty((n, n))
    for a in range(n):
        for b in range(n):
            Q[a, b] = frak_C(omega, parts[a], parts[b])
    return 0.5 * (Q + Q.T)


def predict_multiple(space: EigenSpace, omega: Surface, eps_list=()) -> EigenPrediction:
    """Branch exponents 2k_j + d - 2 and prefactors from the per-block Q_j spectra."""
    blocks = order_decomposition(space)
    results, branches, basis_out = [], [], []
    idx = space.index
    for blk in blocks:
        Q = q_matrix(omega, blk.functions, blk.order)
        mu, vec = np.linalg.eigh(Q)
        if not np.all(mu > 0):
            raise ArithmeticError(f"Q form not positive definite on order-{blk.order} block: {mu}")
        adapted = [AdmissibleFunction(sum((blk.functions[i].taylor * vec[i, l] for i in range(blk.dim)),
                                          TaylorPoly({}, DIM)), f"v{idx + l}") for l in range(blk.dim)]
        expo = 2 * blk.order + DIM - 2
        for l in range(blk.dim):
            branches.append((idx + l, expo, float(mu[l])))
        basis_out.extend(adapted)
        results.append(BlockResult(blk.order, blk.dim, [float(x) for x in mu], Q, adapted))
        idx += blk.dim
    preds = [{"epsilon": float(e), "branch": int(i), "value": float(space.eigenvalue + mu * e ** ex)}
             for e in eps_list for (i, ex, mu) in branches]
    return EigenPrediction(space.eigenvalue, space.multiplicity, results, branches, basis_out, preds)


# ---------------------------------------------------------------------------
# spherical Bessel functions and shell eigenvalues

def sph_jn(l: int, z):
    z = np.asarray(z, float)
    s, c = np.sin(z), np.cos(z)
    if l == 0:
        return s / z
    if l == 1:
        return s / z ** 2 - c / z
    if l == 2:
        return (3.0 / z ** 2 - 1.0) * s / z - 3.0 * c / z ** 2
    raise ValueError("closed forms are provided for l <= 2")


def sph_yn(l: int, z):
    z = np.asarray(z, float)
    s, c = np.sin(z), np.cos(z)
    if l == 0:
        return -c / z
    if l == 1:
        return -c / z ** 2 - s / z
    if l == 2:
        return -(3.0 / z ** 2 - 1.0) * c / z - 3.0 * s / z ** 2
    raise ValueError("closed forms are provided for l <= 2")


def _nth_root(f, n, k_max, step=0.02, k_min=1e-3):
    ks = np.arange(k_min, k_max + step, step)
    vals = f(ks)
    found = 0
    for i in range(len(ks) - 1):
        if vals[i] == 0.0:
            found += 1
            if found == n:
                return float(ks[i])
        elif vals[i] * vals[i + 1] < 0:
            found += 1
            if found == n:
                return brentq(f, ks[i], ks[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    raise ArithmeticError(f"could not bracket root number {n} below k = {k_max}")


def ball_bessel_zero(l: int, n: int) -> float:
    """n-th positive zero of j_l."""
    if l == 0:
        return n * pi
    return _nth_root(lambda k: sph_jn(l, k), n, (n + l + 1) * pi, k_min=0.5)


def shell_eigenvalue_oracle(eps: float, l: int, n: int) -> float:
    """Dirichlet eigenvalue k^2 of {eps < |x| < 1} with angular order l, radial index n."""
    if not 0 < eps < 1:
        raise ValueError("need 0 < eps < 1")

    def cross(k):
        return sph_jn(l, k * eps) * sph_yn(l, k) - sph_jn(l, k) * sph_yn(l, k * eps)

    k = _nth_root(cross, n, (n + l + 2) * pi / (1 - eps), k_min=0.5)
    return k * k


def shell_eigenvalue_l0(eps: float, n: int) -> float:
    return (n * pi / (1 - eps)) ** 2


def ball_mode_taylor(l: int, n: int, component: int = 0, degree: int = 8) -> AdmissibleFunction:
    """L2(B_1)-normalized Dirichlet eigenfunction of the unit ball, as Taylor data.

    l = 0: sin(k r) / (r sqrt(2 pi)) with k = n pi.
    l = 1: N j_1(k r) x_c / r with k the n-th zero of j_1 and N^2 = 3 / (2 pi j_2(k)^2).
    """
    k = ball_bessel_zero(l, n)
    terms = TaylorPoly({}, DIM)
    if l == 0:
        # sin(kr)/r = sum (-1)^j k^(2j+1) r^(2j) / (2j+1)!
        norm = 1.0 / sqrt(2.0 * pi)
        for j in range(degree // 2 + 1):
            terms = terms + radial_power(j) * ((-1) ** j * k ** (2 * j + 1) / factorial(2 * j + 1) * norm)
        return AdmissibleFunction(terms, f"ball l=0 n={n}")
    if l == 1:
        N = sqrt(3.0 / (2.0 * pi)) / abs(float(sph_jn(2, k)))
        xc = TaylorPoly.coordinate(component, DIM)
        for j in range((degree - 1) // 2 + 1):
            c = (-1) ** j * k ** (2 * j + 1) / (2 ** j * factorial(j) * _double_factorial(2 * j + 3))
            terms = terms + radial_power(j) * xc * (N * c)
        return AdmissibleFunction(terms, f"ball l=1 n={n} x{component + 1}")
    raise ValueError("ball modes are provided for l <= 1")


def _double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


# ---------------------------------------------------------------------------

@dataclass
class FitReport:
    exponent: float
    prefactor: float
    expected_exponent: int
    expected_prefactor: float
    epsilons: list
    capacities: list

    @property
    def prefactor_rel_error(self) -> float:
        return abs(self.prefactor / self.expected_prefactor - 1.0)


def loglog_fit(eps_list, values):
    slope, intercept = np.polyfit(np.log(eps_list), np.log(values), 1)
    return float(slope), float(np.exp(intercept))


def general_capacity_asymptotics_check(Omega: Surface, omega: Surface, u, eps_list) -> FitReport:
    """Log-log regression of capacity_direct(eps, u, u) against the blow-up prediction."""
    eps_list = sorted(float(e) for e in eps_list)
    if len(eps_list) < 4 or eps_list[-1] / eps_list[0] < 4:
        raise ValueError("need at least 4 epsilon values spanning a factor >= 4")
    p = _poly(u)
    caps = [capacity_direct(Omega, omega, e, p, p) for e in eps_list]
    slope, pref = loglog_fit(eps_list, caps)
    k = vanishing_order(p)
    pp = principal_part(p)
    return FitReport(slope, pref, 2 * k + DIM - 2, frak_C(omega, pp, pp), eps_list, caps)
