"""Power-series expansion of Cap_Omega(eps omega, u^a, u^b) in eps.

All density coefficients are stored divided by k!, i.e. ``rho_i[k]`` holds
rho^i_k / k!, so every recursion below reads "coefficient of eps^k".  With
this normalization the shifted factorials k!/(k-(d-1))! and the binomial
weights of the original recursions collapse to plain Cauchy products.

Notation used in the code (d = 3, sums over multi-indices beta with
|beta| = j, all kernel derivatives taken at the nodes y of dOmega):

    m_rho[k][beta]   = int_domega rho_i[k](s) s^beta
    m_theta[k][beta] = int_domega theta_i[k](s) nu(s) s^beta          (vector)
    a[m][beta]       = int_dOmega rho_o[m](y) grad D^beta S(y)          (vector)
    b[m][beta]       = int_dOmega theta_o[m](y) nu(y).grad D^beta S(y)
    e[m][beta]       = int_dOmega rho_o[m](y) D^beta S(y)
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .direct_solver import (_as_poly, _op, exterior_dtn, frak_C, inner_rho_solver, inner_theta_solver,
                            outer_rho_solver, outer_theta_solver, volume_energy)
from .errors import SingularSystemError
from .geometry import Surface
from .kernels import derivative_table, get_max_order
from .layer_ops import DIM, normal_derivative_trace
from .taylor import TaylorPoly, mi_factorial, monomial_values, multi_indices_upto

log = logging.getLogger(__name__)

DEFAULT_K_MAX = 8


class _Basis:
    """Multi-indices up to a degree with their factorials and monomial data on domega."""

    def __init__(self, omega: Surface, K: int):
        self.K = K
        self.betas = multi_indices_upto(K, DIM)
        self.deg = np.array([sum(b) for b in self.betas])
        self.fact = np.array([float(mi_factorial(b)) for b in self.betas])
        self.slices = [np.nonzero(self.deg == j)[0] for j in range(K + 1)]
        s = omega.nodes
        self.mono = monomial_values(s, self.betas)  # (Ni, nb)
        # nu . grad t^beta on domega
        g = np.zeros_like(self.mono)
        for k, beta in enumerate(self.betas):
            for j in range(DIM):
                if beta[j]:
                    bm = list(beta)
                    bm[j] -= 1
                    g[:, k] += beta[j] * monomial_values(s, [tuple(bm)])[:, 0] * omega.normals[:, j]
        self.dn_mono = g


class _KernelData:
    """D^beta S, grad D^beta S and nu . grad D^beta S at the nodes of dOmega."""

    def __init__(self, Omega: Surface, K: int, betas):
        if K + 1 > get_max_order():
            raise ValueError(f"K_max = {K} needs kernel derivatives of order {K + 1} > max order {get_max_order()}")
        tab = derivative_table(Omega.nodes, K + 1, DIM)
        nb = len(betas)
        self.D = np.empty((Omega.n, nb))
        self.G = np.empty((Omega.n, nb, DIM))
        for k, beta in enumerate(betas):
            self.D[:, k] = tab[beta]
            for j in range(DIM):
                bp = list(beta)
                bp[j] += 1
                self.G[:, k, j] = tab[tuple(bp)]
        self.NG = np.einsum("nbk,nk->nb", self.G, Omega.normals)


@dataclass
class CoefficientTables:
    """Divided density coefficients and their cached moments."""

    K_max: int
    rho_o: list = field(default_factory=list)
    rho_i: list = field(default_factory=list)
    theta_o: list = field(default_factory=list)
    theta_i: list = field(default_factory=list)
    m_rho: list = field(default_factory=list)
    m_theta: list = field(default_factory=list)
    betas: list = field(default_factory=list, repr=False)
    Omega: Surface | None = field(default=None, repr=False)
    omega: Surface | None = field(default=None, repr=False)
    basis: object = field(default=None, repr=False)
    kernel: object = field(default=None, repr=False)
    u_a: TaylorPoly | None = None

    def moments(self, kind: str, k: int) -> dict:
        """{beta: moment} for kind 'rho' or 'theta' at order k."""
        arr = self.m_rho[k] if kind == "rho" else self.m_theta[k]
        return {b: arr[i] for i, b in enumerate(self.betas)}


def _setup(Omega, omega, K):
    basis = _Basis(omega, K)
    kern = _KernelData(Omega, K, basis.betas)
    return basis, kern


def rho_coefficients(Omega: Surface, omega: Surface, K_max: int = DEFAULT_K_MAX, _ctx=None) -> CoefficientTables:
    """Divided coefficients of (rho^o, rho^i) up to order K_max."""
    basis, kern = _ctx or _setup(Omega, omega, K_max)
    tabs = CoefficientTables(K_max, betas=basis.betas, Omega=Omega, omega=omega, basis=basis, kernel=kern)
    inner = inner_rho_solver(omega)
    outer = outer_rho_solver(Omega)
    wO, wI = Omega.weights, omega.weights
    a = []  # a[m]: (nb, 3)
    sign = np.where(basis.deg % 2 == 0, -1.0, 1.0)  # (-1)^(j+1)
    for k in range(K_max + 1):
        # inner density first: it only needs rho_o up to k - (d-1)
        if 1 <= k <= DIM - 2:
            ri = np.zeros(omega.n)
        else:
            rhs = np.zeros(omega.n)
            for j in range(0, k - (DIM - 1) + 1):
                sl = basis.slices[j]
                m = k - (DIM - 1) - j
                na = omega.normals @ a[m][sl].T  # (Ni, |sl|)
                rhs += (sign[sl] / basis.fact[sl] * basis.mono[:, sl] * na).sum(axis=1)
            ri, _ = inner.solve(rhs, 1.0 if k == 0 else 0.0)
        tabs.rho_i.append(ri)
        tabs.m_rho.append(basis.mono.T @ (wI * ri))
        rhs = np.zeros(Omega.n)
        for j in range(0, k + 1):
            sl = basis.slices[j]
            rhs += (kern.NG[:, sl] * (sign[sl] / basis.fact[sl])) @ tabs.m_rho[k - j][sl]
        ro = outer.solve(rhs)
        tabs.rho_o.append(ro)
        a.append(np.einsum("n,nbk->bk", wO * ro, kern.G))
    tabs._a = a
    return tabs


def theta_coefficients(Omega: Surface, omega: Surface, K_max: int, u_a, rho_tables: CoefficientTables) -> CoefficientTables:
    """Divided coefficients of (theta^o, theta^i); fills the theta slots of ``rho_tables``' copy."""
    u_a = _as_poly(u_a)
    basis, kern = rho_tables.basis, rho_tables.kernel
    if rho_tables.K_max < K_max:
        raise ValueError("rho tables are shorter than the requested order")
    tabs = CoefficientTables(K_max, list(rho_tables.rho_o[:K_max + 1]), list(rho_tables.rho_i[:K_max + 1]),
                             m_rho=list(rho_tables.m_rho[:K_max + 1]), betas=basis.betas, Omega=Omega, omega=omega,
                             basis=basis, kernel=kern, u_a=u_a)
    tabs._a = rho_tables._a
    inner = inner_theta_solver(omega)
    outer = outer_theta_solver(Omega)
    wO, wI = Omega.weights, omega.weights
    sign = np.where(basis.deg % 2 == 0, -1.0, 1.0)
    ua_k = [u_a.homogeneous_part(k)(omega.nodes) for k in range(K_max + 1)]
    b = []
    for k in range(K_max + 1):
        if k <= DIM - 1:
            to = np.zeros(Omega.n)
        else:
            rhs = np.zeros(Omega.n)
            for j in range(0, k - (DIM - 1) + 1):
                sl = basis.slices[j]
                mt = tabs.m_theta[k - (DIM - 1) - j][sl]  # (|sl|, 3)
                rhs += (np.einsum("nbk,bk->nb", kern.G[:, sl], mt) * (sign[sl] / basis.fact[sl])).sum(axis=1)
            to = outer.solve(rhs)
        tabs.theta_o.append(to)
        b.append((wO * to) @ kern.NG)
        rhs = ua_k[k].copy()
        for j in range(0, k + 1):
            sl = basis.slices[j]
            rhs += (basis.mono[:, sl] * (sign[sl] / basis.fact[sl])) @ b[k - j][sl]
        for l in range(k + 1):
            rhs -= omega.integrate(ua_k[l] * tabs.rho_i[k - l])
        ti, _ = inner.solve(rhs, 0.0)
        tabs.theta_i.append(ti)
        tabs.m_theta.append(np.einsum("bn,nk->bk", basis.mono.T * (wI * ti)[None, :], omega.normals))
    tabs._b = b
    return tabs


@dataclass
class AuxField:
    """Polynomial part plus a layer potential on domega, evaluable at t."""

    poly: TaylorPoly
    density: np.ndarray = field(repr=False)
    layer: str  # "double_neg" (minus double layer) or "single"
    omega: Surface = field(repr=False)

    def __call__(self, t):
        from .layer_ops import eval_double_layer, eval_single_layer

        t = np.atleast_2d(np.asarray(t, float))
        if self.layer == "single":
            return self.poly(t) + eval_single_layer(self.omega, self.density, t)
        return self.poly(t) - eval_double_layer(self.omega, self.density, t)


@dataclass
class AuxSequences:
    u_m: list
    v_m: list
    dn_u_m: list      # exterior nu . grad u_{m,k} on domega
    v_m_boundary: list
    g: np.ndarray     # g^a_k
    r: np.ndarray     # r_k
    u_tilde: list
    v_tilde: list
    g_tilde: list


def _poly_from(coef_by_beta, betas, sign_by_deg, fact) -> TaylorPoly:
    return TaylorPoly({b: float(sign_by_deg[i] * coef_by_beta[i] / fact[i]) for i, b in enumerate(betas)
                       if coef_by_beta[i] != 0})


def aux_sequences(tables: CoefficientTables, u_a, u_b, K_max: int | None = None) -> AuxSequences:
    """The auxiliary sequences u_m, v_m, g, r and the products u~, v~, g~."""
    u_a, u_b = _as_poly(u_a), _as_poly(u_b)
    K = tables.K_max if K_max is None else K_max
    omega, Omega = tables.omega, tables.Omega
    basis, kern = tables.basis, tables.kernel
    wO = Omega.weights
    par = np.where(basis.deg % 2 == 0, 1.0, -1.0)  # (-1)^j
    W = _op("W", omega)
    V = _op("V", omega)
    b = tables._b
    e = [(wO * ro) @ kern.D for ro in tables.rho_o]
    u_m, v_m, dn_u, v_bd, r, v_t = [], [], [], [], [], []
    for k in range(K + 1):
        # u_{m,k}: polynomial from b, minus the double layer of theta_i[k]
        coef = np.zeros(len(basis.betas))
        for j in range(0, k - DIM + 1):
            sl = basis.slices[j]
            coef[sl] = b[k - j][sl]
        poly_u = _poly_from(coef, basis.betas, par, basis.fact)
        th = tables.theta_i[k]
        u_m.append(AuxField(poly_u, th, "double_neg", omega))
        dn_u.append(basis.dn_mono @ (par * coef / basis.fact) - exterior_dtn(omega, -0.5 * th + W @ th))
        # v_{m,k}: polynomial from e, plus the single layer of rho_i[k]
        coef = np.zeros(len(basis.betas))
        for j in range(0, k - (DIM - 2) + 1):
            sl = basis.slices[j]
            coef[sl] = e[k - (DIM - 2) - j][sl]
        poly_v = _poly_from(coef, basis.betas, par, basis.fact)
        ri = tables.rho_i[k]
        v_m.append(AuxField(poly_v, ri, "single", omega))
        vb = basis.mono @ (par * coef / basis.fact) + V @ ri
        v_bd.append(vb)
        r.append(omega.integrate(vb) / omega.area)
        v_t.append(basis.dn_mono @ (par * coef / basis.fact) + normal_derivative_trace("exterior", omega, ri))
    ua_k = [u_a.homogeneous_part(k)(omega.nodes) for k in range(K + 1)]
    ub_k = [u_b.homogeneous_part(k)(omega.nodes) for k in range(K + 1)]
    g = np.array([sum(omega.integrate(ua_k[l] * tables.rho_i[k - l]) for l in range(k + 1)) for k in range(K + 1)])
    u_t = [sum(dn_u[l] * ub_k[k - l] for l in range(k + 1)) for k in range(K + 1)]
    g_t = [sum(g[l] * ub_k[k - l] for l in range(k + 1)) for k in range(K + 1)]
    return AuxSequences(u_m, v_m, dn_u, v_bd, g, np.array(r), u_t, v_t, g_t)


def compositions(k: int, j: int):
    """Ordered tuples of j positive integers summing to k."""
    for cuts in itertools.combinations(range(1, k), j - 1):
        edges = (0,) + cuts + (k,)
        yield tuple(edges[i + 1] - edges[i] for i in range(j))


def reciprocal_series(r, K: int) -> np.ndarray:
    """Coefficients q_k of 1 / sum r_k eps^k by the composition formula

        q_0 = 1/r_0,  q_k = sum_{j=1}^{k} (-1)^j / r_0^(j+1) sum_{beta} prod_h r_{beta_h},

    beta running over compositions of k into j positive parts.
    """
    r = np.asarray(r, float)
    r0 = r[0]
    if r0 == 0:
        raise ZeroDivisionError("r_0 vanishes; the reciprocal series is undefined")
    q = np.zeros(K + 1)
    q[0] = 1.0 / r0
    for k in range(1, K + 1):
        tot = 0.0
        for j in range(1, k + 1):
            s = sum(np.prod([r[p] for p in comp]) for comp in compositions(k, j))
            tot += (-1) ** j / r0 ** (j + 1) * s
        q[k] = tot
    return q


def reciprocal_series_recursive(r, K: int) -> np.ndarray:
    """Same coefficients by the standard recursion q_k = -(1/r_0) sum_{i>=1} r_i q_{k-i}."""
    r = np.asarray(r, float)
    q = np.zeros(K + 1)
    q[0] = 1.0 / r[0]
    for k in range(1, K + 1):
        q[k] = -sum(r[i] * q[k - i] for i in range(1, min(k, len(r) - 1) + 1)) / r[0]
    return q


def lambda_tilde(aux: AuxSequences, K_max: int) -> tuple[list, list]:
    """(a~_n, lambda~_n) for n <= K_max."""
    r0 = aux.r[0]
    if not r0 < 0:
        raise SingularSystemError(f"r_0 = {r0} should be negative")
    a_t = [sum(aux.g_tilde[n - k] * aux.v_tilde[k] for k in range(n + 1)) for n in range(K_max + 1)]
    q = reciprocal_series(aux.r, K_max)
    lam = [aux.u_tilde[n] + sum(a_t[n - k] * q[k] for k in range(n + 1)) for n in range(K_max + 1)]
    return a_t, lam


def xi_coefficients(u_a, u_b, omega: Surface, K_max: int) -> np.ndarray:
    """xi_n = sum_l int_omega grad u^a_{#,l+1} . grad u^b_{#,n-d-l+1}; zero for n < d."""
    u_a, u_b = _as_poly(u_a), _as_poly(u_b)
    xi = np.zeros(K_max + 1)
    for n in range(DIM, K_max + 1):
        for l in range(0, n - DIM + 1):
            pa = u_a.homogeneous_part(l + 1)
            pb = u_b.homogeneous_part(n - DIM - l + 1)
            if len(pa) and len(pb):
                xi[n] += volume_energy(omega, pa, pb)
    return xi


@dataclass
class CapacitySeries:
    c: np.ndarray
    xi: np.ndarray
    r: np.ndarray
    g: np.ndarray
    lambda_tilde: list = field(repr=False)
    a_tilde: list = field(repr=False)
    aux: AuxSequences = field(repr=False)
    tables: CoefficientTables = field(repr=False)
    K_max: int = DEFAULT_K_MAX
    empirical_radius: float = float("inf")
    meta: dict = field(default_factory=dict)

    def __call__(self, eps):
        return eval_series(self, eps)

    @property
    def u_m(self):
        return self.aux.u_m

    @property
    def v_m(self):
        return self.aux.v_m

    @property
    def u_tilde(self):
        return self.aux.u_tilde

    @property
    def v_tilde(self):
        return self.aux.v_tilde

    @property
    def g_tilde(self):
        return self.aux.g_tilde

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "c_n"])
            for n, v in enumerate(self.c):
                w.writerow([n, repr(float(v))])

    def metadata(self) -> dict:
        out = {
            "K_max": self.K_max,
            "c": [float(v) for v in self.c],
            "xi": [float(v) for v in self.xi],
            "r": [float(v) for v in self.r],
            "g": [float(v) for v in self.g],
            "lambda_tilde_integrals": [float(self.tables.omega.integrate(l)) for l in self.lambda_tilde],
            "empirical_radius": _json_float(self.empirical_radius),
            "empirical_radius_note": "heuristic log-linear fit of |c_n| over the upper half of the computed range",
        }
        out.update(self.meta)
        return out

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)


def _json_float(v):
    return None if not np.isfinite(v) else float(v)


def empirical_radius(c) -> float:
    """Ratio-type radius estimate: exp(-slope) of a least-squares line through
    log|c_n| over the upper half of the computed range.  A heuristic only."""
    c = np.asarray(c, float)
    K = len(c) - 1
    scale = np.abs(c).max()
    ns = [n for n in range(max(1, K // 2), K + 1) if abs(c[n]) > 1e-13 * max(scale, 1e-300)]
    if len(ns) < 2:
        return float("inf")
    slope = np.polyfit(ns, np.log(np.abs(c[ns])), 1)[0]
    return float(np.exp(-slope)) if slope > -700 else float("inf")


def capacity_series(Omega: Surface, omega: Surface, u_a, u_b, K_max: int = DEFAULT_K_MAX) -> CapacitySeries:
    """Coefficients c_n, n = 0..K_max, of Cap_Omega(eps omega, u^a, u^b)."""
    u_a, u_b = _as_poly(u_a), _as_poly(u_b)
    rho = rho_coefficients(Omega, omega, K_max)
    tabs = theta_coefficients(Omega, omega, K_max, u_a, rho)
    aux = aux_sequences(tabs, u_a, u_b, K_max)
    a_t, lam = lambda_tilde(aux, K_max)
    xi = xi_coefficients(u_a, u_b, omega, K_max)
    c = np.zeros(K_max + 1)
    for n in range(DIM - 2, K_max + 1):
        c[n] = -omega.integrate(lam[n - (DIM - 2)]) + xi[n]
    meta = {"Omega": Omega.fingerprint(), "omega": omega.fingerprint(),
            "u_a": u_a.to_terms(), "u_b": u_b.to_terms()}
    return CapacitySeries(c, xi, aux.r, aux.g, lam, a_t, aux, tabs, K_max, empirical_radius(c), meta)


def eval_series(series: CapacitySeries, eps: float, n_max: int | None = None) -> float:
    n_max = series.K_max if n_max is None else n_max
    return float(sum(series.c[n] * eps ** n for n in range(n_max + 1)))


def leading_coefficient_vanishing(omega: Surface, u_a, u_b, rtol: float = 1e-10) -> tuple[int, float]:
    """(k_a + k_b + d - 2, frak_C(omega, u^a_#, u^b_#)) for vanishing orders k_a, k_b."""
    u_a, u_b = _as_poly(u_a), _as_poly(u_b)
    ka, kb = u_a.vanishing_order(rtol), u_b.vanishing_order(rtol)
    if ka is None or kb is None:
        raise ValueError("admissible function is identically zero")
    return ka + kb + DIM - 2, frak_C(omega, u_a.homogeneous_part(ka), u_b.homogeneous_part(kb))
