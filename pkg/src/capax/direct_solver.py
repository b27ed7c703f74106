"""Direct (fixed-epsilon) solution of the coupled integral systems for a domain
Omega with a hole eps*omega, the rescaled capacitary potential, and the
capacities built from it.

Unknowns live on dOmega (x variable) and on domega (rescaled variable t,
x = eps t).  All systems are bordered with a Lagrange column of ones that
carries the integral constraint on the inner density.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .errors import SingularSystemError
from .geometry import Surface, check_hole, volume_quadrature
from .layer_ops import (DIM, S_D, Density, assemble, check_far, exterior_dtn, gradient_matrix,
                        normal_derivative_trace, potential_matrix)
from .taylor import TaylorPoly

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8


def _lu(M):
    # exact singularity is reported by the residual check with diagnostics
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        return lu_factor(M)


def _op(kind, surface):
    return assemble(kind, surface).matrix


class BorderedSolver:
    """LU of [[A, 1], [w^T, 0]]: solves A x + lam = f with sum(w x) = c."""

    def __init__(self, A: np.ndarray, weights: np.ndarray):
        n = A.shape[0]
        M = np.zeros((n + 1, n + 1))
        M[:n, :n] = A
        M[:n, n] = 1.0
        M[n, :n] = weights
        self.matrix = M
        self.n = n
        self.lu = _lu(M)

    def solve(self, rhs, constraint=0.0):
        b = np.concatenate([np.asarray(rhs, float), [constraint]])
        x = lu_solve(self.lu, b)
        _check_residual(self.matrix, x, b)
        return x[:self.n], float(x[self.n])


class DenseSolver:
    def __init__(self, A):
        self.matrix = A
        self.lu = _lu(A)

    def solve(self, rhs):
        rhs = np.asarray(rhs, float)
        x = lu_solve(self.lu, rhs)
        _check_residual(self.matrix, x, rhs)
        return x


def _check_residual(M, x, b):
    res = np.linalg.norm(M @ x - b)
    scale = np.linalg.norm(M, np.inf) * np.linalg.norm(x) + np.linalg.norm(b)
    if not np.isfinite(res) or res > RESIDUAL_TOL * max(scale, 1e-300):
        cond = np.linalg.cond(M)
        raise SingularSystemError(
            f"integral system numerically singular (cond = {cond:.3e}, residual = {res:.3e})",
            condition=cond, residual=res)


def _solve_full(M, b):
    lu = _lu(M)
    x = lu_solve(lu, b)
    _check_residual(M, x, b)
    return x


def solver_cache(surface: Surface, key, factory):
    obj = surface._cache.get(key)
    if obj is None:
        obj = factory()
        surface._cache[key] = obj
    return obj


def inner_rho_solver(omega: Surface) -> BorderedSolver:
    """Bordered (I/2 - W*_omega)."""
    return solver_cache(omega, "rho_inner", lambda: BorderedSolver(0.5 * np.eye(omega.n) - _op("W*", omega), omega.weights))


def inner_theta_solver(omega: Surface) -> BorderedSolver:
    """Bordered (I/2 - W_omega)."""
    return solver_cache(omega, "theta_inner", lambda: BorderedSolver(0.5 * np.eye(omega.n) - _op("W", omega), omega.weights))


def outer_rho_solver(Omega: Surface) -> DenseSolver:
    """(I/2 + W*_Omega)."""
    return solver_cache(Omega, "rho_outer", lambda: DenseSolver(0.5 * np.eye(Omega.n) + _op("W*", Omega)))


def outer_theta_solver(Omega: Surface) -> DenseSolver:
    """(I/2 + W_Omega)."""
    return solver_cache(Omega, "theta_outer", lambda: DenseSolver(0.5 * np.eye(Omega.n) + _op("W", Omega)))


def _as_poly(u) -> TaylorPoly:
    if isinstance(u, TaylorPoly):
        return u
    if hasattr(u, "taylor"):
        return u.taylor
    return TaylorPoly.constant(float(u))


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DensityPair:
    rho_o: Density
    rho_i: Density
    constraint_value: float
    lagrange: float
    eps: float


@dataclass(frozen=True)
class ThetaPair:
    theta_o: Density
    theta_i: Density
    lagrange: float
    g_value: float
    eps: float


def solve_rho(Omega: Surface, omega: Surface, eps: float) -> DensityPair:
    """Discrete M-system: densities (rho^o, rho^i) with int rho^i = 1.

    Rows:  rho^o/2 + W*_Omega rho^o + int rho^i(s) nu_Omega(x).gradS(x - eps s) = 0
           rho^i/2 - W*_omega rho^i - eps^(d-1) int rho^o(y) nu_omega(t).gradS(eps t - y) + lam = 0
           int rho^i = 1
    ``eps = 0`` gives the limiting system.
    """
    if eps > 0:
        check_hole(Omega, omega, eps)
    no, ni = Omega.n, omega.n
    M = np.zeros((no + ni + 1, no + ni + 1))
    M[:no, :no] = 0.5 * np.eye(no) + _op("W*", Omega)
    M[:no, no:no + ni] = potential_matrix("adjoint", omega, Omega.nodes, Omega.normals, source_scale=eps)
    if eps > 0:
        M[no:no + ni, :no] = -eps ** (DIM - 1) * potential_matrix("adjoint", Omega, eps * omega.nodes, omega.normals)
    M[no:no + ni, no:no + ni] = 0.5 * np.eye(ni) - _op("W*", omega)
    M[no:no + ni, -1] = 1.0
    M[-1, no:no + ni] = omega.weights
    b = np.zeros(no + ni + 1)
    b[-1] = 1.0
    x = _solve_full(M, b)
    rho_i = Density(omega, x[no:no + ni])
    return DensityPair(Density(Omega, x[:no]), rho_i, rho_i.integral, float(x[-1]), float(eps))


def solve_theta(Omega: Surface, omega: Surface, eps: float, u_a, rho: DensityPair | None = None) -> ThetaPair:
    """Discrete Lambda-system: (theta^o, theta^i) with int theta^i = 0.

    Rows:  theta^o/2 + W_Omega theta^o + eps^(d-1) int theta^i(s) nu_omega(s).gradS(x - eps s) = 0
           theta^i/2 - W_omega theta^i + w[dOmega, theta^o](eps t) + lam = u^a(eps t) - int u^a(eps s) rho^i(s)
    """
    u_a = _as_poly(u_a)
    if rho is None:
        rho = solve_rho(Omega, omega, eps)
    check_hole(Omega, omega, eps)
    no, ni = Omega.n, omega.n
    ua_t = u_a(eps * omega.nodes)
    G = omega.integrate(ua_t * rho.rho_i.values)
    M = np.zeros((no + ni + 1, no + ni + 1))
    M[:no, :no] = 0.5 * np.eye(no) + _op("W", Omega)
    M[:no, no:no + ni] = -eps ** (DIM - 1) * potential_matrix("double", omega, Omega.nodes, source_scale=eps)
    M[no:no + ni, :no] = potential_matrix("double", Omega, eps * omega.nodes)
    M[no:no + ni, no:no + ni] = 0.5 * np.eye(ni) - _op("W", omega)
    M[no:no + ni, -1] = 1.0
    M[-1, no:no + ni] = omega.weights
    b = np.zeros(no + ni + 1)
    b[no:no + ni] = ua_t - G
    x = _solve_full(M, b)
    return ThetaPair(Density(Omega, x[:no]), Density(omega, x[no:no + ni], mean_zero=True), float(x[-1]), float(G), float(eps))


@dataclass
class RescaledPotential:
    """u^a_eps(eps t) = w[dOmega, theta^o](eps t) - w[domega, theta^i](t)
    + (G/R) (eps^(d-2) v[dOmega, rho^o](eps t) + v[domega, rho^i](t)),
    where G = int u^a(eps s) rho^i and R is the (constant) boundary value of
    the bracket on domega."""

    Omega: Surface = field(repr=False)
    omega: Surface = field(repr=False)
    eps: float
    rho: DensityPair = field(repr=False)
    theta: ThetaPair = field(repr=False)
    g_value: float
    normalizer: float

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, float))
        check_far(self.omega, t)
        check_far(self.Omega, self.eps * t)
        e = self.eps
        x = e * t
        val = potential_matrix("double", self.Omega, x) @ self.theta.theta_o.values
        val -= potential_matrix("double", self.omega, t) @ self.theta.theta_i.values
        h = e ** (DIM - 2) * (potential_matrix("single", self.Omega, x) @ self.rho.rho_o.values)
        h += potential_matrix("single", self.omega, t) @ self.rho.rho_i.values
        return val + self.g_value / self.normalizer * h

    def inner_boundary_values(self) -> np.ndarray:
        """Exterior trace on domega (should equal u^a(eps t))."""
        e, om, Om = self.eps, self.omega, self.Omega
        th_i = self.theta.theta_i.values
        val = potential_matrix("double", Om, e * om.nodes) @ self.theta.theta_o.values
        val -= -0.5 * th_i + _op("W", om) @ th_i
        return val + self.g_value / self.normalizer * _h_inner(self)

    def outer_boundary_values(self) -> np.ndarray:
        """Interior trace on dOmega (should vanish)."""
        e, om, Om = self.eps, self.omega, self.Omega
        th_o = self.theta.theta_o.values
        val = 0.5 * th_o + _op("W", Om) @ th_o - potential_matrix("double", om, Om.nodes / e) @ self.theta.theta_i.values
        h = e ** (DIM - 2) * (_op("V", Om) @ self.rho.rho_o.values)
        h += potential_matrix("single", om, Om.nodes / e) @ self.rho.rho_i.values
        return val + self.g_value / self.normalizer * h


def _h_inner(pot: RescaledPotential) -> np.ndarray:
    e, om, Om = pot.eps, pot.omega, pot.Omega
    h = e ** (DIM - 2) * (potential_matrix("single", Om, e * om.nodes) @ pot.rho.rho_o.values)
    return h + _op("V", om) @ pot.rho.rho_i.values


def rescaled_potential(Omega: Surface, omega: Surface, eps: float, u_a) -> RescaledPotential:
    rho = solve_rho(Omega, omega, eps)
    theta = solve_theta(Omega, omega, eps, u_a, rho)
    pot = RescaledPotential(Omega, omega, eps, rho, theta, theta.g_value, 1.0)
    h = _h_inner(pot)
    R = omega.integrate(h) / omega.area
    pot.normalizer = R
    return pot


def potential_normal_derivative(pot: RescaledPotential) -> np.ndarray:
    """nu_omega . grad_t of u^a_eps(eps t) on the exterior side of domega."""
    e, om, Om = pot.eps, pot.omega, pot.Omega
    th_i = pot.theta.theta_i.values
    gw = gradient_matrix("double", Om, e * om.nodes) @ pot.theta.theta_o.values
    dn = e * np.einsum("ik,ik->i", om.normals, gw)
    dn -= exterior_dtn(om, -0.5 * th_i + _op("W", om) @ th_i)
    gv = gradient_matrix("single", Om, e * om.nodes) @ pot.rho.rho_o.values
    dh = e ** (DIM - 1) * np.einsum("ik,ik->i", om.normals, gv)
    dh += normal_derivative_trace("exterior", om, pot.rho.rho_i.values)
    return dn + pot.g_value / pot.normalizer * dh


def volume_energy(omega: Surface, u_a, u_b, eps: float = 1.0) -> float:
    """int_omega grad u^a(eps t) . grad u^b(eps t) dt."""
    u_a, u_b = _as_poly(u_a), _as_poly(u_b)
    if u_a.degree < 1 or u_b.degree < 1:
        return 0.0
    pts, w = volume_quadrature(omega, _volume_order(omega, u_a.degree + u_b.degree))
    ga = u_a.eval_gradient(eps * pts)
    gb = u_b.eval_gradient(eps * pts)
    return float(np.dot(w, np.einsum("ik,ik->i", ga, gb)))


def _volume_order(omega: Surface, degree: int):
    if omega.is_parametric:
        return max(omega.patch_structure.order, degree // 2 + 2)
    return max(4, degree // 2 + 2)


def boundary_energy(omega: Surface, p_a, p_b) -> float:
    """int_domega p_b dp_a/dnu, equal to the volume energy when p_a is harmonic."""
    p_a, p_b = _as_poly(p_a), _as_poly(p_b)
    dn = np.einsum("ik,ik->i", p_a.eval_gradient(omega.nodes), omega.normals)
    return omega.integrate(dn * p_b(omega.nodes))


def capacity_direct(Omega: Surface, omega: Surface, eps: float, u_a, u_b, pot: RescaledPotential | None = None) -> float:
    """Cap = -eps^(d-2) int_domega nu.grad(u^a_eps(eps t)) u^b(eps t) + eps^d int_omega grad u^a . grad u^b."""
    u_a, u_b = _as_poly(u_a), _as_poly(u_b)
    if pot is None:
        pot = rescaled_potential(Omega, omega, eps, u_a)
    dn = potential_normal_derivative(pot)
    ub = u_b(eps * omega.nodes)
    cap = -eps ** (DIM - 2) * omega.integrate(dn * ub)
    return float(cap + eps ** DIM * volume_energy(omega, u_a, u_b, eps))


# ---------------------------------------------------------------------------
# exterior problems on omega

@dataclass(frozen=True)
class NewtonianData:
    rho0: np.ndarray
    r0: float

    @property
    def capacity(self) -> float:
        return -1.0 / self.r0


def newtonian_data(omega: Surface) -> NewtonianData:
    """rho^i_0 (I/2 - W* rho = 0, int rho = 1) and r_0 = mean of v[rho^i_0]."""
    def build():
        rho0, _ = inner_rho_solver(omega).solve(np.zeros(omega.n), 1.0)
        r0 = omega.integrate(_op("V", omega) @ rho0) / omega.area
        return NewtonianData(rho0, r0)
    return solver_cache(omega, "newtonian", build)


def newtonian_capacity(omega: Surface) -> float:
    """Cap of the closed region bounded by ``omega`` in R^3, equal to -1/r_0."""
    return newtonian_data(omega).capacity


@dataclass
class ExteriorSolution:
    """Exterior harmonic u = w[domega, mu] + c v[domega, rho^i_0] with u = g on domega."""

    omega: Surface = field(repr=False)
    mu: np.ndarray = field(repr=False)
    c: float
    normal_derivative: np.ndarray = field(repr=False)
    limit: float

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, float))
        check_far(self.omega, t)
        nd = newtonian_data(self.omega)
        return (potential_matrix("double", self.omega, t) @ self.mu
                + self.c * (potential_matrix("single", self.omega, t) @ nd.rho0))


def exterior_dirichlet(omega: Surface, g) -> ExteriorSolution:
    """Solve Delta u = 0 outside omega, u = g on domega, u -> 0 at infinity.

    ``limit`` is lim |t|^(d-2) u(t) = c int rho^i_0 / ((2-d) s_d), taken from
    the total density mass.
    """
    g = np.asarray(g(omega.nodes) if callable(g) else g, float)
    nd = newtonian_data(omega)
    c = omega.integrate(g * nd.rho0) / nd.r0
    rhs = g - c * (_op("V", omega) @ nd.rho0)
    solver = solver_cache(omega, "exterior_mu",
                          lambda: BorderedSolver(-0.5 * np.eye(omega.n) + _op("W", omega), omega.weights))
    mu, _ = solver.solve(rhs, 0.0)
    limit = c * omega.integrate(nd.rho0) / ((2 - DIM) * S_D)
    return ExteriorSolution(omega, mu, c, exterior_dtn(omega, g), limit)


def frak_C(omega: Surface, p_a, p_b) -> float:
    """Exterior plus interior energy pairing of homogeneous polynomials."""
    p_a, p_b = _as_poly(p_a), _as_poly(p_b)
    for p in (p_a, p_b):
        if not p.is_homogeneous():
            raise ValueError("frak_C needs homogeneous polynomials (principal parts)")
    if p_a.is_zero() or p_b.is_zero():
        return 0.0
    ext = -omega.integrate(exterior_dtn(omega, p_a(omega.nodes)) * p_b(omega.nodes))
    return float(ext + volume_energy(omega, p_a, p_b))
