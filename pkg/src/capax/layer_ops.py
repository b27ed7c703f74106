"""Single and double layer potentials, their boundary traces V, W, W* and the
jump relations.

Conventions (x a target, y a source, nu the outward normal):

    v[phi](x) = int phi(y) S(x - y) dsigma_y
    w[psi](x) = -int psi(y) nu(y) . grad S(x - y) dsigma_y
    W[psi](x) = -int psi(y) nu(y) . grad S(x - y) dsigma_y      (x on the surface)
    W*[phi](x) = int phi(y) nu(x) . grad S(x - y) dsigma_y

Interior/exterior traces: w^(+/-) = +/- psi/2 + W psi, and
nu . grad v^(+/-) = -/+ phi/2 + W* phi, "+" being the bounded side.

Parametric surfaces use a Nystrom scheme in which each row is integrated in
polar coordinates centred at the target on the underlying unit sphere, with
the density interpolated by real spherical harmonics of degree <= order.
This removes the 1/r singularity of all three kernels and converges
spectrally.  Triangle meshes use centroid collocation with piecewise
constant densities, an analytic self term for V and row/column sum
completion of the W and W* diagonals.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import GeometryError, NearFieldError
from .geometry import ParametricPatch, Surface, sphere_grid
from .kernels import unit_sphere_measure
from .sphharm import real_sph_harm, rotate_z, z_rotation_tables

DIM = 3
S_D = unit_sphere_measure(DIM)

KIND_ALIASES = {
    "V": "V", "single_layer": "V", "single": "V",
    "W": "W", "double_layer": "W", "double": "W",
    "W*": "W*", "Wstar": "W*", "adjoint_double_layer": "W*", "adjoint": "W*",
}
KIND_CODES = {"V": 0, "W": 1, "W*": 2}
MAGIC = b"CPXM"


def canonical_kind(kind: str) -> str:
    try:
        return KIND_ALIASES[kind]
    except KeyError:
        raise ValueError(f"unknown operator kind {kind!r}") from None


@dataclass(frozen=True)
class BoundaryOperator:
    matrix: np.ndarray
    kind: str
    surface: Surface = field(repr=False)

    def __call__(self, density):
        return self.matrix @ _values(density)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Density:
    """Node values of a density on a surface."""

    surface: Surface = field(repr=False)
    values: np.ndarray
    mean_zero: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, float)
        if vals.shape != (self.surface.n,):
            raise ValueError("density length does not match the surface")
        object.__setattr__(self, "values", vals)

    @property
    def integral(self) -> float:
        return self.surface.integrate(self.values)

    def check_mean_zero(self, rtol: float = 1e-10) -> bool:
        scale = float(np.dot(self.surface.weights, np.abs(self.values)))
        return abs(self.integral) <= rtol * max(scale, np.finfo(float).tiny)


def _values(density):
    return density.values if isinstance(density, Density) else np.asarray(density, float)


# ---------------------------------------------------------------------------
# kernels

def _kernel(kind, x, y, nx=None, ny=None):
    """Pointwise kernel for arrays of targets x and sources y (broadcasting)."""
    z = x - y
    r2 = np.einsum("...k,...k->...", z, z)
    r = np.sqrt(r2)
    if kind == "V":
        return -1.0 / (S_D * (DIM - 2) * r ** (DIM - 2))
    if kind == "W":
        return -np.einsum("...k,...k->...", ny, z) / (S_D * r ** DIM)
    if kind == "W*":
        return np.einsum("...k,...k->...", nx, z) / (S_D * r ** DIM)
    raise ValueError(kind)


# ---------------------------------------------------------------------------
# parametric assembly

LOCAL_EXTRA = 4


def _rot_y(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _local_grid(order: int):
    n1 = order + 1 + LOCAL_EXTRA
    n2 = 2 * order + 2 + 2 * LOCAL_EXTRA
    xt, wt = np.polynomial.legendre.leggauss(n1)
    th = 0.5 * np.pi * (xt + 1.0)
    wt = 0.5 * np.pi * wt * np.sin(th)
    ph = 2.0 * np.pi * (np.arange(n2) + 0.5) / n2
    T, P = np.meshgrid(th, ph, indexing="ij")
    pts = np.column_stack([(np.sin(T) * np.cos(P)).ravel(), (np.sin(T) * np.sin(P)).ravel(), np.cos(T).ravel()])
    w = np.repeat(wt, n2) * (2.0 * np.pi / n2)
    return pts, w


def _assemble_parametric(surface: Surface) -> dict:
    patch: ParametricPatch = surface.patch_structure
    p = patch.order
    s, ws, ct, phi = sphere_grid(p)
    Y = real_sph_harm(p, s)
    analysis = (Y * ws[:, None]).T
    loc, wl = _local_grid(p)
    tables = z_rotation_tables(p)
    nphi = patch.n_phi
    N = surface.n
    L = Y.shape[1]
    B = {k: np.empty((N, L)) for k in ("V", "W", "W*")}
    x_all, nx_all = surface.nodes, surface.normals
    ring_ct = ct[::nphi]
    phis = phi[:nphi]
    cz, sz = np.cos(phis), np.sin(phis)
    for r, c_r in enumerate(ring_ct):
        template = loc @ _rot_y(np.arccos(np.clip(c_r, -1, 1))).T
        Yr = real_sph_harm(p, template)
        # rotate the template to every target of the ring
        U = np.empty((nphi, template.shape[0], 3))
        U[..., 0] = cz[:, None] * template[None, :, 0] - sz[:, None] * template[None, :, 1]
        U[..., 1] = sz[:, None] * template[None, :, 0] + cz[:, None] * template[None, :, 1]
        U[..., 2] = template[None, :, 2]
        y, ny, jac = patch.map(U)
        rows = slice(r * nphi, (r + 1) * nphi)
        x = x_all[rows][:, None, :]
        nx = nx_all[rows][:, None, :]
        wj = jac * wl[None, :]
        for kind in ("V", "W", "W*"):
            K = _kernel(kind, x, y, nx, ny) * wj
            B[kind][rows] = rotate_z(K @ Yr, phis, tables)
    # V restricted to band-limited densities, used by the exterior DtN map
    surface._cache["sh"] = (Y, analysis, analysis @ B["V"])
    return {k: B[k] @ analysis for k in B}


# ---------------------------------------------------------------------------
# triangle meshes

_TRI_A, _TRI_B = 0.445948490915965, 0.091576213509771
_TRI_WA, _TRI_WB = 0.223381589678011, 0.109951743655322
TRI_RULE_BARY = np.array([
    [_TRI_A, _TRI_A, 1 - 2 * _TRI_A], [_TRI_A, 1 - 2 * _TRI_A, _TRI_A], [1 - 2 * _TRI_A, _TRI_A, _TRI_A],
    [_TRI_B, _TRI_B, 1 - 2 * _TRI_B], [_TRI_B, 1 - 2 * _TRI_B, _TRI_B], [1 - 2 * _TRI_B, _TRI_B, _TRI_B],
])
TRI_RULE_W = np.array([_TRI_WA] * 3 + [_TRI_WB] * 3)


def source_points(surface: Surface):
    """Quadrature points (pts, normals, weights, owner node) for far-field sums."""
    cached = surface._cache.get("sources")
    if cached is not None:
        return cached
    patch = surface.patch_structure
    if isinstance(patch, ParametricPatch):
        out = (surface.nodes, surface.normals, surface.weights, np.arange(surface.n))
    else:
        P = patch.points
        tri = P[patch.faces]  # (F, 3, 3)
        pts = np.einsum("qa,fak->fqk", TRI_RULE_BARY, tri).reshape(-1, 3)
        nq = len(TRI_RULE_W)
        normals = np.repeat(surface.normals, nq, axis=0)
        weights = (surface.weights[:, None] * TRI_RULE_W[None, :]).ravel()
        owner = np.repeat(np.arange(surface.n), nq)
        out = (pts, normals, weights, owner)
    surface._cache["sources"] = out
    return out


def flat_triangle_self_integral(tri: np.ndarray, x: np.ndarray) -> float:
    """Exact int_T 1/|x - y| dA for x in the plane of T and inside it."""
    total = 0.0
    n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
    n /= np.linalg.norm(n)
    for k in range(3):
        a, b = tri[k], tri[(k + 1) % 3]
        e = b - a
        le = np.linalg.norm(e)
        t = e / le
        m = np.cross(t, n)  # in-plane unit vector pointing out of the triangle
        dist = np.dot(a - x, m)
        sa, sb = np.dot(a - x, t), np.dot(b - x, t)
        ra, rb = np.linalg.norm(a - x), np.linalg.norm(b - x)
        total += dist * np.log((rb + sb) / (ra + sa))
    return float(total)


def _assemble_mesh(surface: Surface) -> dict:
    pts, nrm, w, owner = source_points(surface)
    x, nx = surface.nodes, surface.normals
    N = surface.n
    out = {}
    for kind in ("V", "W", "W*"):
        K = _kernel(kind, x[:, None, :], pts[None, :, :], nx[:, None, :], nrm[None, :, :]) * w[None, :]
        M = np.zeros((N, N))
        for q in range(len(TRI_RULE_W)):
            M += K[:, q::len(TRI_RULE_W)]
        np.fill_diagonal(M, 0.0)
        out[kind] = M
    tri = surface.patch_structure.points[surface.patch_structure.faces]
    diag = np.array([flat_triangle_self_integral(tri[i], x[i]) for i in range(N)])
    out["V"][np.diag_indices(N)] = -diag / ((DIM - 2) * S_D)
    W = out["W"]
    W[np.diag_indices(N)] = 0.5 - W.sum(axis=1)
    Ws = out["W*"]
    ww = surface.weights
    Ws[np.diag_indices(N)] = (0.5 * ww - ww @ Ws) / ww
    return out


# ---------------------------------------------------------------------------

def assemble(kind: str, surface: Surface) -> BoundaryOperator:
    """Dense boundary operator V, W or W* on ``surface`` (cached per surface)."""
    kind = canonical_kind(kind)
    key = ("op", kind)
    op = surface._cache.get(key)
    if op is not None:
        return op
    _check_distinct_nodes(surface)
    mats = _assemble_parametric(surface) if surface.is_parametric else _assemble_mesh(surface)
    for k, m in mats.items():
        m.setflags(write=False)
        surface._cache[("op", k)] = BoundaryOperator(m, k, surface)
    return surface._cache[key]


def _check_distinct_nodes(surface: Surface):
    from scipy.spatial import cKDTree

    pairs = cKDTree(surface.nodes).query_pairs(1e-12 * max(surface.diameter, 1.0))
    if pairs:
        raise GeometryError("surface has coincident nodes")


def identity_plus(sign: float, kind: str, surface: Surface) -> np.ndarray:
    """sign * I/2 + K for K in {W, W*}."""
    return 0.5 * sign * np.eye(surface.n) + assemble(kind, surface).matrix


def double_layer_trace(side: str, surface: Surface, density) -> np.ndarray:
    """w^+ (interior) = psi/2 + W psi, w^- (exterior) = -psi/2 + W psi."""
    sgn = _side_sign(side)
    psi = _values(density)
    return sgn * 0.5 * psi + assemble("W", surface).matrix @ psi


def normal_derivative_trace(side: str, surface: Surface, density) -> np.ndarray:
    """nu . grad v on the interior (-phi/2 + W* phi) or exterior (+phi/2 + W* phi) side."""
    sgn = -_side_sign(side)
    phi = _values(density)
    return sgn * 0.5 * phi + assemble("W*", surface).matrix @ phi


def _side_sign(side: str) -> float:
    if side in ("interior", "+", "inner"):
        return 1.0
    if side in ("exterior", "-", "outer"):
        return -1.0
    raise ValueError(f"side must be 'interior' or 'exterior', got {side!r}")


def exterior_dtn(surface: Surface, g) -> np.ndarray:
    """Exterior Neumann trace nu . grad u of the exterior harmonic function
    (vanishing at infinity) with Dirichlet data g, via u = v[V^-1 g].

    On parametric surfaces the discrete V has rank (order+1)^2 only, so the
    first-kind solve is done on spherical-harmonic coefficients.
    """
    assemble("V", surface)
    g = np.asarray(g, float)
    lu = surface._cache.get("V_lu")
    if surface.is_parametric:
        Y, analysis, vc = surface._cache["sh"]
        if lu is None:
            lu = lu_factor(vc)
            surface._cache["V_lu"] = lu
        phi = Y @ lu_solve(lu, analysis @ g)
    else:
        if lu is None:
            lu = lu_factor(assemble("V", surface).matrix)
            surface._cache["V_lu"] = lu
        phi = lu_solve(lu, g)
    return normal_derivative_trace("exterior", surface, phi)


# ---------------------------------------------------------------------------
# off-surface evaluation

def check_far(surface: Surface, targets) -> None:
    targets = np.atleast_2d(np.asarray(targets, float))
    dist, idx = surface.distance_to(targets)
    bad = dist < surface.mesh_width[idx]
    if np.any(bad):
        k = int(np.argmax(bad))
        raise NearFieldError(
            f"target {targets[k]} is {dist[k]:.3g} from the surface, below the local mesh width "
            f"{surface.mesh_width[idx[k]]:.3g}; refine the surface")


def potential_matrix(kind: str, surface: Surface, targets, target_normals=None, source_scale=1.0) -> np.ndarray:
    """Matrix mapping node densities to potential values at arbitrary targets.

    kind: 'single' (S), 'double' (-nu_y . grad S) or 'adjoint' (nu_x . grad S).
    With ``source_scale`` the sources sit at ``source_scale * y`` while the
    weights stay those of the unscaled surface.  No near-field check is made.
    """
    code = {"single": "V", "double": "W", "adjoint": "W*"}[kind]
    pts, nrm, w, owner = source_points(surface)
    if source_scale != 1.0:
        pts = source_scale * pts
    x = np.atleast_2d(np.asarray(targets, float))
    nx = None if target_normals is None else np.atleast_2d(target_normals)[:, None, :]
    K = _kernel(code, x[:, None, :], pts[None, :, :], nx, nrm[None, :, :]) * w[None, :]
    return _collapse(K, owner, surface.n)


def gradient_matrix(kind: str, surface: Surface, targets, source_scale=1.0) -> np.ndarray:
    """(M, 3, N) array: gradient at targets of the single or double layer."""
    pts, nrm, w, owner = source_points(surface)
    if source_scale != 1.0:
        pts = source_scale * pts
    x = np.atleast_2d(np.asarray(targets, float))
    z = x[:, None, :] - pts[None, :, :]
    r = np.linalg.norm(z, axis=-1)
    if kind == "single":
        G = z / (S_D * r[..., None] ** DIM)
    elif kind == "double":
        nz = np.einsum("mnk,nk->mn", z, nrm)
        G = -(nrm[None, :, :] / r[..., None] ** DIM - DIM * nz[..., None] * z / r[..., None] ** (DIM + 2)) / S_D
    else:
        raise ValueError(kind)
    G = G * w[None, :, None]
    out = np.stack([_collapse(G[..., k], owner, surface.n) for k in range(3)], axis=1)
    return out


def _collapse(K, owner, n):
    if K.shape[1] == n and np.array_equal(owner, np.arange(n)):
        return K
    nq = K.shape[1] // n
    return K.reshape(K.shape[0], n, nq).sum(axis=2)


def eval_single_layer(surface: Surface, density, targets) -> np.ndarray:
    check_far(surface, targets)
    return potential_matrix("single", surface, targets) @ _values(density)


def eval_double_layer(surface: Surface, density, targets) -> np.ndarray:
    check_far(surface, targets)
    return potential_matrix("double", surface, targets) @ _values(density)


def eval_grad_single_layer(surface: Surface, density, targets) -> np.ndarray:
    check_far(surface, targets)
    return gradient_matrix("single", surface, targets) @ _values(density)


def eval_grad_double_layer(surface: Surface, density, targets) -> np.ndarray:
    check_far(surface, targets)
    return gradient_matrix("double", surface, targets) @ _values(density)


# ---------------------------------------------------------------------------
# binary dump

def dump_operator(op: BoundaryOperator, path) -> None:
    """Header: 4-byte magic, uint64 N, uint32 kind code; then float64 LE row-major."""
    n = op.matrix.shape[0]
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<QI", n, KIND_CODES[op.kind]))
        fh.write(np.ascontiguousarray(op.matrix, dtype="<f8").tobytes())


def load_operator_matrix(path):
    """Returns (kind, matrix) from a file written by :func:`dump_operator`."""
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16 or head[:4] != MAGIC:
            raise ValueError("not an operator dump")
        n, code = struct.unpack("<QI", head[4:])
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * n:
        raise ValueError("truncated operator dump")
    kind = {v: k for k, v in KIND_CODES.items()}[code]
    return kind, data.reshape(n, n).astype(float)
