"""Closed surfaces in R^3: spheres, ellipsoids (as linear images of the unit
sphere) and triangle meshes read from OFF files.

Parametric surfaces keep the underlying unit-sphere grid so that the layer
operators can use spectral singular quadrature; meshes carry their triangles
and are collocated at the centroids.
"""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist

from .errors import GeometryError

MIN_AXIS = 1e-8


def sphere_grid(order: int):
    """Unit-sphere product grid: Gauss-Legendre in cos(theta), uniform in phi.

    Returns (unit_nodes, weights, cos_theta, phi) with nodes ordered ring by
    ring (theta outer, phi inner).  The rule integrates spherical harmonics
    of degree <= 2*order + 1 exactly.
    """
    if order < 1:
        raise GeometryError("quadrature order must be >= 1")
    nt, nphi = order + 1, 2 * order + 2
    ct, wt = np.polynomial.legendre.leggauss(nt)
    ct = ct[::-1].copy()
    wt = wt[::-1].copy()
    phi = 2.0 * np.pi * np.arange(nphi) / nphi
    st = np.sqrt(1.0 - ct ** 2)
    ctg = np.repeat(ct, nphi)
    stg = np.repeat(st, nphi)
    phg = np.tile(phi, nt)
    nodes = np.column_stack([stg * np.cos(phg), stg * np.sin(phg), ctg])
    weights = np.repeat(wt, nphi) * (2.0 * np.pi / nphi)
    return nodes, weights, ctg, phg


@dataclass(frozen=True)
class ParametricPatch:
    """Surface x = factor * (center + A s) for s on the unit sphere."""

    matrix: np.ndarray
    center: np.ndarray
    order: int
    factor: float = 1.0

    @property
    def n_theta(self) -> int:
        return self.order + 1

    @property
    def n_phi(self) -> int:
        return 2 * self.order + 2

    def map(self, s: np.ndarray):
        """Physical points, unit normals and area Jacobians at unit vectors s."""
        A = self.matrix
        pts = self.factor * (self.center + s @ A.T)
        inv_t = np.linalg.inv(A).T
        g = s @ inv_t.T
        gn = np.linalg.norm(g, axis=-1)
        normals = g / gn[..., None]
        jac = (self.factor ** 2) * abs(np.linalg.det(A)) * gn
        return pts, normals, jac


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    factor: float = 1.0

    @property
    def points(self) -> np.ndarray:
        return self.factor * self.vertices


class Surface:
    """Immutable discretized closed surface.

    Attributes: ``nodes`` (N,3), ``weights`` (N,), ``normals`` (N,3),
    ``patch_structure`` (ParametricPatch or TriangleMesh), ``diameter``,
    ``mesh_width`` (N,) local spacing used by the near-field rule.
    """

    def __init__(self, nodes, weights, normals, patch_structure, diameter, mesh_width, label=""):
        arrays = {}
        for name, arr in (("nodes", nodes), ("weights", weights), ("normals", normals), ("mesh_width", mesh_width)):
            a = np.array(arr, dtype=float)
            a.setflags(write=False)
            arrays[name] = a
        object.__setattr__(self, "_nodes", arrays["nodes"])
        object.__setattr__(self, "_weights", arrays["weights"])
        object.__setattr__(self, "_normals", arrays["normals"])
        object.__setattr__(self, "_mesh_width", arrays["mesh_width"])
        object.__setattr__(self, "_patch", patch_structure)
        object.__setattr__(self, "_diameter", float(diameter))
        object.__setattr__(self, "label", label)
        # lazily filled operator cache; does not affect the geometric data
        object.__setattr__(self, "_cache", {})

    def __setattr__(self, name, value):
        raise AttributeError("Surface is immutable")

    nodes = property(lambda self: self._nodes)
    weights = property(lambda self: self._weights)
    normals = property(lambda self: self._normals)
    mesh_width = property(lambda self: self._mesh_width)
    patch_structure = property(lambda self: self._patch)
    diameter = property(lambda self: self._diameter)

    @property
    def n(self) -> int:
        return self._nodes.shape[0]

    def __len__(self):
        return self.n

    @property
    def area(self) -> float:
        return float(self._weights.sum())

    @property
    def is_parametric(self) -> bool:
        return isinstance(self._patch, ParametricPatch)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for a in (self._nodes, self._weights, self._normals):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]

    def integrate(self, values) -> float:
        return float(np.dot(self._weights, values))

    def distance_to(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Distance from each point to the nearest node and that node's index."""
        from scipy.spatial import cKDTree

        tree = self._cache.get("kdtree")
        if tree is None:
            tree = cKDTree(self._nodes)
            self._cache["kdtree"] = tree
        dist, idx = tree.query(np.atleast_2d(points))
        return dist, idx

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "z", "weight", "nx", "ny", "nz"])
            for p, wt, nv in zip(self._nodes, self._weights, self._normals):
                w.writerow([repr(float(v)) for v in (*p, wt, *nv)])

    def __repr__(self):
        kind = "parametric" if self.is_parametric else "mesh"
        return f"Surface({self.label or kind}, N={self.n}, area={self.area:.6g})"


def _parametric_surface(matrix, center, order, factor=1.0, label="") -> Surface:
    patch = ParametricPatch(np.asarray(matrix, float), np.asarray(center, float), int(order), float(factor))
    s, ws, ct, _ = sphere_grid(patch.order)
    pts, normals, jac = patch.map(s)
    # local spacing: theta gap to the neighbouring rings and the phi gap
    theta = np.arccos(np.clip(np.unique(ct)[::-1], -1, 1))
    gaps = np.diff(np.concatenate([[0.0], theta, [np.pi]]))
    ring_gap = np.maximum(gaps[:-1], gaps[1:])
    dtheta = np.repeat(ring_gap, patch.n_phi)
    dphi = np.sqrt(1 - ct ** 2) * 2 * np.pi / patch.n_phi
    stretch = factor * np.linalg.norm(patch.matrix, 2)
    width = stretch * np.maximum(dtheta, dphi)
    sv = np.linalg.svd(patch.matrix, compute_uv=False)
    diameter = 2.0 * factor * sv[0]
    return Surface(pts, ws * jac, normals, patch, diameter, width, label)


def make_sphere(radius: float, order: int, center=(0.0, 0.0, 0.0)) -> Surface:
    """Sphere of given radius discretized on the order-``order`` product grid."""
    if not radius > 0:
        raise GeometryError(f"sphere radius must be positive, got {radius}")
    if order < 1:
        raise GeometryError("order must be >= 1")
    return _parametric_surface(radius * np.eye(3), center, order, label=f"sphere(r={radius})")


def make_ellipsoid(a: float, b: float, c: float, order: int, center=(0.0, 0.0, 0.0)) -> Surface:
    """Axis-aligned ellipsoid with semi-axes a, b, c."""
    for v in (a, b, c):
        if not v >= MIN_AXIS:
            raise GeometryError(f"ellipsoid semi-axes must be >= {MIN_AXIS}, got {(a, b, c)}")
    if order < 1:
        raise GeometryError("order must be >= 1")
    return _parametric_surface(np.diag([a, b, c]).astype(float), center, order, label=f"ellipsoid({a},{b},{c})")


def make_linear_image(matrix, order: int, center=(0.0, 0.0, 0.0), label="linear") -> Surface:
    """Image of the unit sphere under an invertible linear map (positive det)."""
    A = np.asarray(matrix, float)
    det = np.linalg.det(A)
    if abs(det) < MIN_AXIS ** 3:
        raise GeometryError("degenerate linear map")
    if det < 0:
        A = A @ np.diag([1.0, 1.0, -1.0])
    return _parametric_surface(A, center, order, label=label)


# ---------------------------------------------------------------------------
# triangle meshes

def read_off(path):
    """Parse an ASCII OFF file with triangular faces."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise GeometryError(f"cannot read mesh {path}: {exc}") from exc
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.extend(line.split())
    try:
        if not tokens or tokens[0] != "OFF":
            raise GeometryError("missing OFF header")
        nv, nf = int(tokens[1]), int(tokens[2])
        pos = 4
        verts = np.array(tokens[pos:pos + 3 * nv], dtype=float).reshape(nv, 3)
        pos += 3 * nv
        faces = []
        for _ in range(nf):
            k = int(tokens[pos])
            if k != 3:
                raise GeometryError("only triangular faces are supported")
            faces.append([int(t) for t in tokens[pos + 1:pos + 4]])
            pos += 1 + k
    except GeometryError:
        raise
    except (ValueError, IndexError) as exc:
        raise GeometryError(f"malformed OFF file {path}: {exc}") from exc
    faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if faces.size and (faces.min() < 0 or faces.max() >= nv):
        raise GeometryError("face index out of range")
    return verts, faces


def _check_closed(faces):
    """Every undirected edge twice; every directed edge once (consistent orientation)."""
    directed = {}
    for f in faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            directed[(a, b)] = directed.get((a, b), 0) + 1
    undirected = {}
    for (a, b), k in directed.items():
        key = (min(a, b), max(a, b))
        undirected[key] = undirected.get(key, 0) + k
    if any(k != 2 for k in undirected.values()):
        raise GeometryError("surface not closed: some edge is not shared by exactly two triangles")
    if any(k != 1 or (b, a) not in directed for (a, b), k in directed.items()):
        raise GeometryError("inconsistent triangle orientation")


def signed_volume(vertices, faces) -> float:
    v0, v1, v2 = (vertices[faces[:, i]] for i in range(3))
    return float(np.einsum("ij,ij->i", v0, np.cross(v1, v2)).sum() / 6.0)


def _mesh_surface(vertices, faces, factor=1.0, label="mesh") -> Surface:
    mesh = TriangleMesh(np.asarray(vertices, float), np.asarray(faces, np.int64), float(factor))
    P = mesh.points
    v0, v1, v2 = (P[mesh.faces[:, i]] for i in range(3))
    cr = np.cross(v1 - v0, v2 - v0)
    dbl = np.linalg.norm(cr, axis=1)
    if np.any(dbl <= 0):
        raise GeometryError("degenerate triangle in mesh")
    normals = cr / dbl[:, None]
    centroids = (v0 + v1 + v2) / 3.0
    edges = np.stack([np.linalg.norm(v1 - v0, axis=1), np.linalg.norm(v2 - v1, axis=1), np.linalg.norm(v0 - v2, axis=1)])
    width = edges.max(axis=0)
    diameter = float(pdist(P).max()) if len(P) > 1 else 0.0
    return Surface(centroids, 0.5 * dbl, normals, mesh, diameter, width, label)


def load_mesh(path) -> Surface:
    """Closed triangle mesh from an OFF file; orientation is made outward."""
    verts, faces = read_off(path)
    if len(faces) < 4:
        raise GeometryError("surface not closed: too few faces")
    _check_closed(faces)
    if signed_volume(verts, faces) < 0:
        faces = faces[:, ::-1].copy()
    return _mesh_surface(verts, faces, label=Path(path).stem)


def write_off(path, vertices, faces) -> None:
    with open(path, "w") as fh:
        fh.write(f"OFF\n{len(vertices)} {len(faces)} 0\n")
        for v in vertices:
            fh.write(" ".join(repr(float(x)) for x in v) + "\n")
        for f in faces:
            fh.write("3 " + " ".join(str(int(i)) for i in f) + "\n")


def icosphere(subdivisions: int = 2):
    """Vertices and outward faces of a subdivided icosahedron on the unit sphere."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return np.array(verts), np.array(faces, dtype=np.int64)


# ---------------------------------------------------------------------------

def scale(surface: Surface, eps: float) -> Surface:
    """Dilation x -> eps x: nodes times eps, weights times eps^2."""
    if not eps > 0:
        raise GeometryError(f"scale factor must be positive, got {eps}")
    patch = surface.patch_structure
    if isinstance(patch, ParametricPatch):
        return _parametric_surface(patch.matrix, patch.center, patch.order, patch.factor * eps, surface.label)
    return _mesh_surface(patch.vertices, patch.faces, patch.factor * eps, surface.label)


def refine(surface: Surface, order: int) -> Surface:
    """Same parametric surface on a different grid order."""
    patch = surface.patch_structure
    if not isinstance(patch, ParametricPatch):
        raise GeometryError("only parametric surfaces can be re-gridded")
    return _parametric_surface(patch.matrix, patch.center, order, patch.factor, surface.label)


@dataclass(frozen=True)
class Hole:
    """The hole eps * omega inside a domain; checks eps * diam(omega) < dist(0, dOmega)."""

    base_surface: Surface
    epsilon: float

    def check(self, outer: Surface) -> None:
        check_hole(outer, self.base_surface, self.epsilon)

    @property
    def surface(self) -> Surface:
        return scale(self.base_surface, self.epsilon)


def check_hole(outer: Surface, inner: Surface, eps: float) -> None:
    if not eps > 0:
        raise GeometryError(f"epsilon must be positive, got {eps}")
    dist = float(np.linalg.norm(outer.nodes, axis=1).min())
    if not eps * inner.diameter < dist:
        raise GeometryError(
            f"hole too large: eps*diam(omega) = {eps * inner.diameter:.4g} >= dist(0, dOmega) = {dist:.4g}")


# ---------------------------------------------------------------------------
# solid quadrature

def volume_quadrature(surface: Surface, order: int | None = None):
    """Points and weights integrating over the region bounded by ``surface``.

    Parametric bodies: radial Gauss-Legendre times the sphere grid, mapped by
    the linear map.  Meshes: tetrahedra from the vertex centroid with a
    collapsed Gauss rule.
    """
    patch = surface.patch_structure
    if isinstance(patch, ParametricPatch):
        p = patch.order if order is None else order
        s, ws, _, _ = sphere_grid(p)
        nr = p // 2 + 3
        xr, wr = np.polynomial.legendre.leggauss(nr)
        r = 0.5 * (xr + 1.0)
        wr = 0.5 * wr * r ** 2
        A = patch.factor * patch.matrix
        pts = (r[:, None, None] * s[None, :, :]).reshape(-1, 3) @ A.T + patch.factor * patch.center
        w = (wr[:, None] * ws[None, :]).reshape(-1) * abs(np.linalg.det(A))
        return pts, w
    P = patch.points
    c = P.mean(axis=0)
    n = 4 if order is None else order
    xg, wg = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (xg + 1.0)
    wu = 0.5 * wg
    # collapsed map of the unit cube onto the reference tetrahedron
    a, b, cc = np.meshgrid(u, u, u, indexing="ij")
    wa, wb, wc = np.meshgrid(wu, wu, wu, indexing="ij")
    l1 = a
    l2 = (1 - a) * b
    l3 = (1 - a) * (1 - b) * cc
    jw = (wa * wb * wc * (1 - a) ** 2 * (1 - b)).ravel()
    bary = np.stack([l1.ravel(), l2.ravel(), l3.ravel()], axis=1)
    pts, wts = [], []
    for f in patch.faces:
        v0, v1, v2 = P[f]
        E = np.stack([v0 - c, v1 - c, v2 - c], axis=1)
        det = np.linalg.det(E)
        pts.append(c + bary @ E.T)
        wts.append(jw * det)
    return np.concatenate(pts), np.concatenate(wts)
