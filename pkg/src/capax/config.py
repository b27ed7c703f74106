"""TOML run configuration with field-level validation."""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, GeometryError
from .geometry import (Surface, _mesh_surface, check_hole, icosphere, load_mesh, make_ellipsoid, make_linear_image,
                       make_sphere)
from .kernels import get_max_order
from .taylor import TaylorPoly

MODES = ("newtonian", "direct", "series", "compare", "eigen", "converge")
SHAPES = ("sphere", "ellipsoid", "linear", "mesh", "icosphere")


@dataclass
class ShapeSpec:
    shape: str = "sphere"
    radius: float = 1.0
    axes: list = field(default_factory=lambda: [1.0, 1.0, 1.0])
    matrix: list | None = None
    center: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    order: int = 12
    path: str | None = None
    subdivisions: int = 3

    def build(self, order: int | None = None, subdivisions: int | None = None) -> Surface:
        p = self.order if order is None else order
        try:
            if self.shape == "sphere":
                return make_sphere(self.radius, p, self.center)
            if self.shape == "ellipsoid":
                return make_ellipsoid(*self.axes, p, center=self.center)
            if self.shape == "linear":
                return make_linear_image(self.matrix, p, self.center)
            if self.shape == "mesh":
                return load_mesh(self.path)
            if self.shape == "icosphere":
                v, f = icosphere(self.subdivisions if subdivisions is None else subdivisions)
                return _mesh_surface(v * self.radius + self.center, f, label="icosphere")
        except GeometryError as exc:
            raise ConfigError(f"{self.shape}: {exc}") from exc
        raise ConfigError(f"unknown shape {self.shape!r}")

    @property
    def parametric(self) -> bool:
        return self.shape in ("sphere", "ellipsoid", "linear")


@dataclass
class EigenSpec:
    scenario: str = "ball"
    l: int = 0
    n: int = 1
    degree: int = 8
    eigenvalue: float | None = None
    index: int = 1
    basis: list = field(default_factory=list)


@dataclass
class ConvergeSpec:
    quantity: str = "newtonian"
    levels: list = field(default_factory=lambda: [4, 8, 12])
    epsilon: float = 0.05


@dataclass
class RunConfig:
    mode: str
    domain: ShapeSpec
    hole: ShapeSpec
    u_a: list
    u_b: list
    epsilons: list
    k_max: int = 8
    jobs: int = 1
    eigen: EigenSpec = field(default_factory=EigenSpec)
    converge: ConvergeSpec = field(default_factory=ConvergeSpec)

    def poly_a(self) -> TaylorPoly:
        return TaylorPoly.from_terms(self.u_a)

    def poly_b(self) -> TaylorPoly:
        return TaylorPoly.from_terms(self.u_b)

    def canonical(self) -> dict:
        """Plain dict of every setting that influences the numbers (jobs excluded)."""
        d = asdict(self)
        d.pop("jobs")
        return d

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _shape(raw, where, default) -> ShapeSpec:
    if raw is None:
        return default
    if not isinstance(raw, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = set(ShapeSpec.__dataclass_fields__)
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"[{where}] unknown keys: {sorted(extra)}")
    spec = ShapeSpec(**raw)
    if spec.shape not in SHAPES:
        raise ConfigError(f"[{where}].shape must be one of {SHAPES}, got {spec.shape!r}")
    if spec.shape == "mesh" and not spec.path:
        raise ConfigError(f"[{where}].path is required for shape = 'mesh'")
    if not isinstance(spec.order, int) or spec.order < 1:
        raise ConfigError(f"[{where}].order must be a positive integer")
    if len(spec.center) != 3 or len(spec.axes) != 3:
        raise ConfigError(f"[{where}].center and axes need three entries")
    if spec.radius <= 0:
        raise ConfigError(f"[{where}].radius must be positive")
    return spec


def _terms(raw, name):
    if raw is None:
        return [[0, 0, 0, 1.0]]
    try:
        p = TaylorPoly.from_terms(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"functions.{name}: {exc}") from exc
    if p.degree > get_max_order():
        raise ConfigError(f"functions.{name}: degree {p.degree} exceeds kernel max order {get_max_order()}")
    return [[int(x) for x in row[:3]] + [float(row[3])] for row in raw]


def _epsilons(raw):
    """A list, or a table {start, stop, num, spacing = "linear" | "log"}."""
    if isinstance(raw, dict):
        extra = set(raw) - {"start", "stop", "num", "spacing"}
        if extra:
            raise ConfigError(f"epsilons: unknown keys {sorted(extra)}")
        try:
            start, stop, num = float(raw["start"]), float(raw["stop"]), int(raw["num"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"epsilons: range needs numeric start, stop, num ({exc})") from exc
        spacing = raw.get("spacing", "linear")
        if spacing not in ("linear", "log") or num < 1 or start <= 0 or stop <= 0:
            raise ConfigError("epsilons: need positive start/stop, num >= 1, spacing linear or log")
        grid = np.geomspace(start, stop, num) if spacing == "log" else np.linspace(start, stop, num)
        return [float(e) for e in grid]
    return raw


def from_dict(raw: dict, mode: str | None = None, overrides: dict | None = None) -> RunConfig:
    overrides = overrides or {}
    cfg_mode = raw.get("mode")
    if mode and cfg_mode and cfg_mode != mode:
        raise ConfigError(f"mode: config says {cfg_mode!r} but subcommand is {mode!r}")
    mode = mode or cfg_mode
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    known = {"mode", "domain", "hole", "functions", "epsilons", "k_max", "eigen", "converge"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    domain = _shape(raw.get("domain"), "domain", ShapeSpec())
    hole = _shape(raw.get("hole"), "hole", ShapeSpec())
    if overrides.get("quad_order"):
        q = int(overrides["quad_order"])
        if q < 1:
            raise ConfigError("--quad-order must be >= 1")
        domain.order = hole.order = q
    funcs = raw.get("functions", {})
    if not isinstance(funcs, dict):
        raise ConfigError("[functions] must be a table")
    u_a = _terms(funcs.get("u_a"), "u_a")
    u_b = _terms(funcs.get("u_b", funcs.get("u_a")), "u_b")
    eps = _epsilons(raw.get("epsilons", [0.02, 0.05, 0.1]))
    if not isinstance(eps, list) or not eps or not all(isinstance(e, (int, float)) and e > 0 for e in eps):
        raise ConfigError("epsilons must be a non-empty list of positive numbers")
    k_max = overrides.get("k_max") or raw.get("k_max", 8)
    if not isinstance(k_max, int) or not 0 <= k_max < get_max_order():
        raise ConfigError(f"k_max must be an integer in [0, {get_max_order() - 1}]")
    eig_raw = raw.get("eigen", {})
    try:
        eig = EigenSpec(**eig_raw)
    except TypeError as exc:
        raise ConfigError(f"[eigen]: {exc}") from exc
    if eig.scenario not in ("ball", "custom"):
        raise ConfigError("[eigen].scenario must be 'ball' or 'custom'")
    if eig.scenario == "ball" and eig.l not in (0, 1):
        raise ConfigError("[eigen].l must be 0 or 1 for the ball scenario")
    if eig.scenario == "custom" and (eig.eigenvalue is None or not eig.basis):
        raise ConfigError("[eigen] custom scenario needs eigenvalue and basis")
    conv_raw = raw.get("converge", {})
    try:
        conv = ConvergeSpec(**conv_raw)
    except TypeError as exc:
        raise ConfigError(f"[converge]: {exc}") from exc
    if conv.quantity not in ("newtonian", "area", "capacity"):
        raise ConfigError("[converge].quantity must be newtonian, area or capacity")
    if mode == "converge" and len(conv.levels) < 2:
        raise ConfigError("[converge].levels: need at least 2 refinement levels")
    cfg = RunConfig(mode, domain, hole, u_a, u_b, [float(e) for e in eps], int(k_max),
                    int(overrides.get("jobs") or 1), eig, conv)
    if mode in ("direct", "compare"):
        Om, om = domain.build(), hole.build()
        for e in cfg.epsilons:
            try:
                check_hole(Om, om, e)
            except GeometryError as exc:
                raise ConfigError(f"epsilons: {exc}") from exc
    return cfg


def load_config(path, mode: str | None = None, overrides: dict | None = None) -> RunConfig:
    try:
        raw = tomllib.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc
    return from_dict(raw, mode, overrides)
