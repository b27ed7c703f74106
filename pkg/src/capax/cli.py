"""Command line front end.

    capax <mode> --config run.toml [--out DIR] [--jobs N] [--k-max N] [--quad-order N] [--plot]

Modes: newtonian, direct, series, compare, eigen, converge (``run`` takes the
mode from the config file).  Every mode writes ``<mode>.csv`` and
``<mode>.json`` into the output directory; both carry the config hash.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import MODES, RunConfig, ShapeSpec, load_config
from .errors import ConfigError, GeometryError, NearFieldError, SingularityError, SingularSystemError

log = logging.getLogger("capax")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def setup_logging() -> None:
    level = os.environ.get("CAPAX_LOG", "WARNING").upper()
    if level.isdigit():
        lvl = int(level)
    else:
        lvl = getattr(logging, level, None)
        if not isinstance(lvl, int):
            lvl = logging.WARNING
    logging.basicConfig(level=lvl, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------
# output helpers

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if not math.isfinite(v) else repr(v)
    return str(v)


def csv_text(header, rows, config_hash: str) -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _clean(obj):
    """JSON-safe copy: non-finite floats become None, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def json_text(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# parallel epsilon sweep

def _direct_task(args):
    from .direct_solver import capacity_direct

    dom, hole, u_a, u_b, eps = args
    from .taylor import TaylorPoly

    return capacity_direct(ShapeSpec(**dom).build(), ShapeSpec(**hole).build(), eps,
                           TaylorPoly.from_terms(u_a), TaylorPoly.from_terms(u_b))


def sweep_direct(cfg: RunConfig, jobs: int) -> list[float]:
    from dataclasses import asdict

    tasks = [(asdict(cfg.domain), asdict(cfg.hole), cfg.u_a, cfg.u_b, e) for e in cfg.epsilons]
    if jobs <= 1 or len(tasks) == 1:
        return [_direct_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_direct_task, tasks))


def analytic_capacity(cfg: RunConfig, eps: float):
    """Condenser value when both surfaces are centred spheres and u^a = u^b = 1."""
    from .oracles import condenser_capacity

    d, h = cfg.domain, cfg.hole
    const = [[0, 0, 0, 1.0]]
    if (d.shape == h.shape == "sphere" and not any(d.center) and not any(h.center)
            and cfg.u_a == const and cfg.u_b == const):
        return condenser_capacity(eps, h.radius, d.radius)
    return None


def _rel(a, b):
    if a is None or b is None or b == 0:
        return None
    return abs(a - b) / abs(b)


# ---------------------------------------------------------------------------
# modes

def run_newtonian(cfg: RunConfig, jobs: int):
    from .direct_solver import newtonian_capacity
    from .oracles import ellipsoid_capacity

    om = cfg.hole.build()
    cap = newtonian_capacity(om)
    h = cfg.hole
    exact = None
    if h.shape == "sphere":
        exact = 4 * math.pi * h.radius
    elif h.shape == "ellipsoid":
        exact = ellipsoid_capacity(*h.axes)
    rows = [["capacity", cap], ["analytic", exact], ["relative_error", _rel(cap, exact)], ["nodes", om.n]]
    report = {"capacity": cap, "analytic": exact, "relative_error": _rel(cap, exact), "nodes": om.n,
              "surface": om.fingerprint()}
    return ["quantity", "value"], rows, report


def run_direct(cfg: RunConfig, jobs: int):
    caps = sweep_direct(cfg, jobs)
    rows = []
    for e, c in zip(cfg.epsilons, caps):
        a = analytic_capacity(cfg, e)
        rows.append([e, c, a, _rel(c, a)])
    report = {"epsilons": cfg.epsilons, "capacity": caps}
    return ["epsilon", "direct", "analytic", "rel_err_direct_analytic"], rows, report


def _series(cfg: RunConfig):
    from .series import capacity_series

    return capacity_series(cfg.domain.build(), cfg.hole.build(), cfg.poly_a(), cfg.poly_b(), cfg.k_max)


def run_series(cfg: RunConfig, jobs: int):
    s = _series(cfg)
    rows = [[n, c] for n, c in enumerate(s.c)]
    return ["n", "c_n"], rows, s.metadata()


def run_compare(cfg: RunConfig, jobs: int):
    from .series import eval_series

    s = _series(cfg)
    caps = sweep_direct(cfg, jobs)
    rows = []
    for e, d in zip(cfg.epsilons, caps):
        v = eval_series(s, e)
        a = analytic_capacity(cfg, e)
        rows.append([e, d, v, a, _rel(v, d), _rel(d, a), _rel(v, a)])
    report = {"series": s.metadata(), "epsilons": cfg.epsilons, "direct": caps,
              "series_values": [r[2] for r in rows], "analytic": [r[3] for r in rows]}
    header = ["epsilon", "direct", "series", "analytic", "rel_err_series_direct",
              "rel_err_direct_analytic", "rel_err_series_analytic"]
    return header, rows, report


def run_eigen(cfg: RunConfig, jobs: int):
    from .eigen import (AdmissibleFunction, EigenSpace, ball_bessel_zero, ball_mode_taylor, predict_multiple,
                        shell_eigenvalue_oracle)
    from .taylor import TaylorPoly

    ec = cfg.eigen
    om = cfg.hole.build()
    if ec.scenario == "ball":
        k = ball_bessel_zero(ec.l, ec.n)
        lam = k * k
        comps = 1 if ec.l == 0 else 3
        basis = [ball_mode_taylor(ec.l, ec.n, c, ec.degree) for c in range(comps)]
        space = EigenSpace(lam, basis, index=ec.index)
    else:
        basis = [AdmissibleFunction(TaylorPoly.from_terms(b), f"u{i}") for i, b in enumerate(ec.basis)]
        space = EigenSpace(float(ec.eigenvalue), basis, index=ec.index)
    pred = predict_multiple(space, om, cfg.epsilons)
    oracle_ok = (ec.scenario == "ball" and cfg.hole.shape == "sphere" and not any(cfg.hole.center))
    rows, oracle = [], []
    for p in pred.predictions:
        e, br, val = p["epsilon"], p["branch"], p["value"]
        ref = shell_eigenvalue_oracle(e * cfg.hole.radius, ec.l, ec.n) if oracle_ok else None
        rel = None if ref is None else abs((val - space.eigenvalue) / (ref - space.eigenvalue) - 1.0)
        rows.append([e, br, val, ref, rel])
        if oracle_ok:
            oracle.append({"epsilon": e, "branch": br, "shell": ref, "predicted": val, "rel_shift_error": rel})
    pred.oracle = oracle or None
    return ["epsilon", "branch", "predicted", "oracle", "rel_shift_error"], rows, pred.report()


def richardson_table(levels, values, h, declared_order=None):
    """Rows (level, value, richardson, observed_order) for a refinement sequence."""
    out = []
    for i, (lv, v) in enumerate(zip(levels, values)):
        q = None
        if i >= 2:
            d1, d2 = abs(values[i - 1] - values[i - 2]), abs(v - values[i - 1])
            floor = 64 * np.finfo(float).eps * max(abs(v), 1e-300)
            if d1 > floor and d2 > floor:
                q = math.log(d1 / d2) / math.log(h[i - 1] / h[i])
        rich = None
        qq = q if q is not None else declared_order
        if i >= 1 and qq is not None and qq > 0:
            rich = v + (v - values[i - 1]) / ((h[i - 1] / h[i]) ** qq - 1.0)
        out.append([lv, v, rich, q])
    return out


def run_converge(cfg: RunConfig, jobs: int):
    from .direct_solver import capacity_direct, newtonian_capacity
    from .oracles import ellipsoid_area, ellipsoid_capacity

    cc = cfg.converge
    levels = [int(l) for l in cc.levels]
    if len(levels) < 2:
        raise ConfigError("converge needs at least 2 refinement levels")
    hole = cfg.hole
    mesh = hole.shape == "icosphere"
    if not hole.parametric and not mesh:
        raise ConfigError("converge: the hole must be parametric or an icosphere")
    values, sizes = [], []
    for lv in levels:
        om = hole.build(subdivisions=lv) if mesh else hole.build(order=lv)
        if cc.quantity == "newtonian":
            values.append(newtonian_capacity(om))
        elif cc.quantity == "area":
            values.append(om.area)
        else:
            Om = cfg.domain.build(order=lv) if cfg.domain.parametric else cfg.domain.build()
            values.append(capacity_direct(Om, om, cc.epsilon, cfg.poly_a(), cfg.poly_b()))
        sizes.append(om.n)
    h = [2.0 ** -lv for lv in levels] if mesh else [1.0 / lv for lv in levels]
    declared = 2 if mesh else None
    table = richardson_table(levels, values, h, declared)
    exact = None
    if cc.quantity == "newtonian":
        exact = 4 * math.pi * hole.radius if hole.shape in ("sphere", "icosphere") else (
            ellipsoid_capacity(*hole.axes) if hole.shape == "ellipsoid" else None)
    elif cc.quantity == "area":
        exact = 4 * math.pi * hole.radius ** 2 if hole.shape in ("sphere", "icosphere") else (
            ellipsoid_area(*hole.axes) if hole.shape == "ellipsoid" else None)
    rows = [[lv, n, v, r, q, None if exact is None else abs(v - exact)]
            for (lv, v, r, q), n in zip(table, sizes)]
    report = {"quantity": cc.quantity, "levels": levels, "nodes": sizes, "values": values,
              "richardson": [r[2] for r in table], "observed_order": [r[3] for r in table],
              "declared_order": "spectral" if declared is None else declared, "exact": exact}
    return ["level", "N", "value", "richardson", "observed_order", "abs_error"], rows, report


RUNNERS = {"newtonian": run_newtonian, "direct": run_direct, "series": run_series,
           "compare": run_compare, "eigen": run_eigen, "converge": run_converge}


def run(cfg: RunConfig, out_dir, jobs: int = 1, plot: bool = False) -> dict:
    """Execute one mode and write <mode>.csv / <mode>.json; returns the report."""
    header, rows, report = RUNNERS[cfg.mode](cfg, jobs)
    h = cfg.hash()
    report = dict(report)
    report["config_hash"] = h
    report["mode"] = cfg.mode
    report["config"] = cfg.canonical()
    report["version"] = __version__
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{cfg.mode}.csv"
    csv_path.write_text(csv_text(header, rows, h))
    (out / f"{cfg.mode}.json").write_text(json_text(report))
    if plot:
        from .plotting import plot_mode

        plot_mode(cfg.mode, header, rows, out)
    return _clean(report)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="capax", description="Capacities of small holes and eigenvalue shifts.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in MODES + ("run",):
        p = sub.add_parser(name, help=f"{name} mode" if name != "run" else "mode taken from the config file")
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default="capax_out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for epsilon sweeps")
        p.add_argument("--k-max", type=int, default=None, help="series truncation order")
        p.add_argument("--quad-order", type=int, default=None, help="quadrature order for both surfaces")
        p.add_argument("--plot", action="store_true", help="also render PNG figures (needs matplotlib)")
    ap.add_argument("--version", action="version", version=f"capax {__version__}")
    return ap


def main(argv=None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    mode = None if args.command == "run" else args.command
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = load_config(args.config, mode, {"k_max": args.k_max, "quad_order": args.quad_order, "jobs": args.jobs})
        run(cfg, args.out, args.jobs, args.plot)
    except (SingularSystemError, NearFieldError, SingularityError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, GeometryError, ImportError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
