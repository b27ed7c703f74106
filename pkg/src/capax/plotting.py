"""Optional PNG figures rendered next to the CSV reports (needs matplotlib)."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _plt():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise ImportError("--plot needs matplotlib; install the 'plot' extra") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _col(header, rows, name):
    j = header.index(name)
    return np.array([np.nan if r[j] is None else float(r[j]) for r in rows])


def plot_mode(mode: str, header, rows, out_dir) -> Path | None:
    """Render a figure for ``mode`` into ``out_dir/<mode>.png``; returns its path."""
    if mode == "newtonian" or not rows:
        return None
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    if mode in ("direct", "compare"):
        eps = _col(header, rows, "epsilon")
        for name, style in (("direct", "o-"), ("series", "s--"), ("analytic", "k:")):
            if name in header:
                y = _col(header, rows, name)
                if np.isfinite(y).any():
                    ax.loglog(eps, np.abs(y), style, label=name)
        ax.set_xlabel("epsilon")
        ax.set_ylabel("capacity")
        ax.legend()
    elif mode == "series":
        n = _col(header, rows, "n")
        c = np.abs(_col(header, rows, "c_n"))
        ax.semilogy(n, np.where(c > 0, c, np.nan), "o-")
        ax.set_xlabel("n")
        ax.set_ylabel("|c_n|")
    elif mode == "eigen":
        eps = _col(header, rows, "epsilon")
        ax.plot(eps, _col(header, rows, "predicted"), "o", label="predicted")
        orc = _col(header, rows, "oracle")
        if np.isfinite(orc).any():
            ax.plot(eps, orc, "kx", label="oracle")
        ax.set_xlabel("epsilon")
        ax.set_ylabel("eigenvalue")
        ax.legend()
    elif mode == "converge":
        N = _col(header, rows, "N")
        err = _col(header, rows, "abs_error")
        if not np.isfinite(err).any():
            v = _col(header, rows, "value")
            err = np.abs(v - v[-1])[:-1]
            N = N[:-1]
        ax.loglog(N, np.where(err > 0, err, np.nan), "o-")
        ax.set_xlabel("N")
        ax.set_ylabel("error")
    ax.set_title(mode)
    fig.tight_layout()
    path = Path(out_dir) / f"{mode}.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
