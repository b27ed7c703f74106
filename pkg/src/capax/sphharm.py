"""Real orthonormal spherical harmonics and z-rotations of coefficient vectors.

Index of (l, m) with -l <= m <= l is l*l + l + m.  For m > 0 the function is
sqrt(2) P_l^m cos(m phi), for m < 0 it is sqrt(2) P_l^|m| sin(|m| phi), with
P_l^m the fully normalized associated Legendre function (no Condon-Shortley
phase).
"""
from __future__ import annotations

import numpy as np


def sh_index(l: int, m: int) -> int:
    return l * l + l + m


def real_sph_harm(degree: int, points: np.ndarray) -> np.ndarray:
    """Values Y[..., k] of all real harmonics up to ``degree`` at unit vectors."""
    pts = np.asarray(points, float)
    shape = pts.shape[:-1]
    pts = pts.reshape(-1, 3)
    ct = np.clip(pts[:, 2], -1.0, 1.0)
    rho = np.hypot(pts[:, 0], pts[:, 1])
    st = rho
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    n = pts.shape[0]
    L = (degree + 1) ** 2
    out = np.empty((n, L))
    sqrt2 = np.sqrt(2.0)
    pmm = np.full(n, 1.0 / np.sqrt(4.0 * np.pi))
    for m in range(degree + 1):
        if m > 0:
            pmm = pmm * np.sqrt((2 * m + 1) / (2 * m)) * st
        if m == 0:
            cm = sm = None
        else:
            cm, sm = sqrt2 * np.cos(m * phi), sqrt2 * np.sin(m * phi)

        def put(l, val):
            if m == 0:
                out[:, sh_index(l, 0)] = val
            else:
                out[:, sh_index(l, m)] = val * cm
                out[:, sh_index(l, -m)] = val * sm

        put(m, pmm)
        if m == degree:
            continue
        p1 = np.sqrt(2 * m + 3) * ct * pmm
        put(m + 1, p1)
        p2 = pmm
        for l in range(m + 2, degree + 1):
            a = np.sqrt((4 * l * l - 1) / (l * l - m * m))
            b = np.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
            p = a * (ct * p1 - b * p2)
            put(l, p)
            p2, p1 = p1, p
    return out.reshape(shape + (L,))


def z_rotation_tables(degree: int):
    """Index arrays (pos, neg, m) pairing the (l, m) and (l, -m) slots for m > 0."""
    pos, neg, ms, zero = [], [], [], []
    for l in range(degree + 1):
        zero.append(sh_index(l, 0))
        for m in range(1, l + 1):
            pos.append(sh_index(l, m))
            neg.append(sh_index(l, -m))
            ms.append(m)
    return np.array(pos), np.array(neg), np.array(ms, float), np.array(zero)


def rotate_z(coeffs: np.ndarray, alphas: np.ndarray, tables) -> np.ndarray:
    """Row k of the result equals Y(Rz(alpha_k) y) contracted like ``coeffs[k]``.

    If coeffs[k] = sum_q c_q Y(y_q) then the output row is sum_q c_q Y(Rz y_q).
    """
    pos, neg, ms, zero = tables
    out = np.empty_like(coeffs)
    out[:, zero] = coeffs[:, zero]
    ca = np.cos(np.outer(alphas, ms))
    sa = np.sin(np.outer(alphas, ms))
    sp, sn = coeffs[:, pos], coeffs[:, neg]
    out[:, pos] = ca * sp - sa * sn
    out[:, neg] = ca * sn + sa * sp
    return out
