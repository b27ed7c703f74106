"""Closed-form and quadrature reference values used for validation columns."""
from __future__ import annotations

from math import pi

import numpy as np
from scipy import integrate


def condenser_capacity(eps: float, inner_radius: float = 1.0, outer_radius: float = 1.0) -> float:
    """Cap of the ball of radius eps*r inside the concentric ball of radius R (d = 3)."""
    a = eps * inner_radius
    return 4.0 * pi / (1.0 / a - 1.0 / outer_radius)


def condenser_potential(r, eps: float) -> np.ndarray:
    """Capacitary potential of eps*B_1 in B_1 as a function of |x| = r."""
    return (1.0 / np.asarray(r, float) - 1.0) / (1.0 / eps - 1.0)


def ellipsoid_capacity(a: float, b: float, c: float) -> float:
    """Newtonian capacity 8 pi / int_0^inf ds / sqrt((a^2+s)(b^2+s)(c^2+s))."""
    f = lambda s: 1.0 / np.sqrt((a * a + s) * (b * b + s) * (c * c + s))
    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)
    return 8.0 * pi / val


def prolate_capacity(a: float, b: float) -> float:
    """Closed form for semi-axes (a, b, b) with a > b."""
    e = np.sqrt(a * a - b * b)
    return 4.0 * pi * e / np.arccosh(a / b)


def ellipsoid_area(a: float, b: float, c: float) -> float:
    """Surface area by adaptive integration over the parameter rectangle."""
    def integrand(phi, theta):
        st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
        n = np.array([b * c * st * st * cp, a * c * st * st * sp, a * b * st * ct])
        return float(np.linalg.norm(n))

    val, _ = integrate.dblquad(integrand, 0.0, pi, 0.0, 2 * pi, epsabs=1e-12, epsrel=1e-12)
    return val
