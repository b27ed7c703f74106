import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capax.direct_solver import capacity_direct, frak_C, newtonian_capacity
from capax.geometry import make_ellipsoid, make_sphere
from capax.series import (aux_sequences, capacity_series, compositions, eval_series, lambda_tilde,
                          leading_coefficient_vanishing, reciprocal_series, reciprocal_series_recursive,
                          rho_coefficients, theta_coefficients, xi_coefficients)
from capax.taylor import TaylorPoly

FOUR_PI = 4 * math.pi
ONE = TaylorPoly.constant(1.0)
X1, X2, X3 = (TaylorPoly.coordinate(j) for j in range(3))


@pytest.fixture(scope="module")
def ball():
    return make_sphere(1.0, 12)


@pytest.fixture(scope="module")
def condenser(ball):
    return capacity_series(ball, ball, ONE, ONE, 8)


def test_rho_tables(ball):
    tabs = rho_coefficients(ball, ball, 4)
    np.testing.assert_allclose(tabs.rho_i[0], 1 / FOUR_PI, atol=1e-12)
    assert np.abs(tabs.rho_i[1]).max() <= 1e-12
    assert np.ptp(tabs.rho_o[0]) <= 1e-8
    assert ball.integrate(tabs.rho_i[0]) == pytest.approx(1.0, abs=1e-13)
    for k in range(1, 5):
        assert abs(ball.integrate(tabs.rho_i[k])) <= 1e-12


def test_theta_tables(ball):
    rho = rho_coefficients(ball, ball, 5)
    tabs = theta_coefficients(ball, ball, 5, ONE, rho)
    for k in range(6):
        assert np.abs(tabs.theta_i[k]).max() <= 1e-12
        assert np.abs(tabs.theta_o[k]).max() <= 1e-12
    tabs = theta_coefficients(ball, ball, 5, X1 + X2 * X3, rho)
    for k in range(6):
        assert abs(ball.integrate(tabs.theta_i[k])) <= 1e-12
    for k in range(3):
        assert np.abs(tabs.theta_o[k]).max() == 0.0
    assert np.abs(tabs.theta_i[0]).max() <= 1e-13
    # theta^i_1 solves (1/2 - W) theta = t_1; W t_1 = t_1/6 on the sphere
    np.testing.assert_allclose(tabs.theta_i[1], 3 * ball.nodes[:, 0], atol=1e-10)
    ms = tabs.moments("theta", 1)
    assert len(ms) == len(tabs.betas)


def test_aux_sequence_anchors(ball, condenser):
    aux = condenser.aux
    assert aux.r[0] == pytest.approx(-1 / FOUR_PI, rel=1e-12)
    assert aux.g[0] == pytest.approx(1.0, rel=1e-12)
    assert aux.u_m[0].poly.is_zero()
    assert np.abs(aux.u_m[0].density).max() <= 1e-12
    assert ball.integrate(condenser.lambda_tilde[0]) == pytest.approx(-FOUR_PI, rel=1e-10)


def test_condenser_coefficients(ball, condenser):
    c = condenser.c
    assert c[0] == 0.0
    for n in range(1, 9):
        assert c[n] == pytest.approx(FOUR_PI, rel=1e-3)
    assert c[1] == pytest.approx(-1 / condenser.r[0], rel=1e-10)
    assert -1 / condenser.r[0] == pytest.approx(newtonian_capacity(ball), rel=1e-8)
    assert condenser.empirical_radius == pytest.approx(1.0, rel=1e-2)


def test_inversion_identity(condenser):
    aux, eps, K = condenser.aux, 0.05, 8
    lam = sum(l * eps ** n for n, l in enumerate(condenser.lambda_tilde))
    u = sum(x * eps ** n for n, x in enumerate(aux.u_tilde))
    a = sum(x * eps ** n for n, x in enumerate(condenser.a_tilde))
    r = sum(x * eps ** n for n, x in enumerate(aux.r))
    # identity holds up to the truncation of the products, O(eps^(K+1))
    assert np.abs(lam - (u + a / r)).max() <= 1e-10 + 10 * eps ** (K + 1) * np.abs(a).max() / abs(r)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=6, max_size=6), st.floats(-3, -0.2))
def test_reciprocal_series_matches_recursion(tail, r0):
    r = np.array([r0] + tail)
    np.testing.assert_allclose(reciprocal_series(r, 5), reciprocal_series_recursive(r, 5), rtol=1e-9, atol=1e-9)


def test_compositions():
    assert sorted(compositions(4, 2)) == [(1, 3), (2, 2), (3, 1)]
    assert sum(1 for _ in compositions(6, 3)) == math.comb(5, 2)


def test_xi_coefficients(ball):
    np.testing.assert_array_equal(xi_coefficients(ONE, ONE, ball, 6), 0.0)
    xi = xi_coefficients(X1, X1, ball, 6)
    assert xi[3] == pytest.approx(FOUR_PI / 3, rel=1e-12)
    assert np.abs(np.delete(xi, 3)).max() == 0.0
    assert abs(xi_coefficients(X1, X2, ball, 6)[3]) <= 1e-14


def test_vanishing_x1(ball):
    s = capacity_series(ball, ball, X1, X1, 6)
    assert abs(s.c[1]) <= 1e-8 * FOUR_PI and abs(s.c[2]) <= 1e-8 * FOUR_PI
    assert s.c[3] == pytest.approx(FOUR_PI, rel=1e-6)
    assert leading_coefficient_vanishing(ball, X1, X1) == (3, pytest.approx(FOUR_PI, rel=1e-8))
    assert leading_coefficient_vanishing(ball, ONE, ONE) == (1, pytest.approx(FOUR_PI, rel=1e-8))
    k, coef = leading_coefficient_vanishing(ball, ONE, X1)
    assert k == 2 and abs(coef) <= 1e-10


def test_lambda_tilde_vanishing(ball):
    s = capacity_series(ball, make_ellipsoid(1.5, 1, 0.8, 10), X1 + X2, X1 * X2, 6)
    # orders 1 and 2: lambda~_n = 0 for n < 3
    for n in range(3):
        assert np.abs(s.lambda_tilde[n]).max() <= 1e-10


def test_leading_coefficient_independent_of_domain():
    om = make_ellipsoid(2, 1, 1, 12)
    a = capacity_series(make_sphere(1.0, 12), om, X1, X1 + X2, 4).c[3]
    b = capacity_series(make_ellipsoid(1.2, 1.0, 1.1, 12, center=(0.1, 0, 0)), om, X1, X1 + X2, 4).c[3]
    assert a == pytest.approx(b, rel=1e-3)
    assert a == pytest.approx(frak_C(om, X1, X1 + X2), rel=1e-6)


def test_remainder_order():
    Om = make_sphere(1.0, 12, center=(0.2, 0.15, -0.1))
    om = make_ellipsoid(2, 1, 1, 12)
    N = 4
    s = capacity_series(Om, om, ONE + X1, X2, N)
    rem = [abs(capacity_direct(Om, om, e, ONE + X1, X2) - eval_series(s, e)) / e ** (N + 1) for e in (0.1, 0.05, 0.025)]
    assert max(rem) <= 4 * min(rem) + 1e-6


def test_blow_up_consistency(ball):
    om = make_ellipsoid(2, 1, 1, 12)
    target = frak_C(om, X1, X1)
    errs = [abs(capacity_direct(ball, om, e, X1, X1) / e ** 3 - target) for e in (0.1, 0.05, 0.025)]
    assert errs[0] > errs[1] > errs[2]


def test_exports(tmp_path, condenser):
    import json

    condenser.to_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "n,c_n" and len(lines) == 10
    condenser.to_json(tmp_path / "c.json")
    meta = json.loads((tmp_path / "c.json").read_text())
    assert meta["K_max"] == 8 and len(meta["c"]) == 9
