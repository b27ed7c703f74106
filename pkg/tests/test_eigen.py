import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import special_ortho_group

from capax.eigen import (AdmissibleFunction, EigenSpace, ball_bessel_zero, ball_mode_taylor,
                         capacity_asymptotics_pair, general_capacity_asymptotics_check, loglog_fit,
                         order_decomposition, predict_multiple, predict_simple, principal_part, q_matrix,
                         shell_eigenvalue_l0, shell_eigenvalue_oracle, sph_jn, sph_yn, vanishing_order)
from capax.geometry import make_ellipsoid, make_sphere
from capax.taylor import TaylorPoly

PI = math.pi
X1, X2, X3 = (TaylorPoly.coordinate(j) for j in range(3))
ONE = TaylorPoly.constant(1.0)


@pytest.fixture(scope="module")
def ball():
    return make_sphere(1.0, 12)


@pytest.fixture(scope="module")
def l1_space():
    k = ball_bessel_zero(1, 1)
    return EigenSpace(k * k, [ball_mode_taylor(1, 1, c, 8) for c in range(3)], index=2)


def test_vanishing_order_examples():
    assert vanishing_order(X1 * X2) == 2
    assert principal_part(X1 * X2).allclose(X1 * X2)
    f = ONE * 3.0 + X1
    assert vanishing_order(f) == 0 and principal_part(f).allclose(ONE * 3.0)
    u = ball_mode_taylor(0, 1, degree=6).taylor * math.sqrt(2 * PI)  # sin(pi r)/r
    assert vanishing_order(u) == 0
    assert principal_part(u).allclose(ONE * PI, atol=1e-12)
    with pytest.raises(ValueError, match="zero"):
        vanishing_order(TaylorPoly({(1, 0, 0): 1e-14, (0, 0, 0): 0.0}) * 0.0)


def test_capacity_asymptotics_pair(ball):
    assert capacity_asymptotics_pair(ball, ONE, ONE) == (1, pytest.approx(4 * PI, rel=1e-8))
    k, q = capacity_asymptotics_pair(ball, X1, X2)
    assert k == 3 and abs(q) <= 1e-10
    assert capacity_asymptotics_pair(ball, X1, X1) == (3, pytest.approx(4 * PI, rel=1e-8))
    assert capacity_asymptotics_pair(ball, TaylorPoly({}, 3), X1) == (None, 0.0)


def test_shell_oracles():
    assert shell_eigenvalue_oracle(0.1, 0, 1) == pytest.approx((PI / 0.9) ** 2, rel=1e-12)
    assert shell_eigenvalue_oracle(0.1, 0, 1) == pytest.approx(12.1847, abs=1e-4)
    assert shell_eigenvalue_oracle(1e-6, 0, 1) == pytest.approx(PI ** 2, rel=1e-5)
    for n in (1, 2, 3):
        assert shell_eigenvalue_oracle(0.3, 0, n) == pytest.approx(shell_eigenvalue_l0(0.3, n), rel=1e-12)
    lam = shell_eigenvalue_oracle(0.05, 1, 1)
    k = math.sqrt(lam)
    cross = sph_jn(1, k * 0.05) * sph_yn(1, k) - sph_jn(1, k) * sph_yn(1, k * 0.05)
    assert abs(cross) <= 1e-10
    assert ball_bessel_zero(1, 1) == pytest.approx(4.493409457909064, rel=1e-13)


def test_ball_modes_normalized():
    # L2(B_1) norm of the Taylor data, integrated numerically on a radial grid
    from scipy.integrate import quad

    k = PI
    f = lambda r: (math.sin(k * r) / (r * math.sqrt(2 * PI))) ** 2 * 4 * PI * r * r
    assert quad(f, 0, 1)[0] == pytest.approx(1.0, rel=1e-10)
    u = ball_mode_taylor(0, 1, degree=10).taylor
    assert u(np.array([[0.0, 0.0, 0.0]]))[0] == pytest.approx(PI / math.sqrt(2 * PI), rel=1e-14)


def test_predict_simple_vs_shell(ball):
    u1 = ball_mode_taylor(0, 1, degree=8)
    eps = [0.01, 0.02, 0.03, 0.05]
    pred = predict_simple(PI ** 2, u1, ball, eps)
    assert pred.exponent == 1
    assert pred.coefficient == pytest.approx(2 * PI ** 2, rel=1e-8)
    errs = [abs(s / (shell_eigenvalue_l0(e, 1) - PI ** 2) - 1) for s, e in zip(pred.shifts, eps)]
    assert errs[0] <= 0.03 and errs[-1] <= 0.10
    assert all(a < b for a, b in zip(errs, errs[1:]))


def test_simple_exponent_with_vanishing(ball):
    u = AdmissibleFunction(X1 * X2 + X1 * X2 * X3, "x1x2")
    pred = predict_simple(10.0, u, ball, [0.1])
    assert pred.exponent == 5


def test_order_decomposition(l1_space):
    blocks = order_decomposition(l1_space)
    assert [(b.order, b.dim) for b in blocks] == [(1, 3)]
    mixed = EigenSpace(5.0, [ball_mode_taylor(0, 1), AdmissibleFunction(X1 * X2 * (ONE - X3 * X3), "v")])
    assert [(b.order, b.dim) for b in order_decomposition(mixed)] == [(2, 1), (0, 1)]
    with pytest.raises(ValueError, match="orthonormal"):
        order_decomposition(EigenSpace(5.0, mixed.basis, gram=np.array([[1.0, 0.2], [0.2, 1.0]])))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_mixed_decomposition_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    basis = [AdmissibleFunction(ONE * 2.0 + X1 * X1, "a"), AdmissibleFunction(X1 * X2, "b"),
             AdmissibleFunction(X3 + X1 * X2 * X3, "c")]
    R = special_ortho_group.rvs(3, random_state=rng)
    rot = [AdmissibleFunction(sum((basis[j].taylor * R[i, j] for j in range(3)), TaylorPoly({}, 3)), f"r{i}")
           for i in range(3)]
    ref = [(b.order, b.dim) for b in order_decomposition(EigenSpace(1.0, basis))]
    assert [(b.order, b.dim) for b in order_decomposition(EigenSpace(1.0, rot))] == ref == [(2, 1), (1, 1), (0, 1)]


def test_multiple_eigenvalue_q_matrix(ball, l1_space):
    pred = predict_multiple(l1_space, ball, [0.01, 0.05])
    (blk,) = pred.blocks
    mu = np.mean(blk.mu)
    off = blk.Q - np.diag(np.diag(blk.Q))
    assert np.abs(off).max() <= 1e-6 * mu
    assert np.ptp(blk.mu) <= 1e-6 * mu
    assert all(m > 0 for m in blk.mu)
    assert [b[1] for b in pred.branches] == [3, 3, 3]
    assert [b[0] for b in pred.branches] == [2, 3, 4]
    rep = pred.report()
    assert set(rep) == {"eigenvalue", "multiplicity", "blocks", "predictions", "oracle"}
    assert len(rep["predictions"]) == 6


def test_multiple_eigenvalue_vs_shell(ball, l1_space):
    pred = predict_multiple(l1_space, ball)
    mu = pred.blocks[0].mu[0]
    k2 = l1_space.eigenvalue
    eps = [0.01, 0.02, 0.03, 0.05]
    shifts = [shell_eigenvalue_oracle(e, 1, 1) - k2 for e in eps]
    slope, pref = loglog_fit(eps, shifts)
    assert abs(slope - 3) <= 0.1
    for e, s in zip(eps, shifts):
        assert abs(mu * e ** 3 / s - 1) <= 0.05


def test_multiple_eigenvalue_basis_invariance(ball, l1_space):
    ref = predict_multiple(l1_space, ball)
    R = special_ortho_group.rvs(3, random_state=7)
    rot = [AdmissibleFunction(sum((l1_space.basis[j].taylor * R[i, j] for j in range(3)), TaylorPoly({}, 3)), "")
           for i in range(3)]
    out = predict_multiple(EigenSpace(l1_space.eigenvalue, rot, index=2), ball)
    assert [(b.order, b.dim) for b in out.blocks] == [(b.order, b.dim) for b in ref.blocks]
    np.testing.assert_allclose(sorted(out.blocks[0].mu), sorted(ref.blocks[0].mu), rtol=1e-8)


def test_two_branch_double_eigenvalue():
    om = make_ellipsoid(2, 1, 1, 10)
    space = EigenSpace(7.0, [AdmissibleFunction(ONE + X1 * X1, "u"), AdmissibleFunction(X2 + X3 * X1, "v")])
    pred = predict_multiple(space, om, [0.01])
    assert sorted(b[1] for b in pred.branches) == [1, 3]
    assert all(b[2] > 0 for b in pred.branches)


def test_q_matrix_symmetric(ball):
    Q = q_matrix(make_ellipsoid(2, 1, 1, 10), [X1, X2 + X3, X1 - 0.3 * X2], 1)
    np.testing.assert_allclose(Q, Q.T, atol=0)
    assert np.all(np.linalg.eigvalsh(Q) > 0)


# the exact condenser value 4 pi eps/(1 - eps) has log-log slope 1 + O(eps), so
# the constant case is fitted closer to zero than the vanishing cases
@pytest.mark.parametrize("u,expo,pref_tol,expo_tol,eps", [
    (ONE, 1, 0.02, 0.02, [1e-4, 2e-4, 4e-4, 8e-4]),
    (X1, 3, 0.02, 0.05, [0.02, 0.03, 0.05, 0.08]),
    (X1 * X2, 5, None, 0.1, [0.02, 0.03, 0.05, 0.08]),
])
def test_general_capacity_asymptotics(ball, u, expo, pref_tol, expo_tol, eps):
    rep = general_capacity_asymptotics_check(ball, ball, u, eps)
    assert rep.expected_exponent == expo
    assert abs(rep.exponent - expo) <= expo_tol
    if pref_tol is not None:
        assert rep.prefactor_rel_error <= pref_tol
    with pytest.raises(ValueError):
        general_capacity_asymptotics_check(ball, ball, u, [0.02, 0.03, 0.04])
