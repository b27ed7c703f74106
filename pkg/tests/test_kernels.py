import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capax.errors import SingularityError
from capax.kernels import (derivative_table, eval_kernel_derivative, fundamental_solution, get_max_order,
                           grad_fundamental_solution, grad_kernel_derivative, kernel_derivative, unit_sphere_measure)
from capax.taylor import multi_indices, multi_indices_upto

FD_TOL = 1e-6  # finite-difference agreement required for |beta| <= 4


def test_unit_sphere_measure():
    assert unit_sphere_measure(3) == pytest.approx(4 * math.pi, rel=1e-15)
    assert unit_sphere_measure(4) == pytest.approx(2 * math.pi ** 2, rel=1e-15)
    with pytest.raises(ValueError):
        unit_sphere_measure(2)


def test_fundamental_solution_values():
    assert fundamental_solution([1.0, 0, 0]) == pytest.approx(-1 / (4 * math.pi), rel=1e-15)
    assert fundamental_solution([0, 2.0, 0]) == pytest.approx(-1 / (8 * math.pi), rel=1e-15)
    np.testing.assert_allclose(grad_fundamental_solution([0, 0, 2.0]), [0, 0, 1 / (16 * math.pi)], rtol=1e-15)
    with pytest.raises(SingularityError):
        fundamental_solution([0.0, 0.0, 0.0])


def _fd(beta, x, j, h=1e-3):
    """Five-point central difference of D^beta S in direction j."""
    kd = kernel_derivative(beta)
    e = np.zeros(3)
    e[j] = h
    f = lambda t: eval_kernel_derivative(kd, x + t * e)
    return (8 * (f(1) - f(-1)) - (f(2) - f(-2))) / (12 * h)


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_derivatives_match_finite_differences(order, rng):
    pts = rng.normal(size=(20, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    pts *= rng.uniform(0.5, 2.0, size=(20, 1))
    for beta in multi_indices(order):
        j = max(i for i, b in enumerate(beta) if b)
        parent = list(beta)
        parent[j] -= 1
        for x in pts:
            exact = eval_kernel_derivative(kernel_derivative(beta), x)
            assert abs(exact - _fd(tuple(parent), x, j)) <= FD_TOL * max(1.0, abs(exact))


def test_second_derivative_central_difference():
    x = np.array([0.6, -0.4, 0.9])
    h = 1e-4
    e = np.array([h, 0, 0])
    fd = (fundamental_solution(x + e) - 2 * fundamental_solution(x) + fundamental_solution(x - e)) / h ** 2
    assert eval_kernel_derivative(kernel_derivative((2, 0, 0)), x) == pytest.approx(fd, abs=1e-6)


def test_hand_values():
    assert eval_kernel_derivative(kernel_derivative((1, 0, 0)), [1.0, 0, 0]) == pytest.approx(1 / (4 * math.pi))
    assert eval_kernel_derivative(kernel_derivative((0, 0, 0)), [0, 0, 1.0]) == pytest.approx(-1 / (4 * math.pi))
    np.testing.assert_allclose(grad_kernel_derivative(kernel_derivative((0, 0, 0)), [0, 0, 1.0]),
                               [0, 0, 1 / (4 * math.pi)], atol=1e-16)
    assert unit_sphere_measure(6) == pytest.approx(math.pi ** 3, rel=1e-14)
    assert fundamental_solution([1.0, 0, 0, 0], d=4) == pytest.approx(-1 / (4 * math.pi ** 2), rel=1e-14)


def test_mixed_partials_commute_exactly():
    # numerator recursion e1 then e2 versus e2 then e1, compared as polynomials
    from capax.kernels import numerator_step

    base = kernel_derivative((0, 0, 0)).numerator
    a = numerator_step(numerator_step(base, 0, 0, 3), 1, 1, 3)
    b = numerator_step(numerator_step(base, 1, 0, 3), 0, 1, 3)
    assert a.to_terms() == b.to_terms()
    assert a.to_terms() == kernel_derivative((1, 1, 0)).numerator.to_terms()


def test_derivatives_are_harmonic(rng):
    x = rng.normal(size=(5, 3)) + 2.0
    for beta in multi_indices_upto(4):
        lap = 0.0
        for j in range(3):
            b = list(beta)
            b[j] += 2
            lap = lap + eval_kernel_derivative(kernel_derivative(tuple(b)), x)
        assert np.abs(lap).max() <= 1e-8


@settings(max_examples=30, deadline=None)
@given(st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3)), st.floats(0.3, 3.0))
def test_homogeneity(beta, t):
    # D^beta S is homogeneous of degree 2 - d - |beta|
    x = np.array([0.4, -0.5, 0.77])
    kd = kernel_derivative(beta)
    lhs = eval_kernel_derivative(kd, t * x)
    rhs = t ** (-1 - sum(beta)) * eval_kernel_derivative(kd, x)
    assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-14)


def test_derivative_table_matches_single_evaluations(rng):
    pts = rng.normal(size=(6, 3)) + 1.5
    tab = derivative_table(pts, 5)
    for beta in multi_indices_upto(5):
        np.testing.assert_allclose(tab[beta], eval_kernel_derivative(kernel_derivative(beta), pts), rtol=1e-12)


def test_max_order_guard():
    with pytest.raises(ValueError):
        kernel_derivative((get_max_order() + 1, 0, 0))


def test_threaded_memo_is_consistent():
    out = []

    def work():
        out.append(kernel_derivative((3, 2, 1)).numerator.to_terms())

    threads = [threading.Thread(target=work) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(o == out[0] for o in out)
