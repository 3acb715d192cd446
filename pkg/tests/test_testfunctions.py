import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from stochavg.testfunctions import LIBRARY, bump, constant, derivative_errors, gaussian, monomial, polynomial

point = arrays(np.float64, 3, elements=st.floats(-2.5, 2.5))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(sorted(LIBRARY)), point)
def test_library_derivatives_match_finite_differences(name, x):
    g_err, h_err = derivative_errors(LIBRARY[name](), x)
    assert g_err < 1e-5 and h_err < 1e-5


@settings(max_examples=40, deadline=None)
@given(point, st.floats(-5, 5))
def test_inactive_coordinates_ignored(x, shift):
    f = LIBRARY["cross"]()
    y = x.copy()
    y[2] += shift
    assert f(y) == f(x)
    assert np.array_equal(f.gradient(y), f.gradient(x))
    assert np.all(f.gradient(x)[2] == 0) and np.all(f.hessian(x)[2] == 0)


def test_bump_support_and_smoothness():
    b = bump([0], 0.5, 2.0)
    assert b(np.array([0.5])) == pytest.approx(1.0)
    outside = np.array([[2.5], [-1.5], [10.0]])
    assert np.all(b(outside) == 0) and np.all(b.gradient(outside) == 0) and np.all(b.hessian(outside) == 0)
    edge = np.array([[2.5 - 1e-9], [-1.5 + 1e-12]])
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        assert np.all(np.isfinite(b.hessian(edge)))
    assert b.bound == 1.0


def test_algebra():
    x = np.array([[1.0, 2.0], [0.5, -1.0]])
    f = polynomial([(2.0, {0: 1}), (1.0, {0: 1, 1: 2})])
    assert np.allclose(f(x), 2 * x[:, 0] + x[:, 0] * x[:, 1] ** 2)
    assert np.allclose((f - f)(x), 0)
    g = gaussian([1], 0.0, 1.0)
    prod = f * g
    for p in x:
        assert max(derivative_errors(prod, p)) < 1e-6
    assert np.all(constant(3.0)(x) == 3.0)
    assert np.all(constant(3.0).gradient(x) == 0)


def test_batch_shapes():
    f = monomial({0: 1, 1: 1})
    x = np.ones((4, 5, 2))
    assert f(x).shape == (4, 5)
    assert f.gradient(x).shape == (4, 5, 2)
    assert f.hessian(x).shape == (4, 5, 2, 2)
