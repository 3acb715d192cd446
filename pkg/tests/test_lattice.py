import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from stochavg.errors import NonpositiveWeight, UnbalancedKernel
from stochavg.lattice import MigrationKernel, complete, cycle, ell_gamma_norm, single, validate_kernel


def test_single_deme():
    k = validate_kernel([])
    assert (k.mu, k.c, k.size) == (0.0, 0.0, 1)


def test_symmetric_three_cycle():
    k = cycle(3, 1.0)
    assert k.mu == 2.0 and k.c == 2.0


def test_unbalanced_rejected():
    with pytest.raises(UnbalancedKernel):
        validate_kernel([[0, 2], [1, 0]])


def test_weight_and_shape_checks():
    with pytest.raises(NonpositiveWeight):
        validate_kernel([[0, 1], [1, 0]], gamma=[1.0, 0.0])
    with pytest.raises(ValueError):
        validate_kernel([[0, 1, 0], [1, 0, 0]])
    with pytest.raises(ValueError):
        validate_kernel([[1, 0], [0, 1]])


def test_norm_examples():
    assert ell_gamma_norm(np.zeros(3), cycle(3)) == 0
    assert ell_gamma_norm([1, -2, 3], cycle(3)) == 6
    k = validate_kernel(np.zeros((3, 3)), gamma=[0.5, 0.25, 0.25])
    assert ell_gamma_norm([4, 4, 4], k) == 4


def test_kernel_round_trip():
    k = validate_kernel([[0, 1, 2], [2, 0, 1], [1, 2, 0]], gamma=[1, 2, 3])
    assert MigrationKernel.from_dict(k.to_dict()) == k


def test_two_cycle_rates_add():
    assert cycle(2, 1.0).rates[0, 1] == 2.0
    assert complete(2, 1.0).rates[0, 1] == 1.0


vec = arrays(np.float64, 4, elements=st.floats(-1e3, 1e3))
pos = arrays(np.float64, 4, elements=st.floats(0.1, 10))


@given(vec, vec, st.floats(-50, 50), pos)
def test_norm_axioms(x, y, lam, gamma):
    k = validate_kernel(np.zeros((4, 4)), gamma=gamma)
    assert ell_gamma_norm(x + y, k) <= ell_gamma_norm(x, k) + ell_gamma_norm(y, k) + 1e-9
    assert ell_gamma_norm(lam * x, k) == pytest.approx(abs(lam) * ell_gamma_norm(x, k), rel=1e-12, abs=1e-9)


def _random_balanced(seed):
    # sums of permutation matrices are doubly balanced
    g = np.random.default_rng(seed)
    a = np.zeros((4, 4))
    for _ in range(3):
        perm = g.permutation(4)
        while np.any(perm == np.arange(4)):
            perm = g.permutation(4)
        a[perm, np.arange(4)] += g.uniform(0.1, 2.0)
    return a


@given(st.integers(0, 10**6), pos, arrays(np.float64, 4, elements=st.floats(0, 100)))
def test_c_is_minimal_and_bounds_the_operator(seed, gamma, x):
    k = validate_kernel(_random_balanced(seed), gamma=gamma)
    lhs = gamma @ (k.rates @ x)
    assert lhs <= k.c * (gamma @ x) * (1 + 1e-12) + 1e-9
    ratios = (gamma @ k.rates) / gamma
    smaller = k.c * (1 - 1e-6)
    assert np.any(ratios > smaller)
    assert np.all(ratios <= k.c * (1 + 1e-12))


def test_single_builder():
    assert single().size == 1
