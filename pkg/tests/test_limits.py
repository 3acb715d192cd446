import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochavg.errors import InvalidParameter, StepTooLarge
from stochavg.lattice import complete, cycle, single
from stochavg.limits import (
    SdeSpec,
    cross_covariance_rate,
    drift,
    euler_maruyama,
    quadratic_variation_slope,
    walker_limit_sample,
)


def se_of_var(x):
    c = x - x.mean()
    return math.sqrt((np.mean(c**4) - c.var() ** 2) / x.size)


def test_drift_examples():
    assert np.all(drift(SdeSpec(cycle(3), 0.5, 1.0, 0.09), np.zeros(3)) == 0)
    assert drift(SdeSpec(single(), 0.5, 1.0, 0.09), [2.0])[0] == pytest.approx(1.18, abs=1e-15)
    assert np.allclose(drift(SdeSpec(complete(2, 1.0), 0.0, 1.0, 0.0), [1.0, 3.0]), [2.0, -2.0], atol=0)


def test_cross_covariance_examples():
    k = complete(2, 1.0)
    x = np.array([1.0, 2.0])
    assert np.array_equal(cross_covariance_rate(SdeSpec(k, 0, 0.7, 0.0), x), np.diag(0.7 * x))
    assert np.array_equal(cross_covariance_rate(SdeSpec(k, 0, 0.7, 0.3), np.zeros(2)), np.zeros((2, 2)))
    assert np.array_equal(cross_covariance_rate(SdeSpec(k, 0, 0.0, 0.5), x), [[1, 2], [2, 4]])


def test_negative_variances_rejected():
    with pytest.raises(InvalidParameter):
        SdeSpec(single(), 0.0, -1.0, 0.0)


def test_noiseless_reduces_to_explicit_euler():
    spec = SdeSpec(single(), 0.5, 0.0, 0.0)
    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        ens = euler_maruyama(spec, [1.0], 1.0, dt, 2, seed=1, grid=[1.0])
        assert ens.values[0, 0, 0] == ens.values[1, 0, 0]
        assert ens.values[0, 0, 0] == pytest.approx((1 + 0.5 * dt) ** round(1 / dt), rel=1e-12)
        errs.append(abs(ens.values[0, 0, 0] - math.exp(0.5)))
    assert 0.45 < errs[1] / errs[0] < 0.55 and 0.45 < errs[2] / errs[1] < 0.55


def test_mean_follows_linear_ode():
    spec = SdeSpec(single(), 0.5, 0.91, 0.09)
    ens = euler_maruyama(spec, [1.0], 1.0, 1e-3, 10_000, seed=3, grid=[1.0])
    x = ens.values[:, 0, 0]
    assert abs(x.mean() - math.exp(0.59)) <= 3 * x.std(ddof=1) / math.sqrt(x.size)


def test_zero_start_stays_zero():
    spec = SdeSpec(cycle(3), 0.5, 1.0, 0.09)
    ens = euler_maruyama(spec, np.zeros(3), 1.0, 1e-2, 20, seed=4)
    assert np.all(ens.values == 0) and ens.meta["negative_steps"] == 0


def test_step_checks():
    spec = SdeSpec(single(), 0.5, 1.0, 0.0)
    with pytest.raises(StepTooLarge):
        euler_maruyama(spec, [1.0], 0.1, 0.5, 2, seed=1)
    with pytest.raises(InvalidParameter):
        euler_maruyama(spec, [1.0], 1.0, 0.0, 2, seed=1)
    with pytest.raises(InvalidParameter):
        euler_maruyama(spec, [-1.0], 1.0, 0.1, 2, seed=1)
    with pytest.raises(InvalidParameter):
        euler_maruyama(spec, [1.0, 1.0], 1.0, 0.1, 2, seed=1)


def test_paths_nonnegative_and_negatives_counted():
    spec = SdeSpec(complete(2, 1.0), -1.0, 2.0, 0.2)
    ens = euler_maruyama(spec, [0.05, 0.05], 2.0, 1e-2, 200, seed=5)
    assert np.all(ens.values >= 0)
    assert ens.meta["negative_steps"] > 0


def test_workers_do_not_change_results():
    spec = SdeSpec(complete(2, 1.0), 0.5, 0.91, 0.09)
    a = euler_maruyama(spec, [1.0, 1.0], 1.0, 1e-2, 30, seed=6, workers=1)
    b = euler_maruyama(spec, [1.0, 1.0], 1.0, 1e-2, 30, seed=6, workers=3)
    assert np.array_equal(a.values, b.values)


def test_quadratic_variation_slope():
    spec = SdeSpec(complete(2, 1.0), 0.5, 0.91, 0.09)
    slope, se = quadratic_variation_slope(spec, [1.0, 2.0], 1e-3, 50, 400, seed=7)
    assert abs(slope - 1) < 0.05
    assert se < 0.05


def test_walker_limit_examples():
    line = walker_limit_sample(1.5, 0.0, [0.5, 1.0, 2.0], 3, seed=1)
    assert np.allclose(line.values[:, :, 0], [0.75, 1.5, 3.0], rtol=0, atol=1e-15)

    std = walker_limit_sample(0.0, 1.0, [1.0], 100_000, seed=2).values[:, 0, 0]
    assert abs(std.var(ddof=1) - 1) <= 3 * se_of_var(std)

    x = walker_limit_sample(1.0, 2.0, [1.0, 2.0], 20_000, seed=3).values[:, 1, 0]
    assert abs(x.mean() - 2) <= 3 * x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.var(ddof=1) - 8) <= 3 * se_of_var(x)


def test_walker_limit_rejects_bad_times():
    with pytest.raises(InvalidParameter):
        walker_limit_sample(0, 1, [1.0, 0.5], 2, seed=1)
    with pytest.raises(InvalidParameter):
        walker_limit_sample(0, -1, [1.0], 2, seed=1)


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2), st.floats(0, 2), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_em_paths_stay_nonnegative(alpha, sb2, se2, seed):
    spec = SdeSpec(complete(2, 1.0), alpha, sb2, se2)
    ens = euler_maruyama(spec, [0.3, 1.0], 1.0, 0.05, 5, seed=seed)
    assert np.all(ens.values >= 0)
    assert np.all(np.isfinite(ens.values))
