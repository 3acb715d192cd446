import math
import warnings

import numpy as np
import pytest
from scipy.linalg import expm

from stochavg import rng
from stochavg.env import DiscreteLaw, EnvironmentLaw, OffspringLaw, g_n, moment_report, two_point_environment
from stochavg.errors import InvalidParameter, PopulationOverflow, ValueOutOfBins
from stochavg.lattice import complete, cycle, single
from stochavg.simulate import (
    ParticleState,
    occupation_measure,
    simulate_brwre,
    simulate_brwre_ensemble,
    simulate_speed_walker,
    simulate_switching_integral,
    speed_walker_ensemble,
    sup_norm_trace,
    switching_ensemble,
    tail_probabilities,
)
from stochavg.stats import integral_variance_exact, variance_oracle

identity_env = EnvironmentLaw.constant(OffspringLaw.delta(1))


def exact_single_deme_moments(env: EnvironmentLaw, c0: int, t: float):
    """E[N_t] and E[N_t^2] for one deme from the linear ODE of (N, N^2) jointly with the environment."""
    K = len(env.atoms)
    n, lam = env.n, env.switch_rate
    w = env.weight_array()
    gap = np.array([float(a.mean_exact - 1) for a in env.atoms])
    sq = np.array([float(sum(p * (k - 1) ** 2 for k, p in zip(a.support, a.probs))) for a in env.atoms])
    redraw = lam * (np.outer(w, np.ones(K)) - np.eye(K))
    M = np.zeros((2 * K, 2 * K))
    M[:K, :K] = n * np.diag(gap) + redraw
    M[K:, K:] = 2 * n * np.diag(gap) + redraw
    M[K:, :K] = n * np.diag(sq)
    start = np.concatenate([w * c0, w * c0 * c0])
    u = expm(M * t) @ start
    return u[:K].sum(), u[K:].sum()


def test_constant_path_under_identity_offspring():
    p = simulate_brwre(cycle(3, 0.0), identity_env, np.array([5, 0, 0]), 2.0, np.linspace(0, 2, 5), seed=1)
    assert np.all(p.counts == [5, 0, 0])


def test_zero_start_is_absorbing():
    env = two_point_environment(0.5, 0.3, 10)
    p = simulate_brwre(single(), env, ParticleState.from_scaled([0.0], 10), 1.0, [0.0, 0.5, 1.0], seed=3)
    assert np.all(p.states == 0) and p.extinction_time == 0.0


def test_mass_conserved_under_pure_migration():
    ens = simulate_brwre_ensemble(cycle(4, 1.5), identity_env, np.array([3, 0, 7, 1]), 3.0,
                                  np.linspace(0, 3, 31), 20, seed=5)
    assert np.all(ens.counts.sum(axis=2) == 11)
    assert np.all(ens.event_counts[:, 0] > 0)


def test_states_on_lattice():
    env = two_point_environment(0.5, 0.3, 7)
    ens = simulate_brwre_ensemble(complete(2), env, ParticleState.from_scaled([1, 1], 7), 1.0,
                                  np.linspace(0, 1, 11), 20, seed=2)
    assert np.array_equal(ens.values, ens.counts / 7)
    assert np.array_equal(np.rint(ens.values * 7), ens.counts)
    assert np.issubdtype(ens.counts.dtype, np.integer)


def test_worker_count_does_not_change_results():
    env = two_point_environment(0.5, 0.3, 10)
    args = (complete(2), env, ParticleState.from_scaled([1, 1], 10), 1.0, np.linspace(0, 1, 6), 40)
    a = simulate_brwre_ensemble(*args, seed=9, workers=1)
    b = simulate_brwre_ensemble(*args, seed=9, workers=4)
    assert np.array_equal(a.counts, b.counts)
    assert np.array_equal(a.event_counts, b.event_counts)


def test_path_matches_its_ensemble_member():
    env = two_point_environment(0.5, 0.3, 10)
    grid = np.linspace(0, 1, 6)
    ens = simulate_brwre_ensemble(single(), env, ParticleState.from_scaled([1], 10), 1.0, grid, 5, seed=4)
    p = simulate_brwre(single(), env, ParticleState.from_scaled([1], 10), 1.0, grid, int(ens.path_seeds[3]))
    assert np.array_equal(p.counts, ens.counts[3])


def test_overflow_raises():
    env = EnvironmentLaw.constant(OffspringLaw.delta(3), n=5)
    with pytest.raises(PopulationOverflow):
        simulate_brwre(single(), env, np.array([5]), 5.0, [5.0], seed=1, cap=1000)


def test_bad_inputs():
    env = two_point_environment(0.5, 0.3, 10)
    with pytest.raises(InvalidParameter):
        simulate_brwre(single(), env, np.array([1, 1]), 1.0, [1.0], seed=1)
    with pytest.raises(InvalidParameter):
        simulate_brwre(single(), env, np.array([1]), 1.0, [0.5, 0.2], seed=1)
    with pytest.raises(InvalidParameter):
        simulate_brwre(single(), env, ParticleState.from_scaled([1], 5), 1.0, [1.0], seed=1)


def test_deterministic_environment_mean_growth():
    n, alpha = 10, 0.5
    law = OffspringLaw.from_pairs([(0, (1 - alpha / n) / 2), (2, (1 + alpha / n) / 2)])
    env = EnvironmentLaw.constant(law, n=n)
    ens = simulate_brwre_ensemble(single(), env, ParticleState.from_scaled([1.0], n), 1.0, [1.0], 10_000,
                                  seed=11)
    x = ens.values[:, 0, 0]
    m, _ = exact_single_deme_moments(env, n, 1.0)
    assert m / n == pytest.approx(math.exp(alpha))
    assert abs(x.mean() - math.exp(alpha)) <= 3 * x.std(ddof=1) / math.sqrt(x.size)


def test_random_environment_mean_and_variance_match_moment_ode():
    n = 5
    env = two_point_environment(0.5, 0.3, n)
    c0 = 5
    ens = simulate_brwre_ensemble(single(), env, np.array([c0]), 1.0, [1.0], 20_000, seed=12)
    N = ens.counts[:, 0, 0].astype(float)
    m1, m2 = exact_single_deme_moments(env, c0, 1.0)
    var = m2 - m1 * m1
    assert abs(N.mean() - m1) <= 3.5 * N.std(ddof=1) / math.sqrt(N.size)
    c = N - N.mean()
    se_var = math.sqrt((np.mean(c**4) - c.var() ** 2) / N.size)
    assert abs(N.var(ddof=1) - var) <= 3.5 * se_var


def test_event_counts_match_thinning_estimate():
    n, alpha, T = 10, 0.5, 1.0
    law = OffspringLaw.from_pairs([(0, (1 - alpha / n) / 2), (2, (1 + alpha / n) / 2)])
    env = EnvironmentLaw.constant(law, n=n)
    ens = simulate_brwre_ensemble(single(), env, np.array([n]), T, [T], 2000, seed=13)
    br = ens.event_counts[:, 1]
    expected = n * n * (math.exp(alpha * T) - 1) / alpha
    assert abs(br.mean() - expected) <= 5 * br.std(ddof=1) / math.sqrt(br.size)
    sw = ens.event_counts[:, 2]
    assert abs(sw.mean() - n * n * T) <= 5 * math.sqrt(n * n * T / sw.size)


def test_beta_slows_the_environment_clock():
    env = two_point_environment(0.5, 0.3, 10, beta=2)
    ens = simulate_brwre_ensemble(single(), env, np.array([10]), 1.0, [1.0], 500, seed=14)
    assert abs(ens.event_counts[:, 2].mean() - 25.0) < 5 * math.sqrt(25.0 / 500)


# ---------------------------------------------------------------- walker


def test_walker_constant_speed():
    law = DiscreteLaw((0.25,), (1.0,))
    p = simulate_speed_walker(law, 8, 2.0, [0.5, 1.0, 2.0], seed=1)
    assert np.allclose(p.states[:, 0], 8 * 0.25 * np.array([0.5, 1.0, 2.0]), rtol=0, atol=1e-12)
    zero = simulate_speed_walker(DiscreteLaw((0.0,), (1.0,)), 8, 1.0, [1.0], seed=1)
    assert zero.states[0, 0] == 0.0


def test_walker_variance_matches_closed_forms():
    n = 30
    law = DiscreteLaw((-1.0, 1.0), (0.5, 0.5))
    ens = speed_walker_ensemble(law, n, 1.0, [1.0], 10_000, seed=21)
    x = ens.values[:, 0, 0]
    c = x - x.mean()
    se = math.sqrt((np.mean(c**4) - c.var() ** 2) / x.size)
    for target in (n * n * variance_oracle(n * n, 1.0, 1.0), n * n * integral_variance_exact(n * n, 1.0, 1.0)):
        assert abs(x.var(ddof=1) - target) <= 3 * se


def test_walker_value_at_switch_times_is_telescoping_sum():
    law = DiscreteLaw((-0.7, 0.2, 1.3), (0.2, 0.5, 0.3))
    _, _, times, idx = simulate_switching_integral(law, 50.0, 3.0, 1.0, [1.0], seed=8)
    grid = times[1:]
    X, _, times2, idx2 = simulate_switching_integral(law, 50.0, 3.0, 1.0, grid, seed=8)
    assert np.array_equal(times, times2) and np.array_equal(idx, idx2)
    vals = np.asarray(law.values)[idx]
    for k in range(len(grid)):
        ref = 3.0 * math.fsum(np.diff(times[: k + 2]) * vals[: k + 1])
        assert X[k] == pytest.approx(ref, abs=1e-12)


def test_squared_segments_short_horizon():
    law = DiscreteLaw((-1.0, 1.0), (0.5, 0.5))
    _, sq, times, _ = simulate_switching_integral(law, 0.01, 1.0, 0.1, [0.1], seed=2)
    if len(times) == 1:
        assert sq[0] == pytest.approx(0.01)


def test_switching_ensemble_determinism():
    law = DiscreteLaw((-1.0, 1.0), (0.5, 0.5))
    a = switching_ensemble(law, 3.0, 1.0, 1.0, [0.5, 1.0], 300, seed=5, workers=1)
    b = switching_ensemble(law, 3.0, 1.0, 1.0, [0.5, 1.0], 300, seed=5, workers=3)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.sq_segments, b.sq_segments)


# ---------------------------------------------------------------- occupation, norms


def test_occupation_constant_environment():
    env = EnvironmentLaw.constant(OffspringLaw.from_pairs([(0, 0.4), (2, 0.6)]), n=5)
    p = simulate_brwre(single(), env, np.array([5]), 1.0, [1.0], seed=3)
    occ = occupation_measure(p, g_n, [0, 0.25, 0.5, 1.0], [0, 0.02, 0.05, 1])
    assert np.all((occ.mass > 0).sum(axis=1) == 1)
    assert np.allclose(occ.totals(), [0.25, 0.25, 0.5], atol=1e-12)


def test_occupation_mean_matches_moment():
    n, alpha, s = 20, 0.5, 0.3
    env = two_point_environment(alpha, s, n)
    ens = simulate_brwre_ensemble(single(), env, np.array([n]), 1.0, [1.0], 1000, seed=4, keep_traces=True)
    means = np.array([occupation_measure(ens.path(i), g_n, [0, 1], [0, 0.5]).mean_value()
                      for i in range(ens.n_paths)])
    target = s * s + alpha**2 / n**2
    assert target == pytest.approx(moment_report(env, 4).var_m + (moment_report(env, 4).drift_n / n) ** 2)
    assert abs(means.mean() - target) <= 3 * means.std(ddof=1) / math.sqrt(means.size)
    occ = occupation_measure(ens.path(0), g_n, np.linspace(0, 1, 6), [0, 0.5])
    assert np.allclose(occ.totals(), 0.2, atol=1e-9)


def test_occupation_empty_and_overflow():
    env = two_point_environment(0.5, 0.3, 10)
    p = simulate_brwre(single(), env, np.array([10]), 1.0, [1.0], seed=6)
    assert occupation_measure(p, g_n, [0.5], [0, 1]).mass.size == 0
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        occ = occupation_measure(p, g_n, [0, 1], [0.5, 1.0])
    assert any(issubclass(w.category, ValueOutOfBins) for w in rec)
    assert occ.overflow[0] == pytest.approx(1.0)


def test_sup_norm_trace_and_tails():
    env = two_point_environment(0.5, 0.3, 10)
    z = simulate_brwre(single(), env, np.array([0]), 1.0, [0.5, 1.0], seed=1)
    assert [v for _, v in sup_norm_trace(z, single())] == [0.0, 0.0]
    p = simulate_brwre(single(2.0), env, np.array([10]), 1.0, [0.5, 1.0], seed=1)
    assert np.allclose([v for _, v in sup_norm_trace(p, single(2.0))], 2.0 * p.states[:, 0])
    sub = two_point_environment(-1.0, 0.0, 10)
    ens = simulate_brwre_ensemble(single(), sub, np.array([10]), 2.0, np.linspace(0, 2, 21), 500, seed=7)
    tails = tail_probabilities(ens, single(), [0.5, 1.0, 1.5, 2.0, 3.0])
    assert np.all(np.diff(tails) <= 0)


def test_path_streams_are_distinct_per_channel():
    a = rng.stream(5, rng.ENV).random(4)
    b = rng.stream(5, rng.BRANCHING).random(4)
    assert not np.array_equal(a, b)
    assert rng.path_seed(1, 0) != rng.path_seed(1, 1)
