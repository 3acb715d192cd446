"""Numerical estimates of the averaging-theorem hypotheses along a sequence of scales.

With ``f_n = f`` restricted to the 1/n lattice and ``h_n = L1 f_n`` the report
estimates, for each n:

    (i)   E[ sup_{s<=t} |h_n(X_s, Z_s)| / n ]
    (ii)  sup_x | A1 f(x) - int (n L1 f + L0 f)(x, y) pi_n(dy) |
    (iii) E int_0^t | A2 f(X_s, g_n(Z_s)) - (L1 h_n + L0 h_n / n)(X_s, Z_s) | ds
    (iv)  E int_0^t | A2 f(X_s, g_n(Z_s)) |^(p/2) ds
    (v)   the Poisson-equation residual of h_n, which is zero up to rounding

Suprema over the state space are taken over a configured compact grid snapped
onto the 1/n lattice together with every state the simulated paths visit, so
(ii) is a lower bound for the true supremum.  Path suprema and time integrals
use the sample grid (trapezoidal rule).
"""
from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np

from . import rng
from .env import EnvironmentLaw, g_n
from .generators import A1, A2, GeneratorTriple, apply_L0, apply_L1, iterated_L1, poisson_identity_residual
from .lattice import MigrationKernel
from .limits import SdeSpec
from .simulate import ParticleState, simulate_brwre_ensemble
from .testfunctions import TestFunction

QUANTITIES = ("i", "ii", "iii", "iv", "v")


def default_state_grid(n_demes: int, upper: float = 3.0) -> np.ndarray:
    pts = 301 if n_demes == 1 else max(5, int(round(1681 ** (1.0 / n_demes))))
    axis = np.linspace(0.0, upper, pts)
    return np.array(list(itertools.product(axis, repeat=n_demes)))


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    if v.size < 2:
        return float(np.mean(v)) if v.size else math.nan, math.nan
    return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(v.size))


def _loglog_slope(ns, ys) -> float:
    ns, ys = np.asarray(ns, float), np.asarray(ys, float)
    ok = ys > 0
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(ns[ok]), np.log(ys[ok]), 1)[0])


def averaging_condition_report(f: TestFunction, kernel: MigrationKernel,
                               env_family: Callable[[int], EnvironmentLaw], n_list: Sequence[int],
                               horizon: float, paths: int, seed: int, limit: SdeSpec,
                               x0=None, state_grid=None, grid_points: int = 101, p: float = 4.0,
                               workers: int | None = None) -> dict:
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")
    D = kernel.size
    x0 = np.ones(D) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    sgrid = default_state_grid(D) if state_grid is None else np.asarray(state_grid, dtype=float).reshape(-1, D)
    times = np.linspace(0.0, horizon, grid_points)
    records = []
    per_n = {}
    for n in n_list:
        env = env_family(n)
        tri = GeneratorTriple(kernel, env)
        ens = simulate_brwre_ensemble(kernel, env, ParticleState.from_scaled(x0, n), horizon, times,
                                      paths, rng.path_seed(seed, n), workers=workers)
        X, Z = ens.values, ens.env_at_grid
        h = np.zeros(Z.shape)
        gap3 = np.zeros(Z.shape)
        a2 = np.zeros(Z.shape)
        for k, atom in enumerate(env.atoms):
            m = Z == k
            if not np.any(m):
                continue
            xs = X[m]
            h[m] = apply_L1(f, xs, atom, n)
            l1h = iterated_L1(f, xs, atom, n)
            l0h = apply_L0(lambda y: apply_L1(f, y, atom, n), xs, kernel, n)
            a2v = A2(f, xs, g_n(atom))
            gap3[m] = np.abs(a2v - (l1h + l0h / n))
            a2[m] = a2v
        q_i = _mean_se(np.max(np.abs(h), axis=1) / n)
        q_iii = _mean_se(np.trapezoid(gap3, times, axis=1))
        q_iv = _mean_se(np.trapezoid(np.abs(a2) ** (p / 2), times, axis=1))

        states = np.unique(np.concatenate([np.rint(sgrid * n) / n, X.reshape(-1, D)]), axis=0)
        q_ii = float(np.max(np.abs(A1(f, states, limit) - tri.averaged(f, states))))
        abs_p = math.fsum(float(w) * abs(float(a.mean_exact - 1)) ** p for a, w in zip(env.atoms, env.weights))
        bound_iv = horizon * float(np.max(np.abs(A2(f, states, 1.0)) ** (p / 2))) * abs_p
        sample = states[:: max(1, len(states) // 200)]
        q_v = max(poisson_identity_residual(f, sample, a, env, n) for a in env.atoms)

        est = {"i": q_i, "ii": (q_ii, 0.0), "iii": q_iii, "iv": q_iv, "v": (q_v, 0.0)}
        per_n[n] = {**est, "iv_bound": bound_iv}
        for q in QUANTITIES:
            records.append({"n": n, "quantity": q, "estimate": est[q][0], "se": est[q][1],
                            "grid_size": int(len(states)) if q in ("ii", "v") else int(paths * grid_points)})

    monotone = {}
    slopes = {}
    for q in ("i", "ii", "iii"):
        e = [per_n[n][q][0] for n in n_list]
        s = [per_n[n][q][1] for n in n_list]
        monotone[q] = all(
            e[k + 1] <= e[k] + 2.0 * math.hypot(s[k], s[k + 1]) for k in range(len(n_list) - 1)
        )
        slopes[q] = _loglog_slope(n_list, e)
    iv = [per_n[n]["iv"] for n in n_list]
    bounds = [per_n[n]["iv_bound"] for n in n_list]
    bounded = all(e <= b + 2.0 * s for (e, s), b in zip(iv, bounds)) and math.isfinite(max(bounds))
    return {
        "records": records,
        "slopes": slopes,
        "monotone": monotone,
        "iv_bounds": dict(zip(n_list, bounds)),
        "iv_bounded": bounded,
        "poisson_max": max(per_n[n]["v"][0] for n in n_list),
        "limit": limit.to_dict(),
        "n_list": n_list,
        "paths": paths,
        "horizon": horizon,
        "seed": seed,
    }
