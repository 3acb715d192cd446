"""Limiting processes: the interacting branching diffusion and the drifted Brownian motion.

The diffusion

    dX(i) = sum_j a(i,j) (X(j) - X(i)) dt + (alpha + sigma_e2) X(i) dt
            + sqrt(sigma_b2 X(i)) dW(i) + sqrt(2 sigma_e2) X(i) dW'

is integrated with explicit Euler-Maruyama and clamping at zero after every
step.  The square-root coefficient is not Lipschitz at 0, so the scheme has an
O(dt) bias near the boundary; the number of steps that produced a negative
component before clamping is reported alongside the ensemble.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import rng
from .errors import InvalidParameter, StepTooLarge
from .lattice import MigrationKernel
from .simulate import Ensemble, check_grid, map_paths


@dataclass(frozen=True)
class SdeSpec:
    kernel: MigrationKernel
    alpha: float
    sigma_b2: float
    sigma_e2: float

    def __post_init__(self):
        if self.sigma_b2 < 0 or self.sigma_e2 < 0:
            raise InvalidParameter("sigma_b2 and sigma_e2 must be non-negative")

    def to_dict(self) -> dict:
        return {"kernel": self.kernel.to_dict(), "alpha": self.alpha,
                "sigma_b2": self.sigma_b2, "sigma_e2": self.sigma_e2}


def drift(spec: SdeSpec, x) -> np.ndarray:
    """``sum_j a(i,j)(x_j - x_i) + (alpha + sigma_e2) x_i``; demes on the last axis."""
    x = np.asarray(x, dtype=float)
    a = spec.kernel.rates
    return x @ a.T - a.sum(axis=1) * x + (spec.alpha + spec.sigma_e2) * x


def cross_covariance_rate(spec: SdeSpec, x) -> np.ndarray:
    """Instantaneous covariance of the noise: ``2 sigma_e2 x x^T + diag(sigma_b2 x)``."""
    x = np.asarray(x, dtype=float)
    return 2.0 * spec.sigma_e2 * np.outer(x, x) + np.diag(spec.sigma_b2 * x)


@njit(cache=True, nogil=True)
def _em_path(x0, rates, rowsum, growth, sb2, se2, dt, n_steps, record, g_dem, g_com):
    D = x0.shape[0]
    G = record.shape[0]
    out = np.zeros((G, D))
    x = x0.copy()
    xn = np.empty(D)
    sq = math.sqrt(dt)
    ce = math.sqrt(2.0 * se2)
    negatives = 0
    gi = 0
    while gi < G and record[gi] == 0:
        out[gi] = x
        gi += 1
    for step in range(1, n_steps + 1):
        dwc = g_com.standard_normal() * sq
        neg = False
        for i in range(D):
            mig = 0.0
            for j in range(D):
                mig += rates[i, j] * x[j]
            d = mig - rowsum[i] * x[i] + growth * x[i]
            xi = x[i] if x[i] > 0.0 else 0.0
            v = x[i] + d * dt + math.sqrt(sb2 * xi) * g_dem.standard_normal() * sq + ce * x[i] * dwc
            if v < 0.0:
                neg = True
                v = 0.0
            xn[i] = v
        if neg:
            negatives += 1
        for i in range(D):
            x[i] = xn[i]
        while gi < G and record[gi] == step:
            out[gi] = x
            gi += 1
    return out, negatives


def euler_maruyama(spec: SdeSpec, x0, horizon: float, dt: float, n_paths: int, seed: int,
                   grid=None, workers: int | None = None) -> Ensemble:
    """Euler-Maruyama ensemble; grid times are snapped to the nearest step."""
    if not dt > 0:
        raise InvalidParameter(f"dt must be positive, got {dt}")
    if dt > horizon:
        raise StepTooLarge(f"dt={dt} exceeds horizon={horizon}")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (spec.kernel.size,):
        raise InvalidParameter(f"x0 has {x0.shape[0]} demes, kernel has {spec.kernel.size}")
    if np.any(x0 < 0):
        raise InvalidParameter("x0 must be non-negative")
    n_steps = int(round(horizon / dt))
    grid = check_grid(np.linspace(0.0, horizon, 11) if grid is None else grid, horizon)
    record = np.rint(grid / dt).astype(np.int64)
    if np.any(np.diff(record) <= 0):
        raise InvalidParameter("grid is finer than dt")
    seeds = rng.path_seeds(seed, n_paths)
    a = spec.kernel.rates
    rowsum = a.sum(axis=1)
    growth = spec.alpha + spec.sigma_e2

    def one(i):
        s = int(seeds[i])
        return _em_path(x0, a, rowsum, growth, float(spec.sigma_b2), float(spec.sigma_e2), float(dt),
                        n_steps, record, rng.stream(s, rng.NOISE), rng.stream(s, rng.COMMON_NOISE))

    res = map_paths(one, n_paths, workers)
    values = np.stack([r[0] for r in res]) if res else np.zeros((0, len(grid), spec.kernel.size))
    return Ensemble(
        kind="sde", times=record * dt, values=values, demes=spec.kernel.demes, seed=int(seed),
        path_seeds=seeds,
        meta={"horizon": float(horizon), "dt": float(dt), "spec": spec.to_dict(),
              "negative_steps": int(sum(r[1] for r in res))},
    )


def walker_limit_sample(a: float, sigma: float, times, n_paths: int, seed: int,
                        workers: int | None = None) -> Ensemble:
    """Exact samples of ``a t + sigma W_t`` at ``times`` (independent Gaussian increments)."""
    if sigma < 0:
        raise InvalidParameter("sigma must be non-negative")
    t = np.asarray(times, dtype=float)
    if t.size and (t[0] < 0 or np.any(np.diff(t) <= 0)):
        raise InvalidParameter("times must be non-negative and strictly increasing")
    dts = np.diff(np.concatenate(([0.0], t)))
    seeds = rng.path_seeds(seed, n_paths)

    def one(i):
        z = rng.stream(int(seeds[i]), rng.NOISE).standard_normal(t.size)
        return np.cumsum(a * dts + sigma * np.sqrt(dts) * z)

    res = map_paths(one, n_paths, workers)
    values = np.stack(res)[:, :, None] if res else np.zeros((0, t.size, 1))
    return Ensemble(kind="bm", times=t, values=values, demes=(0,), seed=int(seed), path_seeds=seeds,
                    meta={"a": float(a), "sigma": float(sigma),
                          "horizon": float(t[-1]) if t.size else 0.0})


def quadratic_variation_slope(spec: SdeSpec, x0, dt: float, n_steps: int, n_paths: int, seed: int) -> tuple[float, float]:
    """Regress realised one-step noise outer products on ``cross_covariance_rate * dt``.

    Returns (slope, standard error).  Uses every step of a short calibration run.
    """
    horizon = dt * n_steps
    ens = euler_maruyama(spec, x0, horizon, dt, n_paths, seed, grid=np.arange(n_steps + 1) * dt)
    X = ens.values
    prev, nxt = X[:, :-1, :], X[:, 1:, :]
    noise = nxt - prev - drift(spec, prev) * dt
    outer = noise[..., :, None] * noise[..., None, :]
    pred = np.stack([cross_covariance_rate(spec, x) for x in prev.reshape(-1, X.shape[2])]) * dt
    y = outer.reshape(-1)
    xp = pred.reshape(-1)
    slope = float(xp @ y / (xp @ xp))
    resid = y - slope * xp
    se = float(math.sqrt(np.sum(xp**2 * resid**2)) / (xp @ xp))
    return slope, se
