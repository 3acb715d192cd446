"""Closed-form oracles, ensemble statistics and verdicts.

Statistical checks return a :class:`TestVerdict`.  All sample statistics are
computed from the assembled ensemble array in path order, so they do not
depend on how many workers produced it.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import GridMismatch, InsufficientSamples, InvalidParameter
from .simulate import Ensemble
from .testfunctions import TestFunction

KS_MIN_SAMPLES = 100


@dataclass
class TestVerdict:
    __test__ = False

    name: str
    statistic: float
    passed: bool
    p_value: float | None = None
    z_score: float | None = None
    threshold: float | None = None
    seed: int | None = None
    sizes: tuple = ()
    flags: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sizes"] = list(self.sizes)
        return d


# --------------------------------------------------------------------------
# closed forms


def _variance_factor(u: float) -> float:
    """``[2u(1+e^-u) - 4 + (u^2+4)e^-u] / u^2`` for u = rho * t."""
    if u < 0.5:
        # power series sum_{k>=2} (-1)^k (k^2 - 3k + 4)/k! u^(k-2); the closed form cancels badly here
        total, term_fact, k = 0.0, 2.0, 2
        while k < 40:
            total += (-1) ** k * (k * k - 3 * k + 4) / term_fact * u ** (k - 2)
            k += 1
            term_fact *= k
        return total
    e = math.exp(-u)
    return (2.0 * u * (1.0 + e) - 4.0 + (u * u + 4.0) * e) / (u * u)


def _check_oracle_args(rho, t, var_y):
    if not rho > 0:
        raise InvalidParameter("rho must be positive")
    if t < 0 or var_y < 0:
        raise InvalidParameter("t and var_y must be non-negative")


def variance_oracle(rho: float, t: float, var_y: float) -> float:
    """``var_y [2t/rho (1+e^-rho t) - 4/rho^2 + (t^2 + 4/rho^2) e^-rho t]``.

    Offered as the variance of ``int_0^t Y_{xi_r} dr`` for a rate-rho Poisson
    clock xi and i.i.d. Y.  It agrees with :func:`integral_variance_exact` as
    rho t -> 0 and rho t -> infinity but undershoots it in between by
    ``2 var_y P(Poisson(rho t) >= 3) / rho^2``.
    """
    _check_oracle_args(rho, t, var_y)
    if t == 0 or var_y == 0:
        return 0.0
    return var_y * t * t * _variance_factor(rho * t)


def integral_variance_exact(rho: float, t: float, var_y: float) -> float:
    """``var_y E[sum_k (t^T_{k+1} - t^T_k)^2] = var_y (2t/rho - 2/rho^2 + 2 e^-rho t / rho^2)``.

    Equivalently ``2 var_y int_0^t (t - u) e^{-rho u} du``, since Y at two
    times is shared exactly when no clock ring separates them.
    """
    _check_oracle_args(rho, t, var_y)
    if t == 0 or var_y == 0:
        return 0.0
    u = rho * t
    if u < 0.5:
        # 2 sum_j (-u)^j / (j+2)!; the closed form cancels for small u
        factor = 2.0 * math.fsum((-u) ** j / math.factorial(j + 2) for j in range(30))
    else:
        factor = 2.0 * (u + math.expm1(-u)) / (u * u)
    return var_y * t * t * factor


def max_bound(alpha: float, rho: float, p: float, pth_moment: float) -> float:
    """Upper bound ``2 alpha + (1 + rho) E[X^p] alpha^(1-p) / (p - 1)`` on E[max of 1+M draws]."""
    if not alpha > 0 or not p > 1 or rho < 0 or pth_moment < 0:
        raise InvalidParameter("need alpha > 0, p > 1, rho >= 0, pth_moment >= 0")
    return 2.0 * alpha + (1.0 + rho) * pth_moment * alpha ** (1.0 - p) / (p - 1.0)


def empirical_max_mean(sampler: Callable[[np.random.Generator, int], np.ndarray], rho: float,
                       replicates: int, gen: np.random.Generator) -> tuple[float, float]:
    """Mean and SE of ``max(X_0, ..., X_M)`` with M ~ Poisson(rho)."""
    m = gen.poisson(rho, size=replicates)
    draws = sampler(gen, int(np.sum(m + 1)))
    ends = np.cumsum(m + 1)
    starts = ends - (m + 1)
    maxima = np.maximum.reduceat(draws, starts)
    return float(maxima.mean()), float(maxima.std(ddof=1) / math.sqrt(replicates))


# --------------------------------------------------------------------------
# conditional variance identity


def conditional_variance_identity_check(integrals, sq_segment_sums, mean_y: float, var_y: float,
                                        t: float, z_crit: float = 3.0, seed: int | None = None) -> TestVerdict:
    """Regress squared centred integrals on ``sum_k (t^T_{k+1} - t^T_k)^2`` through the origin.

    The slope estimates Var[Y_0]; the verdict passes if it is within ``z_crit``
    (heteroscedasticity-robust) standard errors of ``var_y``.
    """
    y = (np.asarray(integrals, float) - mean_y * t) ** 2
    w = np.asarray(sq_segment_sums, float)
    if y.size < 10:
        raise InsufficientSamples(f"need at least 10 paths, got {y.size}")
    sxx = float(w @ w)
    if sxx == 0:
        raise InsufficientSamples("all squared segment sums are zero")
    slope = float(w @ y) / sxx
    resid = y - slope * w
    se = math.sqrt(float(np.sum(w * w * resid * resid))) / sxx
    if se == 0:
        z = 0.0 if slope == var_y else math.inf
    else:
        z = (slope - var_y) / se
    return TestVerdict("conditional_variance_identity", slope, abs(z) <= z_crit, z_score=z,
                       threshold=z_crit, seed=seed, sizes=(int(y.size),),
                       details={"slope": slope, "se": se, "var_y": var_y, "t": t})


def walker_conditional_check(ens: Ensemble, mean_speed: float, var_speed: float, time_index: int = -1,
                             z_crit: float = 3.0) -> TestVerdict:
    """Conditional identity on a switching or walker ensemble, undoing the walker scaling."""
    if ens.sq_segments is None:
        raise InvalidParameter("ensemble carries no switch-time segment sums")
    t = float(ens.times[time_index])
    integrals = ens.values[:, time_index, 0] / ens.meta["scale"]
    return conditional_variance_identity_check(integrals, ens.sq_segments[:, time_index], mean_speed,
                                               var_speed, t, z_crit, ens.seed)


# --------------------------------------------------------------------------
# Kolmogorov-Smirnov


def _check_sample(a, name):
    a = np.asarray(a, dtype=float).ravel()
    if a.size < KS_MIN_SAMPLES:
        raise InsufficientSamples(f"{name} has {a.size} samples; need at least {KS_MIN_SAMPLES}")
    if not np.all(np.isfinite(a)):
        raise InvalidParameter(f"{name} contains non-finite values")
    return np.sort(a)


def ks_statistic(a, b) -> float:
    a, b = np.sort(np.asarray(a, float)), np.sort(np.asarray(b, float))
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_two_sample(a, b, level: float = 0.01) -> TestVerdict:
    """Two-sample KS test with the asymptotic Kolmogorov p-value."""
    a, b = _check_sample(a, "a"), _check_sample(b, "b")
    d = ks_statistic(a, b)
    en = a.size * b.size / (a.size + b.size)
    p = float(special.kolmogorov(math.sqrt(en) * d))
    flags = [f"degenerate:{nm}" for nm, s in (("a", a), ("b", b)) if s[0] == s[-1]]
    return TestVerdict("ks_two_sample", d, p > level, p_value=min(max(p, 0.0), 1.0), threshold=level,
                       sizes=(int(a.size), int(b.size)), flags=flags)


def ks_vs_normal(a, mean: float, variance: float, level: float = 0.01) -> TestVerdict:
    """One-sample KS test against N(mean, variance)."""
    a = _check_sample(a, "a")
    if not variance > 0:
        raise InvalidParameter("reference variance must be positive")
    cdf = special.ndtr((a - mean) / math.sqrt(variance))
    n = a.size
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
    p = float(special.kolmogorov(math.sqrt(n) * d))
    flags = ["degenerate:a"] if a[0] == a[-1] else []
    return TestVerdict("ks_vs_normal", d, p > level, p_value=min(max(p, 0.0), 1.0), threshold=level,
                       sizes=(int(n),), flags=flags, details={"mean": mean, "variance": variance})


# --------------------------------------------------------------------------
# martingale residuals


def bonferroni_z(n_tests: int, z_single: float = 3.0) -> float:
    """Two-sided critical z keeping the family-wise level of a single ``z_single`` test."""
    alpha = 2.0 * special.ndtr(-z_single)
    return float(-special.ndtri(alpha / (2.0 * max(n_tests, 1))))


def martingale_residual(ens: Ensemble, f: TestFunction | Callable, generator: Callable,
                        grid_index: Sequence[int] | None = None, z_single: float = 3.0) -> TestVerdict:
    """Dynkin check that ``f(X_t) - int_0^t Af(X_s) ds`` has mean-zero increments.

    For each interval of the (sub)grid the per-path residual
    ``f(X_{t+h}) - f(X_t) - h (Af(X_t) + Af(X_{t+h})) / 2`` is averaged across
    paths.  The verdict passes if every interval is within the
    Bonferroni-corrected ``z_single`` standard errors of zero.  A Richardson
    estimate of the quadrature error (fine versus doubled spacing) is compared
    with the standard error; intervals where it exceeds one SE are flagged.
    """
    idx = np.arange(len(ens.times)) if grid_index is None else np.asarray(grid_index)
    t = ens.times[idx]
    X = ens.values[:, idx, :]
    fx = np.asarray(f(X), dtype=float)
    ax = np.asarray(generator(X), dtype=float)
    h = np.diff(t)
    trap = 0.5 * h * (ax[:, :-1] + ax[:, 1:])
    res = np.diff(fx, axis=1) - trap
    P = res.shape[0]
    if P < 2:
        raise InsufficientSamples("need at least two paths")
    mean = res.mean(axis=0)
    se = res.std(axis=0, ddof=1) / math.sqrt(P)
    z = np.where(se > 0, mean / np.where(se > 0, se, 1.0), np.where(mean == 0, 0.0, np.inf))
    zc = bonferroni_z(len(h), z_single)
    flags = []
    if len(h) >= 2:
        k = (len(h) // 2) * 2
        coarse = 0.5 * (t[2:k + 1:2] - t[0:k:2]) * (ax[:, 0:k:2] + ax[:, 2:k + 1:2])
        fine = trap[:, 0:k:2] + trap[:, 1:k:2]
        qerr = np.abs((coarse - fine).mean(axis=0)) / 3.0
        pair_se = (res[:, 0:k:2] + res[:, 1:k:2]).std(axis=0, ddof=1) / math.sqrt(P)
        if np.any(qerr > pair_se):
            flags.append("grid too coarse: quadrature error exceeds one standard error")
    worst = float(np.max(np.abs(z))) if z.size else 0.0
    return TestVerdict("martingale_residual", worst, bool(worst <= zc), z_score=worst, threshold=zc,
                       seed=ens.seed, sizes=(P, int(len(h))), flags=flags,
                       details={"means": mean.tolist(), "se": se.tolist()})


# --------------------------------------------------------------------------
# ensemble summaries


@dataclass
class EnsembleSummary:
    times: np.ndarray
    demes: tuple
    mean: np.ndarray
    var: np.ndarray
    se: np.ndarray
    n_paths: int
    cov: np.ndarray

    def rows(self) -> list[tuple]:
        return [(float(self.times[k]), self.demes[d], float(self.mean[k, d]), float(self.var[k, d]),
                 float(self.se[k, d]), self.n_paths)
                for k in range(len(self.times)) for d in range(len(self.demes))]


def _time_indices(ens: Ensemble, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return np.zeros(0, dtype=int)
    idx = np.searchsorted(ens.times, times)
    idx = np.clip(idx, 0, len(ens.times) - 1)
    if not np.allclose(ens.times[idx], times, rtol=0, atol=1e-9):
        raise GridMismatch("requested times are not on the ensemble grid")
    return idx


def ensemble_summary(ens: Ensemble, times=None) -> EnsembleSummary:
    idx = np.arange(len(ens.times)) if times is None else _time_indices(ens, times)
    X = ens.values[:, idx, :]
    P = X.shape[0]
    if P < 2:
        raise InsufficientSamples("need at least two paths for a summary")
    mean = X.mean(axis=0)
    centred = X - mean
    cov = np.einsum("ptd,pte->tde", centred, centred) / (P - 1)
    var = np.maximum(np.diagonal(cov, axis1=1, axis2=2), 0.0)
    return EnsembleSummary(ens.times[idx], ens.demes, mean, var, np.sqrt(var / P), P, cov)


def covariance_z(ens: Ensemble, time_index: int, i: int, j: int) -> tuple[float, float, float]:
    """Sample covariance of demes i, j at one time, its SE and z-score."""
    a = ens.values[:, time_index, i]
    b = ens.values[:, time_index, j]
    prod = (a - a.mean()) * (b - b.mean())
    P = prod.size
    c = float(prod.sum() / (P - 1))
    se = float(prod.std(ddof=1) / math.sqrt(P))
    return c, se, (c / se if se > 0 else math.inf)


def mean_z(samples, target: float) -> tuple[float, float, float]:
    s = np.asarray(samples, float)
    m = float(s.mean())
    se = float(s.std(ddof=1) / math.sqrt(s.size))
    return m, se, ((m - target) / se if se > 0 else (0.0 if m == target else math.inf))


def two_sample_mean_z(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    d = float(a.mean() - b.mean())
    return d / se if se > 0 else (0.0 if d == 0 else math.inf)


def compare_ensembles(A: Ensemble, B: Ensemble, tests: Sequence[str] = ("mean", "variance", "ks"),
                      z_crit: float = 3.0, var_rel_tol: float = 0.10, ks_level: float = 0.01,
                      times=None) -> list[dict]:
    """Per-time, per-deme verdicts comparing two ensembles on a shared grid."""
    if A.demes != B.demes or A.times.shape != B.times.shape or not np.allclose(A.times, B.times, atol=1e-9):
        raise GridMismatch("ensembles must share time grid and deme labels")
    idx = np.arange(len(A.times)) if times is None else _time_indices(A, times)
    out = []
    for k in idx:
        for d, label in enumerate(A.demes):
            a, b = A.values[:, k, d], B.values[:, k, d]
            base = {"time": float(A.times[k]), "deme": label}
            if "mean" in tests:
                z = two_sample_mean_z(a, b)
                out.append({**base, "test": "mean", "statistic": z, "passed": bool(abs(z) <= z_crit)})
            if "variance" in tests:
                va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
                rel = abs(va - vb) / vb if vb > 0 else (0.0 if va == 0 else math.inf)
                out.append({**base, "test": "variance", "statistic": rel, "passed": bool(rel <= var_rel_tol)})
            if "ks" in tests and min(a.size, b.size) >= KS_MIN_SAMPLES:
                if np.ptp(a) == 0 and np.ptp(b) == 0:
                    out.append({**base, "test": "ks", "statistic": 0.0 if a[0] == b[0] else 1.0,
                                "p_value": 1.0 if a[0] == b[0] else 0.0, "passed": bool(a[0] == b[0])})
                else:
                    v = ks_two_sample(a, b, ks_level)
                    out.append({**base, "test": "ks", "statistic": v.statistic, "p_value": v.p_value,
                                "passed": v.passed})
    return out
