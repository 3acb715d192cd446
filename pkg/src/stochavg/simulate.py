"""Exact event-driven simulation of the scaled BRWRE and the random-speed walker.

Both processes are simulated without time discretisation.  The BRWRE runs as
an exponential race between three channels, each with its own counter-based
stream: migration (rate ``a(j, i)`` per individual in deme i), branching (rate
``n`` per individual, offspring drawn from the current environment law) and
the environment clock (rate ``n**2 / beta**2``, fresh draw from the
environment law).  The environment trace does not depend on the particles, so
it is drawn first and the particle race runs against its switch times.

Grid sampling is cadlag: the value recorded at grid time ``s`` is the state
after every event at times ``<= s``.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

from . import rng
from .env import DiscreteLaw, EnvironmentLaw
from .errors import InvalidParameter, PopulationOverflow, ValueOutOfBins
from .lattice import MigrationKernel, ell_gamma_norm

DEFAULT_CAP = 10**8


# --------------------------------------------------------------------------
# compiled kernels


@njit(cache=True, inline="always")
def _pick(cum, u):
    for i in range(cum.shape[0]):
        if u < cum[i]:
            return i
    return cum.shape[0] - 1


@njit(cache=True, nogil=True)
def _env_trace(g, rate, horizon, cum_w):
    cap = 64
    times = np.empty(cap)
    idx = np.empty(cap, np.int64)
    times[0] = 0.0
    idx[0] = _pick(cum_w, g.random())
    m = 1
    t = 0.0
    if rate > 0.0:
        scale = 1.0 / rate
        while True:
            t += g.exponential(scale)
            if t > horizon:
                break
            if m == cap:
                cap *= 2
                nt = np.empty(cap)
                ni = np.empty(cap, np.int64)
                nt[:m] = times[:m]
                ni[:m] = idx[:m]
                times = nt
                idx = ni
            times[m] = t
            idx[m] = _pick(cum_w, g.random())
            m += 1
    return times[:m].copy(), idx[:m].copy()


@njit(cache=True, nogil=True)
def _brwre_path(counts0, rates, outflow, n, sup, cum, size, env_times, env_idx,
                horizon, grid, g_mig, g_br, cap):
    D = counts0.shape[0]
    G = grid.shape[0]
    out = np.zeros((G, D), np.int64)
    counts = counts0.copy()
    total = 0
    for i in range(D):
        total += counts[i]
    t = 0.0
    gi = 0
    k = 0
    n_env = env_times.shape[0]
    n_mig = 0
    n_br = 0
    ext = np.nan
    status = 0
    while True:
        if total == 0:
            ext = t
            break  # absorbing; remaining grid rows stay zero
        rm = 0.0
        for i in range(D):
            rm += counts[i] * outflow[i]
        rb = n * total
        tm = g_mig.exponential(1.0 / rm) if rm > 0.0 else np.inf
        tb = g_br.exponential(1.0 / rb)
        tev = t + min(tm, tb)
        tsw = env_times[k + 1] if k + 1 < n_env else np.inf
        tnext = min(tev, tsw)
        while gi < G and grid[gi] < tnext:
            for i in range(D):
                out[gi, i] = counts[i]
            gi += 1
        if tnext > horizon:
            break
        t = tnext
        if tsw <= tev:
            k += 1
            continue
        if tm < tb:
            u = g_mig.random() * rm
            acc = 0.0
            src = D - 1
            for i in range(D):
                acc += counts[i] * outflow[i]
                if u < acc:
                    src = i
                    break
            v = g_mig.random() * outflow[src]
            acc = 0.0
            dst = D - 1
            for j in range(D):
                acc += rates[j, src]
                if v < acc:
                    dst = j
                    break
            counts[src] -= 1
            counts[dst] += 1
            n_mig += 1
        else:
            u = g_br.random() * total
            acc = 0.0
            dem = D - 1
            for i in range(D):
                acc += counts[i]
                if u < acc:
                    dem = i
                    break
            a = env_idx[k]
            l = sup[a, _pick(cum[a, : size[a]], g_br.random())]
            counts[dem] += l - 1
            total += l - 1
            n_br += 1
            if total > cap:
                status = 1
                break
    return out, ext, n_mig, n_br, status


@njit(cache=True, inline="always")
def _neumaier(s, c, x):
    t = s + x
    if abs(s) >= abs(x):
        c += (s - t) + x
    else:
        c += (x - t) + s
    return t, c


@njit(cache=True, nogil=True)
def _switching_path(g, values, cum, rate, scale, horizon, grid, keep):
    G = grid.shape[0]
    X = np.zeros(G)
    sq = np.zeros(G)
    cap = 64 if keep else 1
    tr_t = np.empty(cap)
    tr_i = np.empty(cap, np.int64)
    idx = _pick(cum, g.random())
    tr_t[0] = 0.0
    tr_i[0] = idx
    m = 1
    z = values[idx]
    s, c = 0.0, 0.0
    q, qc = 0.0, 0.0
    t = 0.0
    gi = 0
    while gi < G:
        tn = t + g.exponential(1.0 / rate) if rate > 0.0 else np.inf
        while gi < G and grid[gi] < tn:
            dt = grid[gi] - t
            X[gi] = scale * ((s + c) + z * dt)
            sq[gi] = (q + qc) + dt * dt
            gi += 1
        if tn > horizon:
            break
        seg = tn - t
        s, c = _neumaier(s, c, z * seg)
        q, qc = _neumaier(q, qc, seg * seg)
        t = tn
        idx = _pick(cum, g.random())
        z = values[idx]
        if keep:
            if m == cap:
                cap *= 2
                nt = np.empty(cap)
                ni = np.empty(cap, np.int64)
                nt[:m] = tr_t[:m]
                ni[:m] = tr_i[:m]
                tr_t = nt
                tr_i = ni
            tr_t[m] = t
            tr_i[m] = idx
            m += 1
    return X, sq, tr_t[:m].copy(), tr_i[:m].copy()


# --------------------------------------------------------------------------
# domain types


@dataclass(frozen=True, eq=False)
class ParticleState:
    """Particle counts per deme; the scaled state is ``counts / n``."""

    counts: np.ndarray
    n: int
    time: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1 or not np.issubdtype(c.dtype, np.integer) and not np.all(c == np.round(c)):
            raise InvalidParameter("particle counts must be a 1-d integer vector")
        c = c.astype(np.int64)
        if np.any(c < 0):
            raise InvalidParameter("particle counts must be non-negative")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParameter("scale n must be a positive integer")
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_scaled(cls, x, n: int, time: float = 0.0) -> "ParticleState":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(np.rint(x * n).astype(np.int64), int(n), time)

    @property
    def scaled(self) -> np.ndarray:
        return self.counts / self.n


@dataclass
class Path:
    """One sampled trajectory with its environment trace.

    ``env_times[k]`` is the k-th switch time (``env_times[0] == 0``) and
    ``env_index[k]`` the index into ``env_atoms`` drawn at that switch.
    """

    times: np.ndarray
    states: np.ndarray
    env_times: np.ndarray | None
    env_index: np.ndarray | None
    env_atoms: tuple
    seed: int
    horizon: float
    extinction_time: float | None = None
    counts: np.ndarray | None = None
    n: int | None = None
    event_counts: dict = field(default_factory=dict)

    @property
    def samples(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.times.tolist(), self.states))

    @property
    def env_trace(self) -> list[tuple[float, int]]:
        if self.env_times is None:
            return []
        return list(zip(self.env_times.tolist(), self.env_index.tolist()))

    def env_at(self, times) -> np.ndarray:
        """Index of the environment atom in force at each of ``times``."""
        pos = np.searchsorted(self.env_times, np.asarray(times, dtype=float), side="right") - 1
        return self.env_index[np.maximum(pos, 0)]


@dataclass
class Ensemble:
    """A batch of paths sampled on a common grid, ordered by path index.

    ``values`` has shape (paths, times, demes).  For particle systems
    ``counts`` holds the integer populations and ``values == counts / n``.
    """

    kind: str
    times: np.ndarray
    values: np.ndarray
    demes: tuple
    seed: int
    path_seeds: np.ndarray
    n: int | None = None
    counts: np.ndarray | None = None
    env_at_grid: np.ndarray | None = None
    env_atoms: tuple = ()
    env_mean: np.ndarray | None = None
    env_var: np.ndarray | None = None
    extinction_times: np.ndarray | None = None
    event_counts: np.ndarray | None = None
    sq_segments: np.ndarray | None = None
    traces: list | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def path(self, i: int) -> Path:
        tr = self.traces[i] if self.traces is not None else (None, None)
        ext = None
        if self.extinction_times is not None and not math.isnan(self.extinction_times[i]):
            ext = float(self.extinction_times[i])
        ev = {}
        if self.event_counts is not None:
            ev = dict(zip(("migration", "branching", "switch"), self.event_counts[i].tolist()))
        return Path(
            times=self.times,
            states=self.values[i],
            env_times=tr[0],
            env_index=tr[1],
            env_atoms=self.env_atoms,
            seed=int(self.path_seeds[i]),
            horizon=float(self.meta.get("horizon", self.times[-1] if len(self.times) else 0.0)),
            extinction_time=ext,
            counts=None if self.counts is None else self.counts[i],
            n=self.n,
            event_counts=ev,
        )


# --------------------------------------------------------------------------
# helpers


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("STOCHAVG_WORKERS", "1")))
    except ValueError:
        return 1


def map_paths(func: Callable[[int], object], n_paths: int, workers: int | None = None) -> list:
    """Apply ``func`` to path indices 0..n_paths-1, returning results in index order."""
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or n_paths < 2:
        return [func(i) for i in range(n_paths)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, range(n_paths), chunksize=max(1, n_paths // (4 * workers))))


def check_grid(grid, horizon: float) -> np.ndarray:
    if not horizon > 0 or not math.isfinite(horizon):
        raise InvalidParameter(f"horizon must be positive and finite, got {horizon}")
    g = np.asarray(grid, dtype=float).reshape(-1)
    if g.size and (g[0] < 0 or g[-1] > horizon or np.any(np.diff(g) <= 0)):
        raise InvalidParameter("grid must be strictly increasing within [0, horizon]")
    return g


def _initial_counts(x0, kernel: MigrationKernel, n: int) -> np.ndarray:
    if isinstance(x0, ParticleState):
        if x0.n != n:
            raise InvalidParameter(f"initial state has scale {x0.n}, environment has {n}")
        c = x0.counts
    else:
        c = np.atleast_1d(np.asarray(x0))
        if not np.issubdtype(c.dtype, np.integer):
            raise InvalidParameter("x0 must be a ParticleState or integer counts")
        c = c.astype(np.int64)
    if c.shape != (kernel.size,):
        raise InvalidParameter(f"initial state has {c.shape[0]} demes, kernel has {kernel.size}")
    if np.any(c < 0):
        raise InvalidParameter("initial counts must be non-negative")
    return c


# --------------------------------------------------------------------------
# BRWRE


def _brwre_one(kernel, env, counts0, horizon, grid, seed, cap, tables):
    sup, cum, size, cum_w = tables
    env_times, env_idx = _env_trace(rng.stream(seed, rng.ENV), env.switch_rate, horizon, cum_w)
    out, ext, n_mig, n_br, status = _brwre_path(
        counts0, kernel.rates, kernel.outflow(), float(env.n), sup, cum, size,
        env_times, env_idx, horizon, grid,
        rng.stream(seed, rng.MIGRATION), rng.stream(seed, rng.BRANCHING), int(cap),
    )
    if status:
        raise PopulationOverflow(
            f"total population exceeded cap {int(cap)} (path seed {seed}); parameters likely explode"
        )
    return out, ext, (n_mig, n_br, len(env_times) - 1), env_times, env_idx


def _env_tables(env: EnvironmentLaw):
    sup, cum, size = env.tables()
    cum_w = np.cumsum(env.weight_array())
    cum_w[-1] = 1.0
    return sup, cum, size, cum_w


def simulate_brwre(kernel: MigrationKernel, env: EnvironmentLaw, x0, horizon: float, grid,
                   seed: int, cap: int = DEFAULT_CAP) -> Path:
    """Simulate one path of the scaled BRWRE; ``seed`` is the path seed."""
    grid = check_grid(grid, horizon)
    counts0 = _initial_counts(x0, kernel, env.n)
    out, ext, ev, et, ei = _brwre_one(kernel, env, counts0, float(horizon), grid, int(seed), cap,
                                      _env_tables(env))
    return Path(
        times=grid, states=out / env.n, env_times=et, env_index=ei, env_atoms=env.atoms,
        seed=int(seed), horizon=float(horizon), extinction_time=None if math.isnan(ext) else float(ext),
        counts=out, n=env.n, event_counts=dict(zip(("migration", "branching", "switch"), ev)),
    )


def simulate_brwre_ensemble(kernel: MigrationKernel, env: EnvironmentLaw, x0, horizon: float, grid,
                            n_paths: int, seed: int, cap: int = DEFAULT_CAP,
                            workers: int | None = None, keep_traces: bool = False) -> Ensemble:
    grid = check_grid(grid, horizon)
    counts0 = _initial_counts(x0, kernel, env.n)
    seeds = rng.path_seeds(seed, n_paths)
    tables = _env_tables(env)

    def one(i):
        return _brwre_one(kernel, env, counts0, float(horizon), grid, int(seeds[i]), cap, tables)

    res = map_paths(one, n_paths, workers)
    counts = np.stack([r[0] for r in res]) if res else np.zeros((0, len(grid), kernel.size), np.int64)
    env_at = np.stack([
        r[4][np.maximum(np.searchsorted(r[3], grid, side="right") - 1, 0)] for r in res
    ]) if res else np.zeros((0, len(grid)), np.int64)
    return Ensemble(
        kind="brwre", times=grid, values=counts / env.n, demes=kernel.demes, seed=int(seed),
        path_seeds=seeds, n=env.n, counts=counts, env_at_grid=env_at, env_atoms=env.atoms,
        env_mean=np.array([float(a.mean_exact) for a in env.atoms]),
        env_var=np.array([float(a.variance_exact) for a in env.atoms]),
        extinction_times=np.array([r[1] for r in res]),
        event_counts=np.array([r[2] for r in res], dtype=np.int64).reshape(-1, 3),
        traces=[(r[3], r[4]) for r in res] if keep_traces else None,
        meta={"horizon": float(horizon), "n": env.n, "beta": float(env.beta),
              "environment": env.to_dict(), "kernel": kernel.to_dict()},
    )


# --------------------------------------------------------------------------
# random-speed walker


def _law_arrays(law: DiscreteLaw):
    return law.value_array(), law.cumulative()


def simulate_switching_integral(law: DiscreteLaw, rate: float, scale: float, horizon: float, grid,
                                seed: int, keep_trace: bool = True):
    """``scale * int_0^s Y_{xi_r} dr`` on the grid for a rate-``rate`` Poisson clock xi.

    Returns (values, squared-segment sums, switch times, value indices).
    """
    grid = check_grid(grid, horizon)
    vals, cum = _law_arrays(law)
    return _switching_path(rng.stream(seed, rng.ENV), vals, cum, float(rate), float(scale),
                           float(horizon), grid, keep_trace)


def simulate_speed_walker(pi_n: DiscreteLaw, n: int, horizon: float, grid, seed: int) -> Path:
    """One path of ``X_t = n * int_0^t Z_s ds`` with Z redrawn at rate n^2."""
    if int(n) != n or n < 1:
        raise InvalidParameter("n must be a positive integer")
    X, sq, tt, ti = simulate_switching_integral(pi_n, float(n) ** 2, float(n), horizon, grid, seed)
    return Path(
        times=np.asarray(grid, dtype=float), states=X[:, None], env_times=tt, env_index=ti,
        env_atoms=pi_n.values, seed=int(seed), horizon=float(horizon), n=int(n),
        event_counts={"switch": len(tt) - 1},
    )


def switching_ensemble(law: DiscreteLaw, rate: float, scale: float, horizon: float, grid,
                       n_paths: int, seed: int, workers: int | None = None,
                       keep_traces: bool = False, kind: str = "switching", n: int | None = None) -> Ensemble:
    grid = check_grid(grid, horizon)
    vals, cum = _law_arrays(law)
    seeds = rng.path_seeds(seed, n_paths)

    def one(i):
        return _switching_path(rng.stream(int(seeds[i]), rng.ENV), vals, cum, float(rate), float(scale),
                               float(horizon), grid, keep_traces)

    res = map_paths(one, n_paths, workers)
    X = np.stack([r[0] for r in res]) if res else np.zeros((0, len(grid)))
    return Ensemble(
        kind=kind, times=grid, values=X[:, :, None], demes=(0,), seed=int(seed), path_seeds=seeds, n=n,
        env_atoms=law.values, sq_segments=np.stack([r[1] for r in res]) if res else None,
        traces=[(r[2], r[3]) for r in res] if keep_traces else None,
        meta={"horizon": float(horizon), "rate": float(rate), "scale": float(scale), "law": law.to_dict()},
    )


def speed_walker_ensemble(pi_n: DiscreteLaw, n: int, horizon: float, grid, n_paths: int, seed: int,
                          workers: int | None = None, keep_traces: bool = False) -> Ensemble:
    ens = switching_ensemble(pi_n, float(n) ** 2, float(n), horizon, grid, n_paths, seed, workers,
                             keep_traces, kind="walker", n=int(n))
    ens.meta["n"] = int(n)
    return ens


# --------------------------------------------------------------------------
# occupation measures and norms


@dataclass
class OccupationMeasure:
    """Sojourn time of a transformed environment process in time x value cells.

    ``mass[t, v]`` is the time spent in value bin v during time bin t,
    ``overflow[t]`` the time spent outside every value bin and
    ``value_integral[t]`` the exact integral of the transformed value.
    """

    time_edges: np.ndarray
    value_edges: np.ndarray
    mass: np.ndarray
    overflow: np.ndarray
    value_integral: np.ndarray

    @property
    def cells(self) -> list[tuple[tuple[float, float], tuple[float, float], float]]:
        out = []
        for t in range(self.mass.shape[0]):
            for v in range(self.mass.shape[1]):
                out.append(((self.time_edges[t], self.time_edges[t + 1]),
                            (self.value_edges[v], self.value_edges[v + 1]), float(self.mass[t, v])))
        return out

    def totals(self) -> np.ndarray:
        return self.mass.sum(axis=1) + self.overflow

    def mean_value(self) -> float:
        """Time average of the transformed value over the whole time range."""
        span = self.time_edges[-1] - self.time_edges[0] if len(self.time_edges) > 1 else 0.0
        return math.fsum(self.value_integral) / span if span > 0 else math.nan


def occupation_measure(path: Path, transform: Callable, time_bins: Sequence[float],
                       value_bins: Sequence[float]) -> OccupationMeasure:
    te = np.asarray(time_bins, dtype=float)
    ve = np.asarray(value_bins, dtype=float)
    if te.size < 2:
        return OccupationMeasure(te, ve, np.zeros((0, max(ve.size - 1, 0))), np.zeros(0), np.zeros(0))
    if path.env_times is None:
        raise InvalidParameter("path carries no environment trace")
    if np.any(np.diff(te) <= 0) or te[0] < 0 or te[-1] > path.horizon + 1e-12:
        raise InvalidParameter("time bins must increase within [0, horizon]")
    if ve.size < 2 or np.any(np.diff(ve) <= 0):
        raise InvalidParameter("value bins must be at least two increasing edges")
    atom_vals = np.array([float(transform(a)) for a in path.env_atoms])
    vb = np.searchsorted(ve, atom_vals, side="right") - 1
    vb[atom_vals == ve[-1]] = ve.size - 2
    outside = (vb < 0) | (vb > ve.size - 2) | ~np.isfinite(atom_vals)
    starts = path.env_times
    ends = np.append(path.env_times[1:], path.horizon)
    seg_val = atom_vals[path.env_index]
    seg_bin = vb[path.env_index]
    seg_out = outside[path.env_index]
    T, V = te.size - 1, ve.size - 1
    mass = np.zeros((T, V))
    over = np.zeros(T)
    integ = np.zeros(T)
    for t in range(T):
        ov = np.clip(np.minimum(ends, te[t + 1]) - np.maximum(starts, te[t]), 0.0, None)
        hit = ov > 0
        if np.any(hit & seg_out):
            warnings.warn(ValueOutOfBins(
                f"transformed environment value outside bins during [{te[t]}, {te[t + 1]}]"), stacklevel=2)
        over[t] = math.fsum(ov[hit & seg_out])
        ins = hit & ~seg_out
        np.add.at(mass[t], seg_bin[ins], ov[ins])
        integ[t] = math.fsum(ov[hit] * np.where(seg_out[hit], np.nan_to_num(seg_val[hit]), seg_val[hit]))
    return OccupationMeasure(te, ve, mass, over, integ)


def sup_norm_trace(path: Path, kernel: MigrationKernel) -> list[tuple[float, float]]:
    """l_gamma norm of the scaled state at each sample time."""
    norms = ell_gamma_norm(path.states, kernel)
    return list(zip(path.times.tolist(), np.atleast_1d(norms).tolist()))


def tail_probabilities(ens: Ensemble, kernel: MigrationKernel, levels: Sequence[float]) -> np.ndarray:
    """Empirical ``P(sup_{s <= horizon} ||X_s|| >= k)`` over the sample grid for each level k."""
    sup = np.max(ell_gamma_norm(ens.values, kernel), axis=1)
    return np.array([np.mean(sup >= k) for k in levels])
