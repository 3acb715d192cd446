"""Run a validated :class:`ExperimentConfig` and return its artifacts as bytes.

Artifacts are returned rather than written so callers can compare runs byte
for byte; the CLI writes them under the output directory.
"""
from __future__ import annotations

import numpy as np

from . import __version__, io, stats
from .averaging import averaging_condition_report, default_state_grid
from .config import ExperimentConfig
from .errors import ConfigError
from .env import moment_report, two_point_speed_law
from .generators import A1, A2, GeneratorTriple, iterated_L1, poisson_identity_residual
from .limits import euler_maruyama
from .simulate import ParticleState, simulate_brwre_ensemble, speed_walker_ensemble
from .testfunctions import LIBRARY

DEFAULT_NAMES = {"csv": "paths.csv", "summary": "summary.csv", "binary": "summary.bin", "json": "report.json"}


def provenance(cfg: ExperimentConfig, **extra) -> dict:
    return {"config_hash": cfg.hash(), "version": __version__, "seed": cfg.seed,
            "experiment": cfg.experiment, **extra}


def _names(cfg: ExperimentConfig) -> dict:
    return {k: cfg.output.get(k, f"{cfg.experiment}_{v}") for k, v in DEFAULT_NAMES.items()}


def _ensemble_artifacts(cfg, ens, n=None, binary=False) -> dict[str, bytes]:
    names = _names(cfg)
    prov = provenance(cfg, kind=ens.kind, **({"n": n} if n is not None else {}))
    summ = stats.ensemble_summary(ens) if ens.n_paths >= 2 else None
    out = {names["csv"]: io.ensemble_csv(ens, prov).encode()}
    if summ is not None:
        out[names["summary"]] = io.summary_csv(summ, prov).encode()
        if binary:
            out[names["binary"]] = io.summary_bytes(summ, n, cfg.seed)
    if "negative_steps" in ens.meta:
        out[names["json"]] = io.dumps({"provenance": prov, "negative_steps": ens.meta["negative_steps"]}).encode()
    return out


def run_walker(cfg: ExperimentConfig, workers=None):
    m, r = cfg.model, cfg.run
    n = int(m["n"])
    law = two_point_speed_law(float(m["a"]), float(m["sigma"]), n)
    ens = speed_walker_ensemble(law, n, float(r["horizon"]), cfg.grid(), int(r["n_paths"]), cfg.seed, workers)
    return _ensemble_artifacts(cfg, ens, n)


def run_brwre(cfg: ExperimentConfig, workers=None):
    m, r = cfg.model, cfg.run
    n = int(m["n"])
    kernel = cfg.kernel()
    env = cfg.environment(n)
    x0 = ParticleState.from_scaled(cfg.x0(kernel), n)
    ens = simulate_brwre_ensemble(kernel, env, x0, float(r["horizon"]), cfg.grid(), int(r["n_paths"]),
                                  cfg.seed, cap=int(r.get("cap", 10**8)), workers=workers)
    return _ensemble_artifacts(cfg, ens, n, binary=True)


def run_sde(cfg: ExperimentConfig, workers=None):
    r = cfg.run
    kernel = cfg.kernel()
    spec = cfg.sde_spec(kernel)
    ens = euler_maruyama(spec, cfg.x0(kernel), float(r["horizon"]), float(r["dt"]), int(r["n_paths"]),
                         cfg.seed, grid=cfg.grid(), workers=workers)
    return _ensemble_artifacts(cfg, ens, binary=True)


def generator_check(cfg: ExperimentConfig) -> dict:
    """Exact generator diagnostics along ``n_list`` on a deterministic state sample."""
    m = cfg.model
    f = LIBRARY[m["function"]]()
    kernel = cfg.kernel()
    D = kernel.size
    if max(f.active) >= D:
        raise ConfigError("model.function", f"{f.name} needs {max(f.active) + 1} demes, kernel has {D}")
    spec = cfg.sde_spec(kernel)
    se2 = spec.sigma_e2
    base = default_state_grid(D)
    base = base[:: max(1, len(base) // 50)]
    records = []
    for n in m["n_list"]:
        env = cfg.environment(int(n))
        tri = GeneratorTriple(kernel, env)
        xs = np.rint(base * n) / n
        poisson = max(poisson_identity_residual(f, xs, a, env, n) for a in env.atoms)
        iterated = sum(float(w) * iterated_L1(f, xs, a, n) for a, w in zip(env.atoms, env.weights))
        it_gap = np.abs(iterated - A2(f, xs, se2))
        a1_gap = np.abs(A1(f, xs, spec) - tri.averaged(f, xs))
        mr = moment_report(env, float(m.get("p", 4)))
        records.append({
            "n": int(n), "poisson_residual": poisson, "iterated_gap_max": float(it_gap.max()),
            "averaged_gap_max": float(a1_gap.max()), "drift_n": mr.drift_n, "var_m": mr.var_m,
            "mean_v": mr.mean_v, "points": int(len(xs)),
        })
    return {"provenance": provenance(cfg), "function": f.name, "limit": spec.to_dict(), "records": records}


def averaging_report(cfg: ExperimentConfig, workers=None) -> dict:
    m, r = cfg.model, cfg.run
    kernel = cfg.kernel()
    f = LIBRARY[m["function"]]()
    rep = averaging_condition_report(
        f, kernel, cfg.environment, m["n_list"], float(r["horizon"]), int(r["n_paths"]), cfg.seed,
        cfg.sde_spec(kernel), x0=cfg.x0(kernel), grid_points=int(r.get("grid_points", 101)),
        p=float(m.get("p", 4.0)), workers=workers,
    )
    return {"provenance": provenance(cfg), "function": f.name, **rep}


def oracle(cfg: ExperimentConfig) -> dict:
    o = dict(cfg.model["oracle"])
    name = o.pop("name")
    try:
        if name == "variance":
            value = stats.variance_oracle(float(o["rho"]), float(o["t"]), float(o["var_y"]))
        elif name == "integral_variance":
            value = stats.integral_variance_exact(float(o["rho"]), float(o["t"]), float(o["var_y"]))
        else:
            value = stats.max_bound(float(o["alpha"]), float(o["rho"]), float(o["p"]), float(o["pth_moment"]))
    except KeyError as exc:
        raise ConfigError(f"model.oracle.{exc.args[0]}", "missing parameter") from None
    return {"provenance": provenance(cfg), "oracle": name, "parameters": o, "value": value}


def run(cfg: ExperimentConfig, workers: int | None = None) -> dict[str, bytes]:
    """Execute ``cfg``; ``workers`` overrides ``run.workers`` and never changes the output."""
    w = cfg.workers if workers is None else workers
    kind = cfg.experiment
    if kind == "walker":
        return run_walker(cfg, w)
    if kind == "brwre":
        return run_brwre(cfg, w)
    if kind == "sde":
        return run_sde(cfg, w)
    name = _names(cfg)["json"]
    if kind == "generator-check":
        return {name: io.dumps(generator_check(cfg)).encode()}
    if kind == "averaging-report":
        return {name: io.dumps(averaging_report(cfg, w)).encode()}
    return {name: io.dumps(oracle(cfg)).encode()}
