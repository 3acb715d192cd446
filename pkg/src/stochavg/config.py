"""Experiment configuration: a JSON document with four top-level entries.

    {
      "experiment": "walker" | "brwre" | "sde" | "generator-check" | "averaging-report" | "oracle",
      "seed": <non-negative integer, required>,
      "model":  {...},
      "run":    {...},
      "output": {...}
    }

model keys
    kernel       {"builder": "single" | "cycle" | "complete", "k": int, "rate": float}
                 or {"rates": [[a(j,i)]], "gamma": [...], "demes": [...]}; default single deme
    environment  {"two_point": {"alpha": float, "sigma_e": float}}
                 or {"atoms": [{"support": [int], "probs": [decimal str or float], "weight": ...}]};
                 default two_point built from model.alpha and model.sigma_e
    n, n_list    scale, or increasing list of scales
    alpha, sigma_e, beta
    sigma_e2, sigma_b2   limit coefficients; default sigma_e**2 and 1 - sigma_e**2
    x0           initial scaled state, one entry per deme (default all ones)
    a, sigma     walker drift and diffusion constants
    function     name from the test-function library
    oracle       {"name": "variance" | "integral_variance" | "max_bound", ...parameters}
    p            moment exponent (default 4)

run keys
    horizon, grid (list of times) or grid_points, dt, n_paths, workers, cap

output keys
    csv, summary, binary, json   file names, resolved against the output directory
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from . import lattice
from .env import EnvironmentLaw, two_point_environment
from .errors import ConfigError, InvalidParameter
from .lattice import MigrationKernel
from .limits import SdeSpec
from .testfunctions import LIBRARY

EXPERIMENTS = ("walker", "brwre", "sde", "generator-check", "averaging-report", "oracle")
MODEL_KEYS = {"kernel", "environment", "n", "n_list", "alpha", "sigma_e", "beta", "sigma_e2",
              "sigma_b2", "x0", "a", "sigma", "function", "oracle", "p"}
RUN_KEYS = {"horizon", "grid", "grid_points", "dt", "n_paths", "workers", "cap"}
OUTPUT_KEYS = {"csv", "summary", "binary", "json"}
TOP_KEYS = {"experiment", "seed", "model", "run", "output"}

REQUIRED = {
    "walker": ["model.n", "model.a", "model.sigma", "run.horizon", "run.n_paths"],
    "brwre": ["model.n", "run.horizon", "run.n_paths"],
    "sde": ["run.horizon", "run.dt", "run.n_paths"],
    "generator-check": ["model.function", "model.n_list"],
    "averaging-report": ["model.function", "model.n_list", "run.horizon", "run.n_paths"],
    "oracle": ["model.oracle"],
}


def _num(key, v, *, integer=False, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(key, f"expected an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(key, f"must be positive, got {v!r}")
    if nonneg and v < 0:
        raise ConfigError(key, f"must be non-negative, got {v!r}")
    return int(v) if integer else float(v)


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    model: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    # ---------------------------------------------------------------- parsing

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        for k in d:
            if k not in TOP_KEYS:
                raise ConfigError(k, "unknown top-level key")
        if "experiment" not in d:
            raise ConfigError("experiment", "missing")
        if d["experiment"] not in EXPERIMENTS:
            raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}")
        if "seed" not in d:
            raise ConfigError("seed", "missing; every experiment needs an explicit seed")
        seed = _num("seed", d["seed"], integer=True, nonneg=True)
        sections = {}
        for name, allowed in (("model", MODEL_KEYS), ("run", RUN_KEYS), ("output", OUTPUT_KEYS)):
            sec = d.get(name, {})
            if not isinstance(sec, dict):
                raise ConfigError(name, "must be an object")
            for k in sec:
                if k not in allowed:
                    raise ConfigError(f"{name}.{k}", "unknown key")
            sections[name] = dict(sec)
        cfg = cls(d["experiment"], seed, sections["model"], sections["run"], sections["output"])
        cfg.validate()
        return cfg

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"not valid JSON ({exc.msg} at line {exc.lineno})") from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = FsPath(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
        return cls.loads(text)

    def to_dict(self) -> dict:
        d = {"experiment": self.experiment, "seed": self.seed}
        for name in ("model", "run", "output"):
            sec = getattr(self, name)
            if sec:
                d[name] = sec
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    # ------------------------------------------------------------- validation

    def _get(self, dotted: str, default=None):
        sec, key = dotted.split(".")
        return getattr(self, sec).get(key, default)

    def validate(self) -> None:
        for key in REQUIRED[self.experiment]:
            if self._get(key) is None:
                raise ConfigError(key, f"required for experiment '{self.experiment}'")
        m, r = self.model, self.run
        for k in ("alpha", "a"):
            if k in m:
                _num(f"model.{k}", m[k])
        for k in ("sigma_e", "sigma_e2", "sigma_b2", "sigma"):
            if k in m:
                _num(f"model.{k}", m[k], nonneg=True)
        if "beta" in m:
            _num("model.beta", m["beta"], positive=True)
        if "p" in m:
            _num("model.p", m["p"], positive=True)
        if "n" in m:
            _num("model.n", m["n"], integer=True, positive=True)
        if "n_list" in m:
            nl = m["n_list"]
            if not isinstance(nl, list) or not nl:
                raise ConfigError("model.n_list", "must be a non-empty list")
            vals = [_num("model.n_list", v, integer=True, positive=True) for v in nl]
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ConfigError("model.n_list", "must be strictly increasing")
        if "function" in m and m["function"] not in LIBRARY:
            raise ConfigError("model.function", f"unknown; choose from {', '.join(sorted(LIBRARY))}")
        for k in ("horizon", "dt"):
            if k in r:
                _num(f"run.{k}", r[k], positive=True)
        for k in ("n_paths", "workers", "cap", "grid_points"):
            if k in r:
                _num(f"run.{k}", r[k], integer=True, positive=True)
        if "grid" in r:
            g = r["grid"]
            if not isinstance(g, list) or not g:
                raise ConfigError("run.grid", "must be a non-empty list of times")
            vals = [_num("run.grid", v, nonneg=True) for v in g]
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ConfigError("run.grid", "must be strictly increasing")
            if "horizon" in r and vals[-1] > r["horizon"]:
                raise ConfigError("run.grid", "last grid time exceeds run.horizon")
        for k, v in self.output.items():
            if not isinstance(v, str) or not v:
                raise ConfigError(f"output.{k}", "must be a file name")
        if self.experiment == "oracle":
            o = m["oracle"]
            if not isinstance(o, dict) or o.get("name") not in ("variance", "integral_variance", "max_bound"):
                raise ConfigError("model.oracle", "needs name variance, integral_variance or max_bound")
        # build everything once so structural errors surface here with their key
        if self.experiment in ("brwre", "sde", "generator-check", "averaging-report"):
            k = self.kernel()
            x0 = self.x0(k)
            if self.experiment in ("brwre", "generator-check", "averaging-report"):
                for n in ([m["n"]] if "n" in m else m.get("n_list", [])):
                    self.environment(int(n))
            if self.experiment == "sde":
                self.sde_spec(k)
            if np.any(x0 < 0):
                raise ConfigError("model.x0", "must be non-negative")

    # --------------------------------------------------------------- builders

    def kernel(self) -> MigrationKernel:
        spec = self.model.get("kernel", {"builder": "single"})
        if not isinstance(spec, dict):
            raise ConfigError("model.kernel", "must be an object")
        try:
            if "builder" in spec:
                b = spec["builder"]
                if b not in lattice.BUILDERS:
                    raise ConfigError("model.kernel.builder", f"unknown builder {b!r}")
                if b == "single":
                    return lattice.single(float(spec.get("gamma", 1.0)))
                return lattice.BUILDERS[b](int(spec.get("k", 2)), float(spec.get("rate", 1.0)))
            if "rates" not in spec:
                raise ConfigError("model.kernel", "needs 'builder' or 'rates'")
            return MigrationKernel.from_dict(spec)
        except ConfigError:
            raise
        except InvalidParameter as exc:
            raise ConfigError("model.kernel", str(exc)) from None
        except (TypeError, ValueError) as exc:
            raise ConfigError("model.kernel", f"malformed ({exc})") from None

    def environment(self, n: int) -> EnvironmentLaw:
        spec = self.model.get("environment", {"two_point": {}})
        beta = self.model.get("beta", 1)
        if not isinstance(spec, dict):
            raise ConfigError("model.environment", "must be an object")
        try:
            if "two_point" in spec:
                tp = spec["two_point"] or {}
                alpha = tp.get("alpha", self.model.get("alpha"))
                sigma_e = tp.get("sigma_e", self.model.get("sigma_e"))
                if alpha is None or sigma_e is None:
                    raise ConfigError("model.environment", "two-point family needs alpha and sigma_e")
                return two_point_environment(alpha, sigma_e, n, beta)
            if "atoms" not in spec:
                raise ConfigError("model.environment", "needs 'two_point' or 'atoms'")
            return EnvironmentLaw.from_dict({**spec, "n": n, "beta": beta})
        except ConfigError:
            raise
        except InvalidParameter as exc:
            raise ConfigError("model.environment", str(exc)) from None
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError("model.environment", f"malformed ({exc})") from None

    def x0(self, kernel: MigrationKernel) -> np.ndarray:
        x0 = self.model.get("x0")
        if x0 is None:
            return np.ones(kernel.size)
        try:
            arr = np.atleast_1d(np.asarray(x0, dtype=float))
        except (TypeError, ValueError):
            raise ConfigError("model.x0", "must be a list of numbers") from None
        if arr.shape != (kernel.size,):
            raise ConfigError("model.x0", f"has {arr.size} entries but the kernel has {kernel.size} demes")
        return arr

    def sigma_e2(self) -> float:
        if "sigma_e2" in self.model:
            return float(self.model["sigma_e2"])
        return float(self.model.get("sigma_e", 0.0)) ** 2

    def sde_spec(self, kernel: MigrationKernel | None = None) -> SdeSpec:
        k = self.kernel() if kernel is None else kernel
        se2 = self.sigma_e2()
        sb2 = float(self.model.get("sigma_b2", 1.0 - se2))
        if sb2 < 0:
            raise ConfigError("model.sigma_b2", "must be non-negative")
        return SdeSpec(k, float(self.model.get("alpha", 0.0)), sb2, se2)

    def grid(self) -> np.ndarray:
        if "grid" in self.run:
            return np.asarray(self.run["grid"], dtype=float)
        pts = int(self.run.get("grid_points", 11))
        return np.linspace(0.0, float(self.run["horizon"]), pts)

    @property
    def workers(self) -> int | None:
        return self.run.get("workers")
