"""Plot-ready artifacts: path CSVs, summary CSVs, a binary ensemble summary and JSON.

Every text artifact starts with ``#`` provenance lines (``# key: value``)
followed by a mandatory header row.  Floats are written with ``repr`` so a
read-back is exact, and line endings are always LF.  Identical inputs give
byte-identical files.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
import struct
from pathlib import Path as FsPath
from typing import Iterable

import numpy as np

from .errors import InvalidParameter
from .simulate import Ensemble
from .stats import EnsembleSummary

MAGIC = b"SAVGSUM\0"
FORMAT_VERSION = 1
# magic, version, n (0 if none), seed, paths, times, demes
_HEADER = struct.Struct("<8sHxxIQIII")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def _provenance_lines(provenance: dict | None) -> list[str]:
    if not provenance:
        return []
    out = []
    for k in sorted(provenance):
        v = provenance[k]
        text = v if isinstance(v, str) else json.dumps(v, sort_keys=True, separators=(",", ":"))
        out.append(f"# {k}: {text}")
    return out


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def ensemble_csv(ens: Ensemble, provenance: dict | None = None) -> str:
    """Long-format CSV: one row per (path, time) with one column per deme."""
    buf = _io.StringIO()
    for line in _provenance_lines(provenance):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path_id", "time", *[f"deme_{d}" for d in ens.demes], "env_mean", "env_var"])
    has_env = ens.env_at_grid is not None and ens.env_mean is not None
    for p in range(ens.n_paths):
        for k, t in enumerate(ens.times):
            if has_env:
                e = ens.env_at_grid[p, k]
                env = [_fmt(ens.env_mean[e]), _fmt(ens.env_var[e])]
            else:
                env = ["", ""]
            w.writerow([p, _fmt(t), *[_fmt(v) for v in ens.values[p, k]], *env])
    return buf.getvalue()


def write_ensemble_csv(ens: Ensemble, path, provenance: dict | None = None) -> None:
    _write_text(path, ensemble_csv(ens, provenance))


def _split_comments(text: str) -> tuple[dict, list[str]]:
    prov, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(":")
            prov[key.strip()] = val.strip()
        elif line:
            body.append(line)
    return prov, body


def read_ensemble_csv(path) -> tuple[Ensemble, dict]:
    """Inverse of :func:`write_ensemble_csv` for the state values (env columns are kept as floats)."""
    prov, body = _split_comments(FsPath(path).read_text(encoding="utf-8"))
    rows = list(csv.reader(body))
    if not rows:
        raise InvalidParameter(f"{path}: missing header row")
    header, data = rows[0], rows[1:]
    if header[:2] != ["path_id", "time"] or header[-2:] != ["env_mean", "env_var"]:
        raise InvalidParameter(f"{path}: unexpected header {header}")
    demes = tuple(h[len("deme_"):] for h in header[2:-2])
    demes = tuple(int(d) if d.lstrip("-").isdigit() else d for d in demes)
    if not data:
        return Ensemble(kind="csv", times=np.zeros(0), values=np.zeros((0, 0, len(demes))), demes=demes,
                        seed=int(prov.get("seed", 0)), path_seeds=np.zeros(0, np.uint64)), prov
    arr = np.array([[float(c) if c else math.nan for c in r] for r in data])
    pid = arr[:, 0].astype(int)
    P = int(pid.max()) + 1
    times = arr[pid == 0, 1]
    G = times.size
    if arr.shape[0] != P * G:
        raise InvalidParameter(f"{path}: paths have unequal grid lengths")
    values = arr[:, 2:-2].reshape(P, G, len(demes))
    env = arr[:, -2:].reshape(P, G, 2)
    ens = Ensemble(kind=prov.get("kind", "csv"), times=times, values=values, demes=demes,
                   seed=int(prov.get("seed", 0)), path_seeds=np.zeros(P, np.uint64),
                   meta={"env_columns": env, "provenance": prov})
    n = prov.get("n")
    if n and n.isdigit():
        ens.n = int(n)
    return ens, prov


def summary_csv(summary: EnsembleSummary, provenance: dict | None = None) -> str:
    buf = _io.StringIO()
    for line in _provenance_lines(provenance):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "deme", "mean", "var", "se", "n_paths"])
    for t, d, m, v, s, p in summary.rows():
        w.writerow([_fmt(t), d, _fmt(m), _fmt(v), _fmt(s), p])
    return buf.getvalue()


def write_summary_csv(summary: EnsembleSummary, path, provenance: dict | None = None) -> None:
    _write_text(path, summary_csv(summary, provenance))


def summary_bytes(summary: EnsembleSummary, n: int | None, seed: int) -> bytes:
    """Binary summary: header, then float64 times, means (T x D) and variances (T x D)."""
    T, D = len(summary.times), len(summary.demes)
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, int(n or 0), int(seed) & (2**64 - 1),
                        int(summary.n_paths), T, D)
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                    for a in (summary.times, summary.mean, summary.var))
    return head + body


def write_summary_binary(summary: EnsembleSummary, path, n: int | None, seed: int) -> None:
    FsPath(path).write_bytes(summary_bytes(summary, n, seed))


def read_summary_binary(path) -> dict:
    raw = FsPath(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InvalidParameter(f"{path}: truncated header")
    magic, version, n, seed, paths, T, D = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise InvalidParameter(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise InvalidParameter(f"{path}: unsupported version {version}")
    need = _HEADER.size + 8 * (T + 2 * T * D)
    if len(raw) != need:
        raise InvalidParameter(f"{path}: expected {need} bytes, found {len(raw)}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    times = body[:T]
    mean = body[T:T + T * D].reshape(T, D)
    var = body[T + T * D:].reshape(T, D)
    return {"version": version, "n": n or None, "seed": seed, "paths": paths,
            "times": times, "mean": mean, "var": var}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(obj, path) -> None:
    _write_text(path, dumps(obj))


def verdict_records(items: Iterable) -> list:
    return [_jsonable(v) for v in items]
