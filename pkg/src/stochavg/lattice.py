"""Finite deme sets, migration kernels and the weighted l_gamma norm.

A countable deme set is always truncated to a finite one here; the builders
below make the boundary choice explicit (periodic cycle, complete graph, a
single isolated deme).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidParameter, NonpositiveWeight, UnbalancedKernel

BALANCE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MigrationKernel:
    """Migration rates ``rates[j, i] = a(j, i)``: rate of a jump from deme i to deme j."""

    demes: tuple
    rates: np.ndarray
    gamma: np.ndarray
    mu: float
    c: float

    @property
    def size(self) -> int:
        return len(self.demes)

    def outflow(self) -> np.ndarray:
        """Total jump rate out of each deme, sum_j a(j, i)."""
        return self.rates.sum(axis=0)

    def to_dict(self) -> dict:
        return {
            "demes": list(self.demes),
            "rates": self.rates.tolist(),
            "gamma": self.gamma.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MigrationKernel":
        return validate_kernel(d["rates"], d.get("gamma"), d.get("demes"))

    def __eq__(self, other):
        if not isinstance(other, MigrationKernel):
            return NotImplemented
        return (
            self.demes == other.demes
            and np.array_equal(self.rates, other.rates)
            and np.array_equal(self.gamma, other.gamma)
        )

    __hash__ = None


def validate_kernel(rates, gamma=None, demes: Sequence | None = None) -> MigrationKernel:
    """Check balance and weights, and compute mu and the minimal constant c."""
    a = np.array(rates, dtype=float)
    if a.size == 0:
        a = np.zeros((1, 1)) if demes is None or len(demes) <= 1 else np.zeros((len(demes),) * 2)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidParameter(f"migration matrix must be square, got shape {a.shape}")
    k = a.shape[0]
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise InvalidParameter("migration rates must be finite and non-negative")
    if np.any(np.diag(a) != 0):
        raise InvalidParameter("migration matrix must have a zero diagonal")
    g = np.ones(k) if gamma is None else np.array(gamma, dtype=float)
    if g.shape != (k,):
        raise InvalidParameter(f"gamma must have one weight per deme ({k}), got shape {g.shape}")
    if np.any(~np.isfinite(g)) or np.any(g <= 0):
        raise NonpositiveWeight("deme weights gamma must be strictly positive")
    labels = tuple(range(k)) if demes is None else tuple(demes)
    if len(labels) != k or len(set(labels)) != k:
        raise InvalidParameter("deme labels must be distinct and match the matrix size")

    into = a.sum(axis=1)  # sum_i a(j, i)
    out = a.sum(axis=0)  # sum_i a(i, j)
    mu = float(into[0])
    if np.max(np.abs(into - mu)) > BALANCE_TOL or np.max(np.abs(out - mu)) > BALANCE_TOL:
        raise UnbalancedKernel(
            "migration matrix violates sum_i a(j,i) = mu = sum_i a(i,j): "
            f"row sums {into.tolist()}, column sums {out.tolist()}"
        )
    c = float(np.max((g @ a) / g))
    a.setflags(write=False)
    g.setflags(write=False)
    return MigrationKernel(labels, a, g, mu, max(c, 0.0))


def single(gamma: float = 1.0) -> MigrationKernel:
    return validate_kernel(np.zeros((1, 1)), [gamma])


def cycle(k: int, rate: float = 1.0) -> MigrationKernel:
    """Periodic nearest-neighbour walk; for k = 2 both neighbours coincide and rates add."""
    if k < 1:
        raise InvalidParameter("cycle needs at least one deme")
    a = np.zeros((k, k))
    if k > 1:
        for i in range(k):
            a[(i + 1) % k, i] += rate
            a[(i - 1) % k, i] += rate
    return validate_kernel(a)


def complete(k: int, rate: float = 1.0) -> MigrationKernel:
    if k < 1:
        raise InvalidParameter("complete graph needs at least one deme")
    a = np.full((k, k), float(rate))
    np.fill_diagonal(a, 0.0)
    return validate_kernel(a)


BUILDERS = {"single": single, "cycle": cycle, "complete": complete}


def ell_gamma_norm(x, kernel: MigrationKernel) -> float | np.ndarray:
    """``sum_i gamma_i |x_i|``; accepts a batch with demes on the last axis."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != kernel.size:
        raise InvalidParameter(f"state has {x.shape[-1]} demes, kernel has {kernel.size}")
    out = np.abs(x) @ kernel.gamma
    return float(out) if out.ndim == 0 else out
