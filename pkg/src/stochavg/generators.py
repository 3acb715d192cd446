"""Exact generator evaluations for the walker and the scaled BRWRE.

The BRWRE pre-generator splits as ``L_n = L0 + n L1 + n^2 L2`` with

    L0 f(x, z) = n sum_{i,j} a(j,i) x_i (f(x - e_i/n + e_j/n) - f(x))
    L1 f(x, z) = n sum_i sum_l x_i (f(x + (l-1)/n e_i) - f(x)) z(l)
    L2 F(x, z) = E[F(x, Z)] - F(x, z)

Every sum here is finite (finite demes, finite offspring support, finite
mixture), so the operators are evaluated exactly up to floating point.  ``x``
may carry leading batch axes; demes are on the last axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .env import DiscreteLaw, EnvironmentLaw, OffspringLaw
from .lattice import MigrationKernel
from .limits import SdeSpec
from .testfunctions import TestFunction


def _shift_term(f, x, y, weight):
    # zero times an undefined quantity is zero
    diff = f(y) - f(x)
    return np.where(weight != 0, weight * diff, 0.0)


def apply_L0(f: Callable, x, kernel: MigrationKernel, n: int) -> np.ndarray:
    """Migration part; does not depend on the environment."""
    x = np.asarray(x, dtype=float)
    a = kernel.rates
    total = np.zeros(x.shape[:-1])
    for i in range(kernel.size):
        for j in range(kernel.size):
            if a[j, i] == 0.0:
                continue
            y = x.copy()
            y[..., i] -= 1.0 / n
            y[..., j] += 1.0 / n
            total = total + _shift_term(f, x, y, a[j, i] * x[..., i])
    return n * total


def apply_L1(f: Callable, x, z: OffspringLaw, n: int) -> np.ndarray:
    """Branching part under the offspring law ``z``."""
    x = np.asarray(x, dtype=float)
    total = np.zeros(x.shape[:-1])
    for i in range(x.shape[-1]):
        for l, p in zip(z.support, z.probs):
            if l == 1 or p == 0:
                continue
            y = x.copy()
            y[..., i] += (l - 1) / n
            total = total + float(p) * _shift_term(f, x, y, x[..., i])
    return n * total


def apply_L2(F: Callable[[np.ndarray, OffspringLaw], np.ndarray], x, z: OffspringLaw,
             env: EnvironmentLaw) -> np.ndarray:
    """Environment part ``E[F(x, Z)] - F(x, z)`` with Z a fresh draw from ``env``."""
    x = np.asarray(x, dtype=float)
    mean = sum(float(w) * np.asarray(F(x, a), dtype=float) for a, w in zip(env.atoms, env.weights))
    return mean - F(x, z)


def iterated_L1(f: Callable, x, z: OffspringLaw, n: int) -> np.ndarray:
    """``L1 (L1 f)`` with the same offspring law in both applications."""
    return apply_L1(lambda y: apply_L1(f, y, z, n), x, z, n)


def A1(f: TestFunction, x, spec: SdeSpec) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = f.gradient(x)
    h2 = np.diagonal(f.hessian(x), axis1=-2, axis2=-1)
    a = spec.kernel.rates
    flow = x @ a.T - a.sum(axis=1) * x
    return (np.sum(flow * g, axis=-1) + spec.alpha * np.sum(x * g, axis=-1)
            + 0.5 * spec.sigma_b2 * np.sum(x * h2, axis=-1))


def A2(f: TestFunction, x, r) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    first = np.sum(x * f.gradient(x), axis=-1)
    second = np.einsum("...i,...j,...ij->...", x, x, f.hessian(x))
    return np.asarray(r) * (first + second)


def poisson_identity_residual(f: Callable, x, z: OffspringLaw, env: EnvironmentLaw, n: int) -> float:
    """Max gap between ``L2 h`` (with h = L1 f) and the explicit mixture expression."""
    x = np.asarray(x, dtype=float)
    lhs = apply_L2(lambda y, w: apply_L1(f, y, w, n), x, z, env)
    terms = np.stack([float(w) * apply_L1(f, x, a, n) for a, w in zip(env.atoms, env.weights)])
    rhs = np.apply_along_axis(math.fsum, 0, terms) - apply_L1(f, x, z, n)
    return float(np.max(np.abs(lhs - rhs)))


@dataclass(frozen=True)
class GeneratorTriple:
    """The three BRWRE operators bound to a kernel and an environment law."""

    kernel: MigrationKernel
    env: EnvironmentLaw

    @property
    def n(self) -> int:
        return self.env.n

    def L0(self, f, x, z=None):
        return apply_L0(f, x, self.kernel, self.n)

    def L1(self, f, x, z):
        return apply_L1(f, x, z, self.n)

    def L2(self, F, x, z):
        return apply_L2(F, x, z, self.env)

    def full(self, f, x, z):
        """``L_n f`` for f constant in the environment (the L2 term vanishes)."""
        return self.L0(f, x) + self.n * self.L1(f, x, z)

    def averaged(self, f, x):
        """``int (L0 f + n L1 f)(x, y) pi_n(dy)``."""
        x = np.asarray(x, dtype=float)
        nl1 = sum(float(w) * self.L1(f, x, a) for a, w in zip(self.env.atoms, self.env.weights))
        return self.L0(f, x) + self.n * nl1


def walker_generators(f: TestFunction, x: float, z: float, pi_n: DiscreteLaw, n: int,
                      F: Callable[[float, float], float] | None = None) -> tuple[float, float]:
    """(L1, L2) of the speed walker: ``z f'(x)`` and ``E[F(x, Z)] - F(x, z)``.

    ``F`` defaults to f viewed as constant in the speed, for which L2 is 0.
    """
    xv = np.array([float(x)])
    l1 = float(z) * float(f.gradient(xv)[0])
    if F is None:
        return l1, 0.0
    l2 = math.fsum(p * F(x, v) for v, p in zip(pi_n.values, pi_n.probs)) - F(x, z)
    return l1, l2


def walker_iterated_L1(f: TestFunction, x: float, z: float) -> float:
    """``L1 L1 f = z d/dx (z f') = z^2 f''``."""
    return float(z) ** 2 * float(f.hessian(np.array([float(x)]))[0, 0])
