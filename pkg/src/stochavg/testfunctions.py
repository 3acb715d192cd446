"""Smooth test functions with exact first and second derivatives.

A :class:`TestFunction` depends on a finite set of active coordinates.  The
building blocks are separable products ``prod_k phi_k(x_k)`` (monomials,
Gaussians, compactly supported bumps); sums and products of test functions
carry their derivatives along by the sum and product rules.

All evaluators broadcast over leading axes: ``x`` has demes on the last axis.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np


class TestFunction:
    __test__ = False  # keep pytest from collecting this class

    def __init__(self, active: Sequence[int], value: Callable, grad: Callable, hess: Callable,
                 bound: float = math.inf, name: str = "f"):
        self.active = tuple(int(i) for i in active)
        self._value = value
        self._grad = grad
        self._hess = hess
        self.bound = bound
        self.name = name

    def _y(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., list(self.active)]

    def __call__(self, x) -> np.ndarray:
        return self._value(self._y(x))

    value = __call__

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        out[..., list(self.active)] = self._grad(self._y(x))
        return out

    def hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (x.shape[-1],))
        idx = np.array(self.active)
        out[..., idx[:, None], idx[None, :]] = self._hess(self._y(x))
        return out

    def __repr__(self):
        return f"TestFunction({self.name}, active={self.active})"

    def _embed(self, active: tuple):
        """Evaluators of self re-indexed to the coordinate tuple ``active``."""
        pos = [active.index(i) for i in self.active]

        def v(y):
            return self._value(y[..., pos])

        def g(y):
            out = np.zeros(y.shape)
            out[..., pos] = self._grad(y[..., pos])
            return out

        def h(y):
            out = np.zeros(y.shape + (y.shape[-1],))
            p = np.array(pos)
            out[..., p[:, None], p[None, :]] = self._hess(y[..., pos])
            return out

        return v, g, h

    def __add__(self, other: "TestFunction") -> "TestFunction":
        if not isinstance(other, TestFunction):
            return NotImplemented
        act = tuple(sorted(set(self.active) | set(other.active)))
        v1, g1, h1 = self._embed(act)
        v2, g2, h2 = other._embed(act)
        return TestFunction(act, lambda y: v1(y) + v2(y), lambda y: g1(y) + g2(y),
                            lambda y: h1(y) + h2(y), self.bound + other.bound,
                            f"({self.name} + {other.name})")

    def __mul__(self, other) -> "TestFunction":
        if isinstance(other, (int, float)):
            c = float(other)
            return TestFunction(self.active, lambda y: c * self._value(y), lambda y: c * self._grad(y),
                                lambda y: c * self._hess(y), abs(c) * self.bound, f"{c:g}*{self.name}")
        if not isinstance(other, TestFunction):
            return NotImplemented
        act = tuple(sorted(set(self.active) | set(other.active)))
        v1, g1, h1 = self._embed(act)
        v2, g2, h2 = other._embed(act)

        def hess(y):
            a, b = v1(y)[..., None, None], v2(y)[..., None, None]
            ga, gb = g1(y), g2(y)
            cross = ga[..., :, None] * gb[..., None, :]
            return a * h2(y) + b * h1(y) + cross + np.swapaxes(cross, -1, -2)

        return TestFunction(
            act, lambda y: v1(y) * v2(y),
            lambda y: v1(y)[..., None] * g2(y) + v2(y)[..., None] * g1(y),
            hess, self.bound * other.bound, f"{self.name}*{other.name}",
        )

    __rmul__ = __mul__

    def __sub__(self, other: "TestFunction") -> "TestFunction":
        return self + (-1.0) * other


def separable(active: Sequence[int], factors: Sequence[tuple[Callable, Callable, Callable]],
              coef: float = 1.0, bound: float = math.inf, name: str = "f") -> TestFunction:
    """``coef * prod_k phi_k(x_k)`` from per-coordinate (phi, phi', phi'') triples."""
    active = tuple(active)
    if len(factors) != len(active):
        raise ValueError("one factor per active coordinate")
    A = len(active)

    def parts(y):
        p0 = np.stack([f[0](y[..., k]) for k, f in enumerate(factors)], axis=-1)
        p1 = np.stack([f[1](y[..., k]) for k, f in enumerate(factors)], axis=-1)
        p2 = np.stack([f[2](y[..., k]) for k, f in enumerate(factors)], axis=-1)
        return p0, p1, p2

    def others(p0, skip):
        keep = [m for m in range(A) if m not in skip]
        return np.prod(p0[..., keep], axis=-1) if keep else np.ones(p0.shape[:-1])

    def value(y):
        return coef * np.prod(parts(y)[0], axis=-1)

    def grad(y):
        p0, p1, _ = parts(y)
        return coef * np.stack([p1[..., k] * others(p0, {k}) for k in range(A)], axis=-1)

    def hess(y):
        p0, p1, p2 = parts(y)
        out = np.empty(y.shape + (A,))
        for k in range(A):
            for m in range(A):
                if k == m:
                    out[..., k, k] = p2[..., k] * others(p0, {k})
                else:
                    out[..., k, m] = p1[..., k] * p1[..., m] * others(p0, {k, m})
        return coef * out

    return TestFunction(active, value, grad, hess, bound, name)


def _power(e: int):
    e = int(e)
    if e < 0:
        raise ValueError("exponents must be non-negative")
    return (
        lambda u: u**e,
        (lambda u: e * u ** (e - 1)) if e >= 1 else (lambda u: np.zeros_like(u)),
        (lambda u: e * (e - 1) * u ** (e - 2)) if e >= 2 else (lambda u: np.zeros_like(u)),
    )


def monomial(powers: dict[int, int], coef: float = 1.0) -> TestFunction:
    """``coef * prod_i x_i**powers[i]``, e.g. ``monomial({0: 2})`` is x_0 squared."""
    active = sorted(powers)
    name = "*".join(f"x{i}^{powers[i]}" for i in active)
    return separable(active, [_power(powers[i]) for i in active], coef,
                     abs(coef) if all(powers[i] == 0 for i in active) else math.inf, name)


def polynomial(terms: Sequence[tuple[float, dict[int, int]]]) -> TestFunction:
    out = None
    for c, p in terms:
        m = monomial(p, c)
        out = m if out is None else out + m
    return out


def _gauss(c: float, w: float):
    def phi(u):
        return np.exp(-(((u - c) / w) ** 2))

    return (
        phi,
        lambda u: -2.0 * (u - c) / w**2 * phi(u),
        lambda u: (4.0 * (u - c) ** 2 / w**4 - 2.0 / w**2) * phi(u),
    )


def gaussian(active: Sequence[int], center: Sequence[float] | float = 0.0,
             width: Sequence[float] | float = 1.0) -> TestFunction:
    """``exp(-sum_k ((x_k - c_k) / w_k)**2)`` on the active coordinates."""
    active = tuple(active)
    cs = np.broadcast_to(np.asarray(center, dtype=float), (len(active),))
    ws = np.broadcast_to(np.asarray(width, dtype=float), (len(active),))
    return separable(active, [_gauss(c, w) for c, w in zip(cs, ws)], 1.0, 1.0, "gauss")


def _bump(c: float, r: float):
    # psi(u) = exp(1 - 1/(1 - u^2)) on |u| < 1, zero outside; smooth with compact support
    def inner(v):
        u = (v - c) / r
        inside = np.abs(u) < 1.0
        s = np.where(inside, 1.0 - u * u, 1.0)
        return u, s, inside

    def scaled(s, k):
        # psi / s^k in log space so the edge of the support neither overflows nor gives 0 * inf
        return np.exp(1.0 - 1.0 / s - k * np.log(s))

    def phi(v):
        u, s, inside = inner(v)
        return np.where(inside, scaled(s, 0), 0.0)

    def dphi(v):
        u, s, inside = inner(v)
        return np.where(inside, -2.0 * u * scaled(s, 2) / r, 0.0)

    def d2phi(v):
        u, s, inside = inner(v)
        val = 4.0 * u * u * scaled(s, 4) - 2.0 * scaled(s, 2) - 8.0 * u * u * scaled(s, 3)
        return np.where(inside, val / r**2, 0.0)

    return phi, dphi, d2phi


def bump(active: Sequence[int], center: Sequence[float] | float = 0.0,
         radius: Sequence[float] | float = 1.0) -> TestFunction:
    """Product of one-dimensional C-infinity bumps supported on ``|x_k - c_k| < r_k``."""
    active = tuple(active)
    cs = np.broadcast_to(np.asarray(center, dtype=float), (len(active),))
    rs = np.broadcast_to(np.asarray(radius, dtype=float), (len(active),))
    return separable(active, [_bump(c, r) for c, r in zip(cs, rs)], 1.0, 1.0, "bump")


def constant(value: float = 1.0) -> TestFunction:
    return TestFunction((), lambda y: np.full(y.shape[:-1], float(value)),
                        lambda y: np.zeros(y.shape), lambda y: np.zeros(y.shape + (0,)),
                        abs(value), f"{value:g}")


def derivative_errors(f: TestFunction, x, h: float = 1e-6) -> tuple[float, float]:
    """Max abs gap between exact and central-difference gradient and Hessian at ``x``."""
    x = np.asarray(x, dtype=float)
    D = x.shape[-1]
    g_fd = np.zeros(D)
    h_fd = np.zeros((D, D))
    eye = np.eye(D)
    for i in range(D):
        g_fd[i] = (f(x + h * eye[i]) - f(x - h * eye[i])) / (2 * h)
        # second derivatives from differences of the exact gradient
        h_fd[:, i] = (f.gradient(x + h * eye[i]) - f.gradient(x - h * eye[i])) / (2 * h)
    return float(np.max(np.abs(g_fd - f.gradient(x)))), float(np.max(np.abs(h_fd - f.hessian(x))))


# a few named functions used by the CLI and acceptance runs
LIBRARY: dict[str, Callable[[], TestFunction]] = {
    "square": lambda: monomial({0: 2}),
    "x_exp": lambda: monomial({0: 1}) * gaussian([0], 0.0, 1.0),
    "cross": lambda: monomial({0: 1, 1: 1}) * gaussian([0, 1], [1.0, 1.0], [1.5, 1.5]),
    "cross_poly": lambda: polynomial([(1.0, {0: 1, 1: 1}), (0.5, {0: 2, 1: 1})]),
    "bump": lambda: bump([0], 0.5, 2.0),
}
