"""Offspring laws, environment laws and their exact moment functionals.

Probabilities are held as :class:`fractions.Fraction` so that every moment of a
finite mixture of finite-support laws is an exact rational number.  Python
floats given as inputs are read through their shortest decimal representation
(``0.3`` means 3/10), which is what makes identities such as
``n * E[m(Z) - 1] == alpha`` hold exactly for the two-point family.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InvalidParameter

PROB_TOL = 1e-12


def as_fraction(x) -> Fraction:
    """Exact rational from an int, Fraction, decimal string or float (via its repr)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise InvalidParameter(f"expected a number, got {x!r}")
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x):
            raise InvalidParameter(f"non-finite number {x!r}")
        return Fraction(repr(float(x)))
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise InvalidParameter(f"cannot parse {x!r} as a number") from exc
    raise InvalidParameter(f"expected a number, got {type(x).__name__}")


def fraction_str(q: Fraction) -> str:
    """Decimal string when the expansion terminates, ``p/q`` otherwise."""
    den = q.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{q.numerator}/{q.denominator}"
    digits = max(twos, fives)
    if digits == 0:
        return str(q.numerator)
    scaled = q * 10**digits
    sign = "-" if scaled < 0 else ""
    s = str(abs(scaled.numerator)).rjust(digits + 1, "0")
    return f"{sign}{s[:-digits]}.{s[-digits:]}"


@dataclass(frozen=True)
class OffspringLaw:
    """Finite probability mass function on the non-negative integers."""

    support: tuple[int, ...]
    probs: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.support) != len(self.probs) or not self.support:
            raise InvalidParameter("offspring law needs matching, non-empty support and probs")
        for k in self.support:
            if not isinstance(k, (int, np.integer)) or k < 0:
                raise InvalidParameter(f"offspring support must be non-negative integers, got {k!r}")
        if any(b <= a for a, b in zip(self.support, self.support[1:])):
            raise InvalidParameter("offspring support must be strictly increasing")
        if any(p < 0 for p in self.probs):
            raise InvalidParameter("offspring probabilities must be non-negative")
        if abs(sum(self.probs) - 1) > PROB_TOL:
            raise InvalidParameter(f"offspring probabilities sum to {float(sum(self.probs))!r}, not 1")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, object]]) -> "OffspringLaw":
        merged: dict[int, Fraction] = {}
        for k, p in pairs:
            k = int(k)
            merged[k] = merged.get(k, Fraction(0)) + as_fraction(p)
        ks = sorted(merged)
        return cls(tuple(ks), tuple(merged[k] for k in ks))

    @classmethod
    def delta(cls, k: int) -> "OffspringLaw":
        return cls((int(k),), (Fraction(1),))

    @property
    def mean_exact(self) -> Fraction:
        return sum((k * p for k, p in zip(self.support, self.probs)), Fraction(0))

    @property
    def variance_exact(self) -> Fraction:
        second = sum((k * k * p for k, p in zip(self.support, self.probs)), Fraction(0))
        return max(second - self.mean_exact**2, Fraction(0))

    def prob(self, k: int) -> Fraction:
        try:
            return self.probs[self.support.index(k)]
        except ValueError:
            return Fraction(0)

    def support_array(self) -> np.ndarray:
        return np.asarray(self.support, dtype=np.int64)

    def prob_array(self) -> np.ndarray:
        return np.array([float(p) for p in self.probs])

    def to_dict(self) -> dict:
        return {"support": list(self.support), "probs": [fraction_str(p) for p in self.probs]}

    @classmethod
    def from_dict(cls, d: dict) -> "OffspringLaw":
        return cls.from_pairs(zip(d["support"], d["probs"]))


def offspring_mean(law: OffspringLaw) -> float:
    return float(law.mean_exact)


def offspring_variance(law: OffspringLaw) -> float:
    return float(law.variance_exact)


def g_n(law: OffspringLaw) -> float:
    """Squared mean gap ``(m(z) - 1)**2``."""
    return float((law.mean_exact - 1) ** 2)


@dataclass(frozen=True)
class EnvironmentLaw:
    """Finite mixture of offspring laws: the law of a fresh environment draw."""

    atoms: tuple[OffspringLaw, ...]
    weights: tuple[Fraction, ...]
    n: int = 1
    beta: Fraction = Fraction(1)

    def __post_init__(self):
        if len(self.atoms) != len(self.weights) or not self.atoms:
            raise InvalidParameter("environment needs matching, non-empty atoms and weights")
        if any(w < 0 for w in self.weights):
            raise InvalidParameter("environment weights must be non-negative")
        if abs(sum(self.weights) - 1) > PROB_TOL:
            raise InvalidParameter(f"environment weights sum to {float(sum(self.weights))!r}, not 1")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParameter(f"scale n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "beta", as_fraction(self.beta))
        if self.beta <= 0:
            raise InvalidParameter("beta must be positive")

    @classmethod
    def from_atoms(cls, atoms: Sequence[tuple[OffspringLaw, object]], n: int = 1, beta=1) -> "EnvironmentLaw":
        return cls(tuple(a for a, _ in atoms), tuple(as_fraction(w) for _, w in atoms), int(n), as_fraction(beta))

    @classmethod
    def constant(cls, law: OffspringLaw, n: int = 1, beta=1) -> "EnvironmentLaw":
        return cls((law,), (Fraction(1),), int(n), as_fraction(beta))

    @property
    def switch_rate(self) -> float:
        """Rate n^2 / beta^2 at which the environment is redrawn."""
        return float(Fraction(self.n**2) / self.beta**2)

    def expect(self, func: Callable[[OffspringLaw], float]) -> float:
        return math.fsum(float(w) * func(a) for a, w in zip(self.atoms, self.weights))

    def weight_array(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights])

    def tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Padded (support, cumulative probability, length) tables for compiled kernels."""
        width = max(len(a.support) for a in self.atoms)
        sup = np.zeros((len(self.atoms), width), dtype=np.int64)
        cum = np.ones((len(self.atoms), width))
        size = np.zeros(len(self.atoms), dtype=np.int64)
        for r, a in enumerate(self.atoms):
            sup[r, : len(a.support)] = a.support
            cum[r, : len(a.support)] = np.cumsum(a.prob_array())
            cum[r, len(a.support) - 1] = 1.0
            size[r] = len(a.support)
        return sup, cum, size

    def to_dict(self) -> dict:
        return {
            "n": int(self.n),
            "beta": fraction_str(self.beta),
            "atoms": [dict(a.to_dict(), weight=fraction_str(w)) for a, w in zip(self.atoms, self.weights)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnvironmentLaw":
        atoms = [(OffspringLaw.from_dict(a), a["weight"]) for a in d["atoms"]]
        return cls.from_atoms(atoms, n=int(d.get("n", 1)), beta=d.get("beta", 1))


def two_point_environment(alpha, sigma_e, n: int, beta=1) -> EnvironmentLaw:
    """Two equally likely laws on {0, 2} with mean gaps ``alpha/n + sigma_e`` and ``alpha/n - sigma_e``.

    Each atom keeps z(0) + z(2) = 1; the first atom is the one with the larger
    mean.  Raises if either atom would have a probability outside [0, 1].
    """
    a, s = as_fraction(alpha), as_fraction(sigma_e)
    if not 0 <= s < 1:
        raise InvalidParameter(f"sigma_e must lie in [0, 1), got {float(s)}")
    if int(n) != n or n < 1:
        raise InvalidParameter(f"n must be a positive integer, got {n!r}")
    half = Fraction(1, 2)
    atoms = []
    for sign in (1, -1):
        z2 = half + a / (2 * n) + sign * s / 2
        z0 = 1 - z2
        if not (0 <= z0 <= 1 and 0 <= z2 <= 1):
            raise InvalidParameter(
                f"two-point environment needs n >= |alpha|/(1 - sigma_e); got z(2)={float(z2)} at n={n}"
            )
        atoms.append((OffspringLaw((0, 2), (z0, z2)), half))
    return EnvironmentLaw.from_atoms(atoms, n=int(n), beta=beta)


@dataclass(frozen=True)
class MomentReport:
    drift_n: float
    var_m: float
    mean_v: float
    pth_moment: float
    p: float
    exact: dict = field(default_factory=dict, compare=False, repr=False)


def moment_report(env: EnvironmentLaw, p) -> MomentReport:
    """Exact moment functionals of one environment draw.

    For integer ``p`` the p-th moment is the signed ``E[(m - 1)**p]``; for
    non-integer ``p`` it is ``E[|m - 1|**p]``.
    """
    if float(p) <= 2:
        raise InvalidParameter(f"moment exponent must exceed 2, got {p}")
    ws = env.weights
    gaps = [a.mean_exact - 1 for a in env.atoms]
    mean_gap = sum((w * d for w, d in zip(ws, gaps)), Fraction(0))
    var_m = sum((w * d * d for w, d in zip(ws, gaps)), Fraction(0)) - mean_gap**2
    mean_v = sum((w * a.variance_exact for w, a in zip(ws, env.atoms)), Fraction(0))
    drift = env.n * mean_gap
    if float(p).is_integer():
        pth = sum((w * d ** int(p) for w, d in zip(ws, gaps)), Fraction(0))
        pth_f = float(pth)
    else:
        pth = None
        pth_f = math.fsum(float(w) * abs(float(d)) ** float(p) for w, d in zip(ws, gaps))
    exact = {"drift_n": drift, "var_m": var_m, "mean_v": mean_v, "pth_moment": pth}
    return MomentReport(float(drift), float(var_m), float(mean_v), pth_f, float(p), exact)


@dataclass(frozen=True)
class DiscreteLaw:
    """Finite-support law on the reals (speed distribution of the walker)."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise InvalidParameter("discrete law needs matching, non-empty values and probs")
        if any(p < 0 for p in self.probs) or abs(math.fsum(self.probs) - 1) > PROB_TOL:
            raise InvalidParameter("discrete law probabilities must be non-negative and sum to 1")
        if not all(math.isfinite(v) for v in self.values):
            raise InvalidParameter("discrete law values must be finite")

    @property
    def mean(self) -> float:
        return math.fsum(v * p for v, p in zip(self.values, self.probs))

    @property
    def variance(self) -> float:
        m = self.mean
        return math.fsum(p * (v - m) ** 2 for v, p in zip(self.values, self.probs))

    def value_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def cumulative(self) -> np.ndarray:
        cum = np.cumsum(np.asarray(self.probs, dtype=float))
        cum[-1] = 1.0
        return cum

    def to_dict(self) -> dict:
        return {"values": list(self.values), "probs": list(self.probs)}

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteLaw":
        return cls(tuple(float(v) for v in d["values"]), tuple(float(p) for p in d["probs"]))


def two_point_speed_law(a: float, sigma: float, n: int) -> DiscreteLaw:
    """Fair law on ``a/n +- sigma/sqrt(2)``: mean a/n, variance sigma^2/2."""
    s = sigma / math.sqrt(2.0)
    return DiscreteLaw((a / n + s, a / n - s), (0.5, 0.5))
