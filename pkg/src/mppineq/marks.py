"""Probability laws for the marks of a point process."""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .numerics import quad


@dataclass(frozen=True)
class DiscreteLaw:
    """Finite discrete law on the real line."""

    values: tuple[float, ...]
    probs: tuple[float, ...]
    kind: str = "finite_discrete"

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("values and probs must be nonempty and of equal length")
        if any(p < 0 for p in self.probs):
            raise ValueError("negative probability")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {math.fsum(self.probs)}, not 1")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("non-finite support point")

    @property
    def mean(self) -> float:
        return math.fsum(p * v for v, p in zip(self.values, self.probs))

    @property
    def second_moment(self) -> float:
        return math.fsum(p * v * v for v, p in zip(self.values, self.probs))

    @property
    def support_min(self) -> float:
        return min(v for v, p in zip(self.values, self.probs) if p > 0)

    @property
    def support_max(self) -> float:
        return max(v for v, p in zip(self.values, self.probs) if p > 0)

    def atoms(self):
        """Support points with positive probability, as (value, prob) pairs."""
        return [(v, p) for v, p in zip(self.values, self.probs) if p > 0]

    def expect(self, fn) -> float:
        return math.fsum(p * float(fn(v)) for v, p in self.atoms())

    def sample(self, rng: np.random.Generator, size=None):
        vals = np.asarray(self.values, dtype=float)
        if len(vals) == 1:
            return vals[0] if size is None else np.full(size, vals[0])
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        u = rng.random(size)
        idx = np.searchsorted(cdf, u, side="right")
        idx = np.minimum(idx, len(vals) - 1)
        return vals[idx] if size is not None else float(vals[idx])


@dataclass(frozen=True)
class UniformLaw:
    """Uniform law on ``[a, b]``."""

    a: float
    b: float
    kind: str = field(default="uniform", init=False)

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("uniform law needs b > a")

    @property
    def mean(self) -> float:
        return 0.5 * (self.a + self.b)

    @property
    def second_moment(self) -> float:
        return (self.a ** 2 + self.a * self.b + self.b ** 2) / 3.0

    @property
    def support_min(self) -> float:
        return self.a

    @property
    def support_max(self) -> float:
        return self.b

    def expect(self, fn) -> float:
        return quad(lambda x: float(fn(x)), self.a, self.b) / (self.b - self.a)

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        out = self.a + (self.b - self.a) * u
        return out if size is not None else float(out)


MarkLaw = DiscreteLaw | UniformLaw


def rademacher() -> DiscreteLaw:
    return DiscreteLaw((-1.0, 1.0), (0.5, 0.5), kind="rademacher")


def two_point(p: float, x_minus: float, x_plus: float) -> DiscreteLaw:
    """``x_minus`` with probability ``p``, ``x_plus`` with probability ``1 - p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if not x_minus < x_plus:
        raise ValueError("two_point needs x_minus < x_plus")
    return DiscreteLaw((float(x_minus), float(x_plus)), (float(p), 1.0 - float(p)), kind="two_point")


def point_mass(x: float) -> DiscreteLaw:
    return DiscreteLaw((float(x),), (1.0,), kind="finite_discrete")


def finite_discrete(pairs) -> DiscreteLaw:
    pairs = list(pairs)
    return DiscreteLaw(tuple(float(v) for v, _ in pairs), tuple(float(p) for _, p in pairs))


def uniform(a: float, b: float) -> UniformLaw:
    return UniformLaw(float(a), float(b))


def law_from_config(cfg: dict) -> MarkLaw:
    """Build a mark law from a JSON-compatible mapping."""
    kind = cfg.get("kind")
    if kind == "rademacher":
        return rademacher()
    if kind == "two_point":
        return two_point(cfg["p"], cfg["x_minus"], cfg["x_plus"])
    if kind == "uniform":
        return uniform(cfg["a"], cfg["b"])
    if kind == "point_mass":
        return point_mass(cfg["x"])
    if kind == "finite_discrete":
        return finite_discrete(cfg["pairs"])
    raise ValueError(f"unknown mark law kind {kind!r}")


def law_to_config(law: MarkLaw) -> dict:
    if isinstance(law, UniformLaw):
        return {"kind": "uniform", "a": law.a, "b": law.b}
    return {"kind": "finite_discrete", "pairs": [[v, p] for v, p in zip(law.values, law.probs)]}
