"""Model builders: compound Poisson, deterministic-atom grids, and law diagnostics."""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .marks import DiscreteLaw, MarkLaw, UniformLaw, point_mass, rademacher, two_point, uniform, finite_discrete
from .numerics import quad
from .pp_core import AbsContSpec, AtomSpec, CompensatorSpec, ConstantIntensity, zero_ac
from .stoch_int import WeightSpec, identity_weight

__all__ = [
    "compound_poisson_model", "atom_grid_model", "heavy_on_left_check", "hl2_condition_check",
    "rademacher", "two_point", "uniform", "point_mass", "finite_discrete",
]

MEAN_TOL = 1e-12


def compound_poisson_model(kappa: float, law: MarkLaw, *, allow_nonzero_mean: bool = False,
                           jump_floor: float | None = None) -> tuple[CompensatorSpec, WeightSpec]:
    """Rate-``kappa`` compound Poisson marks with ``W(t, x) = x``, so ``M_t = Y_t - kappa t E[eta]``."""
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    mean = law.mean
    if abs(mean) > MEAN_TOL and not allow_nonzero_mean:
        raise ValueError(f"mark law has mean {mean}; pass allow_nonzero_mean=True to accept it")
    if abs(mean) <= MEAN_TOL:
        drift, hint = "constant", "zero_drift"
    elif mean > 0:
        drift, hint = "nonincreasing_between_jumps", "nonneg_weight"
    else:
        drift, hint = "nondecreasing_between_jumps", "nonpos_weight"
    spec = CompensatorSpec(AbsContSpec(ConstantIntensity(float(kappa)), float(kappa), law), (), hint)
    return spec, identity_weight(jump_floor=jump_floor, drift_monotone=drift)


def atom_grid_model(times, masses, laws, w: WeightSpec | None = None) -> tuple[CompensatorSpec, WeightSpec]:
    """Pure-atom compensator: a jump at ``times[i]`` with probability ``masses[i]``, mark law ``laws[i]``.

    With every mass equal to 1 this embeds a discrete-time martingale.
    """
    times = [float(t) for t in times]
    masses = [float(m) for m in masses]
    if isinstance(laws, (DiscreteLaw, UniformLaw)):
        laws = [laws] * len(times)
    laws = list(laws)
    if not len(times) == len(masses) == len(laws):
        raise ValueError("times, masses and laws must have equal length")
    for m in masses:
        if not 0 < m <= 1:
            raise ValueError(f"atom mass {m} outside (0, 1]")
    atoms = tuple(AtomSpec(t, m, law) for t, m, law in zip(times, masses, laws))
    spec = CompensatorSpec(zero_ac(), atoms, "zero_drift")
    if w is None:
        w = identity_weight(drift_monotone="constant")
    return spec, w


@dataclass(frozen=True)
class LawVerdict:
    passed: bool
    values: tuple[tuple[float, float], ...]  # (grid point, statistic)
    first_violation: float | None

    def __bool__(self):
        return self.passed


def truncated_mean(law: MarkLaw, a: float) -> float:
    """``E[min(|xi|, a) sign(xi)]``."""
    def t_a(x):
        return math.copysign(min(abs(x), a), x) if x != 0 else 0.0

    if isinstance(law, DiscreteLaw):
        return law.expect(t_a)
    pts = [p for p in (-a, 0.0, a) if law.support_min < p < law.support_max]
    return quad(t_a, law.support_min, law.support_max, points=pts or None) / (law.support_max - law.support_min)


def heavy_on_left_check(law: MarkLaw, a_grid=None) -> LawVerdict:
    """Check ``E[T_a(xi)] <= 0`` for every ``a`` in the grid.

    For discrete laws the default grid is the set of support magnitudes plus a
    point below the smallest one; ``E[T_a]`` is piecewise linear in between, so
    this grid is exhaustive.
    """
    if abs(law.mean) > MEAN_TOL:
        raise ValueError("heavy-on-left is defined for zero-mean laws")
    if a_grid is None:
        if isinstance(law, DiscreteLaw):
            mags = sorted({abs(v) for v, _ in law.atoms() if v != 0})
            a_grid = ([0.5 * mags[0]] if mags else []) + mags
        else:
            a_grid = np.linspace(0.0, max(abs(law.support_min), abs(law.support_max)), 51)[1:]
    values = tuple((float(a), truncated_mean(law, float(a))) for a in a_grid)
    bad = [a for a, v in values if v > MEAN_TOL]
    return LawVerdict(not bad, values, bad[0] if bad else None)


def hl2_integral(law: MarkLaw, lam: float) -> float:
    return law.expect(lambda x: math.exp(lam * x - 0.5 * lam * lam * x * x))


def hl2_condition_check(law: MarkLaw, lambda_grid=None, tol: float = 1e-12) -> LawVerdict:
    """Check ``int exp(lam x - lam^2 x^2 / 2) F(dx) <= 1`` on the grid."""
    if lambda_grid is None:
        lambda_grid = np.linspace(0.0, 5.0, 101)
    values = tuple((float(lam), hl2_integral(law, float(lam))) for lam in lambda_grid)
    bad = [lam for lam, v in values if v > 1.0 + tol]
    return LawVerdict(not bad, values, bad[0] if bad else None)
