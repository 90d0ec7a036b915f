"""Exact expectations on atom-only models by enumerating every branch.

At an atom with mass ``a < 1`` the no-event branch is an explicit outcome of
probability ``1 - a``.  Trajectories come from the same reference
construction as sampled paths, evaluated on each deterministic branch.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import csv
import io
import itertools
import math

from .expo import PenaltyFamily, exponent_compensator, family_by_name
from .marks import DiscreteLaw
from .models import atom_grid_model
from .numerics import fmt_float
from .pp_core import MarkedPointPath
from .stoch_int import MartingalePath, WeightSpec, build_martingale

DEFAULT_BUDGET = 10 ** 6


class BudgetExceeded(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteModel:
    """Atoms at ``times`` with masses and finite mark laws, integrated against ``weight``."""

    times: tuple
    masses: tuple
    laws: tuple
    weight: WeightSpec | None = None
    budget: int = DEFAULT_BUDGET
    spec: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        laws = self.laws
        if isinstance(laws, DiscreteLaw):
            laws = (laws,) * len(self.times)
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        object.__setattr__(self, "laws", tuple(laws))
        if any(not isinstance(law, DiscreteLaw) for law in self.laws):
            raise TypeError("oracle models need finite mark laws")
        if any(t <= 0 for t in self.times) or list(self.times) != sorted(set(self.times)):
            raise ValueError("atom times must be positive and strictly increasing")
        spec, w = atom_grid_model(self.times, self.masses, self.laws, self.weight)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "spec", spec)

    @property
    def horizon(self) -> float:
        return self.times[-1] if self.times else 1.0

    def branches(self, i: int) -> list[tuple[float | None, float]]:
        """(mark or None for no event, probability) at atom ``i``."""
        a = self.masses[i]
        out = [(float(z), a * float(p)) for z, p in self.laws[i].atoms()]
        if a < 1:
            out.append((None, 1.0 - a))
        return out

    def n_paths(self) -> int:
        return math.prod(len(self.branches(i)) for i in range(len(self.times)))


@dataclass(frozen=True)
class OraclePath:
    prob: float
    marks: tuple
    mp: MartingalePath


def enumerate_paths(model: DiscreteModel) -> list[OraclePath]:
    """Every branch sequence with its exact probability and trajectory."""
    size = model.n_paths()
    if size > model.budget:
        raise BudgetExceeded(f"{size} paths exceed the budget of {model.budget}")
    options = [model.branches(i) for i in range(len(model.times))]
    out = []
    for combo in itertools.product(*options):
        prob = math.prod(p for _, p in combo)
        events = tuple((t, z) for t, (z, _) in zip(model.times, combo) if z is not None)
        path = MarkedPointPath(events, model.horizon)
        out.append(OraclePath(prob, tuple(z for z, _ in combo), build_martingale(model.weight, path, model.spec)))
    return out


def _hits(mp: MartingalePath, event) -> bool:
    for t, m, qv, pqv in zip(mp.jump_times, mp.m_values, mp.qv_values, mp.pqv_values):
        if t > event.horizon:
            break
        if event.kind == "B1":
            if m >= event.x and qv <= event.v2:
                return True
        else:
            level = pqv + event.v2 if event.constraint == "vs_pqv" else event.v2
            if m >= (event.alpha + event.beta * qv) * event.x and qv >= level:
                return True
    return False


def exact_tail(model: DiscreteModel, event, paths=None) -> float:
    paths = enumerate_paths(model) if paths is None else paths
    return math.fsum(p.prob for p in paths if _hits(p.mp, event))


@dataclass(frozen=True)
class ExactMeans:
    ratio: float  # E[exp(X_T) / E(S)_T]
    u: float  # E[exp(X_T - S_T)]
    total_prob: float


def exact_mean_ratio(model: DiscreteModel, lam: float, family, convention: str = "compensator",
                     t: float | None = None, paths=None) -> ExactMeans:
    fam = family_by_name(family) if isinstance(family, str) else family
    paths = enumerate_paths(model) if paths is None else paths
    t = model.horizon if t is None else t
    ratio, u = [], []
    for p in paths:
        v = exponent_compensator(model.spec, model.weight, p.mp, lam, fam, convention).value_at(t)
        ratio.append(p.prob * v["R"])
        u.append(p.prob * v["U"])
    return ExactMeans(math.fsum(ratio), math.fsum(u), math.fsum(p.prob for p in paths))


def exact_moments(model: DiscreteModel, t: float | None = None, paths=None) -> dict:
    """``E[M_t]`` and ``E[QV_t - PQV_t]``, both zero for a martingale."""
    paths = enumerate_paths(model) if paths is None else paths
    t = model.horizon if t is None else t
    vals = [(p.prob, p.mp.value_at(t)) for p in paths]
    return {"mean_m": math.fsum(pr * v[0] for pr, v in vals), "mean_qv_minus_pqv": math.fsum(pr * (v[1] - v[2]) for pr, v in vals)}


def paths_to_csv(paths) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["path", "prob", "marks", "M", "QV", "PQV"])
    for i, p in enumerate(paths):
        marks = " ".join("-" if z is None else fmt_float(z) for z in p.marks)
        m, qv, pqv = p.mp.value_at(p.mp.horizon)
        wr.writerow([i, fmt_float(p.prob), marks, fmt_float(m), fmt_float(qv), fmt_float(pqv)])
    return buf.getvalue()
