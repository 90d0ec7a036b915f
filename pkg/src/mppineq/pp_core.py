"""Marked point processes with an absolutely continuous compensator plus predictable atoms.

The compensator is ``nu(dt, dx) = intensity(t) F_t(dx) dt + sum_s mass_s G_s(dx) delta_s(dt)``.
Paths are sampled exactly: the absolutely continuous part by thinning a
homogeneous Poisson process of rate ``intensity_majorant``, each atom by an
independent Bernoulli(mass) trial.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import bisect
import csv
import io
import math
from typing import Any, Callable, Sequence

import numpy as np

from .marks import DiscreteLaw, MarkLaw, UniformLaw, law_from_config, law_to_config
from .numerics import as_rng, fmt_float, quad

History = Sequence[tuple[float, float]]

DRIFT_SIGN_HINTS = ("nonneg_weight", "nonpos_weight", "zero_drift", "unknown")


class MajorantViolation(RuntimeError):
    """The intensity exceeded its declared majorant during thinning."""


# -- intensities --------------------------------------------------------------

@dataclass(frozen=True)
class ConstantIntensity:
    rate: float
    history_dependent: bool = field(default=False, init=False)

    def __call__(self, t: float, history: History = ()) -> float:
        return self.rate

    def integral(self, a: float, b: float, history: History = ()) -> float:
        return self.rate * (b - a)

    def breakpoints(self, a: float, b: float):
        return []


@dataclass(frozen=True)
class PiecewiseConstantIntensity:
    """Rate ``rates[i]`` on ``[knots[i], knots[i+1])``; the last rate extends to infinity."""

    knots: tuple[float, ...]
    rates: tuple[float, ...]
    history_dependent: bool = field(default=False, init=False)

    def __post_init__(self):
        if len(self.knots) != len(self.rates) or not self.knots or self.knots[0] != 0.0:
            raise ValueError("knots must start at 0 and match rates in length")
        if any(b <= a for a, b in zip(self.knots, self.knots[1:])):
            raise ValueError("knots must be strictly increasing")

    def __call__(self, t: float, history: History = ()) -> float:
        i = bisect.bisect_right(self.knots, t) - 1
        return self.rates[max(i, 0)]

    def integral(self, a: float, b: float, history: History = ()) -> float:
        edges = [a] + [k for k in self.knots if a < k < b] + [b]
        return math.fsum(self(lo) * (hi - lo) for lo, hi in zip(edges, edges[1:]))

    def breakpoints(self, a: float, b: float):
        return [k for k in self.knots if a < k < b]


@dataclass(frozen=True)
class FunctionIntensity:
    """Arbitrary intensity ``fn(t, history)``; integrals fall back to quadrature."""

    fn: Callable[[float, History], float]
    history_dependent: bool = False

    def __call__(self, t: float, history: History = ()) -> float:
        return float(self.fn(t, history))

    def integral(self, a: float, b: float, history: History = ()) -> float:
        return quad(lambda s: self.fn(s, history), a, b)

    def breakpoints(self, a: float, b: float):
        return []


def as_intensity(obj):
    if hasattr(obj, "integral") and hasattr(obj, "history_dependent"):
        return obj
    if callable(obj):
        return FunctionIntensity(obj)
    return ConstantIntensity(float(obj))


# -- compensator ----------------------------------------------------------------

@dataclass(frozen=True)
class AtomSpec:
    """A predictable atom: a jump occurs at ``time`` with probability ``mass``."""

    time: float
    mass: float
    mark_law: MarkLaw


@dataclass(frozen=True)
class AbsContSpec:
    intensity: Any
    intensity_majorant: float
    mark_law: Any  # MarkLaw, or callable (t, history) -> MarkLaw

    def __post_init__(self):
        object.__setattr__(self, "intensity", as_intensity(self.intensity))

    def law_at(self, t: float, history: History = ()) -> MarkLaw:
        if isinstance(self.mark_law, (DiscreteLaw, UniformLaw)):
            return self.mark_law
        return self.mark_law(t, history)

    @property
    def marks_time_homogeneous(self) -> bool:
        return isinstance(self.mark_law, (DiscreteLaw, UniformLaw))

    @property
    def is_zero(self) -> bool:
        return isinstance(self.intensity, ConstantIntensity) and self.intensity.rate == 0.0


@dataclass(frozen=True)
class CompensatorSpec:
    ac: AbsContSpec
    atoms: tuple[AtomSpec, ...] = ()
    drift_sign_hint: str = "unknown"

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        if self.drift_sign_hint not in DRIFT_SIGN_HINTS:
            raise ValueError(f"drift_sign_hint must be one of {DRIFT_SIGN_HINTS}")

    @property
    def atom_times(self) -> tuple[float, ...]:
        return tuple(a.time for a in self.atoms)

    def atom_at(self, t: float) -> AtomSpec | None:
        times = self.atom_times
        i = bisect.bisect_left(times, t)
        if i < len(times) and times[i] == t:
            return self.atoms[i]
        return None

    @property
    def history_dependent(self) -> bool:
        return self.ac.intensity.history_dependent or not self.ac.marks_time_homogeneous


def zero_ac() -> AbsContSpec:
    return AbsContSpec(ConstantIntensity(0.0), 0.0, DiscreteLaw((0.0,), (1.0,)))


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_compensator(spec: CompensatorSpec, horizon: float | None = None, n_probe: int = 201) -> ValidationReport:
    """Collect every structural violation; never raises."""
    out = []
    for a in spec.atoms:
        if a.mass > 1:
            out.append(f"atom mass > 1 at t={a.time}")
        elif not a.mass > 0:
            out.append(f"atom mass <= 0 at t={a.time}")
        if not a.time > 0:
            out.append(f"atom time must be positive, got {a.time}")
    times = spec.atom_times
    for s, t in zip(times, times[1:]):
        if s == t:
            out.append(f"duplicate atom time {t}")
        elif t < s:
            out.append(f"atoms not sorted: {s} before {t}")
    if horizon is None:
        horizon = max([10.0] + [2.0 * t for t in times])
    lam_bar = spec.ac.intensity_majorant
    if lam_bar < 0:
        out.append("negative intensity majorant")
    for t in np.linspace(0.0, horizon, n_probe):
        rate = spec.ac.intensity(float(t), ())
        if rate < 0:
            out.append(f"negative intensity at t={t:g}")
            break
        if rate > lam_bar:
            out.append(f"majorant violated at t={t:g}")
            break
    return ValidationReport(tuple(out))


# -- paths ------------------------------------------------------------------------

@dataclass(frozen=True)
class MarkedPointPath:
    events: tuple[tuple[float, float], ...]
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "events", tuple((float(t), float(z)) for t, z in self.events))
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        prev = 0.0
        for t, _ in self.events:
            if not prev < t <= self.horizon:
                raise ValueError(f"event times must be strictly increasing in (0, horizon], got {t}")
            prev = t

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.events], dtype=float)

    @property
    def marks(self) -> np.ndarray:
        return np.array([z for _, z in self.events], dtype=float)

    def count(self, t: float) -> int:
        return bisect.bisect_right([e[0] for e in self.events], t)

    def history_before(self, t: float) -> tuple[tuple[float, float], ...]:
        return tuple(e for e in self.events if e[0] < t)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "mark"])
        for t, z in self.events:
            w.writerow([fmt_float(t), fmt_float(z)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, horizon: float) -> "MarkedPointPath":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["time", "mark"]:
            raise ValueError("expected header 'time,mark'")
        return cls(tuple((float(t), float(z)) for t, z in rows[1:]), horizon)


def sample_path(spec: CompensatorSpec, horizon: float, seed) -> MarkedPointPath:
    """Draw one path on ``(0, horizon]``; a pure function of ``(spec, horizon, seed)``."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    rng = as_rng(seed)
    ac = spec.ac
    lam_bar = float(ac.intensity_majorant)
    hist_dep = spec.history_dependent
    atoms = [a for a in spec.atoms if a.time <= horizon]
    events: list[tuple[float, float]] = []
    ai = 0
    cand = rng.exponential(1.0 / lam_bar) if lam_bar > 0 else math.inf
    while True:
        next_atom = atoms[ai].time if ai < len(atoms) else math.inf
        if next_atom <= cand and next_atom <= horizon:
            atom = atoms[ai]
            ai += 1
            if rng.random() < atom.mass:
                events.append((atom.time, float(atom.mark_law.sample(rng))))
            continue
        if cand > horizon:
            break
        hist = tuple(events) if hist_dep else ()
        rate = ac.intensity(cand, hist)
        if rate > lam_bar * (1.0 + 1e-12) or rate < 0:
            raise MajorantViolation(f"majorant violated: intensity {rate} at t={cand} exceeds {lam_bar}")
        if rng.random() * lam_bar < rate:
            events.append((cand, float(ac.law_at(cand, hist).sample(rng))))
        cand += rng.exponential(1.0 / lam_bar)
    return MarkedPointPath(tuple(events), horizon)


def ac_segment_integral(ac: AbsContSpec, a: float, b: float, history: History = (), per_mark=None,
                        time_homogeneous: bool = False) -> float:
    """``int_a^b intensity(s) E_{F_s}[per_mark(s, x)] ds`` with the history frozen on the segment.

    ``per_mark=None`` integrates the intensity alone.  If ``per_mark`` ignores
    time, the mark law is fixed and the intensity has an exact integral, the
    result factorises and no quadrature is done.
    """
    if b <= a or ac.is_zero:
        return 0.0
    intensity = ac.intensity
    if per_mark is None:
        return intensity.integral(a, b, history)
    if time_homogeneous and ac.marks_time_homogeneous and not isinstance(intensity, FunctionIntensity):
        return ac.mark_law.expect(lambda x: per_mark(a, x)) * intensity.integral(a, b, history)

    def integrand(s):
        return intensity(s, history) * ac.law_at(s, history).expect(lambda x: per_mark(s, x))

    pts = intensity.breakpoints(a, b)
    return quad(integrand, a, b, points=pts or None)


def cumulative_A(spec: CompensatorSpec, t: float, path: MarkedPointPath | None = None) -> float:
    """``A_t = nu([0, t] x R)``: integrated intensity plus atom masses up to ``t``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    atoms = math.fsum(a.mass for a in spec.atoms if a.time <= t)
    if spec.ac.intensity.history_dependent:
        if path is None:
            raise ValueError("history-dependent intensity needs the path")
        edges = [0.0] + [s for s, _ in path.events if s < t] + [t]
        ac = math.fsum(
            spec.ac.intensity.integral(lo, hi, path.history_before(hi))
            for lo, hi in zip(edges, edges[1:])
        )
    else:
        ac = spec.ac.intensity.integral(0.0, t, ())
    return ac + atoms


# -- configuration ------------------------------------------------------------

def intensity_from_config(cfg) -> Any:
    if isinstance(cfg, (int, float)):
        return ConstantIntensity(float(cfg))
    kind = cfg.get("kind")
    if kind == "constant":
        return ConstantIntensity(float(cfg["rate"]))
    if kind == "piecewise_constant":
        return PiecewiseConstantIntensity(tuple(map(float, cfg["knots"])), tuple(map(float, cfg["rates"])))
    raise ValueError(f"unknown intensity kind {kind!r}")


def spec_from_config(cfg: dict) -> CompensatorSpec:
    """Build a spec from a JSON-compatible mapping (see README for the schema)."""
    ac_cfg = cfg.get("ac")
    if ac_cfg is None:
        ac = zero_ac()
    else:
        intensity = intensity_from_config(ac_cfg["intensity"])
        majorant = ac_cfg.get("majorant")
        if majorant is None:
            majorant = intensity.rate if isinstance(intensity, ConstantIntensity) else max(intensity.rates)
        ac = AbsContSpec(intensity, float(majorant), law_from_config(ac_cfg["marks"]))
    atoms = tuple(
        AtomSpec(float(a["time"]), float(a["mass"]), law_from_config(a["marks"])) for a in cfg.get("atoms", [])
    )
    return CompensatorSpec(ac, atoms, cfg.get("drift_sign_hint", "unknown"))


def spec_to_config(spec: CompensatorSpec) -> dict:
    inten = spec.ac.intensity
    if isinstance(inten, ConstantIntensity):
        icfg = {"kind": "constant", "rate": inten.rate}
    elif isinstance(inten, PiecewiseConstantIntensity):
        icfg = {"kind": "piecewise_constant", "knots": list(inten.knots), "rates": list(inten.rates)}
    else:
        raise ValueError("only constant and piecewise-constant intensities serialise")
    if not spec.ac.marks_time_homogeneous:
        raise ValueError("history-dependent mark laws do not serialise")
    return {
        "ac": {"intensity": icfg, "majorant": spec.ac.intensity_majorant, "marks": law_to_config(spec.ac.mark_law)},
        "atoms": [{"time": a.time, "mass": a.mass, "marks": law_to_config(a.mark_law)} for a in spec.atoms],
        "drift_sign_hint": spec.drift_sign_hint,
    }
