"""The purely discontinuous martingale ``M = W * (mu - nu)`` built on one sampled path."""
from __future__ import annotations

from dataclasses import dataclass, field
import bisect
import csv
import io
import math
from typing import Callable

import numpy as np

from .numerics import compensated_cumsum, fmt_float
from .pp_core import CompensatorSpec, MarkedPointPath, ac_segment_integral

DRIFT_MONOTONE = ("nonincreasing_between_jumps", "nondecreasing_between_jumps", "constant", "unknown")

JUMP_FLOOR_TOL = 1e-12


class JumpFloorViolation(ValueError):
    """A jump of M fell below the asserted floor."""


def _identity(x):
    return x


@dataclass(frozen=True)
class WeightSpec:
    """Predictable integrand ``W(t, x, history)``.

    If ``mark_function`` is given, ``W(t, x, h) = mark_function(x)`` and ``w`` is
    ignored; engines use this to vectorise.
    """

    w: Callable | None = None
    jump_floor: float | None = None
    drift_monotone: str = "unknown"
    mark_function: Callable | None = None

    def __post_init__(self):
        if self.w is None and self.mark_function is None:
            raise ValueError("need w or mark_function")
        if self.drift_monotone not in DRIFT_MONOTONE:
            raise ValueError(f"drift_monotone must be one of {DRIFT_MONOTONE}")

    @classmethod
    def of_mark(cls, fn=_identity, **kwargs) -> "WeightSpec":
        return cls(mark_function=fn, **kwargs)

    @property
    def time_homogeneous(self) -> bool:
        return self.mark_function is not None

    @property
    def is_identity(self) -> bool:
        return self.mark_function is _identity

    def __call__(self, t: float, x: float, history=()) -> float:
        if self.mark_function is not None:
            return float(self.mark_function(x))
        return float(self.w(t, x, history))


def identity_weight(**kwargs) -> WeightSpec:
    return WeightSpec.of_mark(_identity, **kwargs)


def hat_w(spec: CompensatorSpec, w: WeightSpec, t: float, history=()) -> float:
    """``int W(t, x) nu({t} x dx)``: mass times the mark-average at an atom, else 0."""
    atom = spec.atom_at(t)
    if atom is None:
        return 0.0
    value = atom.mass * atom.mark_law.expect(lambda x: w(t, x, history))
    if not math.isfinite(value):
        raise ValueError(f"W is not integrable against the atom at t={t}")
    return value


def _atom_pqv(spec, w, atom, history) -> tuple[float, float]:
    """(W-hat, contribution of the atom to <M,M>)."""
    wh = hat_w(spec, w, atom.time, history)
    inner = atom.mass * atom.mark_law.expect(lambda x: (w(atom.time, x, history) - wh) ** 2)
    return wh, inner + (1.0 - atom.mass) * wh * wh


@dataclass(frozen=True)
class MartingalePath:
    """M recorded at its jump times (event times and atom times), with QV and <M,M>.

    ``drift_increments[k]`` is the ac drift on ``(t_{k-1}, t_k)``;
    ``m_values[k] = m_values[k-1] + drift_increments[k] + jump_sizes[k]``.
    """

    jump_times: np.ndarray
    jump_sizes: np.ndarray
    drift_increments: np.ndarray
    m_values: np.ndarray
    qv_values: np.ndarray
    pqv_values: np.ndarray
    is_event: np.ndarray
    horizon: float
    spec: CompensatorSpec = field(repr=False, compare=False)
    weight: WeightSpec = field(repr=False, compare=False)
    path: MarkedPointPath = field(repr=False, compare=False)

    def _last(self, t: float) -> int:
        return bisect.bisect_right(self.jump_times.tolist(), t) - 1

    def _history(self, t: float):
        return self.path.history_before(t) if self.spec.history_dependent or not self.weight.time_homogeneous else ()

    def value_at(self, t: float) -> tuple[float, float, float]:
        """(M_t, QV_t, <M,M>_t), right-continuous."""
        k = self._last(t)
        t_k = self.jump_times[k] if k >= 0 else 0.0
        m = self.m_values[k] if k >= 0 else 0.0
        qv = self.qv_values[k] if k >= 0 else 0.0
        pqv = self.pqv_values[k] if k >= 0 else 0.0
        if t > t_k:
            hist = self._history(t)
            w = self.weight
            th = w.time_homogeneous
            m -= ac_segment_integral(self.spec.ac, t_k, t, hist, lambda s, x: w(s, x, hist), th)
            pqv += ac_segment_integral(self.spec.ac, t_k, t, hist, lambda s, x: w(s, x, hist) ** 2, th)
        return float(m), float(qv), float(pqv)

    def m_at(self, t: float) -> float:
        return self.value_at(t)[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["time", "dM", "M", "QV", "PQV"])
        for row in zip(self.jump_times, self.jump_sizes, self.m_values, self.qv_values, self.pqv_values):
            wr.writerow([fmt_float(v) for v in row])
        return buf.getvalue()


def build_martingale(w: WeightSpec, path: MarkedPointPath, spec: CompensatorSpec) -> MartingalePath:
    """Construct M on ``path``; raises :class:`JumpFloorViolation` if a jump is below ``w.jump_floor``."""
    horizon = path.horizon
    ev_times = [t for t, _ in path.events]
    marks = dict(path.events)
    times = sorted(set(ev_times) | {a.time for a in spec.atoms if a.time <= horizon})
    need_hist = spec.history_dependent or not w.time_homogeneous
    th = w.time_homogeneous
    n = len(times)
    drift = np.zeros(n)
    dm = np.zeros(n)
    dpqv = np.zeros(n)
    is_event = np.zeros(n, dtype=bool)
    prev = 0.0
    n_before = 0
    for k, t in enumerate(times):
        hist = path.events[:n_before] if need_hist else ()
        drift[k] = -ac_segment_integral(spec.ac, prev, t, hist, lambda s, x: w(s, x, hist), th)
        dpqv[k] = ac_segment_integral(spec.ac, prev, t, hist, lambda s, x: w(s, x, hist) ** 2, th)
        atom = spec.atom_at(t)
        wh = 0.0
        if atom is not None:
            wh, atom_pqv = _atom_pqv(spec, w, atom, hist)
            dpqv[k] += atom_pqv
        if t in marks:
            is_event[k] = True
            dm[k] = w(t, marks[t], hist) - wh
            n_before += 1
        else:
            dm[k] = -wh
        if w.jump_floor is not None and dm[k] < w.jump_floor - JUMP_FLOOR_TOL:
            raise JumpFloorViolation(f"jump {dm[k]} at t={t} is below the floor {w.jump_floor}")
        prev = t
    steps = np.empty(2 * n)
    steps[0::2] = drift
    steps[1::2] = dm
    m_values = compensated_cumsum(steps)[1::2] if n else np.zeros(0)
    return MartingalePath(
        jump_times=np.asarray(times, dtype=float),
        jump_sizes=dm,
        drift_increments=drift,
        m_values=m_values,
        qv_values=compensated_cumsum(dm * dm),
        pqv_values=compensated_cumsum(dpqv),
        is_event=is_event,
        horizon=horizon,
        spec=spec,
        weight=w,
        path=path,
    )


def quadratic_variation(mp: MartingalePath, t: float) -> float:
    """``sum_{s <= t} (dM_s)^2``."""
    k = mp._last(t)
    return float(mp.qv_values[k]) if k >= 0 else 0.0


def predictable_qv(mp: MartingalePath, spec: CompensatorSpec, w: WeightSpec, t: float) -> float:
    """``<M,M>_t = (W - W-hat)^2 * nu_t + sum_{s <= t} (1 - a_s) W-hat_s^2``, computed from scratch."""
    path = mp.path
    need_hist = spec.history_dependent or not w.time_homogeneous
    edges = [0.0] + [s for s, _ in path.events if s < t] + [t]
    parts = []
    for i, (lo, hi) in enumerate(zip(edges, edges[1:])):
        hist = path.events[:i] if need_hist else ()
        parts.append(ac_segment_integral(spec.ac, lo, hi, hist, lambda s, x: w(s, x, hist) ** 2, w.time_homogeneous))
    for atom in spec.atoms:
        if atom.time <= t:
            hist = path.history_before(atom.time) if need_hist else ()
            parts.append(_atom_pqv(spec, w, atom, hist)[1])
    return math.fsum(parts)
