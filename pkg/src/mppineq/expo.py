"""Exponent compensators ``S(lambda)``, their Doleans-Dade exponentials and the ratio processes.

For a penalty ``c(lambda)`` put ``X = lambda M - c(lambda) [M,M]``.  The
compensator of ``sum (e^{dX} - 1 - lambda dM)`` is

    S_t = int g(W - What) d(nu^ac) + sum_{atoms s <= t} [ int g(W - What) nu({s}, dx) + (1 - a_s) h(What_s) ]

with ``g(u) = exp(lambda u - c u^2) - 1 - lambda u``.  On the no-event branch
of an atom ``dM = -What``, so the compensator-consistent atom term is
``h(u) = g(-u)``.  The ``"paper"`` convention flips the sign of the quadratic
term inside ``h`` only; it is kept to measure how far it is from being a
compensator.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import bisect
import csv
import io
import math
from typing import Callable

import numpy as np

from .numerics import compensated_cumsum, fmt_float
from .pp_core import CompensatorSpec, ac_segment_integral, sample_path
from .numerics import path_rng
from .stoch_int import MartingalePath, WeightSpec, build_martingale, hat_w

CONVENTIONS = ("compensator", "paper")


class DoleansError(ValueError):
    """Some jump of S is <= -1, so E(S) is not strictly positive."""


@dataclass(frozen=True)
class PenaltyFamily:
    """Quadratic-variation penalty ``c(lambda)`` with its admissible domain."""

    kind: str
    fn: Callable[[float], float]
    lam_max: float = math.inf
    lam_max_open: bool = False
    sign: int = 1

    def c(self, lam: float) -> float:
        self.check(lam)
        return float(self.fn(lam))

    def check(self, lam: float) -> None:
        upper_ok = lam < self.lam_max if self.lam_max_open else lam <= self.lam_max
        if not (lam >= 0 and upper_ok):
            bracket = ")" if self.lam_max_open else "]"
            raise ValueError(f"lambda={lam} outside the {self.kind} domain [0, {self.lam_max}{bracket}")


def _poisson_penalty(lam):
    return -lam - math.log1p(-lam)


def _gauss_penalty(lam):
    return 0.5 * lam * lam


def poissonian() -> PenaltyFamily:
    """``c(lambda) = -lambda - log(1 - lambda) >= 0`` on ``[0, 1)``."""
    return PenaltyFamily("poissonian", _poisson_penalty, 1.0, True)


def gaussian() -> PenaltyFamily:
    """``c(lambda) = lambda^2 / 2``."""
    return PenaltyFamily("gaussian", _gauss_penalty)


def custom(fn, sign: int = 1, lam_max: float = math.inf) -> PenaltyFamily:
    return PenaltyFamily("custom", fn, lam_max, False, sign)


def family_by_name(name: str) -> PenaltyFamily:
    if name == "poissonian":
        return poissonian()
    if name == "gaussian":
        return gaussian()
    raise ValueError(f"unknown penalty family {name!r}")


def _expm1_minus_id(y: float) -> float:
    if abs(y) < 1e-4:
        return y * y * (0.5 + y * (1.0 / 6.0 + y * (1.0 / 24.0 + y / 120.0)))
    return math.expm1(y) - y


def g_fn(u: float, lam: float, c: float) -> float:
    """``exp(lam u - c u^2) - 1 - lam u`` without cancellation near 0."""
    y = lam * u - c * u * u
    return _expm1_minus_id(y) - c * u * u


def h_fn(u: float, lam: float, c: float, convention: str = "compensator") -> float:
    if convention == "compensator":
        return g_fn(-u, lam, c)
    if convention == "paper":
        return g_fn(-u, lam, -c)
    raise ValueError(f"convention must be one of {CONVENTIONS}")


def atom_jump_of_s(spec, w, atom, lam, c, convention, history=()) -> float:
    """``Delta S`` at an atom."""
    wh = hat_w(spec, w, atom.time, history)
    inner = atom.mass * atom.mark_law.expect(lambda x: g_fn(w(atom.time, x, history) - wh, lam, c))
    return inner + (1.0 - atom.mass) * h_fn(wh, lam, c, convention)


def doleans_exponential(s_ac_cum, s_jumps) -> np.ndarray:
    """``E(S)_t = exp(S^ac_t) prod_{s <= t} (1 + Delta S_s)`` at the given times."""
    s_ac_cum = np.asarray(s_ac_cum, dtype=float)
    s_jumps = np.asarray(s_jumps, dtype=float)
    bad = np.flatnonzero(s_jumps <= -1.0)
    if bad.size:
        raise DoleansError(f"exponential hits zero or negative: Delta S = {s_jumps[bad[0]]} at index {bad[0]}")
    return np.exp(s_ac_cum + compensated_cumsum(np.log1p(s_jumps)))


@dataclass(frozen=True)
class ExponentPath:
    times: np.ndarray
    s_ac: np.ndarray  # cumulative ac part at each time
    s_jumps: np.ndarray
    s_values: np.ndarray
    x_values: np.ndarray
    dd_values: np.ndarray
    u_values: np.ndarray  # exp(X) / exp(S)
    r_values: np.ndarray  # exp(X) / E(S)
    lam: float
    c: float
    convention: str
    mp: MartingalePath = field(repr=False, compare=False)

    def value_at(self, t: float) -> dict:
        """S, X, E(S), U, R at an arbitrary time (right-continuous)."""
        k = bisect.bisect_right(self.times.tolist(), t) - 1
        t_k = self.times[k] if k >= 0 else 0.0
        s_ac = self.s_ac[k] if k >= 0 else 0.0
        s = self.s_values[k] if k >= 0 else 0.0
        log_dd = math.log(self.dd_values[k]) if k >= 0 else 0.0
        if t > t_k:
            extra = _ac_exponent(self.mp, t_k, t, self.lam, self.c)
            s_ac += extra
            s += extra
            log_dd += extra
        m, qv, _ = self.mp.value_at(t)
        x = self.lam * m - self.c * qv
        return {"S": s, "S_ac": s_ac, "X": x, "E": math.exp(log_dd), "U": math.exp(x - s), "R": math.exp(x - log_dd)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["time", "S", "X", "E", "U", "R"])
        for row in zip(self.times, self.s_values, self.x_values, self.dd_values, self.u_values, self.r_values):
            wr.writerow([fmt_float(v) for v in row])
        return buf.getvalue()


def _ac_exponent(mp: MartingalePath, a: float, b: float, lam: float, c: float) -> float:
    w = mp.weight
    hist = mp._history(b)
    return ac_segment_integral(mp.spec.ac, a, b, hist, lambda s, x: g_fn(w(s, x, hist), lam, c), w.time_homogeneous)


def exponent_compensator(spec: CompensatorSpec, w: WeightSpec, mp: MartingalePath, lam: float,
                         family: PenaltyFamily, convention: str = "compensator") -> ExponentPath:
    """Build S(lambda), X, E(S) and both ratio processes along ``mp``."""
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    c = family.c(lam)
    path = mp.path
    need_hist = spec.history_dependent or not w.time_homogeneous
    n = len(mp.jump_times)
    ac_inc = np.zeros(n)
    jumps = np.zeros(n)
    prev = 0.0
    ev_idx = 0
    for k, t in enumerate(mp.jump_times):
        hist = path.events[:ev_idx] if need_hist else ()
        ac_inc[k] = ac_segment_integral(spec.ac, prev, t, hist, lambda s, x: g_fn(w(s, x, hist), lam, c), w.time_homogeneous)
        atom = spec.atom_at(t)
        if atom is not None:
            jumps[k] = atom_jump_of_s(spec, w, atom, lam, c, convention, hist)
        if mp.is_event[k]:
            ev_idx += 1
        prev = t
    s_ac = compensated_cumsum(ac_inc)
    steps = np.empty(2 * n)
    steps[0::2] = ac_inc
    steps[1::2] = jumps
    s_values = compensated_cumsum(steps)[1::2] if n else np.zeros(0)
    dd = doleans_exponential(s_ac, jumps)
    x = lam * mp.m_values - c * mp.qv_values
    return ExponentPath(
        times=mp.jump_times.copy(), s_ac=s_ac, s_jumps=jumps, s_values=s_values, x_values=x,
        dd_values=dd, u_values=np.exp(x - s_values), r_values=np.exp(x - np.log(dd)) if n else np.zeros(0),
        lam=float(lam), c=c, convention=convention, mp=mp,
    )


def doleans(ep: ExponentPath) -> np.ndarray:
    return doleans_exponential(ep.s_ac, ep.s_jumps)


def dd_residual(ep: ExponentPath) -> float:
    """Largest violation of ``dE = E_- dS`` across jumps and of ``d log E = dS^ac`` across segments."""
    e = ep.dd_values
    if not len(e):
        return 0.0
    ac_inc = np.diff(np.concatenate([[0.0], ep.s_ac]))
    e_prev = np.concatenate([[1.0], e[:-1]])
    e_left = e_prev * np.exp(ac_inc)
    seg = np.abs(np.log(e_left) - np.log(e_prev) - ac_inc)
    jump = np.abs(e - e_left - e_left * ep.s_jumps)
    return float(max(seg.max(), jump.max()))


def ratio_processes(mp: MartingalePath, ep: ExponentPath, lam: float, family: PenaltyFamily):
    """(U, R) at the jump times: ``U = e^X / e^S`` and ``R = e^X / E(S)``."""
    c = family.c(lam)
    x = lam * mp.m_values - c * mp.qv_values
    return np.exp(x - ep.s_values), np.exp(x - np.log(doleans(ep)))


@dataclass(frozen=True)
class SCheckReport:
    max_value: float
    witness: tuple | None  # (lambda, t, path index) of the maximum
    n_paths: int
    tol: float = 1e-12

    @property
    def passed(self) -> bool:
        return self.max_value <= self.tol

    def to_dict(self) -> dict:
        return {"max_value": self.max_value, "witness": self.witness, "n_paths": self.n_paths, "passed": self.passed}


def check_s_nonpositive(spec: CompensatorSpec, w: WeightSpec, lam_grid, t_grid, n_paths: int = 20, seed: int = 0,
                        convention: str = "compensator") -> SCheckReport:
    """Largest value of the Gaussian-penalty exponent over sampled paths and grid points."""
    lam_grid = list(lam_grid)
    t_grid = list(t_grid)
    if not lam_grid or not t_grid:
        raise ValueError("grids must be nonempty")
    horizon = max(t_grid)
    fam = gaussian()
    best = -math.inf
    witness = None
    for i in range(n_paths):
        path = sample_path(spec, horizon, path_rng(seed, i))
        mp = build_martingale(WeightSpec(w.w, None, w.drift_monotone, w.mark_function), path, spec)
        for lam in lam_grid:
            ep = exponent_compensator(spec, w, mp, lam, fam, convention)
            for t in t_grid:
                v = ep.value_at(t)["S"]
                if v > best:
                    best, witness = v, (float(lam), float(t), i)
    return SCheckReport(float(best), witness, n_paths)
