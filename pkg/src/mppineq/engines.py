"""Batch samplers producing padded jump tables of (M, QV, <M,M>) for many paths at once.

Every engine answers the same questions about a batch: the jump table, the
values at a probe time, and the exponent processes at a probe time.  Paths are
split into fixed-size blocks; batch engines draw one counter-based stream per
block, the generic engine one stream per path.  Either way the result is a
function of ``(seed, path index)`` alone, not of how blocks are scheduled.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .coalescent import chain_tables, psi, psi2, simulate_block_counting_batch, t0_for_v0, v_of_t
from .expo import PenaltyFamily, atom_jump_of_s, exponent_compensator, g_fn, gaussian, check_s_nonpositive
from .marks import DiscreteLaw, UniformLaw
from .numerics import block_rng, compensated_cumsum_rows, path_rng
from .pp_core import CompensatorSpec, ConstantIntensity, sample_path
from .stoch_int import JUMP_FLOOR_TOL, JumpFloorViolation, WeightSpec, build_martingale, hat_w

BLOCK_SIZE = 4096


@dataclass
class JumpBatch:
    """Padded ``(n, J)`` jump table; entries beyond ``count[i]`` are padding (time ``inf``)."""

    times: np.ndarray
    dm: np.ndarray
    m: np.ndarray
    qv: np.ndarray
    pqv: np.ndarray
    count: np.ndarray
    horizon: float
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.times.shape[0]

    @property
    def mask(self) -> np.ndarray:
        return np.arange(self.times.shape[1])[None, :] < self.count[:, None]

    def truncate(self, horizon: float) -> "JumpBatch":
        """The same paths seen on ``(0, horizon]``."""
        if horizon >= self.horizon:
            return self
        count = (self.times <= horizon).sum(axis=1)
        return JumpBatch(self.times, self.dm, self.m, self.qv, self.pqv, count, horizon, self.extra)


def _at_count(arr: np.ndarray, count: np.ndarray, empty: float = 0.0) -> np.ndarray:
    idx = np.maximum(count - 1, 0)
    out = arr[np.arange(arr.shape[0]), idx] if arr.shape[1] else np.zeros(arr.shape[0])
    return np.where(count > 0, out, empty)


def _pack(rows_times, rows_dm, rows_m, rows_qv, rows_pqv, horizon) -> JumpBatch:
    n = len(rows_times)
    width = max([len(r) for r in rows_times] + [0])
    times = np.full((n, width), np.inf)
    dm = np.zeros((n, width))
    m = np.full((n, width), np.nan)
    qv = np.full((n, width), np.nan)
    pqv = np.full((n, width), np.nan)
    count = np.zeros(n, dtype=np.int64)
    for i in range(n):
        c = len(rows_times[i])
        count[i] = c
        times[i, :c] = rows_times[i]
        dm[i, :c] = rows_dm[i]
        m[i, :c] = rows_m[i]
        qv[i, :c] = rows_qv[i]
        pqv[i, :c] = rows_pqv[i]
    return JumpBatch(times, dm, m, qv, pqv, count, horizon)


class HypothesisError(ValueError):
    """A model does not satisfy the hypothesis of the inequality being certified."""


# -- engines built on a compensator spec ------------------------------------------

@dataclass
class SpecEngine:
    """Common surface of engines built from ``(CompensatorSpec, WeightSpec)``."""

    spec: CompensatorSpec
    weight: WeightSpec

    time_origin = 0.0

    @property
    def drift_monotone(self) -> str:
        return self.weight.drift_monotone

    @property
    def jump_floor(self):
        return self.weight.jump_floor


@dataclass
class CompoundPoissonEngine(SpecEngine):
    """Constant intensity, fixed mark law, mark-only weight, no atoms."""

    chunk: int = 16

    def __post_init__(self):
        self.kappa = self.spec.ac.intensity.rate
        self.law = self.spec.ac.mark_law
        f = self.weight.mark_function
        self.f = f
        self.mean_f = self.law.expect(lambda x: float(f(x)))
        self.m2_f = self.law.expect(lambda x: float(f(x)) ** 2)

    def sample(self, seed: int, block: int, n: int, horizon: float, first_index: int = 0) -> JumpBatch:
        rng = block_rng(seed, block)
        t_cols, z_cols = [], []
        last = np.zeros(n)
        # Chunks of gaps are drawn until every row has passed the horizon, so a
        # longer horizon only appends chunks and never changes earlier draws.
        while True:
            gaps = rng.exponential(1.0 / self.kappa, size=(n, self.chunk))
            marks = self.law.sample(rng, (n, self.chunk))
            t = last[:, None] + np.cumsum(gaps, axis=1)
            t_cols.append(t)
            z_cols.append(marks)
            last = t[:, -1]
            if last.min() > horizon:
                break
        times = np.concatenate(t_cols, axis=1)
        marks = np.concatenate(z_cols, axis=1)
        count = (times <= horizon).sum(axis=1)
        width = int(count.max()) if n else 0
        times = times[:, :width].copy()
        marks = marks[:, :width]
        mask = np.arange(width)[None, :] < count[:, None]
        times[~mask] = np.inf
        dm = np.where(mask, np.asarray(self.f(marks), dtype=float), 0.0)
        cum = compensated_cumsum_rows(dm)
        m = np.where(mask, cum - self.kappa * self.mean_f * np.where(mask, times, 0.0), np.nan)
        qv = np.where(mask, compensated_cumsum_rows(dm * dm), np.nan)
        pqv = np.where(mask, self.kappa * self.m2_f * np.where(mask, times, 0.0), np.nan)
        return JumpBatch(times, dm, m, qv, pqv, count, horizon, {"cum_dm": cum})

    def values_at(self, batch: JumpBatch, t: float):
        c = (batch.times <= t).sum(axis=1)
        m = _at_count(batch.extra["cum_dm"], c) - self.kappa * self.mean_f * t
        return m, _at_count(batch.qv, c), np.full(batch.n, self.kappa * self.m2_f * t)

    def exponent_at(self, batch: JumpBatch, lam: float, family: PenaltyFamily, convention: str, t: float):
        c = family.c(lam)
        f = self.f
        s = self.kappa * t * self.law.expect(lambda x: g_fn(float(f(x)), lam, c))
        m, qv, _ = self.values_at(batch, t)
        return {"S": np.full(batch.n, s), "logE": np.full(batch.n, s), "X": lam * m - c * qv}

    def s_nonpositive(self, lam_grid, t_grid, seed: int = 0, convention: str = "compensator"):
        f = self.f
        best, witness = -math.inf, None
        for lam in lam_grid:
            c = gaussian().c(lam)
            per_time = self.kappa * self.law.expect(lambda x: g_fn(float(f(x)), lam, c))
            for t in t_grid:
                if per_time * t > best:
                    best, witness = per_time * t, (float(lam), float(t), None)
        return best, witness


@dataclass
class AtomEngine(SpecEngine):
    """Pure-atom compensator with a mark-only weight: every atom is a Bernoulli trial."""

    def __post_init__(self):
        f = self.weight.mark_function
        self.f = f
        self.atoms = list(self.spec.atoms)
        self.what = np.array([hat_w(self.spec, self.weight, a.time) for a in self.atoms])
        self.pqv_inc = np.array([
            a.mass * a.mark_law.expect(lambda x: (float(f(x)) - wh) ** 2) + (1 - a.mass) * wh * wh
            for a, wh in zip(self.atoms, self.what)
        ])
        self.atom_times = np.array([a.time for a in self.atoms])

    def sample(self, seed: int, block: int, n: int, horizon: float, first_index: int = 0) -> JumpBatch:
        rng = block_rng(seed, block)
        d = len(self.atoms)
        dm = np.zeros((n, d))
        for i, (atom, wh) in enumerate(zip(self.atoms, self.what)):
            u = rng.random(n)
            z = np.asarray(atom.mark_law.sample(rng, n), dtype=float)
            dm[:, i] = np.where(u < atom.mass, np.asarray(self.f(z), dtype=float) - wh, -wh)
        keep = int((self.atom_times <= horizon).sum())
        dm = dm[:, :keep]
        times = np.broadcast_to(self.atom_times[:keep], (n, keep)).copy()
        count = np.full(n, keep, dtype=np.int64)
        m = compensated_cumsum_rows(dm)
        qv = compensated_cumsum_rows(dm * dm)
        pqv = np.broadcast_to(np.cumsum(self.pqv_inc[:keep]), (n, keep)).copy()
        return JumpBatch(times, dm, m, qv, pqv, count, horizon)

    def values_at(self, batch: JumpBatch, t: float):
        c = (batch.times <= t).sum(axis=1)
        return _at_count(batch.m, c), _at_count(batch.qv, c), _at_count(batch.pqv, c)

    def _s_jumps(self, lam, family, convention):
        c = family.c(lam)
        return np.array([atom_jump_of_s(self.spec, self.weight, a, lam, c, convention) for a in self.atoms]), c

    def exponent_at(self, batch: JumpBatch, lam: float, family: PenaltyFamily, convention: str, t: float):
        jumps, c = self._s_jumps(lam, family, convention)
        sel = self.atom_times <= t
        if np.any(jumps[sel] <= -1):
            from .expo import DoleansError
            raise DoleansError("exponential hits zero or negative at an atom")
        s = float(np.sum(jumps[sel]))
        log_e = float(np.sum(np.log1p(jumps[sel])))
        m, qv, _ = self.values_at(batch, t)
        return {"S": np.full(batch.n, s), "logE": np.full(batch.n, log_e), "X": lam * m - c * qv}

    def s_nonpositive(self, lam_grid, t_grid, seed: int = 0, convention: str = "compensator"):
        best, witness = -math.inf, None
        for lam in lam_grid:
            jumps, _ = self._s_jumps(lam, gaussian(), convention)
            cum = np.cumsum(jumps)
            for t in t_grid:
                k = int((self.atom_times <= t).sum())
                v = float(cum[k - 1]) if k else 0.0
                if v > best:
                    best, witness = v, (float(lam), float(t), None)
        return best, witness


@dataclass
class GenericEngine(SpecEngine):
    """Any valid spec: per-path thinning plus the reference martingale construction."""

    def sample(self, seed: int, block: int, n: int, horizon: float, first_index: int = 0) -> JumpBatch:
        mps = []
        for i in range(n):
            path = sample_path(self.spec, horizon, path_rng(seed, first_index + i))
            mps.append(build_martingale(self.weight, path, self.spec))
        batch = _pack([mp.jump_times for mp in mps], [mp.jump_sizes for mp in mps], [mp.m_values for mp in mps],
                      [mp.qv_values for mp in mps], [mp.pqv_values for mp in mps], horizon)
        batch.extra["paths"] = mps
        return batch

    def values_at(self, batch: JumpBatch, t: float):
        vals = np.array([mp.value_at(t) for mp in batch.extra["paths"]]).reshape(-1, 3)
        return vals[:, 0], vals[:, 1], vals[:, 2]

    def exponent_at(self, batch: JumpBatch, lam: float, family: PenaltyFamily, convention: str, t: float):
        out = {"S": [], "logE": [], "X": []}
        for mp in batch.extra["paths"]:
            v = exponent_compensator(self.spec, self.weight, mp, lam, family, convention).value_at(t)
            out["S"].append(v["S"])
            out["logE"].append(math.log(v["E"]))
            out["X"].append(v["X"])
        return {k: np.asarray(v) for k, v in out.items()}

    def s_nonpositive(self, lam_grid, t_grid, seed: int = 0, convention: str = "compensator", n_paths: int = 20):
        rep = check_s_nonpositive(self.spec, self.weight, lam_grid, t_grid, n_paths, seed, convention)
        return rep.max_value, rep.witness


def _is_vectorisable_law(law) -> bool:
    return isinstance(law, (DiscreteLaw, UniformLaw))


def make_engine(spec: CompensatorSpec, weight: WeightSpec, kind: str = "auto") -> SpecEngine:
    """Pick the fastest engine that is exact for this model; ``kind="generic"`` forces the reference path."""
    if kind == "generic":
        return GenericEngine(spec, weight)
    mark_only = weight.mark_function is not None
    if (mark_only and not spec.atoms and isinstance(spec.ac.intensity, ConstantIntensity)
            and spec.ac.intensity.rate > 0 and _is_vectorisable_law(spec.ac.mark_law)):
        return CompoundPoissonEngine(spec, weight)
    if mark_only and spec.ac.is_zero and all(_is_vectorisable_law(a.mark_law) for a in spec.atoms):
        return AtomEngine(spec, weight)
    if kind in ("compound_poisson", "atoms"):
        raise ValueError(f"model does not fit the {kind} engine")
    return GenericEngine(spec, weight)


# -- coalescent ----------------------------------------------------------------------

@dataclass
class CoalescentEngine:
    """Block-counting martingale of a Lambda-coalescent on ``[t0, t0 + horizon]``."""

    measure: object
    n0: int
    v0: float
    t0: float | None = None
    max_horizon: float = 50.0
    drift_monotone: str = "nonincreasing_between_jumps"
    jump_floor: float = 0.0

    def __post_init__(self):
        if self.n0 < 2:
            raise ValueError("need n0 >= 2 blocks")
        if self.t0 is None:
            self.t0 = t0_for_v0(self.measure, self.v0)
        self._curve = None
        self._psi = np.array([0.0] + [psi(self.measure, b) for b in range(1, self.n0 + 1)])
        self._psi2 = np.array([0.0] + [psi2(self.measure, b) for b in range(1, self.n0 + 1)])

    @property
    def time_origin(self) -> float:
        return self.t0

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_curve"] = None
        return state

    def curve(self, horizon: float):
        if self._curve is None or self._curve.t_end < self.t0 + horizon - 1e-12:
            self._curve = v_of_t(self.measure, self.t0, self.v0, [self.t0 + max(horizon, 1e-9)])
            if self._curve.truncated and self._curve.t_end < self.t0 + horizon:
                raise RuntimeError("speed function reached 1 before the horizon")
        return self._curve

    def sample(self, seed: int, block: int, n: int, horizon: float, first_index: int = 0) -> JumpBatch:
        rng = block_rng(seed, block)
        curve = self.curve(horizon)
        times, ks = simulate_block_counting_batch(self.measure, self.n0, horizon, rng, n, self.t0)
        count = np.isfinite(times).sum(axis=1)
        width = int(count.max()) if n else 0
        times = times[:, :width]
        ks = ks[:, :width]
        mask = np.arange(width)[None, :] < count[:, None]
        tt = np.where(mask, times, self.t0)
        blocks_after = self.n0 - np.cumsum(np.where(mask, ks - 1, 0), axis=1)
        blocks_before = np.concatenate([np.full((n, 1), self.n0), blocks_after[:, :-1]], axis=1)
        prev = np.concatenate([np.full((n, 1), self.t0), tt[:, :-1]], axis=1)
        i1 = curve.inv_v_integral(tt.ravel()).reshape(tt.shape)
        i2 = curve.inv_v2_integral(tt.ravel()).reshape(tt.shape)
        i1_prev = np.concatenate([np.zeros((n, 1)), i1[:, :-1]], axis=1)
        i2_prev = np.concatenate([np.zeros((n, 1)), i2[:, :-1]], axis=1)
        v = curve.v(tt.ravel()).reshape(tt.shape)
        dm = np.where(mask, (ks - 1) / v, 0.0)
        drift = np.where(mask, -self._psi[blocks_before] * (i1 - i1_prev), 0.0)
        dpqv = np.where(mask, self._psi2[blocks_before] * (i2 - i2_prev), 0.0)
        m = np.where(mask, compensated_cumsum_rows(np.stack([drift, dm], axis=2).reshape(n, -1))[:, 1::2], np.nan)
        qv = np.where(mask, compensated_cumsum_rows(dm * dm), np.nan)
        pqv = np.where(mask, compensated_cumsum_rows(dpqv), np.nan)
        times = np.where(mask, times, np.inf)
        return JumpBatch(times, dm, m, qv, pqv, count, self.t0 + horizon,
                         {"blocks": np.where(mask, blocks_after, 0), "ks": ks})

    def values_at(self, batch: JumpBatch, t: float):
        """Values at absolute time ``t`` in ``[t0, t0 + horizon]``."""
        curve = self.curve(batch.horizon - self.t0)
        c = (batch.times <= t).sum(axis=1)
        t_k = _at_count(batch.times, c, self.t0)
        n_now = _at_count(batch.extra["blocks"], c, self.n0).astype(np.int64)
        di1 = curve.inv_v_integral(np.full(batch.n, t)) - curve.inv_v_integral(t_k)
        di2 = curve.inv_v2_integral(np.full(batch.n, t)) - curve.inv_v2_integral(t_k)
        m = _at_count(batch.m, c) - self._psi[n_now] * di1
        pqv = _at_count(batch.pqv, c) + self._psi2[n_now] * di2
        return m, _at_count(batch.qv, c), pqv
