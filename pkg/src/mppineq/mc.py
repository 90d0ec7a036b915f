"""Monte Carlo certification of the tail inequalities and of the (super)martingale properties.

Crossing detection scans jump times only.  That is exact when, between jumps,
QV is constant and M can only drift down, which is what the
``drift_monotone`` declaration asserts.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
import csv
import io
import json
import math
import os
import time
import warnings

import numpy as np

from . import bounds as _bounds
from .engines import BLOCK_SIZE, CoalescentEngine, HypothesisError, JumpBatch, make_engine
from .expo import PenaltyFamily, family_by_name, gaussian
from .pp_core import CompensatorSpec
from .stoch_int import JUMP_FLOOR_TOL

SOUND_DRIFTS = ("nonincreasing_between_jumps", "constant")
S_CHECK_TOL = 1e-12
Z95 = 1.959963984540054


class CrossingError(ValueError):
    pass


@dataclass(frozen=True)
class TailEvent:
    """``B1`` = {M >= x and QV <= v2 at some t <= horizon}; ``B2`` the self-normalised event."""

    kind: str
    x: float
    v2: float
    horizon: float = 10.0
    alpha: float = 0.0
    beta: float = 1.0
    constraint: str = "vs_pqv"

    def __post_init__(self):
        if self.kind not in ("B1", "B2"):
            raise ValueError("event kind must be B1 or B2")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not self.v2 > 0:
            raise ValueError("v2 must be positive")
        if self.x < 0:
            raise ValueError("x must be nonnegative")
        if self.kind == "B2":
            if not self.beta > 0:
                raise ValueError("beta must be positive")
            if self.constraint not in ("vs_pqv", "vs_level"):
                raise ValueError("constraint must be vs_pqv or vs_level")

    @property
    def default_bound(self) -> str:
        if self.kind == "B1":
            return "pena_poisson"
        return "ratio_half" if self.constraint == "vs_pqv" else "ratio_quarter"

    def allowed_bounds(self) -> tuple[str, ...]:
        if self.kind == "B1":
            return ("pena_poisson", "pena_gauss")
        return (self.default_bound,)

    def bound_value(self, name: str | None = None) -> float:
        name = name or self.default_bound
        if name not in self.allowed_bounds():
            raise ValueError(f"bound {name} does not apply to this event")
        if name == "pena_poisson":
            return _bounds.pena_poisson_bound(self.x, self.v2)
        if name == "pena_gauss":
            return _bounds.pena_gauss_bound(self.x, self.v2)
        scale = "half" if name == "ratio_half" else "quarter"
        return _bounds.ratio_bound(self.x, self.alpha, self.beta, self.v2, scale)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TailEvent":
        return cls(**d)


def wilson_interval(hits: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    p = hits / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == n else min(1.0, centre + half)
    return (lo, hi)


@dataclass
class MonteCarloReport:
    event: dict
    n_paths: int
    hits: int
    p_hat: float
    se: float
    ci95: tuple[float, float]
    bound_name: str
    bound_value: float
    slack: float
    verdict: bool
    seed: int
    wall_time: float
    engine: str = ""
    label: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci95"] = list(self.ci95)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class MeanReport:
    """Sample mean of ``U`` or of the martingale ratio at a probe time."""

    kind: str
    mean: float
    se: float
    n_paths: int
    lam: float
    family: str
    t_probe: float
    convention: str
    verdict: bool
    seed: int
    wall_time: float
    heavy_tail: bool = False
    top_share: float = 0.0
    hypothesis: dict = field(default_factory=dict)
    label: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


REPORT_COLUMNS = ("label", "kind", "n_paths", "hits", "p_hat", "se", "ci_low", "ci_high", "mean", "bound_name",
                  "bound_value", "verdict", "seed")


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(REPORT_COLUMNS)
    for r in reports:
        if isinstance(r, MonteCarloReport):
            kind = r.event["kind"] + ("" if r.event["kind"] == "B1" else ":" + r.event["constraint"])
            wr.writerow([r.label, kind, r.n_paths, r.hits, repr(r.p_hat), repr(r.se), repr(r.ci95[0]),
                         repr(r.ci95[1]), "", r.bound_name, repr(r.bound_value), int(r.verdict), r.seed])
        else:
            wr.writerow([r.label, r.kind, r.n_paths, "", "", repr(r.se), "", "", repr(r.mean), "", "",
                         int(r.verdict), r.seed])
    return buf.getvalue()


# -- block scheduling -----------------------------------------------------------------

def resolve_engine(model, w=None, engine: str = "auto"):
    if isinstance(model, CompensatorSpec):
        if w is None:
            raise ValueError("a weight is required for a compensator spec")
        return make_engine(model, w, engine)
    if hasattr(model, "sample") and hasattr(model, "values_at"):
        return model
    raise TypeError(f"cannot build an engine from {type(model).__name__}")


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("PENA_MPP_WORKERS", "1"))
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return workers


def _blocks(n_paths: int, block_size: int):
    return [(b, min(block_size, n_paths - b * block_size)) for b in range(math.ceil(n_paths / block_size))]


@dataclass
class _BlockTask:
    engine: object
    seed: int
    horizon: float
    op: str
    args: tuple
    block_size: int

    def __call__(self, item):
        b, n = item
        batch = self.engine.sample(self.seed, b, n, self.horizon, first_index=b * self.block_size)
        return getattr(self, "_" + self.op)(batch)

    def _tail(self, batch: JumpBatch):
        origin = self.engine.time_origin
        hits = [int(event_mask(batch.truncate(origin + ev.horizon), ev).sum()) for ev in self.args[0]]
        mask = batch.mask
        min_dm = float(batch.dm[mask].min()) if mask.any() else math.inf
        return hits, min_dm

    def _probe(self, batch: JumpBatch):
        origin = self.engine.time_origin
        return np.stack([np.column_stack(self.engine.values_at(batch, origin + t)) for t in self.args[0]], axis=1)

    def _exponent(self, batch: JumpBatch):
        lam, family, convention, t = self.args
        origin = self.engine.time_origin
        ex = self.engine.exponent_at(batch, lam, family, convention, origin + t)
        mask = batch.truncate(origin + t).mask
        min_dm = float(batch.dm[mask].min()) if mask.any() else math.inf
        return np.exp(ex["X"] - ex["S"]), np.exp(ex["X"] - ex["logE"]), min_dm


def run_blocks(engine, n_paths: int, seed: int, horizon: float, op: str, args: tuple, workers: int | None = None,
               block_size: int = BLOCK_SIZE) -> list:
    """Results per block, in block order; identical for every worker count."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    task = _BlockTask(engine, int(seed), float(horizon), op, args, block_size)
    items = _blocks(n_paths, block_size)
    workers = min(resolve_workers(workers), len(items))
    if workers == 1:
        return [task(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, items))


def event_mask(batch: JumpBatch, event: TailEvent) -> np.ndarray:
    """Per-path indicator of entering the event at some jump time."""
    valid = batch.mask
    m, qv, pqv = batch.m, batch.qv, batch.pqv
    with np.errstate(invalid="ignore"):
        if event.kind == "B1":
            hit = (m >= event.x) & (qv <= event.v2)
        else:
            level = pqv + event.v2 if event.constraint == "vs_pqv" else event.v2
            hit = (m >= (event.alpha + event.beta * qv) * event.x) & (qv >= level)
    return (hit & valid).any(axis=1)


# -- hypotheses -----------------------------------------------------------------------

def _require_sound_drift(engine) -> None:
    if engine.drift_monotone not in SOUND_DRIFTS:
        raise CrossingError("crossing detection unsound for this model")


def check_hypotheses(engine, need: str, horizon: float, lam_grid=None, seed: int = 0,
                     convention: str = "compensator") -> dict:
    """Verify the declared hypothesis ``need`` in {"jump_floor", "s_nonpositive", "none"}."""
    if need == "none":
        return {"hypothesis": "none"}
    if need == "jump_floor":
        floor = engine.jump_floor
        if floor is None or floor < -1:
            raise HypothesisError("hypothesis Delta M >= -1 is not guaranteed by the model (declare jump_floor >= -1)")
        return {"hypothesis": "jump_floor", "jump_floor": floor}
    if need == "s_nonpositive":
        if not hasattr(engine, "s_nonpositive"):
            raise HypothesisError("hypothesis S(lambda) <= 0 cannot be checked for this model")
        lam_grid = np.linspace(0.05, 3.0, 60) if lam_grid is None else lam_grid
        t_grid = np.linspace(horizon / 5, horizon, 5)
        worst, witness = engine.s_nonpositive(lam_grid, t_grid, seed=seed, convention=convention)
        if worst > S_CHECK_TOL:
            lam, t, _ = witness
            raise HypothesisError(f"hypothesis S(lambda) <= 0 fails: S = {worst:.6g} at lambda = {lam:.6g}, t = {t:.6g}")
        return {"hypothesis": "s_nonpositive", "max_s": float(worst)}
    raise ValueError(f"unknown hypothesis {need}")


BOUND_HYPOTHESIS = {"pena_poisson": "jump_floor", "pena_gauss": "s_nonpositive", "ratio_half": "none",
                    "ratio_quarter": "s_nonpositive"}
FAMILY_HYPOTHESIS = {"poissonian": "jump_floor", "gaussian": "s_nonpositive"}


# -- estimators -----------------------------------------------------------------------

def estimate_tails(model, w, events, n_paths: int, seed: int, *, bounds=None, slack: float = 1.96,
                   workers: int | None = None, engine: str = "auto", labels=None, check_floor: bool = True):
    """Estimate several events on one shared set of paths."""
    eng = resolve_engine(model, w, engine)
    _require_sound_drift(eng)
    events = list(events)
    bounds = list(bounds) if bounds is not None else [None] * len(events)
    labels = list(labels) if labels is not None else [""] * len(events)
    start = time.perf_counter()
    horizon = max(ev.horizon for ev in events)
    results = run_blocks(eng, n_paths, seed, horizon, "tail", (tuple(events),), workers)
    min_dm = min(r[1] for r in results)
    if check_floor and eng.jump_floor is not None and min_dm < eng.jump_floor - JUMP_FLOOR_TOL:
        raise HypothesisError(f"observed jump {min_dm} below the declared floor {eng.jump_floor}")
    wall = time.perf_counter() - start
    reports = []
    for i, ev in enumerate(events):
        hits = sum(r[0][i] for r in results)
        name = bounds[i] or ev.default_bound
        bval = ev.bound_value(name)
        p = hits / n_paths
        se = math.sqrt(p * (1 - p) / n_paths)
        reports.append(MonteCarloReport(ev.to_dict(), n_paths, hits, p, se, wilson_interval(hits, n_paths), name,
                                        bval, slack, bool(p - slack * se <= bval), int(seed), wall,
                                        type(eng).__name__, labels[i]))
    return reports


def estimate_tail(model, w, event: TailEvent, n_paths: int, seed: int, *, bound: str | None = None,
                  slack: float = 1.96, workers: int | None = None, engine: str = "auto") -> MonteCarloReport:
    return estimate_tails(model, w, [event], n_paths, seed, bounds=[bound], slack=slack, workers=workers,
                          engine=engine)[0]


def probe_values(model, w, t_probes, n_paths: int, seed: int, *, workers=None, engine: str = "auto") -> np.ndarray:
    """``(n_paths, len(t_probes), 3)`` array of (M, QV, PQV); probe times are relative to the model's origin."""
    eng = resolve_engine(model, w, engine)
    t_probes = tuple(float(t) for t in t_probes)
    return np.concatenate(run_blocks(eng, n_paths, seed, max(t_probes), "probe", (t_probes,), workers), axis=0)


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def top_share(values: np.ndarray, frac: float = 1e-3) -> float:
    total = math.fsum(np.abs(values))
    if total == 0:
        return 0.0
    k = max(1, math.ceil(frac * values.size))
    return math.fsum(np.sort(np.abs(values))[-k:]) / total


def _as_family(family) -> PenaltyFamily:
    return family_by_name(family) if isinstance(family, str) else family


def _exponent_samples(eng, lam, fam, convention, t_probe, n_paths, seed, workers):
    res = run_blocks(eng, n_paths, seed, t_probe, "exponent", (float(lam), fam, convention, float(t_probe)), workers)
    u = np.concatenate([r[0] for r in res])
    ratio = np.concatenate([r[1] for r in res])
    return u, ratio, min(r[2] for r in res)


def _mean_report(kind, values, lam, fam, t_probe, convention, seed, start, verdict_fn, hyp, label):
    mean, se = _mean_se(values)
    share = top_share(values)
    heavy = share > 0.2
    if heavy:
        warnings.warn(f"heavy-tailed {kind} samples: top 0.1% carry {share:.1%} of the mass", RuntimeWarning)
    return MeanReport(kind, mean, se, values.size, float(lam), fam.kind, float(t_probe), convention,
                      bool(verdict_fn(mean, se)), int(seed), time.perf_counter() - start, heavy, share, hyp, label)


def check_supermartingale(model, w, lam: float, family, t_probe: float, n_paths: int, seed: int, *,
                          convention: str = "compensator", workers=None, engine: str = "auto",
                          label: str = "") -> MeanReport:
    """Sample mean of ``U = exp(X - S)``; pass iff ``mean <= 1 + 3 SE``."""
    eng = resolve_engine(model, w, engine)
    fam = _as_family(family)
    fam.check(lam)
    need = FAMILY_HYPOTHESIS.get(fam.kind)
    if need is None:
        raise HypothesisError(f"no supermartingale hypothesis is known for the {fam.kind} family")
    start = time.perf_counter()
    hyp = check_hypotheses(eng, need, t_probe, seed=seed, convention=convention)
    u, _, min_dm = _exponent_samples(eng, lam, fam, convention, t_probe, n_paths, seed, workers)
    if need == "jump_floor" and min_dm < -1 - JUMP_FLOOR_TOL:
        raise HypothesisError(f"observed jump {min_dm} below -1")
    return _mean_report("supermartingale", u, lam, fam, t_probe, convention, seed, start,
                        lambda m, se: m <= 1 + 3 * se, hyp, label)


def check_martingale_ratio(model, w, lam: float, family, t_probe: float, n_paths: int, seed: int, *,
                           convention: str = "compensator", workers=None, engine: str = "auto",
                           label: str = "") -> MeanReport:
    """Sample mean of ``exp(X) / E(S)``; pass iff ``|mean - 1| <= 3 SE``."""
    eng = resolve_engine(model, w, engine)
    fam = _as_family(family)
    fam.check(lam)
    start = time.perf_counter()
    _, ratio, _ = _exponent_samples(eng, lam, fam, convention, t_probe, n_paths, seed, workers)
    return _mean_report("martingale_ratio", ratio, lam, fam, t_probe, convention, seed, start,
                        lambda m, se: abs(m - 1) <= 3 * se, {}, label)


def compare_bounds(xs, v2s, **kwargs) -> list[tuple[float, float, str, float]]:
    """Every closed-form bound on the grid ``xs x v2s``."""
    return _bounds.bounds_table(xs, v2s, **kwargs)


def compare_bounds_csv(xs, v2s, **kwargs) -> str:
    return _bounds.table_to_csv(compare_bounds(xs, v2s, **kwargs))
