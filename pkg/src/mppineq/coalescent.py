"""Lambda-coalescent block counting: merger rates, Psi, the speed function v_t and the martingale M.

With ``b`` blocks, each ``k``-tuple merges at rate
``lambda_{b,k} = int r^{k-2} (1-r)^{b-k} Lambda(dr)``.  The martingale of the
benchmark ``v`` jumps by ``(k - 1) / v_s`` at a ``k``-merger and drifts by
``-Psi(N_u) / v_u du`` in between.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import bisect
import csv
import functools
import io
import math

import numpy as np
from scipy import special
from scipy.integrate import solve_ivp

from .numerics import as_rng, compensated_cumsum, fmt_float, quad

SERIES_CUTOFF = 1e-6


# -- measures ------------------------------------------------------------------

@dataclass(frozen=True)
class Dirac:
    """``Lambda = delta_p``; ``p = 0`` is Kingman's coalescent, ``p = 1`` the star coalescent."""

    p: float
    kind: str = field(default="dirac", init=False)

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")

    def integrate(self, phi, scale: float = 1.0) -> float:
        return float(phi(self.p))

    def rate(self, b: int, k: int) -> float:
        # Python evaluates 0.0 ** 0 as 1.0, which is the endpoint convention we want.
        return self.p ** (k - 2) * (1.0 - self.p) ** (b - k)


@dataclass(frozen=True)
class BetaMeasure:
    """Beta(a, b) probability measure on [0, 1]."""

    a: float
    b: float
    kind: str = field(default="beta", init=False)

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("beta parameters must be positive")

    def integrate(self, phi, scale: float = 1.0) -> float:
        """``int phi dLambda``; ``scale`` is the size parameter of ``phi`` (features live near ``1/scale``)."""
        # QAWS handles the algebraic endpoint weights y^(a-1) and (1-y)^(b-1).
        a1, b1 = self.a - 1.0, self.b - 1.0
        cut = min(0.5, 50.0 / max(scale, 1.0))
        if cut >= 0.5:
            val = quad(phi, 0.0, 1.0, weight="alg", wvar=(a1, b1))
        else:
            val = quad(lambda y: phi(y) * (1.0 - y) ** b1, 0.0, cut, weight="alg", wvar=(a1, 0.0), limit=400)
            val += quad(lambda y: phi(y) * y ** a1, cut, 1.0, weight="alg", wvar=(0.0, b1), limit=400)
        return val / math.exp(special.betaln(self.a, self.b))

    def rate(self, b: int, k: int) -> float:
        return math.exp(special.betaln(k - 2 + self.a, b - k + self.b) - special.betaln(self.a, self.b))


def uniform01() -> BetaMeasure:
    return BetaMeasure(1.0, 1.0)


@dataclass(frozen=True)
class Mixture:
    components: tuple
    weights: tuple[float, ...]
    kind: str = field(default="finite_mixture", init=False)

    def __post_init__(self):
        if len(self.components) != len(self.weights) or not self.components:
            raise ValueError("components and weights must be nonempty and of equal length")
        if any(w < 0 for w in self.weights) or abs(math.fsum(self.weights) - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")

    def integrate(self, phi, scale: float = 1.0) -> float:
        return math.fsum(w * c.integrate(phi, scale) for c, w in zip(self.components, self.weights))

    def rate(self, b: int, k: int) -> float:
        return math.fsum(w * c.rate(b, k) for c, w in zip(self.components, self.weights))


def measure_from_config(cfg: dict):
    kind = cfg.get("kind")
    if kind in ("kingman",):
        return Dirac(0.0)
    if kind == "dirac":
        return Dirac(float(cfg["p"]))
    if kind == "beta":
        return BetaMeasure(float(cfg["a"]), float(cfg["b"]))
    if kind == "uniform01":
        return uniform01()
    if kind == "finite_mixture":
        return Mixture(tuple(measure_from_config(c) for c in cfg["components"]), tuple(map(float, cfg["weights"])))
    raise ValueError(f"unknown Lambda measure kind {kind!r}")


# -- Lambda(dy) / y^2 integrands, stable near y = 0 ----------------------------------

def _pow1m(y: float, q: float) -> float:
    return 0.0 if y >= 1.0 else math.exp(q * math.log1p(-y))


def psi_integrand(q: float):
    """``(q y - 1 + (1 - y)^q) / y^2``."""
    def phi(y):
        if q * y < SERIES_CUTOFF:
            return q * (q - 1) / 2 - q * (q - 1) * (q - 2) / 6 * y + q * (q - 1) * (q - 2) * (q - 3) / 24 * y * y
        e = -1.0 if y >= 1.0 else math.expm1(q * math.log1p(-y))
        return (q * y + e) / (y * y)
    return phi


def psi2_integrand(k: float):
    """``(k y (1 - y) + (k y - 1)^2 - (1 - y)^k) / y^2``, the second moment of the block loss."""
    def phi(y):
        if k * y < SERIES_CUTOFF:
            c3 = k * (k - 1) * (k - 2) / 6
            c4 = c3 * (k - 3) / 4
            return k * (k - 1) / 2 + c3 * y - c4 * y * y
        e = -1.0 if y >= 1.0 else math.expm1(k * math.log1p(-y))
        return (-e - k * y + (k * k - k) * y * y) / (y * y)
    return phi


def total_rate_integrand(b: int):
    """``(1 - (1 - y)^b - b y (1 - y)^(b-1)) / y^2``."""
    c2 = b * (b - 1) / 2
    c3 = c2 * (b - 2) / 3
    c4 = c3 * (b - 3) / 4

    def phi(y):
        if b * y < SERIES_CUTOFF:
            return c2 - 2 * c3 * y + 3 * c4 * y * y
        if y >= 1.0:
            return 1.0 if b > 1 else 0.0
        lg = math.log1p(-y)
        return (-math.expm1(b * lg) - b * y * math.exp((b - 1) * lg)) / (y * y)
    return phi


# -- rates and Psi -----------------------------------------------------------------

def rate_lambda_bk(measure, b: int, k: int) -> float:
    """Rate at which one given ``k``-tuple of ``b`` blocks merges."""
    if not (b >= 2 and 2 <= k <= b):
        raise ValueError(f"need 2 <= k <= b, got b={b}, k={k}")
    return float(measure.rate(b, k))


@functools.lru_cache(maxsize=4096)
def total_rate(measure, b: int) -> float:
    """``sum_{k=2}^b C(b, k) lambda_{b,k}`` term by term."""
    return math.fsum(math.comb(b, k) * rate_lambda_bk(measure, b, k) for k in range(2, b + 1))


def total_rate_quadrature(measure, b: int) -> float:
    """The same total rate as a single integral against ``Lambda(dy) / y^2``."""
    return measure.integrate(total_rate_integrand(b), b)


@functools.lru_cache(maxsize=65536)
def psi(measure, q: float) -> float:
    """``Psi(q) = int (q y - 1 + (1 - y)^q) y^-2 Lambda(dy)`` for real ``q >= 1``."""
    if q < 1:
        raise ValueError("Psi is defined for q >= 1")
    return measure.integrate(psi_integrand(float(q)), q)


@functools.lru_cache(maxsize=4096)
def psi2(measure, k: int) -> float:
    """``int E[f(k, y, x)^2] y^-2 Lambda(dy)``."""
    if k < 1:
        raise ValueError("Psi2 needs k >= 1")
    return measure.integrate(psi2_integrand(float(k)), k)


def block_loss(k: int, y: float, x: np.ndarray) -> np.ndarray:
    """``f(k, y, x)``: blocks lost when the first ``k`` uniforms in each row of ``x`` are marked by ``y``."""
    hit = (x[..., :k] <= y).sum(axis=-1)
    return hit - 1 + (hit == 0)


# -- block counting chain ------------------------------------------------------------

@dataclass(frozen=True)
class CoalescentState:
    """Block-count trajectory: ``events[i] = (time, k)`` merges ``k`` blocks into one."""

    n0: int
    t_start: float
    t_end: float
    events: tuple[tuple[float, int], ...]

    @property
    def block_count(self) -> int:
        return self.n0 - sum(k - 1 for _, k in self.events)

    @property
    def time(self) -> float:
        return self.events[-1][0] if self.events else self.t_start

    def blocks_at(self, t: float) -> int:
        i = bisect.bisect_right([s for s, _ in self.events], t)
        return self.n0 - sum(k - 1 for _, k in self.events[:i])


@dataclass(frozen=True)
class ChainTables:
    """Total rates ``R(b)`` and merger-size CDFs for ``b = 2..n0``."""

    n0: int
    rates: np.ndarray  # rates[b]
    cdf: np.ndarray  # cdf[b, j] = P(k <= j + 2 | b)


@functools.lru_cache(maxsize=64)
def chain_tables(measure, n0: int) -> ChainTables:
    rates = np.zeros(n0 + 1)
    cdf = np.ones((n0 + 1, max(n0 - 1, 1)))
    for b in range(2, n0 + 1):
        terms = np.array([math.comb(b, k) * rate_lambda_bk(measure, b, k) for k in range(2, b + 1)])
        r = terms.sum()
        if not r > 0:
            raise ValueError(f"total merger rate vanishes at b={b}")
        rates[b] = r
        c = np.cumsum(terms) / r
        c[-1] = 1.0
        cdf[b, : b - 1] = c
    return ChainTables(n0, rates, cdf)


def simulate_block_counting(measure, n0: int, horizon: float, seed, t_start: float = 0.0) -> CoalescentState:
    """Run the block-counting jump chain on ``[t_start, t_start + horizon]`` or until one block is left."""
    if n0 < 2:
        raise ValueError("need n0 >= 2 blocks")
    tab = chain_tables(measure, n0)
    rng = as_rng(seed)
    t = t_start
    t_end = t_start + horizon
    b = n0
    events = []
    while b > 1:
        t += rng.exponential(1.0 / tab.rates[b])
        u = rng.random()
        if t > t_end:
            break
        k = 2 + int(np.searchsorted(tab.cdf[b, : b - 1], u, side="right"))
        k = min(k, b)
        events.append((t, k))
        b -= k - 1
    return CoalescentState(n0, t_start, t_end, tuple(events))


def simulate_block_counting_batch(measure, n0: int, horizon: float, rng: np.random.Generator, n: int,
                                  t_start: float = 0.0):
    """Vectorised chain for ``n`` paths; returns padded ``(times, ks)`` of shape ``(n, n0 - 1)``.

    Every step draws for all rows, so a row's random numbers do not depend on
    the horizon or on the other rows.
    """
    tab = chain_tables(measure, n0)
    steps = n0 - 1
    times = np.full((n, steps), np.inf)
    ks = np.zeros((n, steps), dtype=np.int64)
    t = np.full(n, float(t_start))
    b = np.full(n, n0, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    t_end = t_start + horizon
    for j in range(steps):
        e = rng.exponential(size=n)
        u = rng.random(n)
        if not alive.any():
            continue
        bb = np.where(alive, b, 2)
        t = t + e / tab.rates[bb]
        alive &= t <= t_end
        cdf_rows = tab.cdf[bb]
        k = 2 + (u[:, None] >= cdf_rows).sum(axis=1)
        k = np.minimum(k, bb)
        times[alive, j] = t[alive]
        ks[alive, j] = k[alive]
        b = np.where(alive, b - (k - 1), b)
        alive &= b > 1
    return times, ks


# -- speed function ------------------------------------------------------------------

def kingman_v(t):
    """Closed-form speed function of Kingman's coalescent, ``1 / (1 - e^{-t/2})``."""
    return 1.0 / -np.expm1(-np.asarray(t, dtype=float) / 2.0)


def comes_down_from_infinity(measure) -> bool:
    """Whether ``int^infty dq / Psi(q)`` is finite.

    Beta(a, b) has ``Psi(q) ~ q^(2-a)`` for ``a < 1`` and ``O(q log q)`` otherwise;
    a Dirac mass at ``p > 0`` gives linear growth.  Psi is additive over mixtures.
    """
    if isinstance(measure, Dirac):
        return measure.p == 0.0
    if isinstance(measure, BetaMeasure):
        return measure.a < 1.0
    if isinstance(measure, Mixture):
        return any(comes_down_from_infinity(c) for w, c in zip(measure.weights, measure.components) if w > 0)
    raise TypeError(f"unsupported measure {measure!r}")


def t0_for_v0(measure, v0: float) -> float:
    """``int_{v0}^infty dq / Psi(q)``: the time at which the speed function equals ``v0``.

    Measures that do not come down from infinity have no such time; for them the
    start time is 0 by convention and ``v`` is simply the ODE solution from ``v0``.
    """
    if not v0 > 1:
        raise ValueError("V0 must exceed 1")
    if isinstance(measure, Dirac) and measure.p == 0.0:
        return 2.0 * math.log(v0 / (v0 - 1.0))
    if not comes_down_from_infinity(measure):
        return 0.0
    # q = v0 e^s on [v0, v0 e^S]; beyond that Psi is treated as a power law
    # with the local log-slope, whose tail integral is closed form.
    s_max = math.log(1e6)
    body = quad(lambda s: v0 * math.exp(s) / psi(measure, v0 * math.exp(s)), 0.0, s_max, epsabs=1e-12, epsrel=1e-10)
    q_hi = v0 * math.exp(s_max)
    gamma = math.log(psi(measure, q_hi) / psi(measure, q_hi / 2.0)) / math.log(2.0)
    if not gamma > 1.0:
        raise ValueError("Psi grows too slowly for the speed function to be finite")
    return body + q_hi / (psi(measure, q_hi) * (gamma - 1.0))


@dataclass(frozen=True)
class SpeedCurve:
    """Solution of ``dv/dt = -Psi(v)`` from ``(t0, V0)`` with running integrals of ``1/v`` and ``1/v^2``."""

    measure: object
    t0: float
    v0: float
    t_end: float
    sol: object = field(repr=False, compare=False)
    truncated: bool = False
    t_grid: np.ndarray | None = None
    values: np.ndarray | None = None

    def _eval(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t0 - 1e-12) or np.any(t > self.t_end + 1e-12):
            raise ValueError(f"t outside the solved window [{self.t0}, {self.t_end}]")
        if t.size == 0:
            return np.zeros((3,) + t.shape)
        return self.sol(np.clip(t, self.t0, self.t_end))

    def v(self, t):
        return self._eval(t)[0]

    def inv_v_integral(self, t):
        """``int_{t0}^t du / v_u``."""
        return self._eval(t)[1]

    def inv_v2_integral(self, t):
        """``int_{t0}^t du / v_u^2``."""
        return self._eval(t)[2]


def v_of_t(measure, t0: float, v0: float, t_grid, rtol: float = 1e-10, atol: float = 1e-10) -> SpeedCurve:
    """Integrate the speed ODE with an adaptive Runge-Kutta scheme (DOP853) on ``[t0, max(t_grid)]``."""
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t_grid < t0):
        raise ValueError("t_grid must lie in [t0, inf)")
    if not v0 > 1:
        raise ValueError("V0 must exceed 1")
    t_end = float(t_grid.max()) if t_grid.size else t0
    if t_end == t0:
        t_end = t0 + 1e-9

    def rhs(_, y):
        v = max(y[0], 1.0)
        return [-psi(measure, v), 1.0 / v, 1.0 / (v * v)]

    def near_one(_, y):
        return y[0] - 1.0 - 1e-9

    near_one.terminal = True
    near_one.direction = -1
    res = solve_ivp(rhs, (t0, t_end), [v0, 0.0, 0.0], method="DOP853", rtol=rtol, atol=atol,
                    dense_output=True, events=near_one)
    if res.status < 0:
        raise RuntimeError(f"speed ODE failed: {res.message}")
    truncated = res.status == 1
    end = float(res.t[-1])
    curve = SpeedCurve(measure, float(t0), float(v0), end, res.sol, truncated)
    kept = t_grid[t_grid <= end]
    return SpeedCurve(measure, float(t0), float(v0), end, res.sol, truncated, kept, curve.v(kept))


# -- the martingale --------------------------------------------------------------------

@dataclass(frozen=True)
class CoalescentMartingale:
    """M, QV and <M,M> of the block-counting martingale at its jump times."""

    jump_times: np.ndarray
    ks: np.ndarray
    blocks: np.ndarray  # N right after each jump
    jump_sizes: np.ndarray
    drift_increments: np.ndarray
    m_values: np.ndarray
    qv_values: np.ndarray
    pqv_values: np.ndarray
    n0: int
    t0: float
    curve: SpeedCurve = field(repr=False, compare=False)

    def value_at(self, t: float) -> tuple[float, float, float]:
        k = bisect.bisect_right(self.jump_times.tolist(), t) - 1
        t_k = self.jump_times[k] if k >= 0 else self.t0
        n_now = int(self.blocks[k]) if k >= 0 else self.n0
        m = self.m_values[k] if k >= 0 else 0.0
        qv = self.qv_values[k] if k >= 0 else 0.0
        pqv = self.pqv_values[k] if k >= 0 else 0.0
        if t > t_k and n_now > 1:
            c = self.curve
            m -= psi(c.measure, n_now) * (c.inv_v_integral(t) - c.inv_v_integral(t_k))
            pqv += psi2(c.measure, n_now) * (c.inv_v2_integral(t) - c.inv_v2_integral(t_k))
        return float(m), float(qv), float(pqv)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["time", "N", "k", "dM", "M", "QV", "PQV"])
        for t, n, k, dm, m, qv, pqv in zip(self.jump_times, self.blocks, self.ks, self.jump_sizes,
                                             self.m_values, self.qv_values, self.pqv_values):
            wr.writerow([fmt_float(t), int(n), int(k), fmt_float(dm), fmt_float(m), fmt_float(qv), fmt_float(pqv)])
        return buf.getvalue()


def coalescent_martingale(traj: CoalescentState, curve: SpeedCurve) -> CoalescentMartingale:
    """Build M from a trajectory started at the curve's ``t0``."""
    measure = curve.measure
    times = np.array([t for t, _ in traj.events], dtype=float)
    ks = np.array([k for _, k in traj.events], dtype=np.int64)
    if times.size and times[0] < curve.t0:
        raise ValueError(f"event at {times[0]} precedes t0={curve.t0}")
    if abs(traj.t_start - curve.t0) > 1e-12:
        raise ValueError("trajectory must start at the curve's t0")
    blocks_after = traj.n0 - np.cumsum(ks - 1)
    blocks_before = np.concatenate([[traj.n0], blocks_after[:-1]]).astype(np.int64)
    prev = np.concatenate([[curve.t0], times[:-1]])
    i1 = curve.inv_v_integral(times) - curve.inv_v_integral(prev)
    i2 = curve.inv_v2_integral(times) - curve.inv_v2_integral(prev)
    psi_b = np.array([psi(measure, int(b)) for b in blocks_before])
    psi2_b = np.array([psi2(measure, int(b)) for b in blocks_before])
    v = curve.v(times)
    dm = (ks - 1) / v
    drift = -psi_b * i1
    steps = np.empty(2 * times.size)
    steps[0::2] = drift
    steps[1::2] = dm
    m = compensated_cumsum(steps)[1::2] if times.size else np.zeros(0)
    return CoalescentMartingale(
        jump_times=times, ks=ks, blocks=blocks_after.astype(np.int64), jump_sizes=dm, drift_increments=drift,
        m_values=m, qv_values=compensated_cumsum(dm * dm), pqv_values=compensated_cumsum(psi2_b * i2),
        n0=traj.n0, t0=curve.t0, curve=curve,
    )
