"""Closed-form tail bounds and the optimal exponent for the Poissonian bound.

Every bound is a probability and is capped at 1.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

from .numerics import fmt_float


@dataclass(frozen=True)
class TailQuery:
    x: float
    v2: float = 1.0
    alpha: float = 0.0
    beta: float = 1.0
    c: float = 1.0
    a: float = 0.0
    b: float = 1.0
    y: float = 1.0

    def __post_init__(self):
        if not self.x > 0:
            raise ValueError("x must be positive")
        if self.v2 < 0:
            raise ValueError("v2 must be nonnegative")


def pena_poisson_bound(x: float, v2: float) -> float:
    """``((v2 + x) / v2)^v2 e^{-x}``, for martingales with jumps >= -1."""
    if not x > 0:
        raise ValueError("x must be positive")
    if v2 < 0:
        raise ValueError("v2 must be nonnegative")
    if v2 == 0:
        return math.exp(-x)
    return min(1.0, math.exp(v2 * math.log1p(x / v2) - x))


def pena_gauss_bound(x: float, v2: float) -> float:
    """``exp(-x^2 / (2 v2))``."""
    if not x > 0:
        raise ValueError("x must be positive")
    if not v2 > 0:
        raise ValueError("v2 must be positive: the Gaussian bound degenerates at v2 = 0")
    return min(1.0, math.exp(-x * x / (2.0 * v2)))


_SCALES = {"half": 2.0, "quarter": 4.0}


def ratio_bound(x: float, alpha: float, beta: float, v2: float, scale: str = "half") -> float:
    """``exp(-(x^2 / s) (alpha beta + beta^2 v2 / 2))`` with ``s = 2`` (half) or ``4`` (quarter)."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if scale not in _SCALES:
        raise ValueError("scale must be 'half' or 'quarter'")
    rate = alpha * beta + beta * beta * v2 / 2.0
    if rate < 0:
        raise ValueError("vacuous bound parameters: alpha*beta + beta^2 v2 / 2 < 0")
    return min(1.0, math.exp(-x * x / _SCALES[scale] * rate))


def freedman_bound(x: float, v2: float, c: float) -> float:
    """``exp(-x^2 / (2 (v2 + c x)))`` for jumps bounded by ``c``."""
    if not x > 0:
        raise ValueError("x must be positive")
    if c < 0:
        raise ValueError("c must be nonnegative")
    denom = v2 + c * x
    if not denom > 0:
        raise ValueError("v2 + c x must be positive")
    return min(1.0, math.exp(-x * x / (2.0 * denom)))


def bt_self_normalized_bound(x: float, a: float, b: float, y: float) -> float:
    """``2 exp(-x^2 (a b + b^2 y / 2))``, capped at 1."""
    if not x > 0 or not y >= 0 or a < 0 or not b > 0:
        raise ValueError("need x > 0, y >= 0, a >= 0, b > 0")
    return min(1.0, 2.0 * math.exp(-x * x * (a * b + b * b * y / 2.0)))


def poisson_exponent(lam: float, x: float, v2: float) -> float:
    """``exp(-lam x - (lam + log(1 - lam)) v2)`` for ``lam`` in ``[0, 1)``."""
    return math.exp(-lam * x - (lam + math.log1p(-lam)) * v2)


def optimal_lambda(x: float, v2: float) -> tuple[float, float]:
    """Minimiser ``lam* = x / (x + v2)`` of :func:`poisson_exponent` and the minimum."""
    if not x > 0 or not v2 > 0:
        raise ValueError("need x > 0 and v2 > 0")
    lam = x / (x + v2)
    return lam, poisson_exponent(lam, x, v2)


BOUND_NAMES = ("pena_poisson", "pena_gauss", "freedman", "ratio_half", "ratio_quarter", "bt_self_normalized")


def evaluate_all(x: float, v2: float, *, c: float = 1.0, alpha: float = 0.0, beta: float = 1.0,
                 a: float = 0.0, b: float = 1.0) -> dict[str, float]:
    """Every bound that applies at ``(x, v2)``; inapplicable ones are omitted."""
    out = {"pena_poisson": pena_poisson_bound(x, v2)}
    if v2 > 0:
        out["pena_gauss"] = pena_gauss_bound(x, v2)
    out["freedman"] = freedman_bound(x, v2, c) if v2 + c * x > 0 else math.nan
    try:
        out["ratio_half"] = ratio_bound(x, alpha, beta, v2, "half")
        out["ratio_quarter"] = ratio_bound(x, alpha, beta, v2, "quarter")
    except ValueError:
        pass
    if v2 > 0:
        out["bt_self_normalized"] = bt_self_normalized_bound(x, a, b, v2)
    return out


def bounds_table(xs, v2s, **kwargs) -> list[tuple[float, float, str, float]]:
    rows = []
    for x in xs:
        for v2 in v2s:
            for name, value in evaluate_all(x, v2, **kwargs).items():
                rows.append((float(x), float(v2), name, value))
    return rows


def table_to_csv(rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["x", "v2", "bound_name", "value"])
    for x, v2, name, value in rows:
        wr.writerow([fmt_float(x), fmt_float(v2), name, fmt_float(value)])
    return buf.getvalue()
