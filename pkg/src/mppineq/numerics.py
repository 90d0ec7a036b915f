"""Shared numerical plumbing: random streams, compensated sums, quadrature."""
from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate

_U64 = (1 << 64) - 1
_BLOCK_TAG = 1 << 63

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-8


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


def _key(seed: int, word: int) -> np.ndarray:
    # An explicit uint64 array: a plain list would round large words through float.
    return np.array([int(seed) & _U64, word], dtype=np.uint64)


def path_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based stream for a single path, keyed by ``(seed, index)``."""
    return np.random.Generator(np.random.Philox(key=_key(seed, int(index) & (_BLOCK_TAG - 1))))


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Counter-based stream for a fixed-size block of paths.

    Disjoint from every :func:`path_rng` stream because the high key bit is set.
    """
    return np.random.Generator(np.random.Philox(key=_key(seed, _BLOCK_TAG | (int(block) & (_BLOCK_TAG - 1)))))


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return path_rng(seed, 0)


def compensated_cumsum(values) -> np.ndarray:
    """Neumaier-compensated running sum of a 1-d sequence."""
    values = np.asarray(values, dtype=float)
    out = np.empty_like(values)
    total = 0.0
    comp = 0.0
    for i, v in enumerate(values):
        t = total + v
        if abs(total) >= abs(v):
            comp += (total - t) + v
        else:
            comp += (v - t) + total
        total = t
        out[i] = total + comp
    return out


def compensated_cumsum_rows(values: np.ndarray) -> np.ndarray:
    """Row-wise Neumaier running sum of a 2-d array (vectorised over rows)."""
    values = np.asarray(values, dtype=float)
    out = np.empty_like(values)
    total = np.zeros(values.shape[0])
    comp = np.zeros(values.shape[0])
    for j in range(values.shape[1]):
        v = values[:, j]
        t = total + v
        big = np.abs(total) >= np.abs(v)
        comp += np.where(big, (total - t) + v, (v - t) + total)
        total = t
        out[:, j] = total + comp
    return out


def quad(func, a: float, b: float, *, epsabs: float = QUAD_EPSABS, epsrel: float = QUAD_EPSREL,
         limit: int = 200, **kwargs) -> float:
    """Adaptive Gauss-Kronrod quadrature that raises instead of warning.

    Raises :class:`QuadratureError` carrying the achieved error estimate when
    QUADPACK reports non-convergence.
    """
    if a == b:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(func, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit, **kwargs)
        except integrate.IntegrationWarning as exc:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                value, err = integrate.quad(func, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit, **kwargs)
            raise QuadratureError(
                f"quadrature on [{a}, {b}] did not converge: achieved error {err:.3e} "
                f"(requested abs {epsabs:.1e}, rel {epsrel:.1e}); {exc}"
            ) from None
    if not math.isfinite(value):
        raise QuadratureError(f"quadrature on [{a}, {b}] returned non-finite value {value}")
    return float(value)


def fmt_float(x: float) -> str:
    """Round-trip float formatting used by every CSV writer."""
    return repr(float(x))
