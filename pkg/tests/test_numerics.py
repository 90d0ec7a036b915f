import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mppineq.numerics import (QuadratureError, as_rng, block_rng, compensated_cumsum, compensated_cumsum_rows,
                              path_rng, quad)


def test_path_streams_are_deterministic():
    a = path_rng(5, 17).random(8)
    b = path_rng(5, 17).random(8)
    assert np.array_equal(a, b)


def test_block_streams_are_distinct():
    # Large key words must not collapse onto one stream.
    draws = {tuple(block_rng(0, b).random(4)) for b in range(64)}
    assert len(draws) == 64


def test_block_and_path_streams_do_not_collide():
    assert not np.array_equal(block_rng(3, 0).random(4), path_rng(3, 0).random(4))
    assert not np.array_equal(path_rng(3, 0).random(4), path_rng(3, 1).random(4))
    assert not np.array_equal(path_rng(3, 0).random(4), path_rng(4, 0).random(4))


def test_block_streams_are_uncorrelated():
    x = np.stack([block_rng(11, b).random(2000) for b in range(20)])
    corr = np.corrcoef(x)
    off = corr[~np.eye(20, dtype=bool)]
    assert np.abs(off).max() < 0.1


def test_as_rng_passthrough():
    g = np.random.default_rng(0)
    assert as_rng(g) is g
    assert np.array_equal(as_rng(9).random(3), path_rng(9, 0).random(3))


def test_compensated_sum_beats_naive():
    vals = np.array([1.0] + [1e-16] * 10000)
    assert compensated_cumsum(vals)[-1] == pytest.approx(1.0 + 1e-12, rel=0, abs=1e-15)
    assert np.cumsum(vals)[-1] == 1.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
def test_compensated_cumsum_matches_fsum(xs):
    out = compensated_cumsum(xs)
    for k in range(len(xs)):
        assert out[k] == pytest.approx(math.fsum(xs[: k + 1]), abs=1e-9)


def test_rowwise_matches_1d():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(5, 30)) * 10.0 ** rng.integers(-8, 8, size=(5, 30))
    rows = compensated_cumsum_rows(x)
    for i in range(5):
        assert np.allclose(rows[i], compensated_cumsum(x[i]), rtol=0, atol=1e-9)


def test_quad_basic_and_empty_interval():
    assert quad(lambda s: s, 0.0, 2.0) == pytest.approx(2.0, abs=1e-12)
    assert quad(math.exp, 1.0, 1.0) == 0.0


def test_quad_reports_achieved_tolerance():
    with pytest.raises(QuadratureError, match="achieved error"):
        quad(lambda s: math.sin(1.0 / s) / s, 1e-8, 1.0, limit=5)
