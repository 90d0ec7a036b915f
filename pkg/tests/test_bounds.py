import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mppineq.bounds import (BOUND_NAMES, TailQuery, bounds_table, bt_self_normalized_bound, evaluate_all,
                            freedman_bound, optimal_lambda, pena_gauss_bound, pena_poisson_bound, poisson_exponent,
                            ratio_bound, table_to_csv)

XS = np.linspace(0.05, 6.0, 50)
V2S = np.linspace(0.05, 6.0, 50)


class TestExamples:
    def test_poisson(self):
        assert pena_poisson_bound(1, 1) == pytest.approx(0.735759, abs=5e-7)
        assert pena_poisson_bound(1e-9, 1) == pytest.approx(1.0)
        assert pena_poisson_bound(3, 0) == pytest.approx(0.049787, abs=5e-7)
        with pytest.raises(ValueError):
            pena_poisson_bound(0, 1)

    def test_gauss(self):
        assert pena_gauss_bound(1, 1) == pytest.approx(0.606531, abs=5e-7)
        assert pena_gauss_bound(1e-9, 1) == pytest.approx(1.0)
        assert pena_gauss_bound(2, 4) == pytest.approx(math.exp(-0.5))
        with pytest.raises(ValueError):
            pena_gauss_bound(1, 0)

    def test_ratio(self):
        assert ratio_bound(1, 1, 1, 2, "half") == pytest.approx(0.367879, abs=5e-7)
        assert ratio_bound(0, 1, 1, 2, "half") == 1.0
        assert ratio_bound(1, 0, 2, 1, "quarter") == pytest.approx(0.606531, abs=5e-7)
        with pytest.raises(ValueError, match="vacuous bound parameters"):
            ratio_bound(1, -5, 1, 1)
        with pytest.raises(ValueError):
            ratio_bound(1, 0, 0, 1)

    def test_freedman(self):
        assert freedman_bound(1, 1, 0) == pytest.approx(math.exp(-0.5))
        assert freedman_bound(1, 1, 1) == pytest.approx(0.778801, abs=5e-7)
        x = 100.0
        # Exponents agree to 2%; the bounds themselves differ by the factor exp(v2 / (2 c^2)).
        assert math.log(freedman_bound(x, 1, 1)) / (-x / 2) == pytest.approx(1, rel=0.02)
        assert math.log(freedman_bound(1000.0, 1, 1)) + 500.0 == pytest.approx(0.5, rel=2e-3)

    def test_bt(self):
        assert bt_self_normalized_bound(1, 0, 1, 2) == pytest.approx(0.735759, abs=5e-7)
        assert bt_self_normalized_bound(1e-6, 0, 1, 2) == 1.0
        assert bt_self_normalized_bound(1, 1, 1, 1e-12) == pytest.approx(2 * math.exp(-1), rel=1e-9)

    def test_optimal_lambda(self):
        lam, val = optimal_lambda(1, 1)
        assert lam == 0.5 and val == pytest.approx(0.735759, abs=5e-7)
        assert optimal_lambda(2.7, 2.7)[0] == 0.5
        lam, val = optimal_lambda(3, 1)
        assert lam == 0.75 and val == pytest.approx(4 * math.exp(-3)) and val == pytest.approx(0.199148, abs=5e-7)

    def test_tail_query_validation(self):
        with pytest.raises(ValueError):
            TailQuery(x=0.0)
        with pytest.raises(ValueError):
            TailQuery(x=1.0, v2=-1.0)


def _series(fn, axis):
    if axis == "x":
        return np.array([[fn(x, v) for x in XS] for v in V2S])
    return np.array([[fn(x, v) for v in V2S] for x in XS])


BOUND_FNS = {
    "pena_poisson": pena_poisson_bound,
    "pena_gauss": pena_gauss_bound,
    "freedman": lambda x, v: freedman_bound(x, v, 1.0),
    "ratio_half": lambda x, v: ratio_bound(x, 0.5, 1.0, v, "half"),
    "ratio_quarter": lambda x, v: ratio_bound(x, 0.5, 1.0, v, "quarter"),
    "bt_self_normalized": lambda x, v: bt_self_normalized_bound(x, 0.5, 1.0, v),
}


@pytest.mark.parametrize("name", list(BOUND_FNS))
def test_nonincreasing_in_x(name):
    vals = _series(BOUND_FNS[name], "x")
    assert np.all(np.diff(vals, axis=1) <= 1e-15)


@pytest.mark.parametrize("name", ["pena_poisson", "pena_gauss", "freedman"])
def test_nondecreasing_in_v2(name):
    vals = _series(BOUND_FNS[name], "v2")
    assert np.all(np.diff(vals, axis=1) >= -1e-15)


@pytest.mark.parametrize("name", ["ratio_half", "ratio_quarter", "bt_self_normalized"])
def test_self_normalised_bounds_tighten_with_v2(name):
    # Here v2 enters the exponent's rate, so these bounds decrease in v2.
    vals = _series(BOUND_FNS[name], "v2")
    assert np.all(np.diff(vals, axis=1) <= 1e-15)


def test_dominance_on_grid():
    for x in XS:
        for v in V2S:
            g = pena_gauss_bound(x, v)
            assert pena_poisson_bound(x, v) >= g
            for c in (0.1, 1.0, 5.0):
                assert freedman_bound(x, v, c) >= g


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-3, 50), st.floats(1e-3, 50))
def test_bounds_in_unit_interval(x, v2):
    for name, value in evaluate_all(x, v2).items():
        assert 0 <= value <= 1, name


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-2, 20), st.floats(1e-2, 20), st.floats(1e-3, 0.999))
def test_optimal_lambda_is_minimiser(x, v2, lam):
    lam_star, best = optimal_lambda(x, v2)
    assert 0 < lam_star < 1
    assert best <= poisson_exponent(lam, x, v2) * (1 + 1e-12)


def test_table_csv():
    rows = bounds_table([1.0], [1.0])
    assert {r[2] for r in rows} == set(BOUND_NAMES)
    text = table_to_csv(rows)
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert text.splitlines()[0] == "x,v2,bound_name,value"
    got = {r["bound_name"]: float(r["value"]) for r in parsed}
    assert got["pena_poisson"] == pytest.approx(0.7358, abs=5e-5)
    assert got["pena_gauss"] == pytest.approx(0.6065, abs=5e-5)
    assert got["freedman"] == pytest.approx(0.7788, abs=5e-5)
    assert "\r" not in text


def test_table_near_zero_is_one():
    rows = bounds_table([1e-6], [1.0])
    assert all(v == pytest.approx(1.0, abs=1e-6) for *_, v in rows)
