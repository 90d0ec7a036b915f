import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from mppineq.marks import point_mass, rademacher
from mppineq.pp_core import (AbsContSpec, AtomSpec, CompensatorSpec, ConstantIntensity, FunctionIntensity,
                             MajorantViolation, MarkedPointPath, PiecewiseConstantIntensity, cumulative_A,
                             sample_path, spec_from_config, spec_to_config, validate_compensator, zero_ac)


def atoms_only(*atoms):
    return CompensatorSpec(zero_ac(), tuple(AtomSpec(t, m, law) for t, m, law in atoms))


def homogeneous(rate=1.0, law=None):
    return CompensatorSpec(AbsContSpec(ConstantIntensity(rate), rate, law or rademacher()))


class TestValidation:
    def test_mass_above_one(self):
        rep = validate_compensator(atoms_only((1.0, 1.5, point_mass(1.0))))
        assert not rep.ok
        assert any("atom mass > 1" in v for v in rep.violations)

    def test_constant_intensity_ok(self):
        assert validate_compensator(homogeneous(1.0)).ok

    def test_duplicate_atom_time(self):
        rep = validate_compensator(atoms_only((1.0, 0.5, point_mass(1.0)), (1.0, 0.5, point_mass(1.0))))
        assert any("duplicate atom time" in v for v in rep.violations)

    def test_unsorted_and_majorant(self):
        rep = validate_compensator(atoms_only((2.0, 0.5, point_mass(1.0)), (1.0, 0.5, point_mass(1.0))))
        assert any("atoms not sorted" in v for v in rep.violations)
        bad = CompensatorSpec(AbsContSpec(FunctionIntensity(lambda t, h: t), 1.0, rademacher()))
        assert any("majorant violated" in v for v in validate_compensator(bad, horizon=2.0).violations)
        neg = CompensatorSpec(AbsContSpec(FunctionIntensity(lambda t, h: -1.0), 1.0, rademacher()))
        assert any("negative intensity" in v for v in validate_compensator(neg).violations)


class TestSampling:
    def test_sure_atom(self):
        path = sample_path(atoms_only((1.0, 1.0, point_mass(2.0))), 2.0, seed=0)
        assert path.events == ((1.0, 2.0),)

    def test_poisson_count_mean(self):
        spec = homogeneous(1.0)
        counts = np.array([len(sample_path(spec, 10.0, s).events) for s in range(100_000)])
        se = counts.std(ddof=1) / math.sqrt(counts.size)
        assert abs(counts.mean() - 10.0) <= 3 * se

    def test_atom_bernoulli_fraction(self):
        spec = atoms_only((1.0, 0.5, point_mass(1.0)))
        hit = np.array([len(sample_path(spec, 2.0, s).events) for s in range(100_000)], dtype=float)
        assert abs(hit.mean() - 0.5) <= 3 * math.sqrt(0.25 / hit.size)

    def test_count_matches_cumulative_A(self):
        spec = CompensatorSpec(
            AbsContSpec(PiecewiseConstantIntensity((0.0, 1.0, 2.0), (0.5, 2.0, 1.0)), 2.0, rademacher()),
            (AtomSpec(1.5, 0.3, point_mass(1.0)), AtomSpec(2.5, 0.9, rademacher())),
        )
        paths = [sample_path(spec, 3.0, s) for s in range(20_000)]
        for t in (0.7, 1.6, 3.0):
            c = np.array([p.count(t) for p in paths])
            assert abs(c.mean() - cumulative_A(spec, t)) <= 3 * c.std(ddof=1) / math.sqrt(c.size)

    def test_thinning_ks_statistic_fixed_seed(self):
        # Gaps on the rate-2 segment of a piecewise-constant intensity.
        spec = CompensatorSpec(AbsContSpec(PiecewiseConstantIntensity((0.0, 1.0), (0.5, 2.0)), 2.0, rademacher()))
        path = sample_path(spec, 4001.0, seed=12345)
        t = path.times
        gaps = np.diff(t[t > 1.0])
        ks = stats.kstest(gaps, "expon", args=(0, 0.5))
        crit = 1.63 / math.sqrt(gaps.size)  # asymptotic level-0.01 critical value
        assert ks.statistic < crit
        assert ks.pvalue > 0.01
        assert ks.statistic == pytest.approx(0.01109523055541839, abs=1e-12)

    def test_majorant_violation_raises(self):
        spec = CompensatorSpec(AbsContSpec(FunctionIntensity(lambda t, h: 5.0), 1.0, rademacher()))
        with pytest.raises(MajorantViolation, match="majorant violated"):
            sample_path(spec, 10.0, seed=1)

    def test_history_dependent_intensity(self):
        # Self-exciting rate 0.5 + 0.5 * (events so far), capped by the majorant.
        fn = FunctionIntensity(lambda t, h: min(0.5 + 0.5 * len(h), 3.0), history_dependent=True)
        spec = CompensatorSpec(AbsContSpec(fn, 3.0, rademacher()))
        path = sample_path(spec, 5.0, seed=3)
        assert path.events == sample_path(spec, 5.0, seed=3).events

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**63 - 1))
    def test_determinism_byte_identical(self, seed):
        spec = CompensatorSpec(AbsContSpec(ConstantIntensity(2.0), 2.0, rademacher()),
                               (AtomSpec(0.5, 0.5, point_mass(3.0)),))
        assert sample_path(spec, 3.0, seed).to_csv() == sample_path(spec, 3.0, seed).to_csv()

    def test_horizon_prefix_consistency(self):
        spec = homogeneous(1.5)
        short = sample_path(spec, 4.0, seed=9).events
        long = sample_path(spec, 8.0, seed=9).events
        assert long[: len(short)] == short


class TestCumulativeA:
    def test_constant(self):
        assert cumulative_A(homogeneous(2.0), 3.0) == 6.0

    def test_atoms_only(self):
        spec = atoms_only((1.0, 0.5, point_mass(1.0)), (2.0, 0.5, point_mass(1.0)))
        assert cumulative_A(spec, 1.5) == 0.5

    def test_linear_intensity(self):
        spec = CompensatorSpec(AbsContSpec(FunctionIntensity(lambda s, h: s), 2.0, rademacher()))
        assert cumulative_A(spec, 2.0) == pytest.approx(2.0, abs=1e-10)


class TestPaths:
    def test_invalid_times(self):
        with pytest.raises(ValueError):
            MarkedPointPath(((1.0, 0.0), (1.0, 1.0)), 2.0)
        with pytest.raises(ValueError):
            MarkedPointPath(((3.0, 0.0),), 2.0)

    def test_csv_roundtrip(self):
        p = MarkedPointPath(((0.25, -1.0), (1.5, 2.0)), 2.0)
        text = p.to_csv()
        assert text.splitlines()[0] == "time,mark"
        assert MarkedPointPath.from_csv(text, 2.0) == p

    def test_spec_config_roundtrip(self):
        spec = CompensatorSpec(
            AbsContSpec(PiecewiseConstantIntensity((0.0, 1.0), (0.5, 2.0)), 2.0, rademacher()),
            (AtomSpec(1.5, 0.3, point_mass(1.0)),),
        )
        again = spec_from_config(spec_to_config(spec))
        assert cumulative_A(again, 2.0) == pytest.approx(cumulative_A(spec, 2.0))
        assert again.atoms[0].mass == 0.3
