import pickle

import numpy as np
import pytest
from scipy import stats

from mppineq.coalescent import BetaMeasure, CoalescentState, Dirac, coalescent_martingale, v_of_t
from mppineq.engines import AtomEngine, CoalescentEngine, CompoundPoissonEngine, GenericEngine, make_engine
from mppineq.expo import gaussian, poissonian
from mppineq.marks import point_mass, rademacher, two_point, uniform
from mppineq.models import atom_grid_model, compound_poisson_model
from mppineq.pp_core import AbsContSpec, CompensatorSpec, MarkedPointPath, PiecewiseConstantIntensity
from mppineq.stoch_int import build_martingale


def cp_model():
    return compound_poisson_model(1.5, two_point(1 / 3, -2.0, 1.0))


def atom_model():
    return atom_grid_model((0.5, 1.0, 2.0), (0.5, 1.0, 0.3), [point_mass(2.0), rademacher(), uniform(-1.0, 1.0)])


class TestDispatch:
    def test_kinds(self):
        assert isinstance(make_engine(*cp_model()), CompoundPoissonEngine)
        assert isinstance(make_engine(*atom_model()), AtomEngine)
        assert isinstance(make_engine(*cp_model(), kind="generic"), GenericEngine)
        intensity = PiecewiseConstantIntensity((0.0, 1.0), (1.0, 2.0))
        spec = CompensatorSpec(AbsContSpec(intensity, 2.0, rademacher()))
        _, w = cp_model()
        assert isinstance(make_engine(spec, w), GenericEngine)
        with pytest.raises(ValueError):
            make_engine(spec, w, kind="compound_poisson")


class TestAgainstGeneric:
    @pytest.mark.parametrize("model", [cp_model, atom_model], ids=["compound_poisson", "atoms"])
    def test_terminal_distribution(self, model):
        spec, w = model()
        fast = make_engine(spec, w).sample(11, 0, 4000, 3.0)
        slow = GenericEngine(spec, w).sample(12, 0, 4000, 3.0)
        for a, b in zip(make_engine(spec, w).values_at(fast, 3.0), GenericEngine(spec, w).values_at(slow, 3.0)):
            # compound Poisson values sit on a lattice; rounding removes float noise that would split ties
            assert stats.ks_2samp(np.round(a, 9), np.round(b, 9)).pvalue > 1e-3

    def test_cp_values_match_reference_construction(self):
        spec, w = cp_model()
        eng = make_engine(spec, w)
        batch = eng.sample(3, 0, 50, 4.0)
        for i in range(batch.n):
            c = batch.count[i]
            marks = batch.dm[i, :c]
            path = MarkedPointPath(tuple(zip(batch.times[i, :c], marks)), 4.0)
            mp = build_martingale(w, path, spec)
            for t in (1.0, 2.5, 4.0):
                got = [v[i] for v in eng.values_at(batch, t)]
                assert got == pytest.approx(list(mp.value_at(t)), abs=1e-12)

    def test_atom_exponent_matches_generic(self):
        spec, w = atom_model()
        fast, slow = AtomEngine(spec, w), GenericEngine(spec, w)
        b_slow = slow.sample(5, 0, 20, 3.0)
        for lam, fam in ((0.4, gaussian()), (0.3, poissonian())):
            ref = slow.exponent_at(b_slow, lam, fam, "compensator", 3.0)
            got = fast.exponent_at(fast.sample(5, 0, 20, 3.0), lam, fam, "compensator", 3.0)
            # S and E(S) are deterministic for pure-atom models
            assert got["S"][0] == pytest.approx(ref["S"][0], abs=1e-12)
            assert got["logE"][0] == pytest.approx(ref["logE"][0], abs=1e-12)


class TestStreams:
    def test_prefix_consistency(self):
        spec, w = cp_model()
        eng = make_engine(spec, w)
        short, long = eng.sample(9, 2, 500, 5.0), eng.sample(9, 2, 500, 40.0)
        for a, b in zip(eng.values_at(short, 5.0), eng.values_at(long, 5.0)):
            np.testing.assert_array_equal(a, b)

    def test_blocks_differ(self):
        eng = make_engine(*cp_model())
        a, b = eng.sample(9, 0, 500, 5.0), eng.sample(9, 1, 500, 5.0)
        assert not np.array_equal(eng.values_at(a, 5.0)[0], eng.values_at(b, 5.0)[0])

    def test_same_seed_same_block(self):
        eng = make_engine(*atom_model())
        np.testing.assert_array_equal(eng.sample(4, 3, 100, 3.0).m, eng.sample(4, 3, 100, 3.0).m)


class TestCoalescentEngine:
    @pytest.mark.parametrize("measure", [Dirac(0.0), BetaMeasure(1.5, 1.5)], ids=["kingman", "beta"])
    def test_matches_reference_martingale(self, measure):
        eng = CoalescentEngine(measure, 20, 20.0)
        batch = eng.sample(1, 0, 30, 5.0)
        curve = v_of_t(measure, eng.t0, 20.0, [eng.t0 + 5.0])
        for i in range(batch.n):
            c = batch.count[i]
            events = tuple(zip(batch.times[i, :c].tolist(), batch.extra["ks"][i, :c].tolist()))
            mp = coalescent_martingale(CoalescentState(20, eng.t0, eng.t0 + 5.0, events), curve)
            np.testing.assert_allclose(batch.dm[i, :c], mp.jump_sizes, rtol=1e-10)
            for t in (eng.t0 + 0.3, eng.t0 + 2.0, eng.t0 + 5.0):
                got = [v[i] for v in eng.values_at(batch, t)]
                assert got == pytest.approx(list(mp.value_at(t)), rel=1e-8, abs=1e-10)

    def test_kingman_origin(self):
        eng = CoalescentEngine(Dirac(0.0), 20, 20.0)
        assert eng.time_origin == pytest.approx(0.10258658877510096, rel=1e-12)
        batch = eng.sample(0, 0, 10, 5.0)
        assert batch.horizon == pytest.approx(eng.t0 + 5.0)

    def test_pickle_roundtrip(self):
        eng = CoalescentEngine(BetaMeasure(1.5, 1.5), 10, 20.0)
        eng.curve(5.0)
        clone = pickle.loads(pickle.dumps(eng))
        a, b = eng.sample(2, 0, 50, 5.0), clone.sample(2, 0, 50, 5.0)
        np.testing.assert_array_equal(eng.values_at(a, 3.0)[0], clone.values_at(b, 3.0)[0])

    def test_jumps_nonnegative(self):
        batch = CoalescentEngine(BetaMeasure(1.5, 1.5), 20, 20.0).sample(0, 0, 2000, 5.0)
        assert np.all(batch.dm[batch.mask] >= 0)
