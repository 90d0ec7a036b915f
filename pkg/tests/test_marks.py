import numpy as np
import pytest

from mppineq.marks import (DiscreteLaw, finite_discrete, law_from_config, law_to_config, point_mass, rademacher,
                           two_point, uniform)


def test_rademacher_moments():
    law = rademacher()
    assert law.mean == 0.0
    assert law.second_moment == 1.0
    assert (law.support_min, law.support_max) == (-1.0, 1.0)


def test_two_point_zero_mean():
    law = two_point(1 / 3, -2.0, 1.0)
    assert law.mean == pytest.approx(0.0, abs=1e-15)
    assert law.second_moment == pytest.approx(2.0)


def test_invalid_laws():
    with pytest.raises(ValueError):
        DiscreteLaw((0.0, 1.0), (0.5, 0.6))
    with pytest.raises(ValueError):
        two_point(0.5, 1.0, -1.0)
    with pytest.raises(ValueError):
        uniform(1.0, 1.0)


def test_sampling_frequencies():
    law = finite_discrete([(-1, 0.2), (0, 0.3), (4, 0.5)])
    z = law.sample(np.random.default_rng(1), 200000)
    for v, p in law.atoms():
        assert abs(np.mean(z == v) - p) < 4 * np.sqrt(p * (1 - p) / z.size)


def test_point_mass_and_uniform_samples():
    rng = np.random.default_rng(0)
    assert np.all(point_mass(2.0).sample(rng, 5) == 2.0)
    u = uniform(-1.0, 3.0).sample(rng, 10000)
    assert u.min() >= -1 and u.max() <= 3
    assert uniform(-1.0, 3.0).mean == pytest.approx(1.0)
    assert uniform(0.0, 1.0).expect(lambda x: x * x) == pytest.approx(1 / 3)


@pytest.mark.parametrize("cfg", [
    {"kind": "rademacher"},
    {"kind": "two_point", "p": 0.25, "x_minus": -3.0, "x_plus": 1.0},
    {"kind": "uniform", "a": -1.0, "b": 1.0},
    {"kind": "finite_discrete", "pairs": [[-1.0, 0.5], [2.0, 0.25], [0.0, 0.25]]},
])
def test_config_roundtrip(cfg):
    law = law_from_config(cfg)
    again = law_from_config(law_to_config(law))
    assert again.mean == pytest.approx(law.mean)
    assert again.second_moment == pytest.approx(law.second_moment)


def test_unknown_law_kind():
    with pytest.raises(ValueError, match="unknown mark law"):
        law_from_config({"kind": "cauchy"})
