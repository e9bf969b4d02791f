"""Coupling laws and site-addressed sampling."""

import numpy as np
import pytest

from kplab.ensemble import DisorderModel, Realization, sample


def test_uniform_moments(uniform_model):
    m = uniform_model.moments()
    assert m.mean == pytest.approx(1.0)
    assert m.variance == pytest.approx(1.0 / 12.0)


def test_two_point_moments(two_point_model):
    m = two_point_model.moments()
    assert m.mean == pytest.approx(2.0)
    assert m.variance == pytest.approx(1.0)


@pytest.mark.parametrize("text", [
    "uniform:0.5,1.5",
    "twopoint:1,0.5,3",
    "discrete:1,2;0.25,0.75",
])
def test_parse_roundtrip(text):
    model = DisorderModel.parse(text)
    again = DisorderModel.from_json(model.to_json())
    assert again.kind == model.kind
    assert again.moments() == model.moments()


@pytest.mark.parametrize("text", [
    "gaussian:0,1",
    "uniform:1.5",
    "twopoint:1,0.5",
    "discrete:1,2;0.25",
])
def test_parse_rejects(text):
    with pytest.raises(ValueError):
        DisorderModel.parse(text)


def test_nonpositive_mean_rejected():
    model = DisorderModel.discrete([-1.0, 1.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        model.require_nonzero_mean()


def test_degenerate_law_rejected():
    # a single effective atom has no disorder to average over
    with pytest.raises(ValueError):
        DisorderModel.discrete([2.0, 2.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        DisorderModel.two_point(2.0, 0.5, 2.0)
    with pytest.raises(ValueError):
        DisorderModel.uniform(1.0, 1.0)


def test_sampling_is_deterministic(uniform_model):
    a = sample(uniform_model, 11, -3, 12, stream=4)
    b = sample(uniform_model, 11, -3, 12, stream=4)
    np.testing.assert_array_equal(a.values, b.values)
    c = sample(uniform_model, 11, -3, 12, stream=5)
    assert not np.array_equal(a.values, c.values)


def test_site_addressing_window_extension(uniform_model):
    """Growing the window regenerates identical values at shared sites."""
    small = sample(uniform_model, 7, 0, 10)
    large = sample(uniform_model, 7, -5, 17)
    np.testing.assert_array_equal(small.values, large.values[5:15])
    for site in range(1, 11):
        assert small.coupling(site) == large.coupling(site)


def test_window_bounds(uniform_model):
    real = sample(uniform_model, 3, 0, 8)
    assert real.first_site == 1 and real.last_site == 8
    assert len(real.window(2, 6)) == 4
    with pytest.raises(IndexError):
        real.coupling(9)
    with pytest.raises(IndexError):
        real.window(-1, 4)


def test_values_read_only(uniform_model):
    real = sample(uniform_model, 3, 0, 8)
    with pytest.raises(ValueError):
        real.values[0] = 0.0


def test_two_point_support(two_point_model):
    real = sample(two_point_model, 1, 0, 1000)
    assert set(np.unique(real.values)) == {1.0, 3.0}
    # equal weights: the split should be near half and half
    assert 400 < np.sum(real.values == 1.0) < 600


def test_hand_built_realization():
    real = Realization(model=None, seed=0, site_offset=2,
                       values=np.array([0.3, -0.1, 0.7]))
    assert real.first_site == 2 and real.last_site == 4
    assert real.coupling(3) == -0.1
