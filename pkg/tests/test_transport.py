"""Transport moments, martingale deviations, and norm control."""

import math

import numpy as np
import pytest

from kplab.ensemble import sample
from kplab.prufer import ELLIPTIC, _critical_family, act_on_circle
from kplab.transport import (
    bound_exponent,
    growth_exponent,
    kernel_mass_ratio,
    martingale_deviation,
    moment_curve,
    moment_estimate,
    norm_control_check,
    schedule,
    two_vector_check,
)


# -- scalar pieces ---------------------------------------------------------------

def test_schedule_frozen():
    n, eps0 = schedule(100.0, 0.3, 1.0)
    assert n == 13
    assert eps0 == pytest.approx(13.0 ** -1.6, rel=1e-15)
    with pytest.raises(ValueError):
        schedule(0.5)


def test_schedule_floor():
    n, _ = schedule(1.0, 0.3, 1.0)
    assert n == 4


def test_bound_exponent():
    assert bound_exponent(4.0) == pytest.approx(1.0)
    assert bound_exponent(2.0) == pytest.approx(-1.0 / 3.0)
    assert bound_exponent(2.5) == pytest.approx(0.0)


def test_kernel_mass_ratio():
    # |1+1j|^2 + |2+0.5j|^2 + 2 over |3+1.5j|^2 = 8.25 / 11.25
    assert kernel_mass_ratio(1 + 1j, 2 + 0.5j) == pytest.approx(11.0 / 15.0)
    assert kernel_mass_ratio(1 + 1j, -1 - 1j) == math.inf
    rng = np.random.default_rng(0)
    for _ in range(200):
        mp = complex(rng.normal(), abs(rng.normal()))
        mm = complex(rng.normal(), abs(rng.normal()))
        assert kernel_mass_ratio(mp, mm) >= 0.5


def test_two_vector_check():
    assert two_vector_check(500, seed=1) <= 1.0


# -- moments ------------------------------------------------------------------------

def test_free_moment_deterministic():
    est = moment_estimate(2.0, 100.0, 0.5, None, None, 1, 0,
                          energy_window=(1.0, 4.0), x_max=2000,
                          refine_check=True)
    # free operator: single exact sample, no spread; frozen regression value
    assert est.std_error == 0.0
    assert est.value == pytest.approx(14847.552361871289, rel=1e-9)


def test_moment_validation(uniform_model, ce1):
    with pytest.raises(ValueError):
        moment_estimate(2.0, 100.0, 1.0, uniform_model, ce1, 1, 0)
    with pytest.raises(ValueError):
        moment_estimate(2.0, 0.5, 0.5, uniform_model, ce1, 1, 0)
    with pytest.raises(ValueError):
        moment_estimate(2.0, 100.0, 0.5, None, None, 1, 0)
    with pytest.raises(ValueError):
        moment_estimate(2.0, 100.0, 0.5, None, None, 1, 0,
                        energy_window=(1.0, 4.0))


def test_free_ballistic_exponent():
    """Second moment of the free operator grows like T^2; the quadrature
    pipeline must reproduce that on a fixed window with the cutoff tracking
    the ballistic front."""
    curve = moment_curve(2.0, np.geomspace(10.0, 1000.0, 5), 0.5, None,
                         None, samples=1, seed=0,
                         energy_window=(1.0, 4.0),
                         x_max_rule=lambda T: int(10.0 * T * 2.0))
    assert growth_exponent(curve) == pytest.approx(2.0, abs=0.05)


def test_growth_exponent_range_gate():
    curve = moment_curve(2.0, np.geomspace(10.0, 50.0, 5), 0.5, None,
                         None, samples=1, seed=0,
                         energy_window=(1.0, 4.0),
                         x_max_rule=lambda T: int(10.0 * T * 2.0))
    with pytest.raises(ValueError):
        growth_exponent(curve)


# -- deviations -----------------------------------------------------------------------

def test_martingale_sweep_matches_reference(ce1, uniform_model):
    """The compiled sweep must agree with a direct transcription of the
    recursion: accumulate X_j = -coef (v_j - vbar) cos(2 theta_{j-1}), then
    advance the phase through the conjugated site matrix."""
    n_sites, alpha, seed = 50, 0.2, 7
    eps = float(n_sites) ** (-1.0 - 2.0 * alpha)
    report = martingale_deviation(ce1, uniform_model, eps, n_sites, alpha,
                                  samples=4, seed=seed)
    B, u, w = _critical_family(ce1, eps, ELLIPTIC)
    vbar = ce1.coupling_mean
    coef = 1.0 / (2.0 * math.sqrt(2.0 * vbar * ce1.energy))
    for r in range(4):
        real = sample(uniform_model, seed, -n_sites - 1, n_sites, stream=r)
        theta, p, pmin, pmax = 0.0, 0.0, 0.0, 0.0
        for v in real.values:
            p += -coef * (v - vbar) * math.cos(2.0 * theta)
            pmin, pmax = min(pmin, p), max(pmax, p)
            theta = act_on_circle(B + v * np.outer(u, w), theta)
        assert report.sup_values[r] == pytest.approx(pmax - pmin, abs=1e-12)


def test_martingale_sups_diffusive(ce1, uniform_model):
    """Window sups live on the sqrt(N) scale, far below the N^(1/2+alpha)
    threshold, so the empirical tail is identically zero."""
    n_sites, alpha = 1000, 0.2
    eps = float(n_sites) ** (-1.0 - 2.0 * alpha)
    report = martingale_deviation(ce1, uniform_model, eps, n_sites, alpha,
                                  samples=60, seed=3)
    med = float(np.median(report.sup_values))
    assert 0.5 <= med <= 5.0
    assert report.sup_values.max() < 0.2 * report.threshold
    assert report.empirical_tail == 0.0


def test_martingale_validation(ce1, uniform_model):
    with pytest.raises(ValueError):
        martingale_deviation(ce1, uniform_model, 1e-3, 100, 0.0,
                             samples=4, seed=0)


# -- norm control -----------------------------------------------------------------------

def test_norm_control_epsilon_coupling(ce1, uniform_model):
    with pytest.raises(ValueError):
        norm_control_check(ce1, uniform_model, 1e-3, 100, 0.2,
                           samples=4, seed=0)


def test_norm_control_scale(ce1, uniform_model):
    """sup ||T|| sits on the eps^(-1/2) scale: the scaled median is O(1)
    and no realization clears a constant slightly above the top decile."""
    n_sites, alpha = 100, 0.2
    eps = float(n_sites) ** (-1.0 - 2.0 * alpha)
    report = norm_control_check(ce1, uniform_model, eps, n_sites, alpha,
                                samples=60, seed=5)
    assert 3.0 <= report.median_scaled <= 5.0
    assert report.exceedance(1.2 * report.quantile_scaled(0.9)) == 0.0
    assert report.exceedance(5.0) == 0.0
    assert report.stride == 1
