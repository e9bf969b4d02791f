"""Lyapunov estimators, rotation numbers, and the scaling fits."""

import math

import numpy as np
import pytest

from kplab.lyapunov import (
    ABOVE,
    BELOW,
    ConvergenceError,
    estimate_lyapunov,
    estimate_lyapunov_critical,
    fit_scaling,
    fit_series,
    idos_from_rotation,
    rotation_number,
)
from kplab.prufer import HYPERBOLIC
from kplab.spectral import idos_direct

E1 = math.pi ** 2


def test_gamma_vanishes_at_critical_energy(uniform_model):
    """At E_1 the cocycle collapses to shears: (1, 0) is invariant, so the
    estimate from theta0 = 0 is zero to rounding."""
    est = estimate_lyapunov(E1, uniform_model, 200_000, 8, seed=4)
    assert abs(est.value) < 1e-10


def test_gamma_at_critical_energy_generic_angle(uniform_model):
    # A generic start direction picks up only the log(n)/n boundary term.
    est = estimate_lyapunov(E1, uniform_model, 200_000, 8, seed=4, theta0=0.7)
    assert 0.0 <= est.value <= 1.2e-4


def test_gamma_positive_inside_band(uniform_model):
    est = estimate_lyapunov(2.0, uniform_model, 100_000, 8, seed=4)
    assert est.value > 3.0 * est.std_error
    assert est.std_error > 0.0


def test_conjugation_invariance(uniform_model):
    conj = np.array([[2.0, 1.0], [0.0, 1.0]])
    plain = estimate_lyapunov(2.0, uniform_model, 100_000, 8, seed=4)
    moved = estimate_lyapunov(2.0, uniform_model, 100_000, 8, seed=4,
                              conjugation=conj)
    # Same streams, so the difference is a pure O(1/n) boundary effect.
    assert abs(plain.value - moved.value) < 1e-4


def test_theta0_invariance(uniform_model):
    a = estimate_lyapunov(2.0, uniform_model, 100_000, 8, seed=4)
    b = estimate_lyapunov(2.0, uniform_model, 100_000, 8, seed=4, theta0=1.0)
    assert abs(a.value - b.value) < 1e-4


def test_budget_validation(uniform_model):
    with pytest.raises(ValueError):
        estimate_lyapunov(2.0, uniform_model, 10, 8, seed=0)
    with pytest.raises(ValueError):
        estimate_lyapunov(2.0, uniform_model, 100_000, 0, seed=0)


def test_critical_estimate_above(ce1, uniform_model):
    eps = 1e-3
    est = estimate_lyapunov_critical(ce1, uniform_model, eps, HYPERBOLIC,
                                     100_000, 16, seed=4)
    theory = ce1.d_plus * math.sqrt(eps)
    assert est.value == pytest.approx(theory, rel=0.02)
    assert est.z == pytest.approx(complex(ce1.energy + eps))


def test_critical_estimate_mixing_gate(ce1, uniform_model):
    # n_steps * sqrt(eps) must clear the mixing budget.
    with pytest.raises(ValueError):
        estimate_lyapunov_critical(ce1, uniform_model, 1e-6, HYPERBOLIC,
                                   10_000, 8, seed=0)


def test_rotation_number_below(ce1, uniform_model):
    eps = 1e-2
    rot = rotation_number(eps, uniform_model, 50_000, 8, seed=4, ce=ce1)
    theory = -ce1.eta * math.sqrt(eps) / math.pi
    assert rot.value < 0.0
    assert rot.value == pytest.approx(theory, rel=0.02)


def test_idos_routes_agree(ce1, uniform_model):
    """Rotation-number IDOS and direct node counting must agree within the
    Monte-Carlo error plus one box-quantization step."""
    eps = 1e-2
    n_cells = 400
    via_rot = idos_from_rotation(eps, uniform_model, 50_000, 8, seed=4,
                                 ce=ce1)
    direct = idos_direct(ce1.energy - eps, uniform_model, n_cells, 64, seed=4)
    allowance = 3.0 * (via_rot.std_error + direct.std_error) + 1.0 / n_cells
    assert abs(via_rot.value - direct.value) < allowance


# -- fits ----------------------------------------------------------------------

def test_fit_series_recovers_power_law():
    grid = np.geomspace(1e-4, 1e-2, 9)
    values = 0.7 * grid ** 0.65
    stderrs = 0.01 * values
    fit = fit_series(grid, values, stderrs, BELOW, 0.65, 0.7)
    assert fit.exponent == pytest.approx(0.65, rel=1e-9)
    assert fit.coefficient == pytest.approx(0.7, rel=1e-9)
    assert fit.residual < 1e-12
    assert fit.theory_exponent == 0.65
    assert fit.theory_coefficient == 0.7


def test_fit_series_zero_stderr_floor():
    # Integer-count estimators can report zero variance; the fit must not
    # blow up on infinite weights.
    grid = np.geomspace(1e-3, 1e-1, 5)
    values = 2.0 * grid
    stderrs = np.zeros_like(values)
    fit = fit_series(grid, values, stderrs, BELOW, 1.0, 2.0)
    assert fit.exponent == pytest.approx(1.0, rel=1e-9)
    assert fit.coefficient == pytest.approx(2.0, rel=1e-9)

    stderrs = np.array([0.0, 1e-4, 1e-4, 1e-4, 1e-4])
    fit = fit_series(grid, values, stderrs, BELOW, 1.0, 2.0)
    assert fit.exponent == pytest.approx(1.0, rel=1e-6)


def test_fit_scaling_validation(ce1, uniform_model):
    with pytest.raises(ValueError):
        fit_scaling("sideways", ce1, uniform_model)
    with pytest.raises(ValueError):
        fit_scaling(BELOW, ce1, uniform_model, samples=4)
    with pytest.raises(ValueError):
        fit_scaling(BELOW, ce1, uniform_model,
                    epsilon_grid=np.array([1e-3, 1e-2]))
    with pytest.raises(ValueError):
        fit_scaling(ABOVE, ce1, uniform_model,
                    epsilon_grid=np.geomspace(1e-3, 2e-3, 5),
                    n_steps=20_000, samples=8)


def test_fit_scaling_starved_budget_raises(ce1, uniform_model):
    """Below the critical energy the signal is O(eps); 8 x 20k steps cannot
    resolve it, and the fit must refuse rather than return a junk slope.
    The partial per-point series rides along for persistence."""
    grid = np.geomspace(1e-3, 1e-2, 4)
    with pytest.raises(ConvergenceError) as info:
        fit_scaling(BELOW, ce1, uniform_model, epsilon_grid=grid,
                    n_steps=20_000, samples=8, seed=42)
    err = info.value
    assert "noise exceeded the scaling signal" in str(err)
    assert len(err.epsilon_grid) == 3
    assert len(err.values) == 3
    assert len(err.stderrs) == 3
    assert err.values[-1] <= 0.0
    np.testing.assert_allclose(err.epsilon_grid, grid[:3])
