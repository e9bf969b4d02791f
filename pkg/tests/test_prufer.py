"""Critical normal form: blow-up constants, circle action, step maps."""

import math

import numpy as np
import pytest

from kplab.ensemble import DisorderModel
from kplab.prufer import (
    ELLIPTIC,
    HYPERBOLIC,
    CriticalEnergy,
    act_on_circle,
    basis_change,
    birkhoff_sum,
    conjugated_site_matrix,
    default_burn_in,
    gamma_increment,
    gamma_increment_truncated,
    phase_step,
    phase_step_truncated,
    trajectory,
)

TWO_PI = 2.0 * math.pi


def circle_dist(a, b):
    return abs((a - b + math.pi) % TWO_PI - math.pi)


# -- frozen constants ----------------------------------------------------------

def test_uniform_critical_constants(ce1):
    assert ce1.energy == pytest.approx(math.pi ** 2, rel=1e-15)
    assert ce1.coupling_mean == pytest.approx(1.0)
    assert ce1.coupling_variance == pytest.approx(1.0 / 12.0)
    assert ce1.eta == pytest.approx(0.22507907903927652, rel=1e-15)
    assert ce1.b == pytest.approx(1.4904500894290902, rel=1e-15)
    assert ce1.d_minus == pytest.approx(0.00052771449813717589, rel=1e-14)
    assert ce1.d_plus == ce1.eta


def test_two_point_critical_constants(two_point_model):
    ce = CriticalEnergy.for_model(1, two_point_model)
    assert ce.coupling_mean == pytest.approx(2.0)
    assert ce.coupling_variance == pytest.approx(1.0)
    # mean 2 at E_1 = pi^2 collapses eta to exactly 1/pi
    assert ce.eta == pytest.approx(1.0 / math.pi, rel=1e-15)
    assert ce.d_plus / math.pi == pytest.approx(0.10132118364233778, rel=1e-14)


def test_zero_mean_coupling_rejected():
    model = DisorderModel.discrete([-1.0, 1.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        CriticalEnergy.for_model(1, model)


def test_epsilon_limit(ce1):
    assert ce1.epsilon_limit() == pytest.approx(0.1)
    with pytest.raises(ValueError):
        ce1.check_epsilon(0.2)
    with pytest.raises(ValueError):
        ce1.check_epsilon(0.0)
    with pytest.raises(ValueError):
        phase_step(ce1, 0.5, ELLIPTIC, 0.3, 0.0)


# -- circle action -------------------------------------------------------------

def test_act_on_circle_rotation():
    for phi in (0.3, -0.4, 1.2):
        rot = np.array([[math.cos(phi), -math.sin(phi)],
                        [math.sin(phi), math.cos(phi)]])
        for theta in np.linspace(0.0, TWO_PI, 9, endpoint=False):
            got = act_on_circle(rot, theta)
            assert circle_dist(got, theta + phi) < 1e-12


def test_act_on_circle_scaling_invariance():
    m = np.array([[2.0, 0.7], [-0.4, 1.1]])
    for c in (3.0, 0.2, -1.0, -5.5):
        for theta in np.linspace(0.0, TWO_PI, 7, endpoint=False):
            assert act_on_circle(c * m, theta) == pytest.approx(
                act_on_circle(m, theta), abs=1e-13)


def test_act_on_circle_nearest_branch():
    # A diagonal stretch never moves a direction by pi/2 or more.
    m = np.diag([10.0, 0.1])
    for theta in np.linspace(0.0, TWO_PI, 17):
        delta = (act_on_circle(m, theta) - theta + math.pi) % TWO_PI - math.pi
        assert abs(delta) < 0.5 * math.pi


# -- step maps -----------------------------------------------------------------

@pytest.mark.parametrize("regime", [ELLIPTIC, HYPERBOLIC])
def test_phase_step_matches_matrix_action(ce1, regime):
    rng = np.random.default_rng(8)
    for _ in range(10):
        eps = float(rng.uniform(1e-5, 1e-2))
        theta = float(rng.uniform(0.0, TWO_PI))
        vt = float(rng.uniform(-0.5, 0.5))
        m = conjugated_site_matrix(ce1, eps, regime, ce1.coupling_mean + vt)
        assert phase_step(ce1, eps, regime, theta, vt) == pytest.approx(
            act_on_circle(m, theta), abs=1e-12)


def test_conjugated_matrix_unimodular(ce1):
    for regime in (ELLIPTIC, HYPERBOLIC):
        m = conjugated_site_matrix(ce1, 1e-4, regime, 1.3)
        assert np.linalg.det(m) == pytest.approx(1.0, rel=1e-12)


def test_basis_change_inverts(ce1):
    for regime in (ELLIPTIC, HYPERBOLIC):
        M, Minv = basis_change(ce1, 1e-3, regime)
        np.testing.assert_allclose(M @ Minv, np.eye(2), atol=1e-13)


# The truncated maps drop controlled remainders; the constants below were
# measured on this exact grid of draws and hold with a factor >= 1.5 margin.

def _draws():
    rng = np.random.default_rng(3)
    thetas = rng.uniform(0.0, TWO_PI, 12)
    vts = rng.uniform(-0.5, 0.5, 12)
    return thetas, vts


@pytest.mark.parametrize("regime", [ELLIPTIC, HYPERBOLIC])
def test_truncated_phase_error_order_eps(ce1, regime):
    thetas, vts = _draws()
    for eps in np.geomspace(1e-6, 1e-3, 7):
        for theta, vt in zip(thetas, vts):
            exact = phase_step(ce1, eps, regime, theta, vt)
            trunc = phase_step_truncated(ce1, eps, regime, theta, vt)
            assert circle_dist(exact, trunc) <= 0.1 * eps


def test_truncated_gamma_error_elliptic(ce1):
    thetas, vts = _draws()
    for eps in np.geomspace(1e-6, 1e-3, 7):
        for theta, vt in zip(thetas, vts):
            err = abs(gamma_increment(ce1, eps, ELLIPTIC, theta, vt)
                      - gamma_increment_truncated(ce1, eps, ELLIPTIC, theta, vt))
            assert err <= 150.0 * eps ** 1.5


def test_truncated_gamma_error_hyperbolic(ce1):
    thetas, vts = _draws()
    for eps in np.geomspace(1e-6, 1e-3, 7):
        for theta, vt in zip(thetas, vts):
            err = abs(gamma_increment(ce1, eps, HYPERBOLIC, theta, vt)
                      - gamma_increment_truncated(ce1, eps, HYPERBOLIC, theta, vt))
            assert err <= 0.2 * eps


# -- trajectories ----------------------------------------------------------------

def test_windings_telescope(ce1, uniform_model):
    traj = trajectory(ce1, uniform_model, 1e-2, ELLIPTIC, 500, seed=1)
    lifted = traj.theta0 + np.cumsum(traj.windings())
    np.testing.assert_allclose(lifted % TWO_PI, traj.thetas, atol=1e-12)


def test_total_gamma(ce1, uniform_model):
    traj = trajectory(ce1, uniform_model, 1e-3, HYPERBOLIC, 200, seed=5)
    assert traj.total_gamma == pytest.approx(
        float(np.sum(traj.gamma_increments)))


def test_trajectory_burn_in_advances_start(ce1, uniform_model):
    cold = trajectory(ce1, uniform_model, 1e-3, ELLIPTIC, 50, seed=2)
    warm = trajectory(ce1, uniform_model, 1e-3, ELLIPTIC, 50, seed=2,
                      burn_in=100)
    assert cold.theta0 == 0.0
    assert warm.theta0 != 0.0
    assert warm.burn_in == 100


def test_trajectory_deterministic(ce1, uniform_model):
    a = trajectory(ce1, uniform_model, 1e-3, ELLIPTIC, 100, seed=9, stream=3)
    b = trajectory(ce1, uniform_model, 1e-3, ELLIPTIC, 100, seed=9, stream=3)
    np.testing.assert_array_equal(a.thetas, b.thetas)
    np.testing.assert_array_equal(a.gamma_increments, b.gamma_increments)


def test_default_burn_in_values():
    assert default_burn_in(1e-4) == 1000
    assert default_burn_in(1e-2) == 100


def test_birkhoff_equidistribution(ce1, uniform_model):
    """Oscillatory observables average out along the rotation; the bound is
    the bias envelope sqrt(eps) + 1/(N sqrt(eps)) with a wide safety factor
    (worst measured ratio over these seeds is 0.17)."""
    eps = 1e-2
    n_steps = 2000
    envelope = math.sqrt(eps) + 1.0 / (n_steps * math.sqrt(eps))
    for seed in range(5):
        traj = trajectory(ce1, uniform_model, eps, ELLIPTIC, n_steps, seed,
                          burn_in=default_burn_in(eps))
        for f in (lambda t: np.cos(2 * t), lambda t: np.sin(2 * t)):
            assert abs(birkhoff_sum(f, traj)) <= 0.5 * envelope
