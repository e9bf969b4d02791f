"""Modified Prüfer variables near the band-touching energies.

At ``E_l = (pi l)^2`` the unit-cell transfer matrix degenerates to a Jordan
block (times ``(-1)^l``).  Conjugating the cocycle at ``E_l -/+ epsilon`` by
the blow-up basis ``M_eps = M2 M1`` turns it into a small perturbation of a
rotation (below, the elliptic regime) or of a hyperbolic stretch (above).
This module builds the basis change, the exact conjugated phase/log-norm
maps, their leading-order truncations, and trajectory containers.

Angles follow the direction-vector convention ``e_theta = (cos, sin)`` on
``(psi', psi)``; the circle action is defined mod pi and every step returns
the 2*pi-representative nearest its input, so winding sums telescope.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ensemble import DisorderModel, sample
from .transfer import critical_energy, free_propagator, jump_matrix

__all__ = [
    "ELLIPTIC",
    "HYPERBOLIC",
    "CriticalEnergy",
    "act_on_circle",
    "basis_change",
    "conjugated_site_matrix",
    "site_family",
    "phase_step",
    "gamma_increment",
    "phase_step_truncated",
    "gamma_increment_truncated",
    "PruferTrajectory",
    "trajectory",
    "birkhoff_sum",
    "default_burn_in",
]

ELLIPTIC = "elliptic"      # E = E_l - epsilon, rotation-like
HYPERBOLIC = "hyperbolic"  # E = E_l + epsilon, stretch-like

_TWO_PI = 2.0 * math.pi

#: exact maps are only meaningful well inside the perturbative window
_EPS_SAFETY = 0.1


def _check_regime(regime: str) -> None:
    if regime not in (ELLIPTIC, HYPERBOLIC):
        raise ValueError(f"regime must be {ELLIPTIC!r} or {HYPERBOLIC!r}, "
                         f"got {regime!r}")


@dataclass(frozen=True)
class CriticalEnergy:
    """Data attached to the band-touching energy of level ``l``.

    Carries the derived constants of the critical expansions:

    - ``eta = sqrt(mean / (2 E_l))``: rotation/stretch rate per step,
    - ``b = (mean E_l / 2)^(1/4)``: anisotropy of the second basis change,
    - ``d_minus = var / (16 mean E_l)``: Lyapunov slope below, gamma ~ d_minus * eps,
    - ``d_plus = eta``: Lyapunov amplitude above, gamma ~ d_plus * sqrt(eps).

    The coupling law must have strictly positive mean; zero-mean laws have
    no critical window in this sense.
    """

    level: int
    energy: float
    coupling_mean: float
    coupling_variance: float
    eta: float
    b: float
    d_minus: float
    d_plus: float

    @classmethod
    def for_model(cls, level: int, model: DisorderModel) -> "CriticalEnergy":
        model.require_nonzero_mean()
        mean, var, _ = model.moments()
        energy = critical_energy(level)
        eta = math.sqrt(mean / (2.0 * energy))
        return cls(
            level=int(level),
            energy=energy,
            coupling_mean=mean,
            coupling_variance=var,
            eta=eta,
            b=(mean * energy / 2.0) ** 0.25,
            d_minus=var / (16.0 * mean * energy),
            d_plus=eta,
        )

    def epsilon_limit(self) -> float:
        """Largest epsilon the exact critical maps accept."""
        return _EPS_SAFETY * min(
            1.0, 4.0 * math.pi * self.level / self.coupling_mean)

    def check_epsilon(self, epsilon: float) -> None:
        if not 0.0 < epsilon <= self.epsilon_limit():
            raise ValueError(
                f"epsilon {epsilon!r} outside (0, {self.epsilon_limit()!r}] "
                f"for level {self.level}")


def act_on_circle(M: np.ndarray, theta: float) -> float:
    """Direction-map action of an invertible real matrix on the circle.

    The action is only defined mod pi (antipodal directions are identified,
    so ``act(-M) == act(M)``); the value returned is the representative in
    ``[0, 2 pi)`` obtained by moving ``theta`` by the increment's
    nearest-branch lift in ``[-pi/2, pi/2)``.
    """
    c, s = math.cos(theta), math.sin(theta)
    x = M[0, 0] * c + M[0, 1] * s
    y = M[1, 0] * c + M[1, 1] * s
    phi = math.atan2(y, x)
    delta = (phi - theta + 0.5 * math.pi) % math.pi - 0.5 * math.pi
    return (theta + delta) % _TWO_PI


def basis_change(
    ce: CriticalEnergy,
    epsilon: float,
    regime: str = ELLIPTIC,
) -> tuple[np.ndarray, np.ndarray]:
    """The blow-up basis ``M_eps = M2 M1`` and its inverse.

    ``M1 = diag(sqrt(eps), 1)`` zooms into the Jordan fixed point and
    ``M2 = [[1/(2b), -b], [1/(2b), b]]`` (unit determinant) brings the
    deterministic part to rotation normal form.  In the elliptic regime
    that normal form requires ``eps * mean <= 4 pi l``.
    """
    _check_regime(regime)
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if regime == ELLIPTIC and epsilon * ce.coupling_mean > 4.0 * math.pi * ce.level:
        raise ValueError("elliptic normal form needs eps * mean <= 4 pi l")
    b = ce.b
    root = math.sqrt(epsilon)
    m2 = np.array([[0.5 / b, -b], [0.5 / b, b]])
    m2_inv = np.array([[b, b], [-0.5 / b, 0.5 / b]])
    m1 = np.array([[root, 0.0], [0.0, 1.0]])
    m1_inv = np.array([[1.0 / root, 0.0], [0.0, 1.0]])
    return m2 @ m1, m1_inv @ m2_inv


def conjugated_site_matrix(
    ce: CriticalEnergy,
    epsilon: float,
    regime: str,
    v: float,
) -> np.ndarray:
    """Exact ``M_eps T_n(E_l -/+ eps) M_eps^{-1}`` for coupling ``v``."""
    _check_regime(regime)
    M, Minv = basis_change(ce, epsilon, regime)
    E = ce.energy - epsilon if regime == ELLIPTIC else ce.energy + epsilon
    return M @ jump_matrix(v) @ free_propagator(E, 1.0) @ Minv


def site_family(z, conjugation: np.ndarray | None = None):
    """Rank-one-update form of the site-matrix family at parameter ``z``.

    Returns ``(B, u, w)`` such that the (optionally conjugated) site matrix
    with coupling ``v`` equals ``B + v * outer(u, w)``: from
    ``J(v) F = F + v e1 (row2 F)`` and ``M (e1 r) M^{-1} = (M e1)(r M^{-1})``.
    This is what the sweep kernels consume.
    """
    F = free_propagator(z, 1.0)
    if conjugation is None:
        B = F
        u = np.array([1.0, 0.0], dtype=F.dtype)
        w = F[1, :].copy()
    else:
        M = conjugation
        Minv = np.linalg.inv(M)
        B = M @ F @ Minv
        u = np.ascontiguousarray(M[:, 0], dtype=F.dtype)
        w = np.ascontiguousarray(F[1, :] @ Minv)
    return np.ascontiguousarray(B), u, w


def _critical_family(ce: CriticalEnergy, epsilon: float, regime: str):
    _check_regime(regime)
    M, Minv = basis_change(ce, epsilon, regime)
    E = ce.energy - epsilon if regime == ELLIPTIC else ce.energy + epsilon
    F = free_propagator(E, 1.0)
    B = M @ F @ Minv
    u = np.ascontiguousarray(M[:, 0])
    w = np.ascontiguousarray(F[1, :] @ Minv)
    return B, u, w


def phase_step(
    ce: CriticalEnergy,
    epsilon: float,
    regime: str,
    theta: float,
    v_tilde: float,
) -> float:
    """Exact one-step phase map at ``E_l -/+ eps``; ``v_tilde`` is centered."""
    ce.check_epsilon(epsilon)
    v = ce.coupling_mean + v_tilde
    return act_on_circle(conjugated_site_matrix(ce, epsilon, regime, v), theta)


def gamma_increment(
    ce: CriticalEnergy,
    epsilon: float,
    regime: str,
    theta: float,
    v_tilde: float,
) -> float:
    """Exact one-step log-norm increment of the conjugated cocycle."""
    ce.check_epsilon(epsilon)
    v = ce.coupling_mean + v_tilde
    M = conjugated_site_matrix(ce, epsilon, regime, v)
    vec = M @ np.array([math.cos(theta), math.sin(theta)])
    return 0.5 * math.log(float(vec @ vec))


def phase_step_truncated(
    ce: CriticalEnergy,
    epsilon: float,
    regime: str,
    theta: float,
    v_tilde: float,
) -> float:
    """Leading-order phase map, error O(eps); for consistency tests."""
    _check_regime(regime)
    root = math.sqrt(epsilon)
    noise = v_tilde / (2.0 * math.sqrt(2.0 * ce.coupling_mean * ce.energy))
    if regime == ELLIPTIC:
        step = -ce.eta * root + (math.sin(2.0 * theta) - 1.0) * noise * root
    else:
        step = ce.eta * root * math.sin(2.0 * theta) \
            + (math.sin(2.0 * theta) - 1.0) * noise * root
    return (theta + step) % _TWO_PI


def gamma_increment_truncated(
    ce: CriticalEnergy,
    epsilon: float,
    regime: str,
    theta: float,
    v_tilde: float,
) -> float:
    """Expanded log-norm increment.

    Elliptic: all terms through O(eps), error O(eps^(3/2)).  Hyperbolic:
    the O(sqrt(eps)) term ``-sqrt(eps) cos(2 theta) (eta + noise)``, whose
    average over the invariant measure concentrated at theta = pi/2 is
    ``eta sqrt(eps)``; error O(eps).
    """
    _check_regime(regime)
    root = math.sqrt(epsilon)
    s2 = math.sin(2.0 * theta)
    noise = v_tilde / (2.0 * math.sqrt(2.0 * ce.coupling_mean * ce.energy))
    if regime == ELLIPTIC:
        c4 = math.cos(4.0 * theta)
        return (
            -noise * math.cos(2.0 * theta) * root
            + v_tilde / (2.0 * ce.energy) * s2 * epsilon
            + ce.coupling_mean / (4.0 * ce.energy) * s2 * epsilon
            + v_tilde * v_tilde / (16.0 * ce.coupling_mean * ce.energy)
            * (1.0 - 2.0 * s2 - c4) * epsilon
        )
    return -root * math.cos(2.0 * theta) * (ce.eta + noise)


@dataclass(frozen=True)
class PruferTrajectory:
    """A realized modified-Prüfer orbit.

    ``thetas[n]`` is the angle after step ``n+1`` (the initial angle is
    ``theta0``); ``gamma_increments[n]`` the matching log-norm increment.
    Per-step winding increments are not stored: steps are shorter than
    pi/2 for every admissible epsilon, so they are recovered exactly as the
    nearest-branch difference of consecutive angles, see :meth:`windings`.
    """

    thetas: np.ndarray
    gamma_increments: np.ndarray
    epsilon: float
    regime: str
    theta0: float
    burn_in: int = 0

    def __len__(self) -> int:
        return len(self.thetas)

    def windings(self) -> np.ndarray:
        """Signed per-step phase increments (nearest-branch lifts)."""
        prev = np.concatenate(([self.theta0], self.thetas[:-1]))
        return (self.thetas - prev + 0.5 * np.pi) % np.pi - 0.5 * np.pi

    @property
    def total_gamma(self) -> float:
        return float(np.sum(self.gamma_increments))


def default_burn_in(epsilon: float) -> int:
    """Steps to discard before averaging: ceil(10 / sqrt(eps)).

    The phase equilibrates on the scale 1/sqrt(eps) (one rotation period
    below, the relaxation time of the stable fixed point above).
    """
    return math.ceil(10.0 / math.sqrt(epsilon))


def trajectory(
    ce: CriticalEnergy,
    model: DisorderModel,
    epsilon: float,
    regime: str,
    n_steps: int,
    seed: int,
    stream: int = 0,
    theta0: float = 0.0,
    burn_in: int = 0,
) -> PruferTrajectory:
    """Run the exact conjugated cocycle for ``n_steps`` recorded steps.

    ``burn_in`` extra steps are run first and discarded (the returned
    ``theta0`` is the angle reached after them).  Couplings are drawn at
    sites ``1 .. burn_in + n_steps`` of ``(model, seed, stream)``.
    """
    ce.check_epsilon(epsilon)
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    B, u, w = _critical_family(ce, epsilon, regime)
    real = sample(model, seed, 0, burn_in + n_steps, stream=stream)
    vs = np.ascontiguousarray(real.values, dtype=float)
    theta = float(theta0) % _TWO_PI
    if burn_in:
        theta, _, _ = _kernels.phase_sweep(B, u, w, vs[:burn_in], theta)
    start = theta
    thetas = np.empty(n_steps)
    gammas = np.empty(n_steps)
    _kernels.trajectory_sweep(B, u, w, vs[burn_in:], theta, thetas, gammas)
    return PruferTrajectory(
        thetas=thetas,
        gamma_increments=gammas,
        epsilon=float(epsilon),
        regime=regime,
        theta0=start,
        burn_in=int(burn_in),
    )


def birkhoff_sum(f, traj: PruferTrajectory) -> float:
    """Empirical average of ``f`` along the recorded angles."""
    return float(np.mean(f(traj.thetas)))
