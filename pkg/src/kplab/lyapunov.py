"""Monte-Carlo Lyapunov exponents, rotation numbers, and scaling fits.

The Lyapunov exponent is estimated as the sample mean, over independent
realizations, of the per-site log growth of a renormalized transfer-matrix
product.  Near a critical energy ``E_l = (pi l)^2`` the product is run in
the blow-up basis of :mod:`kplab.prufer`, where the per-step increments
stay O(sqrt(eps)) and the phase chain mixes on the 1/sqrt(eps) scale; a
burn-in of that length is discarded before accumulating.

``fit_scaling`` regresses the estimates over an epsilon grid against the
critical laws: ``gamma ~ d_minus * eps`` below the critical energy and
``gamma ~ d_plus * sqrt(eps)`` above.  The reported exponent comes from a
free weighted log-log fit; the coefficient is re-fit with the theoretical
exponent pinned, which keeps its variance bounded by the whole grid's
statistics instead of the noisiest point's.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._util import thread_map
from .ensemble import DisorderModel, sample
from .prufer import (
    ELLIPTIC,
    HYPERBOLIC,
    CriticalEnergy,
    _critical_family,
    default_burn_in,
    site_family,
)

__all__ = [
    "BELOW",
    "ABOVE",
    "ConvergenceError",
    "LyapunovEstimate",
    "RotationEstimate",
    "ScalingFit",
    "estimate_lyapunov",
    "estimate_lyapunov_critical",
    "rotation_number",
    "idos_from_rotation",
    "fit_scaling",
    "fit_series",
]

BELOW = "below"  # E = E_l - eps: elliptic regime, gamma ~ d_minus * eps
ABOVE = "above"  # E = E_l + eps: hyperbolic regime, gamma ~ d_plus * sqrt(eps)


class ConvergenceError(RuntimeError):
    """A scaling fit rejected its data.

    Carries whatever per-point series was measured before the rejection,
    so callers can still persist partial results.
    """

    def __init__(self, message: str, epsilon_grid=None, values=None,
                 stderrs=None):
        super().__init__(message)
        self.epsilon_grid = epsilon_grid
        self.values = values
        self.stderrs = stderrs

_MIN_STEPS = 1_000
_MIN_MIXING = 50.0  # required N * sqrt(eps) for critical estimates


@dataclass(frozen=True)
class LyapunovEstimate:
    """Per-site log growth rate with cross-realization error bar.

    ``std_error`` is the standard error of the mean over independent
    realizations; the scatter within a single trajectory is not an error
    estimate (increments are correlated through the phase).
    """

    value: float
    std_error: float
    n_steps: int
    samples: int
    z: complex

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class RotationEstimate:
    """Average phase winding per site, in units of pi."""

    value: float
    std_error: float
    n_steps: int
    samples: int
    epsilon: float
    level: int

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class ScalingFit:
    """Result of regressing estimates against ``C * eps^p``.

    ``exponent`` is the slope of a weighted least-squares fit in log-log
    coordinates, with ``exponent_stderr`` its formal error.  ``coefficient``
    is the amplitude re-fit with the exponent pinned at ``theory_exponent``;
    ``residual`` is the maximum relative deviation of the data from that
    pinned-law curve over the grid.
    """

    exponent: float
    coefficient: float
    residual: float
    epsilon_grid: np.ndarray
    side: str
    exponent_stderr: float
    coefficient_stderr: float
    values: np.ndarray
    stderrs: np.ndarray
    theory_exponent: float
    theory_coefficient: float


def _mean_and_stderr(values: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(values))
    if len(values) > 1:
        err = float(np.std(values, ddof=1) / math.sqrt(len(values)))
    else:
        err = float("nan")
    return mean, err


def estimate_lyapunov(
    z,
    model: DisorderModel,
    n_steps: int,
    samples: int,
    seed: int,
    conjugation: np.ndarray | None = None,
    theta0: float = 0.0,
    burn_in: int = 0,
) -> LyapunovEstimate:
    """Estimate the Lyapunov exponent at (real or complex) energy ``z``.

    Each realization ``r`` (stream ``r`` of ``seed``) propagates the unit
    vector ``(cos theta0, sin theta0)`` through ``burn_in + n_steps`` site
    matrices, renormalizing at every step, and contributes the mean log
    increment over the last ``n_steps`` steps.  ``conjugation`` optionally
    replaces the site matrices ``T_n`` by ``M T_n M^{-1}``; the limit does
    not depend on it, which the tests check rather than assume.

    Parameters
    ----------
    z : real or complex energy.
    model : coupling law.
    n_steps : recorded steps per realization, at least 1000.
    samples : number of independent realizations.
    seed : master seed; realization ``r`` uses stream ``r``.
    conjugation : optional invertible 2x2 basis change.
    theta0 : direction angle of the initial vector.
    burn_in : leading steps to discard.
    """
    if n_steps < _MIN_STEPS:
        raise ValueError(f"n_steps must be >= {_MIN_STEPS}, got {n_steps}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    B, u, w = site_family(z, conjugation)
    is_complex = np.iscomplexobj(B)
    x0 = complex(math.cos(theta0)) if is_complex else math.cos(theta0)
    y0 = complex(math.sin(theta0)) if is_complex else math.sin(theta0)
    sweep = _kernels.complex_sweep if is_complex else _kernels.real_sweep

    def one(stream: int) -> float:
        real = sample(model, seed, 0, burn_in + n_steps, stream=stream)
        vs = np.ascontiguousarray(real.values, dtype=float)
        x, y = x0, y0
        if burn_in:
            x, y, _ = sweep(B, u, w, vs[:burn_in], x, y)
        _, _, s = sweep(B, u, w, vs[burn_in:], x, y)
        return s / n_steps

    gammas = np.array(thread_map(one, range(samples)))
    value, err = _mean_and_stderr(gammas)
    return LyapunovEstimate(value=value, std_error=err, n_steps=int(n_steps),
                            samples=int(samples), z=complex(z))


def _critical_runs(
    ce: CriticalEnergy,
    model: DisorderModel,
    epsilon: float,
    regime: str,
    n_steps: int,
    samples: int,
    seed: int,
    burn_in: int | None,
    theta0: float,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Per-realization (gamma_hat, winding_sum) in the blow-up basis."""
    ce.check_epsilon(epsilon)
    if n_steps < _MIN_STEPS:
        raise ValueError(f"n_steps must be >= {_MIN_STEPS}, got {n_steps}")
    if n_steps * math.sqrt(epsilon) < _MIN_MIXING:
        raise ValueError(
            f"mixing condition violated: need n_steps * sqrt(eps) >= "
            f"{_MIN_MIXING}, got {n_steps * math.sqrt(epsilon):.3g}")
    if burn_in is None:
        burn_in = default_burn_in(epsilon)
    B, u, w = _critical_family(ce, epsilon, regime)

    def one(stream: int) -> tuple[float, float]:
        real = sample(model, seed, 0, burn_in + n_steps, stream=stream)
        vs = np.ascontiguousarray(real.values, dtype=float)
        theta = float(theta0)
        if burn_in:
            theta, _, _ = _kernels.phase_sweep(B, u, w, vs[:burn_in], theta)
        _, winding, s = _kernels.phase_sweep(B, u, w, vs[burn_in:], theta)
        return s / n_steps, winding

    out = thread_map(one, range(samples))
    gammas = np.array([g for g, _ in out])
    windings = np.array([wd for _, wd in out])
    return gammas, windings, burn_in


def estimate_lyapunov_critical(
    ce: CriticalEnergy,
    model: DisorderModel,
    epsilon: float,
    regime: str,
    n_steps: int,
    samples: int,
    seed: int,
    burn_in: int | None = None,
    theta0: float = 0.0,
) -> LyapunovEstimate:
    """Lyapunov estimate at ``E_l -/+ epsilon`` in the blow-up basis.

    Equivalent in the limit to :func:`estimate_lyapunov` at the same
    energy, but the conjugated increments are O(sqrt(eps)) per step and the
    initial transient is removed by ``burn_in`` (default ceil(10/sqrt(eps))),
    so the finite-N bias is driven by the mixing error rather than by the
    basis mismatch at the endpoints.  Requires ``n_steps * sqrt(eps) >= 50``.
    """
    gammas, _, _ = _critical_runs(ce, model, epsilon, regime, n_steps,
                                  samples, seed, burn_in, theta0)
    value, err = _mean_and_stderr(gammas)
    E = ce.energy - epsilon if regime == ELLIPTIC else ce.energy + epsilon
    return LyapunovEstimate(value=value, std_error=err, n_steps=int(n_steps),
                            samples=int(samples), z=complex(E))


def rotation_number(
    epsilon: float,
    model: DisorderModel,
    n_steps: int,
    samples: int,
    seed: int,
    ce: CriticalEnergy,
    burn_in: int | None = None,
    theta0: float = 0.0,
) -> RotationEstimate:
    """Mean phase drift per site below ``E_l``, in units of pi.

    Defined on the elliptic side only, where the conjugated chain rotates
    by about ``-eta sqrt(eps)`` per step; the value is the per-realization
    winding sum divided by ``pi * n_steps``, averaged over realizations.
    It is negative, and ``level + rotation`` is the integrated density of
    states at ``E_l - eps``.
    """
    _, windings, _ = _critical_runs(ce, model, epsilon, ELLIPTIC, n_steps,
                                    samples, seed, burn_in, theta0)
    rots = windings / (math.pi * n_steps)
    value, err = _mean_and_stderr(rots)
    return RotationEstimate(value=value, std_error=err, n_steps=int(n_steps),
                            samples=int(samples), epsilon=float(epsilon),
                            level=ce.level)


def idos_from_rotation(
    epsilon: float,
    model: DisorderModel,
    n_steps: int,
    samples: int,
    seed: int,
    ce: CriticalEnergy,
    burn_in: int | None = None,
) -> RotationEstimate:
    """Integrated density of states at ``E_l - eps`` via the rotation number.

    Simply ``level + rotation_number(...)``; compare with the node-counting
    estimate from :func:`kplab.spectral.idos_direct`.
    """
    rot = rotation_number(epsilon, model, n_steps, samples, seed, ce,
                          burn_in=burn_in)
    return RotationEstimate(value=ce.level + rot.value,
                            std_error=rot.std_error, n_steps=rot.n_steps,
                            samples=rot.samples, epsilon=rot.epsilon,
                            level=rot.level)


def default_grid(side: str, points: int | None = None) -> np.ndarray:
    """The fit windows used by the acceptance runs.

    Below the critical energy the signal is O(eps), so the window starts
    at 1e-3 to beat the Monte-Carlo noise; above, the signal is O(sqrt(eps))
    and the window can extend down to 1e-4.  Both end at 1e-2, where the
    next-order corrections start to bend the log-log line.
    """
    if side == BELOW:
        return np.geomspace(1e-3, 1e-2, 8 if points is None else points)
    if side == ABOVE:
        return np.geomspace(1e-4, 1e-2, 13 if points is None else points)
    raise ValueError(f"side must be {BELOW!r} or {ABOVE!r}, got {side!r}")


def default_steps(epsilon: float) -> int:
    """Per-point step budget: ``max(1e6, ceil(100/sqrt(eps)))``."""
    return max(1_000_000, math.ceil(100.0 / math.sqrt(epsilon)))


def fit_scaling(
    side: str,
    ce: CriticalEnergy,
    model: DisorderModel,
    epsilon_grid=None,
    n_steps: int | None = None,
    samples: int = 32,
    seed: int = 0,
) -> ScalingFit:
    """Regress critical Lyapunov estimates against the scaling laws.

    Parameters
    ----------
    side : ``"below"`` (elliptic, target ``d_minus * eps``) or ``"above"``
        (hyperbolic, target ``d_plus * sqrt(eps)``).
    ce, model : critical energy data and coupling law.
    epsilon_grid : grid of eps values spanning at least one decade;
        default :func:`default_grid`.
    n_steps : per-point steps; default :func:`default_steps`.
    samples : realizations per point (>= 8 for usable error bars).
    seed : master seed; point ``i`` realization ``r`` uses stream
        ``i * samples + r``.

    Raises
    ------
    ValueError : grid too narrow, or budgets below the mixing condition.
    RuntimeError : statistical noise swallowed the signal (a non-positive
        point mean); the message reports the sample budget that failed.
    """
    if side not in (BELOW, ABOVE):
        raise ValueError(f"side must be {BELOW!r} or {ABOVE!r}, got {side!r}")
    if samples < 8:
        raise ValueError("samples must be >= 8 for cross-realization errors")
    grid = np.sort(np.asarray(
        default_grid(side) if epsilon_grid is None else epsilon_grid,
        dtype=float))
    if len(grid) < 3:
        raise ValueError("epsilon_grid needs at least 3 points")
    span = math.log10(grid[-1] / grid[0])
    if span < 1.0 - 1e-9:
        raise ValueError(
            f"epsilon_grid must span at least one decade, got {span:.2f}")
    regime = ELLIPTIC if side == BELOW else HYPERBOLIC

    values = np.empty(len(grid))
    stderrs = np.empty(len(grid))
    for i, eps in enumerate(grid):
        steps = default_steps(eps) if n_steps is None else n_steps
        ce.check_epsilon(eps)
        bi = default_burn_in(eps)
        B, u, w = _critical_family(ce, eps, regime)

        def one(stream: int) -> float:
            real = sample(model, seed, 0, bi + steps, stream=stream)
            vs = np.ascontiguousarray(real.values, dtype=float)
            theta, _, _ = _kernels.phase_sweep(B, u, w, vs[:bi], 0.0)
            _, _, s = _kernels.phase_sweep(B, u, w, vs[bi:], theta)
            return s / steps

        gams = np.array(thread_map(
            one, range(i * samples, (i + 1) * samples)))
        values[i], stderrs[i] = _mean_and_stderr(gams)
        if values[i] <= 0.0:
            raise ConvergenceError(
                f"noise exceeded the scaling signal at eps={eps:g} "
                f"(mean {values[i]:.3g} from {samples} x {steps} steps); "
                f"increase samples or n_steps",
                epsilon_grid=grid[:i + 1], values=values[:i + 1],
                stderrs=stderrs[:i + 1])

    theory_p = 1.0 if side == BELOW else 0.5
    theory_c = ce.d_minus if side == BELOW else ce.d_plus
    return fit_series(grid, values, stderrs, side, theory_p, theory_c)


def fit_series(
    grid: np.ndarray,
    values: np.ndarray,
    stderrs: np.ndarray,
    side: str,
    theory_exponent: float,
    theory_coefficient: float,
) -> ScalingFit:
    """Weighted log-log regression of a measured series against C * eps^p.

    Shared back end of :func:`fit_scaling` and the van Hove fit in
    :mod:`kplab.spectral`.  Weights are inverse-variance in log space
    (delta method, so ``stderrs`` must be small against ``values``).
    """
    x = np.log(grid)
    y = np.log(values)
    sig = stderrs / values  # delta-method log errors
    # Integer-valued estimators (node counts) can come back with zero
    # sample variance; give those points the smallest observed positive
    # error rather than infinite weight.  All-zero errors mean an
    # unweighted fit.
    positive = sig[sig > 0.0]
    sig = np.where(sig > 0.0, sig, positive.min() if positive.size else 1.0)
    wts = 1.0 / sig**2

    # free weighted straight line for the exponent
    wsum = wts.sum()
    xbar = (wts * x).sum() / wsum
    ybar = (wts * y).sum() / wsum
    sxx = (wts * (x - xbar) ** 2).sum()
    slope = (wts * (x - xbar) * (y - ybar)).sum() / sxx
    slope_err = 1.0 / math.sqrt(sxx)

    # amplitude with the exponent pinned at its theoretical value
    resid_log = y - theory_exponent * x
    log_c = (wts * resid_log).sum() / wsum
    coeff = math.exp(log_c)
    coeff_err = coeff * (1.0 / math.sqrt(wsum))

    residual = float(np.max(
        np.abs(values / (coeff * grid**theory_exponent) - 1.0)))
    return ScalingFit(
        exponent=float(slope),
        coefficient=float(coeff),
        residual=residual,
        epsilon_grid=grid,
        side=side,
        exponent_stderr=float(slope_err),
        coefficient_stderr=float(coeff_err),
        values=values,
        stderrs=stderrs,
        theory_exponent=theory_exponent,
        theory_coefficient=theory_coefficient,
    )
