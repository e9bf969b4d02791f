"""Time-averaged transport moments and the deviation diagnostics behind them.

The moment ``<a| M_q(T) |a>`` is never computed by time propagation.  It is
evaluated through the exact Laplace-transform identity

    <a| M_q(T) |a> = int dx |x|^q (1/(pi T)) E int dE |G^{E+i/T}(x, a)|^2,

with the energy integral restricted to a window at a critical energy and
the spatial integral truncated at ``X_max``; both restrictions only lower
the (positive) integrand, so estimates keep lower-bound semantics.  The
window shrinks with the schedule

    N = (c8 T)^{2/(3+2 alpha)},   eps0 = N^{-1-2 alpha},   X_max = N,

which ties the spatial range, the energy window, and the time scale
together the way the transport bound wants them.

The deviation half of the module simulates the centered phase-coupled
sums ``X_j = -(v_j - vbar)/(2 sqrt(2 vbar E_l)) cos(2 theta_{j-1})`` whose
window sups control the transfer-matrix norms, and measures those norm
sups directly.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from ._util import thread_map
from .ensemble import DisorderModel, Realization, sample
from .prufer import ELLIPTIC, CriticalEnergy, _critical_family
from .transfer import free_propagator, spectral_norm
from .weyl import MINUS, PLUS, _couplings, free_m, m_pair

__all__ = [
    "MomentEstimate",
    "MomentCurve",
    "DeviationReport",
    "NormControlReport",
    "schedule",
    "moment_estimate",
    "moment_curve",
    "growth_exponent",
    "bound_exponent",
    "kernel_mass_ratio",
    "martingale_deviation",
    "norm_control_check",
    "two_vector_check",
]

#: default window/schedule exponent
_ALPHA = 0.3
#: energy quadrature nodes per window
_N_ENERGY = 8
#: spatial quadrature points per unit cell
_POINTS_PER_CELL = 8


def schedule(T: float, alpha: float = _ALPHA, c8: float = 1.0) -> tuple[int, float]:
    """Spatial range and energy-window width coupled to the time scale.

    Returns ``(n_sites, eps0)`` with ``n_sites = (c8 T)^{2/(3+2 alpha)}``
    rounded (at least 4) and ``eps0 = n_sites^{-1-2 alpha}``.
    """
    if T < 1.0:
        raise ValueError("need T >= 1")
    n = max(4, round((c8 * T) ** (2.0 / (3.0 + 2.0 * alpha))))
    return n, float(n) ** (-1.0 - 2.0 * alpha)


@dataclass(frozen=True)
class MomentEstimate:
    """Monte Carlo estimate of one transport moment."""

    value: float
    std_error: float
    q: float
    T: float
    x_max: int
    energy_window: tuple[float, float]
    samples: int

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class MomentCurve:
    """Moment estimates over a grid of time scales at fixed q."""

    q: float
    T_grid: np.ndarray
    values: np.ndarray
    stderrs: np.ndarray
    a: float
    model: DisorderModel | None
    samples: int
    alpha: float
    c8: float


def _row_entries(z: complex, offsets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Second rows (B(t), A(t)) of the free propagator at many offsets."""
    brow = np.empty(len(offsets), dtype=complex)
    arow = np.empty(len(offsets), dtype=complex)
    for j, t in enumerate(offsets):
        F = free_propagator(z, float(t))
        brow[j] = F[1, 0]
        arow[j] = F[1, 1]
    return brow, arow


def _half_line_sum(z: complex, realization: Realization | None, m: complex,
                   a: float, direction: int, x_max: int, q: float,
                   points_per_cell: int) -> float:
    """Spatial quadrature of |x|^q |f(x)|^2 along one half-line.

    ``f`` is the decaying solution with ``f(a) = 1``; the state walks
    outward cell by cell from the integer boundary nearest ``a`` while a
    midpoint rule samples ``points_per_cell`` offsets per cell.  The
    fractional first cell next to ``a`` is skipped, which only lowers the
    positive integral (lower-bound semantics).
    """
    base = math.floor(a)
    frac = a - base
    fracs = (np.arange(points_per_cell) + 0.5) / points_per_cell
    if direction > 0:
        anchor = np.array([m, 1.0], dtype=complex)
        start = free_propagator(z, 1.0 - frac) @ anchor
        v = _couplings(realization, base + 2, base + 1 + x_max)
        vc = _couplings(realization, base + 1, base + 1)
        start[0] += vc[0] * start[1]  # jump at the first boundary site
        F = free_propagator(z, 1.0)
        B = F
        u = np.array([1.0, 0.0], dtype=complex)
        w = np.ascontiguousarray(F[1, :])
        brow, arow = _row_entries(z, fracs)
        coord0 = float(base + 1)
    else:
        anchor = np.array([-m, 1.0], dtype=complex)
        start = free_propagator(z, -frac) @ anchor
        v = _couplings(realization, base - x_max + 1, base)[::-1]
        F = free_propagator(z, -1.0)
        B = F
        u = -np.ascontiguousarray(F[:, 0])
        w = np.array([0.0, 1.0], dtype=complex)
        brow, arow = _row_entries(z, -fracs)
        coord0 = float(base)
    amp0 = math.sqrt(abs(start[0]) ** 2 + abs(start[1]) ** 2)
    x0 = start[0] / amp0
    y0 = start[1] / amp0
    return _kernels.moment_x_sweep(
        np.ascontiguousarray(B, dtype=complex), u, w,
        np.ascontiguousarray(v, dtype=float), x0, y0, amp0, coord0,
        float(1 if direction > 0 else -1), float(q), brow, arow, fracs)


def _moment_one(z_nodes: Sequence[complex], realization: Realization | None,
                a: float, q: float, x_max: int,
                points_per_cell: int) -> float:
    """Energy-summed spatial integral for one realization (un-normalized)."""
    total = 0.0
    for z in z_nodes:
        if realization is None:
            mp = mm = free_m(z)
        else:
            pr = m_pair(z, realization, a, rtol=1e-8)
            mp, mm = pr.m_plus, pr.m_minus
        den = abs(mp + mm) ** 2
        acc = (_half_line_sum(z, realization, mp, a, +1, x_max, q,
                              points_per_cell)
               + _half_line_sum(z, realization, mm, a, -1, x_max, q,
                                points_per_cell))
        total += acc / den
    return total


def moment_estimate(
    q: float,
    T: float,
    a: float,
    model: DisorderModel | None,
    ce: CriticalEnergy | None,
    samples: int,
    seed: int,
    alpha: float = _ALPHA,
    c8: float = 1.0,
    x_max: int | None = None,
    energy_window: tuple[float, float] | None = None,
    n_energy: int = _N_ENERGY,
    points_per_cell: int = _POINTS_PER_CELL,
    stream_base: int = 0,
    refine_check: bool = False,
) -> MomentEstimate:
    """Estimate ``<a| M_q(T) |a>`` by resolvent quadrature.

    By default the energy window is ``[E_l - eps0, E_l]`` and the spatial
    cutoff is ``X_max = N`` from :func:`schedule`.  Both can be overridden
    together (the free ballistic oracle needs a fixed window and a cutoff
    that covers the front).  ``model = None`` evaluates the free operator:
    one deterministic sample, exact m-functions.

    With ``refine_check`` the first realization is re-evaluated on a
    doubled quadrature; disagreement beyond 5% raises with both values.
    """
    if a == math.floor(a):
        raise ValueError("expansion point a must be non-integer")
    if T < 1.0:
        raise ValueError("need T >= 1")
    if energy_window is None:
        if ce is None:
            raise ValueError("need a critical energy unless energy_window "
                             "is given")
        n_sites, eps0 = schedule(T, alpha, c8)
        energy_window = (ce.energy - eps0, ce.energy)
        if x_max is None:
            x_max = n_sites
    elif x_max is None:
        raise ValueError("explicit energy_window needs an explicit x_max")
    e_lo, e_hi = energy_window
    d_e = (e_hi - e_lo) / n_energy
    z_nodes = [e_lo + (k + 0.5) * d_e + 1j / T for k in range(n_energy)]
    norm = d_e / (math.pi * T)
    base = math.floor(a)

    if model is None:
        vals = [norm * _moment_one(z_nodes, None, a, q, x_max,
                                   points_per_cell)]
    else:
        def worker(r: int) -> float:
            real = sample(model, seed, base - x_max - 1, base + 1 + x_max,
                          stream=stream_base + r)
            return norm * _moment_one(z_nodes, real, a, q, x_max,
                                      points_per_cell)

        vals = thread_map(worker, range(samples))
    vals = np.asarray(vals)
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(len(vals))) \
        if len(vals) > 1 else 0.0

    if refine_check:
        fine_nodes = [e_lo + (k + 0.5) * d_e / 2 + 1j / T
                      for k in range(2 * n_energy)]
        real = None if model is None else sample(
            model, seed, base - x_max - 1, base + 1 + x_max,
            stream=stream_base)
        fine = (d_e / 2) / (math.pi * T) * _moment_one(
            fine_nodes, real, a, q, x_max, 2 * points_per_cell)
        if abs(fine - vals[0]) > 0.05 * max(abs(fine), abs(vals[0])):
            raise RuntimeError(
                f"quadrature not converged at T={T:g}: coarse {vals[0]:g} "
                f"vs refined {fine:g}; achieved estimate {mean:g}")

    return MomentEstimate(value=mean, std_error=stderr, q=float(q),
                          T=float(T), x_max=int(x_max),
                          energy_window=(float(e_lo), float(e_hi)),
                          samples=len(vals))


def moment_curve(
    q: float,
    T_grid: Sequence[float],
    a: float,
    model: DisorderModel | None,
    ce: CriticalEnergy | None,
    samples: int,
    seed: int,
    alpha: float = _ALPHA,
    c8: float = 1.0,
    x_max_rule=None,
    energy_window: tuple[float, float] | None = None,
    n_energy: int = _N_ENERGY,
    points_per_cell: int = _POINTS_PER_CELL,
) -> MomentCurve:
    """Moment estimates over a time grid with disjoint sample streams.

    ``x_max_rule`` optionally maps T to a spatial cutoff when a fixed
    ``energy_window`` is used (the free oracle passes one tied to the
    ballistic front).
    """
    T_grid = np.asarray(sorted(float(t) for t in T_grid))
    values = np.empty(len(T_grid))
    stderrs = np.empty(len(T_grid))
    for i, T in enumerate(T_grid):
        x_max = None if x_max_rule is None else int(x_max_rule(T))
        est = moment_estimate(q, T, a, model, ce, samples, seed,
                              alpha=alpha, c8=c8, x_max=x_max,
                              energy_window=energy_window,
                              n_energy=n_energy,
                              points_per_cell=points_per_cell,
                              stream_base=i * samples)
        values[i] = est.value
        stderrs[i] = est.std_error
    return MomentCurve(q=float(q), T_grid=T_grid, values=values,
                       stderrs=stderrs, a=float(a), model=model,
                       samples=samples, alpha=alpha, c8=c8)


def bound_exponent(q: float) -> float:
    """Theoretical lower-bound growth exponent ``2q/3 - 5/3``."""
    return 2.0 * q / 3.0 - 5.0 / 3.0


def growth_exponent(curve: MomentCurve) -> float:
    """Least-squares log-log slope of a moment curve.

    Requires at least 5 points spanning at least two decades of T.
    """
    t = curve.T_grid
    if len(t) < 5 or t.max() / t.min() < 100.0 * (1.0 - 1e-12):
        raise ValueError("insufficient dynamic range: need >= 5 points "
                         "over >= 2 decades of T")
    if np.any(curve.values <= 0.0):
        raise ValueError("moment values must be positive for a log-log fit")
    slope, _ = np.polyfit(np.log(t), np.log(curve.values), 1)
    return float(slope)


def kernel_mass_ratio(m_plus: complex, m_minus: complex) -> float:
    """The deterministic kernel-mass ratio, bounded below by 1/2.

    ``(|m_+|^2 + |m_-|^2 + 2) / |m_+ + m_-|^2``: numerator and denominator
    compare the diagonal Green mass against the half-line masses; the
    algebraic bound holds for every pair of complex numbers.
    """
    num = abs(m_plus) ** 2 + abs(m_minus) ** 2 + 2.0
    den = abs(m_plus + m_minus) ** 2
    if den == 0.0:
        return math.inf
    return num / den


@dataclass(frozen=True)
class DeviationReport:
    """Window sups of the centered martingale sums at one (N, epsilon)."""

    alpha: float
    n_sites: int
    epsilon: float
    samples: int
    sup_values: np.ndarray
    threshold: float
    empirical_tail: float


def martingale_deviation(
    ce: CriticalEnergy,
    model: DisorderModel,
    epsilon: float,
    n_sites: int,
    alpha: float,
    samples: int,
    seed: int,
    theta0: float = 0.0,
) -> DeviationReport:
    """Simulate sup over windows of the phase-coupled martingale sums.

    For each realization the couplings at sites ``-N .. N`` drive the
    exact elliptic phase recursion; the increments
    ``X_j = -(v_j - vbar) cos(2 theta_{j-1}) / (2 sqrt(2 vbar E_l))``
    accumulate into prefix sums whose spread (max minus min) equals the
    exact sup over all window pairs ``-N <= m <= n <= N`` of ``|Z(n,m)|``.
    The reported tail is the fraction of realizations whose sup exceeds
    ``N^{1/2 + alpha}``.
    """
    ce.check_epsilon(epsilon)
    if alpha <= 0.0:
        raise ValueError("need alpha > 0")
    B, u, w = _critical_family(ce, epsilon, ELLIPTIC)
    vbar = ce.coupling_mean
    coef = 1.0 / (2.0 * math.sqrt(2.0 * vbar * ce.energy))

    def worker(r: int) -> float:
        real = sample(model, seed, -n_sites - 1, n_sites, stream=r)
        pmin, pmax, _, _ = _kernels.martingale_sweep(
            B, u, w, real.values, vbar, coef, theta0)
        return pmax - pmin

    sups = np.asarray(thread_map(worker, range(samples)))
    threshold = float(n_sites) ** (0.5 + alpha)
    tail = float(np.mean(sups > threshold))
    return DeviationReport(alpha=alpha, n_sites=n_sites,
                           epsilon=float(epsilon), samples=samples,
                           sup_values=sups, threshold=threshold,
                           empirical_tail=tail)


@dataclass(frozen=True)
class NormControlReport:
    """Window sups of transfer-matrix norms at one (N, epsilon) pair."""

    epsilon: float
    n_sites: int
    alpha: float
    samples: int
    sup_log_norms: np.ndarray
    stride: int

    def exceedance(self, k_const: float) -> float:
        """Fraction of realizations with sup ||T|| > K eps^{-1/2}."""
        level = math.log(k_const) - 0.5 * math.log(self.epsilon)
        return float(np.mean(self.sup_log_norms > level))

    @property
    def median_scaled(self) -> float:
        """Median of sup ||T|| * sqrt(eps) (the fitted-constant scale)."""
        return math.exp(float(np.median(self.sup_log_norms))
                        + 0.5 * math.log(self.epsilon))

    def quantile_scaled(self, p: float) -> float:
        return math.exp(float(np.quantile(self.sup_log_norms, p))
                        + 0.5 * math.log(self.epsilon))


def _prefix_products(E: float, values: np.ndarray):
    """Renormalized prefix products of site matrices, identity included."""
    k2 = E
    if E > 0.0:
        rt = math.sqrt(E)
        A = math.cos(rt)
        Bv = math.sin(rt) / rt
    elif E < 0.0:
        rt = math.sqrt(-E)
        A = math.cosh(rt)
        Bv = math.sinh(rt) / rt
    else:
        A = 1.0
        Bv = 1.0
    count = len(values) + 1
    pa = np.empty(count)
    pb = np.empty(count)
    pc = np.empty(count)
    pd = np.empty(count)
    logs = np.empty(count)
    a, b, c, d = 1.0, 0.0, 0.0, 1.0
    s = 0.0
    pa[0], pb[0], pc[0], pd[0], logs[0] = a, b, c, d, s
    for j, v in enumerate(values):
        fa = A + v * Bv
        fb = -k2 * Bv + v * A
        na = fa * a + fb * c
        nb = fa * b + fb * d
        nc = Bv * a + A * c
        nd = Bv * b + A * d
        r = _kernels.spectral_norm_2x2(na, nb, nc, nd)
        a, b, c, d = na / r, nb / r, nc / r, nd / r
        s += math.log(r)
        pa[j + 1], pb[j + 1], pc[j + 1], pd[j + 1], logs[j + 1] = a, b, c, d, s
    return pa, pb, pc, pd, logs


def norm_control_check(
    ce: CriticalEnergy,
    model: DisorderModel,
    epsilon: float,
    n_sites: int,
    alpha: float,
    samples: int,
    seed: int,
) -> NormControlReport:
    """Measure sup over windows of ``||T^{E_l - eps}(n, m)||``.

    Requires the schedule coupling ``eps = N^{-1-2 alpha}``.  The sup runs
    over prefix pairs; above 2048 stored prefixes a stride keeps the pair
    count bounded, making the reported sup a lower bound on the true one.
    """
    want = float(n_sites) ** (-1.0 - 2.0 * alpha)
    if not math.isclose(epsilon, want, rel_tol=1e-9):
        raise ValueError(f"epsilon must equal n_sites^(-1-2 alpha) = "
                         f"{want:g}, got {epsilon:g}")
    E = ce.energy - epsilon
    stride = max(1, math.ceil((2 * n_sites + 2) / 2048))

    def worker(r: int) -> float:
        real = sample(model, seed, -n_sites - 1, n_sites, stream=r)
        pa, pb, pc, pd, logs = _prefix_products(E, real.values)
        return _kernels.pair_norm_sup(pa[::stride].copy(), pb[::stride].copy(),
                                      pc[::stride].copy(), pd[::stride].copy(),
                                      logs[::stride].copy())

    sups = np.asarray(thread_map(worker, range(samples)))
    return NormControlReport(epsilon=float(epsilon), n_sites=n_sites,
                             alpha=alpha, samples=samples,
                             sup_log_norms=sups, stride=stride)


def two_vector_check(samples: int, seed: int) -> float:
    """Worst ratio ||A|| / (sqrt(2) max ||A e||) over random SL(2) draws.

    The maximum is over the two axis vectors; the bound says the ratio
    never exceeds 1.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        a, b, c = rng.normal(size=3)
        while abs(a) < 1e-6:
            a = rng.normal()
        d = (1.0 + b * c) / a
        A = np.array([[a, b], [c, d]])
        full = spectral_norm(A)
        col0 = math.hypot(a, c)
        col1 = math.hypot(b, d)
        ratio = full / (math.sqrt(2.0) * max(col0, col1))
        worst = max(worst, ratio)
    return worst
