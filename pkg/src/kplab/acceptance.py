"""End-to-end acceptance battery.

Ten numbered checks pin down the claims this package ships: the two
critical scaling laws of the Lyapunov exponent, the square-root law of
the integrated density of states, the exact node-count identity, the
agreement of the half-line and finite-box Green kernels, the
deterministic kernel-mass inequality, lower bounds on transport moment
growth, large-deviation tails of the phase martingale, a suite of
structural cocycle invariants, and the free ballistic oracle.

Every runner freezes its full protocol -- model, seed, grids, budgets,
tolerances -- so a given seed reproduces bit for bit.  The pytest
acceptance module and the ``verify`` CLI subcommand both call into this
file rather than re-encoding any recipe.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import lyapunov, spectral, transport, weyl
from .ensemble import DisorderModel, sample
from .prufer import (
    CriticalEnergy,
    ELLIPTIC,
    act_on_circle,
    birkhoff_sum,
    default_burn_in,
    trajectory,
)
from .spectral import FiniteBox, box_green, count_nodes
from .transfer import (
    critical_energy,
    band_edges,
    discriminant,
    interval_product,
    product_det,
    transfer_between,
)

__all__ = [
    "CriterionResult",
    "CRITERIA",
    "SUITES",
    "run_criterion",
    "run_suite",
    "UNIFORM",
    "TWO_POINT",
]

UNIFORM = DisorderModel.uniform(0.5, 1.5)
TWO_POINT = DisorderModel.two_point(1.0, 0.5, 3.0)


@dataclass(frozen=True)
class CriterionResult:
    """Outcome of one acceptance check."""

    name: str
    title: str
    passed: bool
    detail: str
    fit: dict = field(default_factory=dict)
    theory: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        # No timings here: verify output must be reproducible byte for
        # byte, so wall-clock goes to stderr only.
        flag = "PASS" if self.passed else "FAIL"
        return f"{self.name} {flag} {self.title}: {self.detail}"

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "title": self.title,
            "fit": self.fit,
            "theory": self.theory,
            "pass": self.passed,
            "detail": self.detail,
        }


def _fit_payload(fit: lyapunov.ScalingFit) -> dict:
    return {
        "exponent": fit.exponent,
        "exponent_stderr": fit.exponent_stderr,
        "coefficient": fit.coefficient,
        "coefficient_stderr": fit.coefficient_stderr,
        "residual": fit.residual,
    }


def ac_1(seed: int = 42) -> CriterionResult:
    """Lyapunov exponent below E_1: gamma ~ d_minus * eps."""
    t0 = time.perf_counter()
    ce = CriticalEnergy.for_model(1, UNIFORM)
    fit = lyapunov.fit_scaling(
        "below", ce, UNIFORM, np.geomspace(1e-3, 1e-2, 8),
        n_steps=1_000_000, samples=32, seed=seed)
    exp_ok = abs(fit.exponent - 1.0) <= 0.10
    coef_ok = abs(fit.coefficient / ce.d_minus - 1.0) <= 0.15
    detail = (f"slope {fit.exponent:.4f} (want 1.00 +- 0.10), "
              f"prefactor {fit.coefficient:.4e} vs {ce.d_minus:.4e} "
              f"({100.0 * (fit.coefficient / ce.d_minus - 1.0):+.2f}%, cap 15%)")
    return CriterionResult(
        "AC-1", "Lyapunov scaling below the critical energy",
        exp_ok and coef_ok, detail, _fit_payload(fit),
        {"exponent": 1.0, "coefficient": ce.d_minus},
        time.perf_counter() - t0)


def ac_2(seed: int = 42) -> CriterionResult:
    """Lyapunov exponent above E_1: gamma ~ d_plus * sqrt(eps)."""
    t0 = time.perf_counter()
    ce = CriticalEnergy.for_model(1, UNIFORM)
    fit = lyapunov.fit_scaling(
        "above", ce, UNIFORM, np.geomspace(1e-4, 1e-2, 13),
        samples=32, seed=seed)
    exp_ok = abs(fit.exponent - 0.5) <= 0.05
    coef_ok = abs(fit.coefficient / ce.d_plus - 1.0) <= 0.10
    detail = (f"slope {fit.exponent:.4f} (want 0.50 +- 0.05), "
              f"prefactor {fit.coefficient:.5f} vs {ce.d_plus:.5f} "
              f"({100.0 * (fit.coefficient / ce.d_plus - 1.0):+.2f}%, cap 10%)")
    return CriterionResult(
        "AC-2", "Lyapunov scaling above the critical energy",
        exp_ok and coef_ok, detail, _fit_payload(fit),
        {"exponent": 0.5, "coefficient": ce.d_plus},
        time.perf_counter() - t0)


def ac_3(seed: int = 42) -> CriterionResult:
    """IDOS deficit l - N(E_1 - eps) ~ (d_plus/pi) sqrt(eps) at N=200.

    At this box size the deficit is an integer staircase (the bulk term
    is worth less than one node over the whole grid, and every box
    carries one deterministic node exactly at E_1), so the fit cannot
    resolve the law; the runner reports the diagnostic as a failure
    rather than loosening the check.  See vanhove_fit for the budget
    that does resolve it.
    """
    t0 = time.perf_counter()
    ce = CriticalEnergy.for_model(1, UNIFORM)
    target = ce.d_plus / math.pi
    try:
        fit = spectral.vanhove_fit(
            ce, UNIFORM, np.geomspace(1e-4, 1e-2, 13),
            n_cells=200, samples=200, seed=seed)
    except RuntimeError as err:
        return CriterionResult(
            "AC-3", "van Hove square-root law of the IDOS", False,
            f"unresolvable at this budget: {err}", {},
            {"exponent": 0.5, "coefficient": target},
            time.perf_counter() - t0)
    coef_ok = abs(fit.coefficient / target - 1.0) <= 0.10
    detail = (f"coefficient {fit.coefficient:.6f} vs {target:.6f} "
              f"({100.0 * (fit.coefficient / target - 1.0):+.2f}%, cap 10%), "
              f"slope {fit.exponent:.4f}")
    return CriterionResult(
        "AC-3", "van Hove square-root law of the IDOS", coef_ok, detail,
        _fit_payload(fit), {"exponent": 0.5, "coefficient": target},
        time.perf_counter() - t0)


def ac_4(seed: int = 42) -> CriterionResult:
    """count_nodes(E_l) == N*l exactly, both models, 100 draws each."""
    t0 = time.perf_counter()
    sizes = (50, 100, 200)
    levels = (1, 2, 3)
    models = (UNIFORM, TWO_POINT)
    total = 0
    bad = 0
    for mi, model in enumerate(models):
        for li, level in enumerate(levels):
            energy = critical_energy(level)
            for ni, n_cells in enumerate(sizes):
                for r in range(100):
                    stream = (((mi * 3 + li) * 3 + ni) * 100) + r
                    box = FiniteBox.draw(model, n_cells, seed, stream=stream)
                    total += 1
                    if count_nodes(energy, box) != n_cells * level:
                        bad += 1
    detail = f"{total - bad}/{total} exact (zero tolerance)"
    return CriterionResult(
        "AC-4", "exact node count at the critical energies", bad == 0,
        detail, {"checked": total, "mismatches": bad}, {"mismatches": 0},
        time.perf_counter() - t0)


def ac_5(seed: int = 42) -> CriterionResult:
    """Half-line Weyl kernel vs finite-box kernel at one complex energy."""
    t0 = time.perf_counter()
    z = critical_energy(1) - 0.01 + 0.05j
    margin = 10.0 / abs(np.imag(np.sqrt(complex(z))))
    n_cells = 4000
    box = FiniteBox.draw(UNIFORM, n_cells, seed, stream=0)
    cut = n_cells / 2 + 0.5
    rng = np.random.default_rng(seed)
    pts = rng.uniform(1300.0, 2700.0, size=(20, 2))
    worst = 0.0
    for x, y in pts:
        direct = box_green(z, box, float(x), float(y))
        half = weyl.green_kernel(z, box.realization, float(x), float(y),
                                 a=cut, rtol=1e-9)
        worst = max(worst, abs(half.value - direct) / abs(direct))
    detail = (f"worst relative error {worst:.3e} over 20 points "
              f"(cap 1e-06, box {n_cells} >= {margin:.0f})")
    return CriterionResult(
        "AC-5", "Green kernel equals its finite-box oracle", worst <= 1e-6,
        detail, {"worst_rel_err": worst, "n_cells": n_cells},
        {"cap": 1e-6, "min_cells": margin}, time.perf_counter() - t0)


def ac_6(seed: int = 42) -> CriterionResult:
    """Kernel-mass ratio >= 1/2 on a thousand sampled m-pairs."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = math.inf
    bad = 0
    for k in range(1000):
        model = UNIFORM if k % 2 == 0 else TWO_POINT
        re = rng.uniform(0.5, 40.0)
        im = math.exp(rng.uniform(math.log(0.02), math.log(1.0)))
        real = sample(model, seed, -64, 64, stream=k)
        pair = weyl.m_pair(complex(re, im), real, rtol=1e-8)
        ratio = transport.kernel_mass_ratio(pair.m_plus, pair.m_minus)
        worst = min(worst, ratio)
        if not ratio >= 0.5:
            bad += 1
    detail = f"minimum ratio {worst:.4f} over 1000 pairs (bound 0.5000)"
    return CriterionResult(
        "AC-6", "kernel-mass ratio never dips below one half", bad == 0,
        detail, {"min_ratio": worst, "violations": bad}, {"bound": 0.5},
        time.perf_counter() - t0)


def ac_7(seed: int = 42) -> CriterionResult:
    """q=4 moment growth exponent clears the lower bound minus 0.3."""
    t0 = time.perf_counter()
    ce = CriticalEnergy.for_model(1, UNIFORM)
    curve = transport.moment_curve(
        4.0, np.geomspace(1e2, 1e4, 7), 0.5, UNIFORM, ce,
        samples=8, seed=seed)
    expo = transport.growth_exponent(curve)
    bound = transport.bound_exponent(4.0)
    detail = (f"fitted exponent {expo:.4f} >= {bound - 0.3:.2f} "
              f"(bound exponent {bound:.2f}, one-sided)")
    return CriterionResult(
        "AC-7", "transport moment growth at q = 4", expo >= bound - 0.3,
        detail,
        {"exponent": expo,
         "values": [float(v) for v in curve.values]},
        {"bound_exponent": bound, "required": bound - 0.3},
        time.perf_counter() - t0)


def ac_8(seed: int = 42) -> CriterionResult:
    """Martingale sup tails: non-increasing in N and under the envelope."""
    t0 = time.perf_counter()
    ce = CriticalEnergy.for_model(1, UNIFORM)
    alpha = 0.2
    sizes = (1_000, 10_000, 100_000)
    tails = []
    sups = []
    for n_sites in sizes:
        eps = float(n_sites) ** (-1.0 - 2.0 * alpha)
        rep = transport.martingale_deviation(
            ce, UNIFORM, eps, n_sites, alpha, samples=200, seed=seed)
        tails.append(rep.empirical_tail)
        sups.append((float(rep.sup_values.min()), float(rep.sup_values.max()),
                     rep.threshold))
    monotone = all(tails[i + 1] <= tails[i] for i in range(len(tails) - 1))
    env = [n * n * math.exp(-float(n) ** alpha) for n in sizes]
    ratios = [t / e for t, e in zip(tails, env)]
    c_fit = max(ratios)
    under = all(t <= c_fit * e + 1e-15 for t, e in zip(tails, env))
    sup_txt = ", ".join(f"N=1e{int(math.log10(n))}: sup in "
                        f"[{lo:.1f},{hi:.1f}] vs {th:.0f}"
                        for n, (lo, hi, th) in zip(sizes, sups))
    detail = (f"tails {tails} (non-increasing: {monotone}); {sup_txt}; "
              f"fitted C = {c_fit:.3g}")
    return CriterionResult(
        "AC-8", "martingale large-deviation tail shape",
        monotone and under, detail,
        {"tails": tails, "C": c_fit},
        {"threshold_exponent": 0.5 + alpha, "envelope": "C N^2 exp(-N^alpha)"},
        time.perf_counter() - t0)


def _check_determinants(seed: int) -> float:
    # Short products only: the stored unit-norm factor of a long
    # hyperbolic product has determinant exp(-2 log_scale), which is pure
    # cancellation in floats, so det * exp(2 log_scale) stops being a
    # meaningful identity check beyond a handful of sites.
    worst = 0.0
    for k, z in enumerate((2.0 + 0.5j, -1.3, critical_energy(1) - 0.01 + 0.05j,
                           7.25)):
        real = sample(UNIFORM, seed, -8, 40, stream=100 + k)
        for m in (-5, 0, 17):
            det = product_det(interval_product(z, real, m, m + 3))
            worst = max(worst, abs(det - 1.0))
        det = product_det(transfer_between(z, real, 2.3, 4.85))
        worst = max(worst, abs(det - 1.0))
    return worst


def _check_concatenation(seed: int) -> float:
    # T(x, w) maps Psi(w) to Psi(x), so splitting at y factors it as
    # T(x, y) T(y, w).
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(8):
        z = complex(rng.uniform(-2.0, 12.0), rng.uniform(0.0, 0.5))
        real = sample(UNIFORM, seed, -12, 44, stream=200 + k)
        x, y, w = np.sort(rng.uniform(-6.0, 36.0, 3))
        whole = transfer_between(z, real, float(x), float(w))
        split = transfer_between(z, real, float(x), float(y)).compose(
            transfer_between(z, real, float(y), float(w)))
        err = (np.abs(whole.matrix - split.matrix).max()
               + abs(whole.log_scale - split.log_scale)
               / max(1.0, abs(whole.log_scale)))
        worst = max(worst, err)
    return worst


def _check_sign_invariance(seed: int) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(25):
        a, b, c = rng.normal(size=3)
        while abs(a) < 1e-6:
            a = rng.normal()
        M = np.array([[a, b], [c, (1.0 + b * c) / a]])
        for theta in np.linspace(-math.pi, math.pi, 9):
            worst = max(worst, abs(act_on_circle(-M, theta)
                                   - act_on_circle(M, theta)))
    return worst


def _check_birkhoff(seed: int) -> float:
    ce = CriticalEnergy.for_model(1, UNIFORM)
    worst = 0.0
    for eps in (1e-2, 1e-3, 1e-4):
        n_steps = int(math.ceil(200.0 / math.sqrt(eps)))
        env = math.sqrt(eps) + 1.0 / (n_steps * math.sqrt(eps))
        for func in (lambda t: np.cos(2.0 * t), lambda t: np.sin(2.0 * t)):
            vals = [birkhoff_sum(func, trajectory(
                        ce, UNIFORM, eps, ELLIPTIC, n_steps, seed, stream=s,
                        theta0=math.pi * s / 8.0,
                        burn_in=default_burn_in(eps)))
                    for s in range(8)]
            worst = max(worst, abs(float(np.mean(vals))) / env)
    return worst


def _check_herglotz(seed: int) -> float:
    rng = np.random.default_rng(seed)
    floor = math.inf
    for k in range(20):
        model = UNIFORM if k % 2 == 0 else TWO_POINT
        z = complex(rng.uniform(0.5, 40.0),
                    math.exp(rng.uniform(math.log(0.05), 0.0)))
        pair = weyl.m_pair(z, sample(model, seed, -64, 64, stream=300 + k),
                           rtol=1e-8)
        floor = min(floor, pair.m_plus.imag, pair.m_minus.imag)
    return floor


def _check_band_edges() -> float:
    worst = 0.0
    for v in (0.5, 1.0, 2.0):
        for band in band_edges(v, 3):
            target = critical_energy(band.index)
            worst = max(worst, abs(band.upper - target))
            worst = max(worst, abs(abs(discriminant(band.upper, v)) - 2.0))
            worst = max(worst, abs(abs(discriminant(band.lower, v)) - 2.0))
    return worst


def ac_9(seed: int = 42) -> CriterionResult:
    """Structural invariants of the cocycle and spectral data."""
    t0 = time.perf_counter()
    det_err = _check_determinants(seed)
    cat_err = _check_concatenation(seed)
    sign_err = _check_sign_invariance(seed)
    birk = _check_birkhoff(seed)
    herg = _check_herglotz(seed)
    edge_err = _check_band_edges()
    checks = {
        "determinant": (det_err, det_err <= 1e-12),
        "concatenation": (cat_err, cat_err <= 1e-10),
        "sign_invariance": (sign_err, sign_err <= 1e-13),
        "birkhoff_envelope": (birk, birk <= 1.0),
        "herglotz_floor": (herg, herg > 0.0),
        "band_edges": (edge_err, edge_err <= 1e-10),
    }
    passed = all(ok for _, ok in checks.values())
    detail = "; ".join(f"{k} {v:.2e}{'' if ok else ' (FAIL)'}"
                       for k, (v, ok) in checks.items())
    return CriterionResult(
        "AC-9", "structural invariants suite", passed, detail,
        {k: v for k, (v, _) in checks.items()},
        {"determinant": 1e-12, "concatenation": 1e-10,
         "sign_invariance": 1e-13, "birkhoff_envelope": 1.0,
         "herglotz_floor": 0.0, "band_edges": 1e-10},
        time.perf_counter() - t0)


def ac_10(seed: int = 42) -> CriterionResult:
    """Free operator, q=2: the pipeline reproduces ballistic growth."""
    t0 = time.perf_counter()
    e_hi = 4.0
    curve = transport.moment_curve(
        2.0, np.geomspace(10.0, 1000.0, 5), 0.5, None, None,
        samples=1, seed=seed, energy_window=(1.0, e_hi),
        x_max_rule=lambda T: int(10.0 * T * math.sqrt(e_hi)))
    expo = transport.growth_exponent(curve)
    detail = f"fitted exponent {expo:.4f} (want 2.0 +- 0.1)"
    return CriterionResult(
        "AC-10", "free ballistic transport oracle",
        abs(expo - 2.0) <= 0.1, detail,
        {"exponent": expo, "values": [float(v) for v in curve.values]},
        {"exponent": 2.0, "tolerance": 0.1}, time.perf_counter() - t0)


CRITERIA = {
    "AC-1": ac_1,
    "AC-2": ac_2,
    "AC-3": ac_3,
    "AC-4": ac_4,
    "AC-5": ac_5,
    "AC-6": ac_6,
    "AC-7": ac_7,
    "AC-8": ac_8,
    "AC-9": ac_9,
    "AC-10": ac_10,
}

SUITES = {
    "all": tuple(CRITERIA),
    "critical-scaling": ("AC-1", "AC-2", "AC-3"),
    "nodes": ("AC-4",),
    "green": ("AC-5", "AC-6"),
    "transport": ("AC-7", "AC-10"),
    "deviations": ("AC-8",),
    "structure": ("AC-9",),
}


def run_criterion(name: str, seed: int = 42) -> CriterionResult:
    """Run one named check; KeyError on an unknown name."""
    return CRITERIA[name](seed)


def run_suite(suite: str = "all", seed: int = 42) -> list[CriterionResult]:
    """Run every check in a named suite, in declaration order."""
    if suite not in SUITES:
        raise KeyError(f"unknown suite {suite!r}; choose from "
                       f"{sorted(SUITES)}")
    return [CRITERIA[name](seed) for name in SUITES[suite]]
