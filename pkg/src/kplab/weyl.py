"""Half-line Weyl m-functions and the full-line Green kernel.

For ``im(z) > 0`` each half-line carries exactly one decaying solution up
to scale.  Cutting the line at a non-integer point ``a`` and normalizing
``f(a) = 1``, the logarithmic derivatives ``m_plus = f_plus'(a)`` and
``m_minus = -f_minus'(a)`` are Herglotz functions of ``z``, and the
resolvent kernel of the full-line operator is

    G(x, y) = f_minus(min) * f_plus(max) / (m_plus + m_minus),

with ``G(a, a) = 1 / (m_plus + m_minus)``.

The m-functions are computed by planting a Dirichlet cap a distance ``L``
up (down) the line and propagating its state back to ``a`` with the exact
transfer matrices.  Backward propagation is the stable direction: the
decaying solution grows backward and dominates whatever the cap injected,
with relative error ``exp(-2 im(sqrt z) L)``.  ``L`` doubles until two
successive values agree to the requested tolerance, so every returned
value carries a two-point stability certificate.

Realizations are windows, but a half-line needs arbitrarily many sites:
windows drawn from a model are extended on demand through the
site-addressed generator (bit-identical on the overlap), hand-built
windows (``model is None``) embed in the free line, and ``realization =
None`` means the free operator everywhere.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ensemble import Realization, sample
from .transfer import free_propagator, transfer_between

__all__ = [
    "PLUS",
    "MINUS",
    "MFunctionPair",
    "GreenEvaluation",
    "TruncationError",
    "free_m",
    "m_function",
    "m_pair",
    "solution_eval",
    "green_kernel",
]

PLUS = "+"
MINUS = "-"

#: default starting cap distance, doubled until stable
_START_LENGTH = 64
#: hard ceiling on the cap distance
_MAX_LENGTH = 1 << 19


class TruncationError(RuntimeError):
    """Cap distance hit its ceiling before the m-value stabilized."""

    def __init__(self, message: str, achieved: float, length: int) -> None:
        super().__init__(message)
        self.achieved = achieved
        self.length = length


@dataclass(frozen=True)
class MFunctionPair:
    """Both half-line m-functions at one (z, realization, cut point).

    ``length`` is the larger of the two certified cap distances and
    ``stability`` the larger of the two relative two-point differences
    |m(L) - m(2L)| / |m(2L)| observed at acceptance.
    """

    m_plus: complex
    m_minus: complex
    z: complex
    cut: float
    length: int
    stability: float

    @property
    def denominator(self) -> complex:
        return self.m_plus + self.m_minus


@dataclass(frozen=True)
class GreenEvaluation:
    """One evaluation of the resolvent kernel."""

    value: complex
    x: float
    y: float
    z: complex

    def __complex__(self) -> complex:
        return self.value


def free_m(z: complex) -> complex:
    """m-function of the free line: ``i sqrt(z)``, principal branch."""
    return 1j * cmath.sqrt(z)


def _check_z(z: complex) -> complex:
    z = complex(z)
    if not z.imag > 0.0:
        raise ValueError(f"need im(z) > 0, got z = {z}")
    return z


def _split_cut(a: float) -> tuple[int, float]:
    base = math.floor(a)
    frac = a - base
    if not 0.0 < frac < 1.0:
        raise ValueError(f"cut point must be non-integer, got {a}")
    return base, frac


def _couplings(realization: Realization | None, lo: int, hi: int) -> np.ndarray:
    """Couplings at sites ``lo .. hi`` inclusive, extending as needed."""
    if hi < lo:
        return np.empty(0)
    if realization is None:
        return np.zeros(hi - lo + 1)
    if realization.model is not None and (lo < realization.first_site
                                          or hi > realization.last_site):
        grown = sample(realization.model, realization.seed, lo - 1, hi,
                       stream=realization.stream)
        return np.asarray(grown.window(lo - 1, hi), dtype=float)
    out = np.zeros(hi - lo + 1)
    s0 = max(lo, realization.first_site)
    s1 = min(hi, realization.last_site)
    if s1 >= s0:
        out[s0 - lo:s1 - lo + 1] = realization.window(s0 - 1, s1)
    return out


def _local_realization(realization: Realization | None,
                       x: float, y: float) -> Realization:
    """A window realization covering every site between two positions."""
    lo = math.floor(min(x, y)) + 1
    hi = math.floor(max(x, y))
    vals = _couplings(realization, lo, hi)
    return Realization(model=None, seed=0, site_offset=lo, values=vals)


def _side_family(z: complex, side: str, frac: float):
    """Rank-one per-site step of the backward (or forward) sweep.

    Walking the cap state toward the cut, one site per step, the map from
    the state at ``base + n + frac`` to the state at ``base + n - 1 + frac``
    is ``F(frac-1) J(-v_n) F(-frac) = B + v_n (u w^T)`` with the values
    below; the minus side walks upward with the mirrored grouping.
    """
    if side == PLUS:
        B = free_propagator(z, -1.0)
        u = -free_propagator(z, frac - 1.0)[:, 0]
        w = free_propagator(z, -frac)[1, :]
    elif side == MINUS:
        B = free_propagator(z, 1.0)
        u = free_propagator(z, frac)[:, 0]
        w = free_propagator(z, 1.0 - frac)[1, :]
    else:
        raise ValueError(f"side must be {PLUS!r} or {MINUS!r}, got {side!r}")
    return (np.ascontiguousarray(B, dtype=complex),
            np.ascontiguousarray(u, dtype=complex),
            np.ascontiguousarray(w, dtype=complex))


def _backward_eval(z: complex, realization: Realization | None, side: str,
                   a: float, q: float | None, length: int):
    """One backward sweep from a Dirichlet cap to the cut.

    Returns ``(m, f_q)`` where ``f_q`` is the decaying solution at ``q``
    normalized to ``f(a) = 1`` (None when ``q`` is None).  The point ``q``
    must lie on the side's own decaying territory; its value is read off
    the sweep as it passes, so ``f(q)/f(a)`` never amplifies the cap
    error the way forward propagation from the cut would (beyond a few
    Lyapunov lengths the decaying component is numerically invisible to
    a forward product).
    """
    base, frac = _split_cut(a)
    B, u, w = _side_family(z, side, frac)
    state = np.array([1.0 + 0.0j, 0.0 + 0.0j])  # Dirichlet cap (psi', psi)
    if q is None:
        if side == PLUS:
            v = _couplings(realization, base + 1, base + length)[::-1]
        else:
            v = _couplings(realization, base - length + 1, base)
        x, y, _ = _kernels.complex_sweep(B, u, w, np.ascontiguousarray(v),
                                         state[0], state[1])
        return (x / y if side == PLUS else -x / y), None

    if side == PLUS:
        rec = max(0, math.ceil(q - frac) - base)
        v = _couplings(realization, base + 1, base + rec + length)[::-1]
        k_rec = length  # sites consumed before the record point
    else:
        rec = min(0, math.floor(q - frac) - base)
        v = _couplings(realization, base + rec - length + 1, base)
        k_rec = length
    v = np.ascontiguousarray(v)
    xr, yr, _ = _kernels.complex_sweep(B, u, w, v[:k_rec],
                                       state[0], state[1])
    x, y, log_ra = _kernels.complex_sweep(B, u, w, v[k_rec:], xr, yr)
    p = base + rec + frac  # record position, within one cell of q
    fin = transfer_between(z, _local_realization(realization, q, p), q, p)
    vec = fin.matrix @ np.array([xr, yr])
    f_q = vec[1] / y * cmath.exp(fin.log_scale - log_ra)
    return (x / y if side == PLUS else -x / y), f_q


def _stable_eval(z, realization, side, a, q, length, rtol, max_length):
    """Adaptive cap doubling until m (and f(q) if any) stop moving."""
    m_prev, f_prev = _backward_eval(z, realization, side, a, q, length)
    while length < max_length:
        length *= 2
        m_cur, f_cur = _backward_eval(z, realization, side, a, q, length)
        drift = abs(m_cur - m_prev) / abs(m_cur)
        if f_cur is not None:
            scale = max(abs(f_cur), abs(f_prev))
            if scale > 0.0:
                drift = max(drift, abs(f_cur - f_prev) / scale)
        if drift <= rtol:
            return m_cur, f_cur, length, drift
        m_prev, f_prev = m_cur, f_cur
    raise TruncationError(
        f"m_function({side}) did not stabilize to {rtol:g} within cap "
        f"distance {max_length}; last relative change {drift:g} "
        f"(slow decay: im(sqrt z) = {cmath.sqrt(z).imag:g})",
        achieved=drift, length=length)


def m_function(
    z: complex,
    realization: Realization | None,
    side: str,
    a: float = 0.5,
    length: int = _START_LENGTH,
    rtol: float = 1e-10,
    max_length: int = _MAX_LENGTH,
) -> complex:
    """Weyl m-function of one half-line cut at ``a``.

    Returns ``f'(a)`` of the decaying solution normalized to ``f(a) = 1``
    on the right half-line (``side = "+"``), and ``-f'(a)`` on the left.
    ``length`` is the starting cap distance; it doubles until two
    successive values agree to ``rtol`` relative.

    Raises
    ------
    TruncationError
        if the cap reaches ``max_length`` first; carries the achieved
        relative stability in ``.achieved``.
    """
    z = _check_z(z)
    m, _, _, _ = _stable_eval(z, realization, side, a, None, length, rtol,
                              max_length)
    return m


def m_pair(
    z: complex,
    realization: Realization | None,
    a: float = 0.5,
    length: int = _START_LENGTH,
    rtol: float = 1e-10,
    max_length: int = _MAX_LENGTH,
) -> MFunctionPair:
    """Both m-functions at one cut, with the joint stability certificate."""
    z = _check_z(z)
    mp, _, lp, dp = _stable_eval(z, realization, PLUS, a, None, length,
                                 rtol, max_length)
    mm, _, lm, dm = _stable_eval(z, realization, MINUS, a, None, length,
                                 rtol, max_length)
    return MFunctionPair(m_plus=mp, m_minus=mm, z=z, cut=float(a),
                         length=max(lp, lm), stability=max(dp, dm))


def solution_eval(
    z: complex,
    realization: Realization | None,
    side: str,
    m: complex,
    a: float,
    x: float,
) -> complex:
    """Value at ``x`` of the decaying solution with ``f(a) = 1``.

    The state at the cut is ``(m, 1)`` on the plus side and ``(-m, 1)`` on
    the minus side (derivative first); the exact transfer matrix carries
    it to ``x``.
    """
    z = _check_z(z)
    if side == PLUS:
        anchor = np.array([m, 1.0], dtype=complex)
    elif side == MINUS:
        anchor = np.array([-m, 1.0], dtype=complex)
    else:
        raise ValueError(f"side must be {PLUS!r} or {MINUS!r}, got {side!r}")
    local = _local_realization(realization, x, a)
    prod = transfer_between(z, local, x, a)
    vec = prod.matrix @ anchor
    return math.exp(prod.log_scale) * vec[1]


def green_kernel(
    z: complex,
    realization: Realization | None,
    x: float,
    y: float,
    a: float = 0.5,
    length: int = _START_LENGTH,
    rtol: float = 1e-10,
    max_length: int = _MAX_LENGTH,
) -> GreenEvaluation:
    """Resolvent kernel ``G(x, y)`` of the full-line operator.

    Evaluates the decaying solutions at the ordered pair, divided by the
    Wronskian-like denominator ``m_plus + m_minus``.  Each solution is
    read off its own backward sweep when the point lies on its decaying
    territory (the numerically stable direction); on the growing side the
    forward formula of :func:`solution_eval` is already stable.
    """
    z = _check_z(z)
    lo, hi = (x, y) if x <= y else (y, x)
    if lo <= a:
        mm, f_lo, _, _ = _stable_eval(z, realization, MINUS, a, lo, length,
                                      rtol, max_length)
    else:
        mm, _, _, _ = _stable_eval(z, realization, MINUS, a, None, length,
                                   rtol, max_length)
        f_lo = solution_eval(z, realization, MINUS, mm, a, lo)
    if hi >= a:
        mp, f_hi, _, _ = _stable_eval(z, realization, PLUS, a, hi, length,
                                      rtol, max_length)
    else:
        mp, _, _, _ = _stable_eval(z, realization, PLUS, a, None, length,
                                   rtol, max_length)
        f_hi = solution_eval(z, realization, PLUS, mp, a, hi)
    value = f_lo * f_hi / (mp + mm)
    return GreenEvaluation(value=value, x=float(x), y=float(y), z=z)
