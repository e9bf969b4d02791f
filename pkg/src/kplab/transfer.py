"""Transfer matrices for the delta-array operator on the line.

The state vector is ``Psi = (psi', psi)`` (derivative first).  Between
integer sites the dynamics is free with spectral parameter ``z``; at each
integer site ``n`` the derivative jumps by ``v_n * psi(n)``.  The site
matrix over the unit cell ending at ``n`` is

    T_n(z) = J(v_n) F(z, 1),        J(v) = [[1, v], [0, 1]],

and interval products multiply the site factors over ``(m, n]``.  Everything
is entire in ``z``; at real energy all arithmetic stays real.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.optimize import brentq

from ._kernels import spectral_norm_2x2
from .ensemble import Realization

__all__ = [
    "free_propagator",
    "jump_matrix",
    "site_matrix",
    "ScaledProduct",
    "interval_product",
    "transfer_between",
    "discriminant",
    "Band",
    "band_edges",
    "critical_energy",
    "spectral_norm",
]

#: couplings act on psi' (delta potential); the dual kind acts on psi
DELTA = "delta"
DELTA_PRIME = "delta_prime"

_NORM_TOL = 1e-12


def _entries(z, length: float):
    """Return (A, B) with A = cos(sqrt(z) s), B = sin(sqrt(z) s)/sqrt(z).

    Real ``z`` gives real floats (cosh/sinh below the spectrum); complex
    ``z`` uses the principal square root.  ``B -> s`` as ``z -> 0``.
    """
    s = float(length)
    if np.iscomplexobj(z) or isinstance(z, complex):
        z = complex(z)
        if z == 0:
            return 1.0 + 0j, s + 0j
        w = np.sqrt(z)
        return np.cos(w * s), np.sin(w * s) / w
    E = float(z)
    if E > 0.0:
        k = math.sqrt(E)
        return math.cos(k * s), math.sin(k * s) / k
    if E < 0.0:
        kap = math.sqrt(-E)
        return math.cosh(kap * s), math.sinh(kap * s) / kap
    return 1.0, s


def free_propagator(z, length: float = 1.0) -> np.ndarray:
    """Free transfer matrix over an interval of the given (signed) length.

    Acts on ``(psi', psi)``; equals ``[[A, -z B], [B, A]]`` with the entries
    of :func:`_entries`.  Determinant is exactly 1 analytically (A^2 + z B^2),
    and the matrix is entire in ``z``.
    """
    A, B = _entries(z, length)
    return np.array([[A, -z * B], [B, A]])


def jump_matrix(v: float, coupling: str = DELTA) -> np.ndarray:
    """Derivative jump at a site: psi' += v psi (delta), psi += v psi' (dual)."""
    if coupling == DELTA:
        return np.array([[1.0, float(v)], [0.0, 1.0]])
    if coupling == DELTA_PRIME:
        return np.array([[1.0, 0.0], [float(v), 1.0]])
    raise ValueError(f"unknown coupling kind {coupling!r}")


def site_matrix(z, v: float, coupling: str = DELTA) -> np.ndarray:
    """Transfer matrix of the unit cell ending at a site with coupling v."""
    return jump_matrix(v, coupling) @ free_propagator(z, 1.0)


def spectral_norm(M: np.ndarray) -> float:
    """Operator 2-norm of a 2x2 matrix (closed form, no SVD call)."""
    M = np.asarray(M)
    if np.iscomplexobj(M):
        # |Mv| norm: use the Frobenius/det closed form on the complex entries
        f2 = float(np.sum(np.abs(M) ** 2))
        det = abs(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
        gap = max(f2 * f2 - 4.0 * det * det, 0.0)
        return math.sqrt(0.5 * (f2 + math.sqrt(gap)))
    return spectral_norm_2x2(M[0, 0], M[0, 1], M[1, 0], M[1, 1])


@dataclass(frozen=True)
class ScaledProduct:
    """A matrix product stored as ``exp(log_scale) * matrix``.

    ``matrix`` has unit operator norm; ``log_scale`` absorbs the growth so
    that products over long windows never overflow.  All constructors here
    produce unit-determinant full products (the building blocks are
    unimodular), which :meth:`inverse` relies on.
    """

    matrix: np.ndarray
    log_scale: float

    @classmethod
    def identity(cls, dtype=float) -> "ScaledProduct":
        m = np.eye(2, dtype=dtype)
        # unit norm: ||I|| = 1
        return cls(matrix=m, log_scale=0.0)

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "ScaledProduct":
        M = np.asarray(M)
        r = spectral_norm(M)
        if r == 0.0 or not math.isfinite(r):
            raise ValueError("cannot scale a zero or non-finite matrix")
        return cls(matrix=M / r, log_scale=math.log(r))

    def compose(self, other: "ScaledProduct") -> "ScaledProduct":
        """self @ other, renormalized."""
        M = self.matrix @ other.matrix
        r = spectral_norm(M)
        return ScaledProduct(matrix=M / r,
                             log_scale=self.log_scale + other.log_scale
                             + math.log(r))

    def __matmul__(self, other: "ScaledProduct") -> "ScaledProduct":
        return self.compose(other)

    def inverse(self) -> "ScaledProduct":
        """Inverse, assuming the full product has determinant 1.

        Then ``P^{-1} = adj(P)`` and the adjugate of the stored unit-norm
        factor is itself unit-norm (a 2x2 adjugate has the same singular
        values), so the log scale carries over unchanged.
        """
        m = self.matrix
        adj = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])
        return ScaledProduct(matrix=adj, log_scale=self.log_scale)

    def full(self) -> np.ndarray:
        """The literal product; overflows for log_scale beyond ~709."""
        return math.exp(self.log_scale) * self.matrix

    @property
    def log_norm(self) -> float:
        """log of the operator norm of the full product."""
        return self.log_scale

    def apply_log(self, vec: np.ndarray) -> float:
        """log ||P vec|| without forming the full product."""
        image = self.matrix @ np.asarray(vec)
        return self.log_scale + math.log(float(np.linalg.norm(image)))


def interval_product(
    z,
    realization: Realization,
    m: int,
    n: int,
    coupling: str = DELTA,
) -> ScaledProduct:
    """Product of site matrices over ``(m, n]``, renormalized every site.

    For ``n < m`` returns the inverse of the product over ``(n, m]``, so
    the cocycle identity T(n,k) T(k,m) = T(n,m) holds for any ordering.
    """
    if n == m:
        dtype = complex if (np.iscomplexobj(z) or isinstance(z, complex)) \
            else float
        return ScaledProduct.identity(dtype=dtype)
    if n < m:
        return interval_product(z, realization, n, m, coupling).inverse()
    F = free_propagator(z, 1.0)
    vs = realization.window(m, n)
    P = np.eye(2, dtype=F.dtype)
    log_scale = 0.0
    for v in vs:
        P = jump_matrix(v, coupling) @ F @ P
        r = spectral_norm(P)
        P = P / r
        log_scale += math.log(r)
    return ScaledProduct(matrix=P, log_scale=log_scale)


def transfer_between(
    z,
    realization: Realization,
    x: float,
    y: float,
    coupling: str = DELTA,
) -> ScaledProduct:
    """Transfer matrix ``T(x, y)`` mapping ``Psi(y)`` to ``Psi(x)``.

    Positions are real; the state is right-continuous at the sites, so the
    jump at an integer ``n`` is included exactly when ``n`` lies in
    ``(min(x,y), max(x,y)]`` (and inverted when propagating leftwards).
    """
    if x == y:
        dtype = complex if (np.iscomplexobj(z) or isinstance(z, complex)) \
            else float
        return ScaledProduct.identity(dtype=dtype)
    if x < y:
        return transfer_between(z, realization, y, x, coupling).inverse()
    first = math.floor(y) + 1  # leftmost site in (y, x]
    last = math.floor(x)       # rightmost
    P = ScaledProduct.identity(
        dtype=complex if (np.iscomplexobj(z) or isinstance(z, complex))
        else float)
    pos = y
    for site in range(first, last + 1):
        seg = ScaledProduct.from_matrix(free_propagator(z, site - pos))
        Jm = ScaledProduct.from_matrix(jump_matrix(
            realization.coupling(site), coupling))
        P = Jm @ seg @ P
        pos = site
    if x > pos:
        P = ScaledProduct.from_matrix(free_propagator(z, x - pos)) @ P
    return P


def discriminant(E: float, v: float) -> float:
    """Trace of the periodic-cell transfer matrix at coupling v.

    Equals ``2 cos(k) + v sin(k)/k`` for ``E = k^2 > 0``, extends to
    ``2 + v`` at ``E = 0`` and hyperbolic functions below.
    """
    A, B = _entries(float(E), 1.0)
    return 2.0 * A + float(v) * B


def critical_energy(level: int) -> float:
    """The band-touching energy ``(pi l)^2`` of level ``l >= 1``."""
    if level < 1:
        raise ValueError("level must be >= 1")
    return (math.pi * level) ** 2


@dataclass(frozen=True)
class Band:
    """One spectral band of the periodic (non-random) operator."""

    index: int
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower


def band_edges(v: float, l_max: int) -> list[Band]:
    """Bands of the periodic operator with coupling ``v > 0``.

    Band ``l`` is ``[E_low(l), (pi l)^2]``: the upper edges sit exactly at
    the free values, the lower edge solves ``(-1)^(l-1) Delta(E) = 2``
    inside the gap above band ``l-1``.
    """
    v = float(v)
    if v <= 0.0:
        raise ValueError("band structure in this form requires v > 0")
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    bands = []
    for l in range(1, l_max + 1):
        upper = critical_energy(l)
        lower_limit = critical_energy(l - 1) if l > 1 else 0.0
        sign = -1.0 if l % 2 == 0 else 1.0
        g = lambda E: sign * discriminant(E, v) - 2.0  # noqa: E731

        # g vanishes at the top of band l-1 and is positive inside the gap;
        # walk in from the gap floor until the sign is pinned, then bracket.
        gap = upper - lower_limit
        left = lower_limit
        step = gap * 1e-6
        while step < gap:
            if g(lower_limit + step) > 0.0:
                left = lower_limit + step
                break
            step *= 10.0
        else:
            raise RuntimeError(f"no gap found below band {l} (v={v})")
        root = brentq(g, left, upper - 1e-9 * max(upper, 1.0),
                      xtol=1e-12, rtol=8.9e-16)
        bands.append(Band(index=l, lower=float(root), upper=upper))
    return bands


def product_det(P: ScaledProduct) -> float:
    """Determinant of the stored factor times exp(2 log_scale); 1 for SL(2)."""
    m = P.matrix
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return det * math.exp(2.0 * P.log_scale)
