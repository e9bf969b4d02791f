"""Disorder ensembles for the single-site couplings.

The couplings ``v_n`` are i.i.d. with a compactly supported distribution.
Three families are supported: uniform on an interval, a two-point (Bernoulli)
law, and a general finite discrete law.  The sampler is counter-based
(Philox), addressed by site index, so the coupling at a given site is a pure
function of ``(model, seed, stream, site)``: windows can be extended lazily
in either direction and regenerate bit-identically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "Moments",
    "DisorderModel",
    "Realization",
    "sample",
]

_WEIGHT_TOL = 1e-15

# Sites can be negative; the Philox counter cannot.  Every draw advances the
# counter to site + _SITE_BASE, one 4-word counter block per site (the
# generator emits four 64-bit words per block; we consume the first).
_SITE_BASE = 1 << 62


class Moments(NamedTuple):
    """First two moments and the support interval of a coupling law."""

    mean: float
    variance: float
    support: tuple[float, float]


@dataclass(frozen=True)
class DisorderModel:
    """Distribution of a single coupling.

    Instances are immutable and hashable; construct via :meth:`uniform`,
    :meth:`two_point` or :meth:`discrete`.  Degenerate (zero-variance) laws
    are rejected outright.  Laws with zero mean are allowed here but are
    rejected by the critical-energy machinery, which requires
    ``mean > 0``.

    Parameters
    ----------
    kind : str
        One of ``"uniform"``, ``"two_point"``, ``"discrete"``.
    lo, hi : float
        Support bounds (inclusive).
    values, weights : tuple of float
        Atoms and probabilities for the atomic kinds; empty for ``uniform``.
    """

    kind: str
    lo: float
    hi: float
    values: tuple[float, ...] = field(default=())
    weights: tuple[float, ...] = field(default=())

    # -- constructors -----------------------------------------------------

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "DisorderModel":
        """Uniform law on ``[lo, hi]``."""
        lo, hi = float(lo), float(hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError("support bounds must be finite")
        if not hi > lo:
            raise ValueError(f"need hi > lo, got [{lo}, {hi}]")
        return cls(kind="uniform", lo=lo, hi=hi)

    @classmethod
    def two_point(cls, a: float, p_a: float, b: float) -> "DisorderModel":
        """Law taking value ``a`` with probability ``p_a``, else ``b``."""
        return cls.discrete([a, b], [p_a, 1.0 - float(p_a)], _kind="two_point")

    @classmethod
    def discrete(
        cls,
        values,
        weights,
        *,
        _kind: str = "discrete",
    ) -> "DisorderModel":
        """General finite law with the given atoms and probabilities."""
        vals = tuple(float(v) for v in values)
        wts = tuple(float(w) for w in weights)
        if len(vals) != len(wts) or not vals:
            raise ValueError("values and weights must be equal-length, nonempty")
        if any(not math.isfinite(v) for v in vals):
            raise ValueError("atoms must be finite")
        if any(w < 0.0 for w in wts):
            raise ValueError("weights must be nonnegative")
        total = math.fsum(wts)
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        support = [v for v, w in zip(vals, wts) if w > 0.0]
        if len(set(support)) < 2:
            raise ValueError("law is degenerate (needs at least two atoms "
                             "with positive probability)")
        return cls(kind=_kind, lo=min(support), hi=max(support),
                   values=vals, weights=wts)

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "two_point", "discrete"):
            raise ValueError(f"unknown kind {self.kind!r}")

    # -- moments -----------------------------------------------------------

    def moments(self) -> Moments:
        """Mean, variance and support of the law."""
        if self.kind == "uniform":
            mean = 0.5 * (self.lo + self.hi)
            var = (self.hi - self.lo) ** 2 / 12.0
        else:
            w = np.asarray(self.weights)
            v = np.asarray(self.values)
            mean = float(w @ v)
            var = float(w @ (v - mean) ** 2)
        return Moments(mean=mean, variance=var, support=(self.lo, self.hi))

    @property
    def mean(self) -> float:
        return self.moments().mean

    @property
    def variance(self) -> float:
        return self.moments().variance

    def require_nonzero_mean(self) -> None:
        """Raise unless the law has strictly positive mean.

        The critical-energy expansions all carry ``sqrt(mean)`` factors and
        are meaningless otherwise, so entry points that use them call this.
        """
        if not self.mean > 0.0:
            raise ValueError(
                f"coupling law must have positive mean, got {self.mean!r}")

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        """JSON-compatible dict; inverse of :meth:`from_json`."""
        if self.kind == "uniform":
            return {"kind": "uniform", "lo": self.lo, "hi": self.hi}
        return {"kind": self.kind, "values": list(self.values),
                "weights": list(self.weights)}

    @classmethod
    def from_json(cls, data: dict) -> "DisorderModel":
        kind = data.get("kind")
        if kind == "uniform":
            return cls.uniform(data["lo"], data["hi"])
        if kind in ("two_point", "discrete"):
            return cls.discrete(data["values"], data["weights"], _kind=kind)
        raise ValueError(f"unknown model kind {kind!r}")

    @classmethod
    def parse(cls, text: str) -> "DisorderModel":
        """Parse a CLI shorthand.

        ``uniform:LO,HI`` | ``twopoint:A,P_A,B`` | ``discrete:V1,V2,..;W1,W2,..``
        """
        kind, _, rest = text.partition(":")
        kind = kind.strip().lower().replace("-", "").replace("_", "")
        try:
            if kind == "uniform":
                lo, hi = (float(t) for t in rest.split(","))
                return cls.uniform(lo, hi)
            if kind == "twopoint":
                a, p_a, b = (float(t) for t in rest.split(","))
                return cls.two_point(a, p_a, b)
            if kind == "discrete":
                vals_s, _, wts_s = rest.partition(";")
                vals = [float(t) for t in vals_s.split(",")]
                wts = [float(t) for t in wts_s.split(",")]
                return cls.discrete(vals, wts)
        except ValueError as exc:
            raise ValueError(f"cannot parse model spec {text!r}: {exc}") from exc
        raise ValueError(f"unknown model kind in {text!r}")


@dataclass(frozen=True)
class Realization:
    """A concrete draw of couplings on a contiguous window of sites.

    ``values[j]`` is the coupling at site ``site_offset + j``.  The window is
    identified by ``(model, seed, stream)``; re-sampling any sub-window with
    the same identity reproduces the same numbers bit for bit.  ``model``
    may be None for hand-built deterministic windows (the free box).
    """

    model: DisorderModel | None
    seed: int
    site_offset: int
    values: np.ndarray
    stream: int = 0

    def __post_init__(self) -> None:
        self.values.setflags(write=False)

    @property
    def first_site(self) -> int:
        return self.site_offset

    @property
    def last_site(self) -> int:
        return self.site_offset + len(self.values) - 1

    def coupling(self, site: int) -> float:
        """Coupling at one site (must lie inside the window)."""
        j = site - self.site_offset
        if not 0 <= j < len(self.values):
            raise IndexError(f"site {site} outside window "
                             f"[{self.first_site}, {self.last_site}]")
        return float(self.values[j])

    def window(self, m: int, n: int) -> np.ndarray:
        """Couplings at sites ``m+1 .. n`` as an array view."""
        if n < m:
            raise ValueError("need n >= m")
        j0 = m + 1 - self.site_offset
        j1 = n + 1 - self.site_offset
        if j0 < 0 or j1 > len(self.values):
            raise IndexError(f"window ({m}, {n}] exceeds realization "
                             f"[{self.first_site}, {self.last_site}]")
        return self.values[j0:j1]


def _philox_key(seed: int, stream: int) -> np.ndarray:
    ss = np.random.SeedSequence(entropy=(int(seed), int(stream)))
    return ss.generate_state(2, np.uint64)


def _uniforms_for_sites(seed: int, stream: int, first: int, count: int) -> np.ndarray:
    """One U[0,1) variate per site, counter-addressed by site index."""
    if first + _SITE_BASE < 0:
        raise ValueError(f"site index {first} below addressable range")
    bg = np.random.Philox(key=_philox_key(seed, stream))
    bg.advance(first + _SITE_BASE)
    # Philox emits 4 words per counter block; keep the first word of each
    # block so that each site owns exactly one block.
    raw = np.random.Generator(bg).random(4 * count)
    return np.ascontiguousarray(raw[::4])


def sample(
    model: DisorderModel,
    seed: int,
    m: int,
    n: int,
    stream: int = 0,
) -> Realization:
    """Draw the couplings at sites ``m+1 .. n``.

    The interval convention matches the transfer matrices, which multiply
    the site factors over ``(m, n]``.  ``stream`` separates independent
    realizations sharing one master seed (Monte Carlo batches use
    ``stream = 0, 1, 2, ...``).
    """
    if n < m:
        raise ValueError(f"need n >= m, got ({m}, {n}]")
    count = n - m
    u = _uniforms_for_sites(seed, stream, m + 1, count)
    if model.kind == "uniform":
        vals = model.lo + (model.hi - model.lo) * u
    else:
        edges = np.cumsum(model.weights)
        idx = np.searchsorted(edges, u, side="right")
        np.clip(idx, 0, len(model.values) - 1, out=idx)
        vals = np.asarray(model.values)[idx]
    return Realization(model=model, seed=int(seed), site_offset=m + 1,
                       values=vals, stream=int(stream))
