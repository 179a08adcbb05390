"""Mixing densities on [a, b] and the built-in test densities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special, stats

from .errors import InvalidDensity
from .legendre import Interval, gauss_nodes

__all__ = ["MixingDensity", "uniform", "cosine_bump", "beta_shaped"]

NORMALIZATION_TOL = 1e-8
CHECK_GRID = 1024
GRADING_LEVELS = 24


@dataclass(frozen=True, eq=False)
class MixingDensity:
    """A density f on ``interval`` given by a vectorized evaluator.

    ``sup_bound`` must dominate f on the interval; it is the envelope for
    rejection sampling.  ``breakpoints`` lists interior points where f or its
    derivatives jump, so quadrature can split there.  ``singular_ends`` marks
    densities that are not smooth at a or b (e.g. (t - a)**0.5); quadrature
    panels are then graded geometrically towards both ends.
    """

    evaluator: Callable
    interval: Interval
    sup_bound: float
    exact_coeffs: np.ndarray | None = None
    label: str = "custom"
    breakpoints: tuple = field(default=())
    params: dict = field(default_factory=dict)
    singular_ends: bool = False

    def __post_init__(self):
        lo, hi = self.interval.lo, self.interval.hi
        bps = tuple(sorted(float(p) for p in self.breakpoints))
        if any(not lo < p < hi for p in bps):
            raise InvalidDensity("breakpoints must lie strictly inside the interval")
        object.__setattr__(self, "breakpoints", bps)
        grid = np.linspace(lo, hi, CHECK_GRID)
        vals = self(grid)
        if np.any(vals < 0):
            raise InvalidDensity(f"{self.label}: negative values on the check grid (min {vals.min():.3g})")
        if np.any(vals > self.sup_bound):
            raise InvalidDensity(f"{self.label}: sup_bound {self.sup_bound} exceeded (max {vals.max():.6g})")
        total = self.integrate(lambda t: self(t))
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise InvalidDensity(f"{self.label}: integrates to {total!r}, not 1")

    def __call__(self, t):
        return np.asarray(self.evaluator(np.asarray(t, dtype=float)), dtype=float)

    @property
    def quadrature_breakpoints(self) -> tuple:
        """Interior panel edges for quadrature: the breakpoints plus any end grading."""
        if not self.singular_ends:
            return self.breakpoints
        lo, hi = self.interval.as_tuple()
        pieces = (lo, *self.breakpoints, hi)
        half = 0.5 * min(b - a for a, b in zip(pieces[:-1], pieces[1:]))
        steps = half * 0.5 ** np.arange(GRADING_LEVELS)
        return tuple(sorted({*self.breakpoints, *(lo + steps), *(hi - steps)}))

    def quadrature(self, n_nodes: int = 64) -> tuple[np.ndarray, np.ndarray]:
        """Gauss rule with ``n_nodes`` nodes on each panel of the interval."""
        edges = (self.interval.lo, *self.quadrature_breakpoints, self.interval.hi)
        xs, ws = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            x, w = gauss_nodes(Interval(lo, hi), n_nodes)
            xs.append(x)
            ws.append(w)
        return np.concatenate(xs), np.concatenate(ws)

    def integrate(self, func: Callable, n_nodes: int = 128) -> float:
        x, w = self.quadrature(n_nodes)
        return math.fsum(w * func(x))

    def norm_sq(self, n_nodes: int = 128) -> float:
        """||f||^2 in L2[a, b]."""
        return self.integrate(lambda t: self(t) ** 2, n_nodes)

    def describe(self) -> dict:
        return {"label": self.label, "interval": list(self.interval.as_tuple()), **self.params}


def uniform(interval: Interval) -> MixingDensity:
    h = 1.0 / interval.length
    return MixingDensity(lambda t: np.full(np.shape(t), h), interval, h, label="uniform")


def cosine_bump(interval: Interval) -> MixingDensity:
    """(1 + cos(2 pi (t - mid) / (b - a))) / (b - a): peak at the midpoint, zero at both ends."""
    mid, length = interval.midpoint, interval.length

    def f(t):
        return (1.0 + np.cos(2.0 * np.pi * (t - mid) / length)) / length

    return MixingDensity(f, interval, 2.0 / length, label="cosine-bump")


def _log_or_zero(u: float) -> float:
    return math.log(u) if u > 0 else 0.0


def beta_shaped(interval: Interval, p: float, q: float) -> MixingDensity:
    """Beta(p, q) density moved affinely onto the interval; needs p, q >= 1 to stay bounded."""
    if p < 1 or q < 1:
        raise InvalidDensity("beta-shaped density needs p >= 1 and q >= 1")
    dist = stats.beta(p, q, loc=interval.lo, scale=interval.length)
    # density at the mode in closed form; u and 1 - u are formed separately so
    # that a mode next to an end does not round onto it (0 ** tiny == 0)
    if p + q > 2:
        u, v = (p - 1) / (p + q - 2), (q - 1) / (p + q - 2)
    else:
        u = v = 0.5
    peak = math.exp((p - 1) * _log_or_zero(u) + (q - 1) * _log_or_zero(v) - special.betaln(p, q))
    sup = peak / interval.length * (1 + 1e-12)
    smooth = float(p).is_integer() and float(q).is_integer()
    return MixingDensity(dist.pdf, interval, sup, label="beta-shaped", params={"p": p, "q": q},
                         singular_ends=not smooth)
