"""Weighted moduli of smoothness and membership checks for smoothness classes.

The sup over the step h is replaced by a max over a finite geometric grid,
so the computed modulus is a lower bound of the true one: a failed check is
a definite violation, a passed check is only consistent with membership.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ._io import open_text
from .densities import MixingDensity
from .legendre import Interval, gauss_nodes

__all__ = [
    "symmetric_difference",
    "ModulusQuery",
    "ModulusCurve",
    "weighted_modulus",
    "ClassCertificate",
    "certify_class",
    "default_t_grid",
    "step_weight",
]

DEFAULT_H_SUBDIVISIONS = 64
H_RANGE = 1e-3  # smallest step tried for a given t, relative to t
NORM_RTOL = 1e-10


def default_t_grid() -> np.ndarray:
    """16 geometric points in [1e-3, 1]."""
    return np.geomspace(1e-3, 1.0, 16)


def step_weight(x, interval: Interval):
    """phi(x) = sqrt((x - a)(b - x))."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.maximum((x - interval.lo) * (interval.hi - x), 0.0))


def _eval(f, pts):
    pts = np.asarray(pts, dtype=float)
    return np.asarray(f(pts.ravel()), dtype=float).reshape(pts.shape)


def symmetric_difference(f, r: int, h, x, interval: Interval | None = None):
    """Delta_h^r(f, x) = sum_{i=0}^r C(r, i) (-1)^i f(x + (i - r/2) h).

    Zero wherever x - r|h|/2 or x + r|h|/2 leaves the interval.  ``h`` and
    ``x`` broadcast against each other.  The sum is formed by r-fold
    differencing, so differences of constants vanish exactly.
    """
    if r < 1:
        raise ValueError("order r must be >= 1")
    if interval is None:
        interval = f.interval
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    x, h = np.broadcast_arrays(x, h)
    reach = 0.5 * r * np.abs(h)
    inside = (x - reach >= interval.lo) & (x + reach <= interval.hi)
    offsets = np.arange(r + 1) - 0.5 * r
    pts = x[..., None] + offsets * h[..., None]
    pts = np.clip(pts, interval.lo, interval.hi)  # truncated entries are masked below
    vals = _eval(f, pts)
    # np.diff applied r times gives sum_i C(r, i) (-1)^(r - i) f_i
    diff = np.diff(vals, n=r, axis=-1)[..., 0]
    if r % 2:
        diff = -diff
    out = np.where(inside, diff, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ModulusQuery:
    """Inputs of :func:`weighted_modulus`.

    The L2 norm over x uses ``panels`` equal panels with ``n_nodes`` Gauss
    points each; for every t the step h runs over ``h_subdivisions``
    geometric points in [1e-3 t, t].
    """

    f: MixingDensity
    r: int
    t_grid: tuple = field(default_factory=lambda: tuple(default_t_grid()))
    h_subdivisions: int = DEFAULT_H_SUBDIVISIONS
    n_nodes: int = 128
    panels: int = 16

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be >= 1")
        t = tuple(float(v) for v in np.atleast_1d(self.t_grid))
        if not t or any(not 0 < v <= 1 for v in t):
            raise ValueError("t_grid values must lie in (0, 1]")
        object.__setattr__(self, "t_grid", t)
        if self.h_subdivisions < 1:
            raise ValueError("h_subdivisions must be >= 1")
        if self.n_nodes < 128:
            raise ValueError("n_nodes must be >= 128")
        if self.panels < 1:
            raise ValueError("panels must be >= 1")


@dataclass(frozen=True)
class ModulusCurve:
    t: np.ndarray
    omega: np.ndarray
    r: int

    def to_csv(self, path, alpha: float, C: float, comments: list[str] | None = None) -> None:
        with open_text(path) as fh:
            for line in comments or []:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "omega_hat", "C_t_alpha"])
            for t, w in zip(self.t, self.omega):
                writer.writerow([repr(float(t)), repr(float(w)), repr(C * float(t) ** alpha)])


def _x_rule(interval: Interval, n_nodes: int, panels: int):
    edges = np.linspace(interval.lo, interval.hi, panels + 1)
    xs, ws = zip(*(gauss_nodes(Interval(lo, hi), n_nodes) for lo, hi in zip(edges[:-1], edges[1:])))
    return np.concatenate(xs), np.concatenate(ws)


def _h_grid(t: float, count: int) -> np.ndarray:
    if count == 1:
        return np.array([t])
    return t * np.geomspace(H_RANGE, 1.0, count)


def weighted_modulus(query: ModulusQuery) -> ModulusCurve:
    """omega_hat(t) = max over the h grid (h <= t) of || Delta_{h phi(.)}^r(f, .) ||_2.

    A running max over increasing t is kept, which stays a lower bound of
    the sup (every step used for t' <= t is also admissible for t) and makes
    the curve nondecreasing.
    """
    f = query.f
    interval = f.interval
    x, w = _x_rule(interval, query.n_nodes, query.panels)
    phi = step_weight(x, interval)
    order = np.argsort(query.t_grid)
    t_sorted = np.asarray(query.t_grid)[order]
    omega_sorted = np.empty_like(t_sorted)
    best = 0.0
    for i, t in enumerate(t_sorted):
        for h in _h_grid(t, query.h_subdivisions):
            d = symmetric_difference(f, query.r, h * phi, x, interval)
            best = max(best, math.sqrt(math.fsum(w * d * d)))
        omega_sorted[i] = best
    omega = np.empty_like(omega_sorted)
    omega[order] = omega_sorted
    return ModulusCurve(np.asarray(query.t_grid), omega, query.r)


@dataclass(frozen=True)
class ClassCertificate:
    """Outcome of a membership check for the class with parameters (alpha, C).

    ``verdict`` is "consistent" or "violated"; ``witness`` is the t at which
    the modulus bound fails, or "norm" when ||f|| > C.  ``margin`` is the
    smallest slack (negative when violated).
    """

    alpha: float
    C: float
    verdict: str
    witness: float | str | None
    margin: float
    r: int
    curve: ModulusCurve | None = None

    @property
    def consistent(self) -> bool:
        return self.verdict == "consistent"


def certify_class(f: MixingDensity, alpha: float, C: float, t_grid=None,
                  h_subdivisions: int = DEFAULT_H_SUBDIVISIONS) -> ClassCertificate:
    """Check ||f||_2 <= C and omega_hat(t) <= C t**alpha on ``t_grid`` with r = floor(alpha) + 1.

    The norm check allows a relative slack of 1e-10 for quadrature rounding.
    """
    if not (alpha > 0 and C > 0):
        raise ValueError("alpha and C must be positive")
    r = math.floor(alpha) + 1
    norm = math.sqrt(f.norm_sq())
    if norm > C * (1 + NORM_RTOL):
        return ClassCertificate(alpha, C, "violated", "norm", C - norm, r)
    t_grid = default_t_grid() if t_grid is None else t_grid
    curve = weighted_modulus(ModulusQuery(f, r, tuple(np.atleast_1d(t_grid)), h_subdivisions))
    slack = C * curve.t**alpha - curve.omega
    norm_slack = C - norm
    bad = np.nonzero(slack < 0)[0]
    if bad.size:
        i = bad[np.argmin(curve.t[bad])]
        return ClassCertificate(alpha, C, "violated", float(curve.t[i]), float(slack.min()), r, curve)
    return ClassCertificate(alpha, C, "consistent", None, float(min(slack.min(), norm_slack)), r, curve)
