"""Normalized Legendre polynomials on an arbitrary interval.

The monomial coefficients of the orthonormal polynomials grow geometrically
with the degree, so evaluating them in double precision cancels
catastrophically on short intervals far from the origin.  Coefficients are
therefore built and kept in extended precision (mpmath) and every
monomial-basis evaluation runs at that precision; only the results are
rounded to floats.
"""

from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np

from ._io import open_text
from .errors import IndexOutOfRange, OrthonormalityLost, PointOutsideInterval

__all__ = [
    "Interval",
    "LegendreBasis",
    "build_basis",
    "eval_poly",
    "coefficient_growth_report",
    "growth_lambda",
    "gauss_nodes",
    "hp_context",
]

DEFAULT_PRECISION = 50
ORTHONORMALITY_TOL = 1e-8
VALIDATION_EXTRA_NODES = 16

_local = threading.local()


def hp_context(digits: int) -> mpmath.MPContext:
    """Thread-local mpmath context at ``digits`` significant decimal digits.

    The global ``mpmath.mp`` context is process-wide state; private contexts
    keep concurrent evaluations from stepping on each other's precision.
    """
    cache = getattr(_local, "contexts", None)
    if cache is None:
        cache = _local.contexts = {}
    ctx = cache.get(digits)
    if ctx is None:
        ctx = mpmath.MPContext()
        ctx.dps = digits
        cache[digits] = ctx
    return ctx


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError(f"interval endpoints must be finite, got [{lo}, {hi}]")
        if not lo < hi:
            raise ValueError(f"interval needs lo < hi, got [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)

    def contains(self, t, slack: float = 1e-12) -> bool:
        """True when every value of ``t`` lies in the interval (up to a relative slack)."""
        t = np.asarray(t, dtype=float)
        eps = slack * max(1.0, abs(self.lo), abs(self.hi))
        return bool(np.all((t >= self.lo - eps) & (t <= self.hi + eps)))

    def as_tuple(self) -> tuple[float, float]:
        return (self.lo, self.hi)


@lru_cache(maxsize=256)
def _reference_gauss(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_nodes(interval: Interval, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped onto ``interval``.

    Exact for polynomials of degree ``2 * n_nodes - 1``.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be positive")
    x, w = _reference_gauss(int(n_nodes))
    return interval.midpoint + interval.half_width * x, interval.half_width * w


def growth_lambda(interval: Interval) -> float:
    """Geometric growth constant quoted for sum_l Q_{k,l}^2 (as lambda**(2k))."""
    lo, hi = interval.lo, interval.hi
    ratio = (2.0 + lo + hi) / (hi - lo)
    return ratio + math.sqrt(1.0 + ratio)


@dataclass(frozen=True, eq=False)
class LegendreBasis:
    """Orthonormal polynomials p_1..p_m on ``interval``.

    ``Q[k-1, l-1]`` is the coefficient of t**(l-1) in p_k (rounded to float);
    the unrounded coefficients are kept in ``_q_raw`` as mpmath raw tuples.
    """

    interval: Interval
    order: int
    Q: np.ndarray
    beta: np.ndarray
    precision_digits: int
    _q_raw: tuple = field(repr=False)

    def _hp_rows(self, ctx):
        return [[ctx.make_mpf(v) for v in row] for row in self._q_raw]

    def hp_coefficients(self, ctx=None):
        """Coefficient rows as mpf numbers in ``ctx`` (default: the basis precision)."""
        ctx = ctx or hp_context(self.precision_digits)
        return self._hp_rows(ctx)

    def _check_k(self, k):
        if not 1 <= k <= self.order:
            raise IndexOutOfRange(f"polynomial index {k} outside 1..{self.order}")

    def poly_values(self, t, m: int | None = None) -> np.ndarray:
        """Values p_k(t_i) for k = 1..m as an (m, len(t)) float array.

        Horner's scheme on the extended-precision coefficients.
        """
        m = self.order if m is None else m
        self._check_k(m)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if not self.interval.contains(t):
            raise PointOutsideInterval(f"points outside {self.interval.as_tuple()}")
        ctx = hp_context(self.precision_digits)
        rows = self._hp_rows(ctx)[:m]
        out = np.empty((m, t.size))
        for i, ti in enumerate(t):
            x = ctx.mpf(float(ti))
            for k, row in enumerate(rows):
                acc = ctx.zero
                for c in reversed(row):
                    acc = acc * x + c
                out[k, i] = float(acc)
        return out

    def recurrence_values(self, t, m: int | None = None) -> np.ndarray:
        """Same values as :meth:`poly_values`, via the three-term recurrence in doubles.

        Numerically stable, independent of the monomial coefficients.
        """
        m = self.order if m is None else m
        t = np.atleast_1d(np.asarray(t, dtype=float))
        mu = self.interval.midpoint
        sb = np.sqrt(self.beta)
        out = np.empty((m, t.size))
        out[0] = 1.0 / sb[0]
        if m > 1:
            out[1] = (t - mu) * out[0] / sb[1]
        for k in range(2, m):
            out[k] = ((t - mu) * out[k - 1] - sb[k - 1] * out[k - 2]) / sb[k]
        return out

    def gram_matrix(self, n_nodes: int | None = None) -> np.ndarray:
        n_nodes = self.order + VALIDATION_EXTRA_NODES if n_nodes is None else n_nodes
        x, w = gauss_nodes(self.interval, n_nodes)
        p = self.poly_values(x)
        return (p * w) @ p.T

    def orthonormality_residual(self, n_nodes: int | None = None) -> float:
        """max_{j,k} |<p_j, p_k> - delta_jk| under Gauss quadrature."""
        g = self.gram_matrix(n_nodes)
        return float(np.max(np.abs(g - np.eye(self.order))))

    def to_csv(self, path, comments: list[str] | None = None) -> None:
        """Write Q (one row per k, columns l=1..m) and beta_k to ``path``."""
        with open_text(path) as fh:
            for line in comments or []:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["k", *[f"l{l}" for l in range(1, self.order + 1)], "beta"])
            for k in range(self.order):
                writer.writerow([k + 1, *(repr(float(v)) for v in self.Q[k]), repr(float(self.beta[k]))])


def build_basis(interval: Interval, m: int, precision_digits: int = DEFAULT_PRECISION) -> LegendreBasis:
    """Build the normalized Legendre coefficients Q on ``interval`` up to order ``m``.

    R follows R_{k+1,l} = R_{k,l-1} - mu R_{k,l} - beta_k R_{k-1,l} with R_{1,1} = 1
    and R_{0,.} = 0, i.e. r_{k+1}(t) = (t - mu) r_k(t) - beta_k r_{k-1}(t); then
    Q_{k,l} = R_{k,l} / sqrt(beta_1 ... beta_k).

    Raises OrthonormalityLost when the Gram matrix of the result, computed with
    ``m + 16`` Gauss nodes, is further than 1e-8 from the identity.
    """
    if m < 1:
        raise ValueError("order m must be >= 1")
    if precision_digits < 15:
        raise ValueError("precision_digits must be >= 15")
    ctx = hp_context(precision_digits)
    lo, hi = ctx.mpf(interval.lo), ctx.mpf(interval.hi)
    mu = (lo + hi) / 2
    delta = (hi - lo) / 2

    beta = [2 * delta]
    for k in range(2, m + 1):
        beta.append(delta**2 * (k - 1) ** 2 / (4 * (k - 1) ** 2 - 1))

    prev = [ctx.zero] * m
    cur = [ctx.one] + [ctx.zero] * (m - 1)
    rows_r = [cur]
    for k in range(1, m):
        nxt = [ctx.zero] * m
        for l in range(k + 1):
            shifted = cur[l - 1] if l >= 1 else ctx.zero
            nxt[l] = shifted - mu * cur[l] - beta[k - 1] * prev[l]
        prev, cur = cur, nxt
        rows_r.append(cur)

    raw = []
    norm_sq = ctx.one
    for k in range(m):
        norm_sq *= beta[k]
        scale = 1 / ctx.sqrt(norm_sq)
        raw.append(tuple((rows_r[k][l] * scale)._mpf_ for l in range(k + 1)))

    q = np.zeros((m, m))
    for k, row in enumerate(raw):
        for l, v in enumerate(row):
            q[k, l] = float(ctx.make_mpf(v))
    q.setflags(write=False)
    b = np.array([float(v) for v in beta])
    b.setflags(write=False)

    basis = LegendreBasis(interval, m, q, b, precision_digits, tuple(raw))
    residual = basis.orthonormality_residual()
    if residual > ORTHONORMALITY_TOL:
        raise OrthonormalityLost(
            f"orthonormality residual {residual:.3g} on {interval.as_tuple()} with m={m} "
            f"at {precision_digits} digits; raise precision_digits"
        )
    return basis


def eval_poly(basis: LegendreBasis, k: int, t: float) -> float:
    """p_k(t) = sum_l Q_{k,l} t**(l-1), by Horner's scheme at the basis precision."""
    basis._check_k(k)
    if not basis.interval.contains(t):
        raise PointOutsideInterval(f"t={t} outside {basis.interval.as_tuple()}")
    ctx = hp_context(basis.precision_digits)
    x = ctx.mpf(float(t))
    acc = ctx.zero
    for c in reversed(basis._q_raw[k - 1]):
        acc = acc * x + ctx.make_mpf(c)
    return float(acc)


def coefficient_growth_report(basis: LegendreBasis) -> np.ndarray:
    """s_k = sum_l Q_{k,l}**2 for k = 1..m (computed from the extended-precision rows)."""
    ctx = hp_context(basis.precision_digits)
    return np.array([float(ctx.fsum(c * c for c in row)) for row in basis.hp_coefficients(ctx)])
