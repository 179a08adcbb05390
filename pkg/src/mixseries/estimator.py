"""Projection estimator of the mixing density.

With psi_k = sum_{j<=k} Q_{k,j} phi_j orthonormal in L2[a, b], the coefficient
c_k = <f, psi_k> equals E[sum_j Q_{k,j} g_j(X)], so

    c_hat_k = (1/n) sum_i sum_{j<=k} Q_{k,j} g_j(X_i),    f_hat = sum_{k<=m} c_hat_k psi_k.

psi_k is evaluated through the closed forms phi_j at the basis precision;
the double-precision alternative (recurrence for p_k, then T^{-1}) is exposed
as :func:`psi_values_via_T` for cross-checks.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from ._io import open_text
from .densities import MixingDensity
from .errors import BasisMismatch, DegenerateEstimate, InvalidA, InvalidDensity, PointOutsideInterval
from .families import MixtureFamily
from .legendre import Interval, LegendreBasis, build_basis, gauss_nodes, growth_lambda, hp_context

__all__ = [
    "psi_values",
    "psi_values_via_T",
    "ProjectionEstimate",
    "ExactProjection",
    "SelectionRule",
    "estimate_coefficients",
    "coefficients_from_means",
    "evaluate",
    "project_exact",
    "bias_norm_direct",
    "a_upper_bound",
    "select_m",
    "postprocess_density",
    "in_basis_density",
    "merge_estimates",
]

EXACT_EXTRA_NODES = 32
DEFAULT_GRID = 512


def _check_basis(family: MixtureFamily, basis: LegendreBasis):
    if basis.interval != family.target_interval:
        raise BasisMismatch(
            f"basis built on {basis.interval.as_tuple()} but {family.name} needs "
            f"{family.target_interval.as_tuple()}"
        )


CACHE_MAX_POINTS = 8192


@lru_cache(maxsize=128)
def _psi_cached(family, basis, m, raw_t: bytes):
    out = _psi_hp(family, basis, m, np.frombuffer(raw_t, dtype=float))
    out.setflags(write=False)
    return out


def _psi_hp(family, basis, m, t):
    ctx = hp_context(basis.precision_digits)
    rows = basis.hp_coefficients(ctx)[:m]
    out = np.empty((m, t.size))
    for i, ti in enumerate(t):
        phis = family.phi_hp(ctx, m, ti)
        for k, row in enumerate(rows):
            out[k, i] = float(ctx.fdot(row, phis[: k + 1]))
    return out


def psi_values(family: MixtureFamily, basis: LegendreBasis, t, m: int | None = None) -> np.ndarray:
    """psi_k(t_i) = sum_j Q_{k,j} phi_j(t_i) for k = 1..m, shape (m, len(t))."""
    _check_basis(family, basis)
    m = basis.order if m is None else m
    t = np.ascontiguousarray(np.atleast_1d(np.asarray(t, dtype=float)))
    if not family.theta_interval.contains(t):
        raise PointOutsideInterval(f"points outside [{family.a}, {family.b}]")
    if t.size > CACHE_MAX_POINTS:
        return _psi_hp(family, basis, m, t)
    return _psi_cached(family, basis, m, t.tobytes())


def psi_values_via_T(family: MixtureFamily, basis: LegendreBasis, t, m: int | None = None) -> np.ndarray:
    """psi_k = T^{-1} p_k with p_k from the double-precision three-term recurrence."""
    _check_basis(family, basis)
    m = basis.order if m is None else m
    t = np.atleast_1d(np.asarray(t, dtype=float))
    lo, hi = basis.interval.as_tuple()
    return family.apply_T_inverse(lambda s: basis.recurrence_values(np.clip(s, lo, hi), m))(t)


def coefficients_from_means(basis: LegendreBasis, means, m: int) -> np.ndarray:
    """Q[:m, :m] @ means, accumulated at the basis precision."""
    ctx = hp_context(basis.precision_digits)
    rows = basis.hp_coefficients(ctx)[:m]
    g = [ctx.mpf(float(v)) for v in means[:m]]
    return np.array([float(ctx.fdot(row, g[: len(row)])) for row in rows])


@dataclass(frozen=True, eq=False)
class ProjectionEstimate:
    """Fitted coefficients c_hat_1..c_hat_m and the sums of g_j(X_i) they came from."""

    family: MixtureFamily
    basis: LegendreBasis
    m: int
    c_hat: np.ndarray
    n: int
    g_sums: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __call__(self, t):
        return evaluate(self, t)

    def to_dict(self) -> dict:
        return {
            "family": self.family.describe(),
            "target_interval": list(self.basis.interval.as_tuple()),
            "m": self.m,
            "n": self.n,
            "precision_digits": self.basis.precision_digits,
            "c_hat": [float(v) for v in self.c_hat],
            "g_sums": [float(v) for v in self.g_sums],
            "provenance": self.provenance,
        }

    def save(self, path) -> None:
        with open_text(path) as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def export_csv(self, path, grid_points: int = DEFAULT_GRID, comments: list[str] | None = None,
                   mode: str = "raw") -> None:
        """Write (t, f_hat(t)) on a uniform grid over [a, b]."""
        t = np.linspace(self.family.a, self.family.b, grid_points)
        vals = postprocess_density(self, mode)(t)
        with open_text(path) as fh:
            for line in comments or []:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "f_hat"])
            for ti, vi in zip(t, vals):
                writer.writerow([repr(float(ti)), repr(float(vi))])


def estimate_coefficients(family: MixtureFamily, basis: LegendreBasis, data, m: int,
                          provenance: dict | None = None) -> ProjectionEstimate:
    """c_hat_{n,k} = (1/n) sum_i sum_{j<=k} Q_{k,j} g_j(X_i), k = 1..m.

    g_j(X_i) is evaluated once per (i, j); the column means are then mapped
    through Q at the basis precision.
    """
    _check_basis(family, basis)
    if not 1 <= m <= basis.order:
        raise ValueError(f"m={m} must lie in 1..{basis.order}")
    x = np.asarray(data, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("data must be nonempty")
    sums = family.g_matrix(m, x).sum(axis=0)
    c_hat = coefficients_from_means(basis, sums / x.size, m)
    return ProjectionEstimate(family, basis, m, c_hat, int(x.size), sums, dict(provenance or {}))


def merge_estimates(*estimates: ProjectionEstimate) -> ProjectionEstimate:
    """Estimate on the concatenated data, from the per-part sums."""
    first = estimates[0]
    for e in estimates[1:]:
        if e.m != first.m or e.basis is not first.basis or e.family != first.family:
            raise ValueError("can only merge estimates sharing family, basis and m")
    n = sum(e.n for e in estimates)
    sums = np.sum([e.g_sums for e in estimates], axis=0)
    c_hat = coefficients_from_means(first.basis, sums / n, first.m)
    return ProjectionEstimate(first.family, first.basis, first.m, c_hat, n, sums, dict(first.provenance))


def evaluate(estimate: ProjectionEstimate, t):
    """f_hat_{m,n}(t) = sum_k c_hat_k psi_k(t).  Scalar in, scalar out."""
    scalar = np.ndim(t) == 0
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if not estimate.family.theta_interval.contains(t_arr):
        raise PointOutsideInterval(f"t outside [{estimate.family.a}, {estimate.family.b}]")
    vals = estimate.c_hat @ psi_values(estimate.family, estimate.basis, t_arr, estimate.m)
    return float(vals[0]) if scalar else vals


class ExactProjection(tuple):
    """(coeffs, bias): coefficients <f, psi_k> and ||P_{V_m} f - f||."""

    __slots__ = ()

    def __new__(cls, coeffs, bias, f_norm_sq):
        return super().__new__(cls, (coeffs, bias, f_norm_sq))

    coeffs = property(lambda self: self[0])
    bias = property(lambda self: self[1])
    f_norm_sq = property(lambda self: self[2])

    @property
    def bias_sq(self) -> float:
        return self.bias**2


def project_exact(family: MixtureFamily, basis: LegendreBasis, f: MixingDensity, m: int,
                  n_nodes: int | None = None) -> ExactProjection:
    """c_k = <f, psi_k> by Gauss quadrature (>= m + 32 nodes per smooth piece of f).

    Nodes come from :meth:`MixtureFamily.quadrature`, i.e. Gauss rules on the
    target interval pulled back through T, which integrate products of
    basis functions exactly.

    The bias norm is sqrt(||f||^2 - sum_k c_k^2).
    """
    _check_basis(family, basis)
    n_nodes = max(m + EXACT_EXTRA_NODES, n_nodes or 0)
    x, w = family.quadrature(n_nodes, f.quadrature_breakpoints)
    psi = psi_values(family, basis, x, m)
    fx = f(x)
    coeffs = np.array([math.fsum(w * fx * psi[k]) for k in range(m)])
    norm_sq = math.fsum(w * fx * fx)
    bias_sq = norm_sq - math.fsum(coeffs**2)
    return ExactProjection(coeffs, math.sqrt(max(bias_sq, 0.0)), norm_sq)


def bias_norm_direct(family: MixtureFamily, basis: LegendreBasis, f: MixingDensity, m: int,
                     n_nodes: int | None = None) -> float:
    """||P_{V_m} f - f|| by integrating the squared residual directly."""
    proj = project_exact(family, basis, f, m, n_nodes)
    x, w = family.quadrature(max(m + EXACT_EXTRA_NODES, n_nodes or 0), f.quadrature_breakpoints)
    resid = proj.coeffs @ psi_values(family, basis, x, m) - f(x)
    return math.sqrt(math.fsum(w * resid * resid))


# ---------------------------------------------------------------------------
# choice of m


@dataclass(frozen=True)
class SelectionRule:
    """m_n = A log n (``logn``) or A log n / log log n (``loglog``)."""

    regime: str
    A: float

    def __post_init__(self):
        if self.regime not in ("logn", "loglog"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if not self.A > 0:
            raise InvalidA("A must be positive")

    @classmethod
    def default(cls, family: MixtureFamily) -> "SelectionRule":
        """Half the admissible bound, in the regime matching the family's variance condition."""
        regime = "logn" if family.variance_condition().kind == "geometric" else "loglog"
        return cls(regime, 0.5 * a_upper_bound(regime, family))

    @classmethod
    def parse(cls, text: str) -> "SelectionRule":
        """Parse ``logn:A`` or ``loglog:A``."""
        regime, _, value = text.partition(":")
        try:
            return cls(regime.strip(), float(value))
        except ValueError as exc:
            raise ValueError(f"bad selection rule {text!r}: {exc}") from None

    def __str__(self):
        return f"{self.regime}:{self.A!r}"


def a_upper_bound(regime: str, family: MixtureFamily) -> float:
    """Strict upper bound on A for the rule's regime.

    logn: 1 / (2 (log B + log lambda)) with lambda from the target interval.
    loglog: 1 / eta.
    """
    cond = family.variance_condition()
    if regime == "logn":
        if cond.kind != "geometric":
            raise InvalidA(f"{family.name} only satisfies the super-geometric variance condition; use loglog")
        return 0.5 / (math.log(cond.B) + math.log(growth_lambda(family.target_interval)))
    if cond.kind != "super_geometric":
        raise InvalidA(f"{family.name} satisfies the geometric variance condition; use logn")
    return 1.0 / cond.eta


def select_m(rule: SelectionRule, n: int, family: MixtureFamily) -> int:
    if n < 3:
        raise ValueError("select_m needs n >= 3")
    bound = a_upper_bound(rule.regime, family)
    if not rule.A < bound:
        raise InvalidA(f"A={rule.A} violates A < {bound:.6g} for {family.name} ({rule.regime})")
    if rule.regime == "logn":
        return max(1, math.floor(rule.A * math.log(n)))
    return max(1, math.floor(rule.A * math.log(n) / math.log(math.log(n))))


# ---------------------------------------------------------------------------
# post-processing


def _positive_pieces(func: Callable, lo: float, hi: float, grid: int = 2049):
    t = np.linspace(lo, hi, grid)
    v = func(t)
    edges = [lo]
    for i in np.nonzero(np.signbit(v[:-1]) != np.signbit(v[1:]))[0]:
        if v[i] == 0.0:
            edges.append(float(t[i]))
        else:
            edges.append(brentq(lambda s: float(func(np.array([s]))[0]), t[i], t[i + 1], xtol=1e-15, rtol=1e-15))
    edges.append(hi)
    return edges


def postprocess_density(estimate: ProjectionEstimate, mode: str = "raw") -> Callable:
    """``raw``: f_hat itself.  ``clip``: max(f_hat, 0) / int max(f_hat, 0).

    The clipped integral is computed piecewise between the sign changes of
    f_hat, each piece with Gauss quadrature.
    """
    if mode == "raw":
        return lambda t: evaluate(estimate, t)
    if mode != "clip":
        raise ValueError(f"unknown postprocess mode {mode!r}")
    fam = estimate.family
    f = lambda t: estimate.c_hat @ psi_values(fam, estimate.basis, t, estimate.m)  # noqa: E731
    edges = _positive_pieces(f, fam.a, fam.b)
    total = 0.0
    n_nodes = estimate.m + EXACT_EXTRA_NODES
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        x, w = gauss_nodes(Interval(lo, hi), n_nodes)
        total += math.fsum(w * np.maximum(f(x), 0.0))
    if not total > 0:
        raise DegenerateEstimate("clipped estimate has zero integral")

    def clipped(t):
        scalar = np.ndim(t) == 0
        vals = np.maximum(evaluate(estimate, np.atleast_1d(t)), 0.0) / total
        return float(vals[0]) if scalar else vals

    return clipped


# ---------------------------------------------------------------------------
# densities inside V_m


def in_basis_density(family: MixtureFamily, coeffs, basis: LegendreBasis | None = None,
                     precision_digits: int = 50) -> MixingDensity:
    """Density proportional to sum_k coeffs[k] psi_k, rescaled to integrate to 1.

    Lies in V_m (m = len(coeffs)), so its projection bias is zero for any
    estimator order >= m.  Raises InvalidDensity if it goes negative.  The
    evaluator uses the double-precision recurrence path so that rejection
    sampling stays vectorized.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    m = coeffs.size
    if m < 1:
        raise InvalidDensity("in-basis density needs at least one coefficient")
    if basis is None:
        basis = build_basis(family.target_interval, m, precision_digits)
    x, w = family.quadrature(m + EXACT_EXTRA_NODES)
    mass = math.fsum(w * (coeffs @ psi_values(family, basis, x, m)))
    if not mass > 0:
        raise InvalidDensity("in-basis coefficients give a non-positive total mass")
    scaled = coeffs / mass
    grid = np.linspace(family.a, family.b, 4097)
    vals = scaled @ psi_values(family, basis, grid, m)
    if np.any(vals < 0):
        raise InvalidDensity("in-basis density takes negative values")

    def f(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return scaled @ psi_values_via_T(family, basis, t, m)

    return MixingDensity(
        f, family.theta_interval, float(vals.max()) * 1.05, exact_coeffs=scaled,
        label="in-basis", params={"coeffs": [float(c) for c in coeffs]},
    )
