"""Mixture families: kernels pi_t, test functions g_k, moments phi_k and isometries T.

Every family fixes functions g_k such that phi_k(t) = E[g_k(X) | t] is mapped by a
linear isometry T : L2[a, b] -> L2[a', b'] onto the monomial t**(k-1).  The
projection estimator then only needs the normalized Legendre coefficients on
the target interval [a', b'].
"""

from __future__ import annotations

import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special, stats
from scipy.integrate import quad

from .errors import GammaTableOverflow, ParameterOutOfRange
from .legendre import Interval, gauss_nodes

__all__ = [
    "VarianceCondition",
    "GammaCoeffTable",
    "gamma_coeff_table",
    "MixtureFamily",
    "ExponentialIndicator",
    "ExponentialMoment",
    "GammaShape",
    "BetaScale",
    "GenericScale",
    "UnitScaleDensity",
    "load_unit_density",
    "make_family",
    "kernel_density",
    "sample_kernel",
    "g",
    "phi",
    "apply_T",
    "apply_T_inverse",
    "variance_condition_params",
]

INT64_MAX = 2**63 - 1


@dataclass(frozen=True)
class VarianceCondition:
    """Growth bound on Var(g_k(X)).

    ``geometric``: Var(g_k(X)) < C0 * B**(2k).
    ``super_geometric``: Var(g_k(X)) < C0 * k**(eta * k).
    """

    kind: str
    C0: float
    B: float | None = None
    eta: float | None = None

    def __post_init__(self):
        if self.kind == "geometric":
            if self.B is None or self.B < 1:
                raise ValueError("geometric condition needs B >= 1")
        elif self.kind == "super_geometric":
            if self.eta is None or self.eta <= 0:
                raise ValueError("super-geometric condition needs eta > 0")
        else:
            raise ValueError(f"unknown variance condition kind {self.kind!r}")
        if self.C0 <= 0:
            raise ValueError("C0 must be positive")

    def log_bound(self, k: int) -> float:
        if self.kind == "geometric":
            return math.log(self.C0) + 2 * k * math.log(self.B)
        return math.log(self.C0) + self.eta * k * math.log(k)

    def bound(self, k: int) -> float:
        return math.exp(self.log_bound(k))

    def as_dict(self) -> dict:
        out = {"kind": self.kind, "C0": self.C0}
        if self.kind == "geometric":
            out["B"] = self.B
        else:
            out["eta"] = self.eta
        return out


# ---------------------------------------------------------------------------
# Gamma shape coefficients


@dataclass(frozen=True)
class GammaCoeffTable:
    """Integer coefficients with t**(k-1) = sum_l c[k][l] * t(t+1)...(t+l-2)."""

    order: int
    rows: tuple[tuple[int, ...], ...]

    def row(self, k: int) -> tuple[int, ...]:
        return self.rows[k - 1]

    def as_array(self) -> np.ndarray:
        out = np.zeros((self.order, self.order), dtype=np.int64)
        for k, row in enumerate(self.rows):
            out[k, : len(row)] = row
        return out


def gamma_coeff_table(K: int) -> GammaCoeffTable:
    """Coefficients c~_{k,l}, k <= K, from c~_{k,l} = c~_{k-1,l-1} - (l-1) c~_{k-1,l}.

    Exact integer arithmetic; raises GammaTableOverflow when an entry leaves
    the signed 64-bit range (first happens at K = 27).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    return _gamma_table(int(K))


@lru_cache(maxsize=64)
def _gamma_table(K: int) -> GammaCoeffTable:
    rows = [(1,)]
    for k in range(2, K + 1):
        prev = rows[-1]
        row = [0] * k
        row[k - 1] = 1
        for l in range(2, k):  # 1-based l; c~_{k,1} = 0
            row[l - 1] = prev[l - 2] - (l - 1) * prev[l - 1]
        for v in row:
            if abs(v) > INT64_MAX:
                raise GammaTableOverflow(f"|c~_{{{k},l}}| exceeds 64-bit integers; K={K} too large")
        rows.append(tuple(row))
    return GammaCoeffTable(K, tuple(rows))


def _gamma_c0(b: float, k_max: int = 400) -> float:
    """Constant C0 with (k!)^2 (1 + Gamma(b+2k-2)/Gamma(b)) <= C0 k^(4k) for all k.

    The left side bounds pi_f(g_k^2) for every mixing density on [a, b].  Its
    ratio to k^(4k) decays super-exponentially, so the sup is reached early.
    """
    best = -math.inf
    for k in range(1, k_max + 1):
        log_ratio = special.gammaln(b + 2 * k - 2) - special.gammaln(b)
        log_lhs = 2 * special.gammaln(k + 1) + np.logaddexp(0.0, log_ratio)
        best = max(best, log_lhs - 4 * k * math.log(k))
    return float(math.exp(best))


# ---------------------------------------------------------------------------
# Families


class MixtureFamily(ABC):
    """Kernel family pi_t, t in [a, b], with its estimator ingredients."""

    name: str = ""

    def __init__(self, a: float, b: float):
        self.theta_interval = Interval(a, b)
        if self.theta_interval.lo <= 0:
            raise ParameterOutOfRange(f"{self.name} requires a > 0, got a={a}")

    @property
    def a(self) -> float:
        return self.theta_interval.lo

    @property
    def b(self) -> float:
        return self.theta_interval.hi

    @property
    def target_interval(self) -> Interval:
        return self.theta_interval

    def __repr__(self):
        return f"{type(self).__name__}(a={self.a!r}, b={self.b!r})"

    def __eq__(self, other):
        return type(self) is type(other) and self.describe() == other.describe()

    def __hash__(self):
        return hash(json.dumps(self.describe(), sort_keys=True))

    def describe(self) -> dict:
        return {"name": self.name, "a": self.a, "b": self.b}

    def _check_t(self, t):
        if not self.theta_interval.contains(t):
            raise ParameterOutOfRange(f"t outside [{self.a}, {self.b}] for {self.name}")

    # kernel -----------------------------------------------------------------
    @abstractmethod
    def kernel_density(self, t, x):
        """pi_t(x); zero outside the support."""

    @abstractmethod
    def kernel_cdf(self, t, x):
        """P(X <= x | t)."""

    def kernel_support(self, t: float) -> tuple[float, float]:
        return 0.0, math.inf

    @abstractmethod
    def sample(self, t, rng: np.random.Generator) -> np.ndarray:
        """One draw from pi_{t_i} for each entry of ``t``."""

    # estimator ingredients -----------------------------------------------------
    @abstractmethod
    def g(self, k: int, x):
        """Test function g_k evaluated at ``x``."""

    def g_matrix(self, m: int, x) -> np.ndarray:
        """Array of shape (len(x), m) with entry [i, j-1] = g_j(x_i)."""
        x = np.asarray(x, dtype=float)
        out = np.empty((x.size, m))
        for j in range(1, m + 1):
            out[:, j - 1] = self.g(j, x)
        return out

    @abstractmethod
    def phi(self, k: int, t):
        """Closed form of phi_k(t) = pi_t(g_k)."""

    @abstractmethod
    def phi_hp(self, ctx, m: int, t: float) -> list:
        """phi_1(t)..phi_m(t) as mpf numbers of ``ctx``."""

    def apply_T(self, f: Callable) -> Callable:
        return f

    def apply_T_inverse(self, h: Callable) -> Callable:
        return h

    def to_target(self, t):
        """Change of variable theta -> target interval underlying T."""
        return np.asarray(t, dtype=float)

    def from_target(self, s):
        """Inverse change of variable and |d theta / d s| at ``s``."""
        s = np.asarray(s, dtype=float)
        return s, np.ones_like(s)

    def quadrature(self, n_nodes: int, breakpoints=()) -> tuple[np.ndarray, np.ndarray]:
        """Nodes in [a, b] and weights from Gauss rules on the target interval.

        ``n_nodes`` Gauss points per piece (pieces split at ``breakpoints``)
        are pulled back through the change of variable, so the rule integrates
        psi_j * psi_k exactly whenever 2 * n_nodes exceeds j + k - 2.
        """
        edges = np.array([self.a, *sorted(breakpoints), self.b], dtype=float)
        s_edges = self.to_target(edges)
        xs, ws = [], []
        for lo, hi in zip(s_edges[:-1], s_edges[1:]):
            lo, hi = min(lo, hi), max(lo, hi)
            s, w = gauss_nodes(Interval(lo, hi), n_nodes)
            t, jac = self.from_target(s)
            xs.append(np.clip(t, self.a, self.b))
            ws.append(w * jac)
        x, w = np.concatenate(xs), np.concatenate(ws)
        order = np.argsort(x)
        return x[order], w[order]

    @abstractmethod
    def variance_condition(self) -> VarianceCondition:
        """Constants of the growth condition satisfied by Var(g_k(X))."""


def _poly_phi_hp(ctx, m, t):
    x = ctx.mpf(float(t))
    out = [ctx.one]
    for _ in range(1, m):
        out.append(out[-1] * x)
    return out


class _ExponentialKernel(MixtureFamily):
    """Shared kernel pi_t(x) = t exp(-t x), x >= 0."""

    def kernel_density(self, t, x):
        self._check_t(t)
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, t * np.exp(-t * np.maximum(x, 0.0)), 0.0)

    def kernel_cdf(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -np.expm1(-t * np.maximum(x, 0.0)), 0.0)

    @staticmethod
    def inverse_cdf(t, u):
        return -np.log(u) / t

    def sample(self, t, rng):
        t = np.asarray(t, dtype=float)
        self._check_t(t)
        u = 1.0 - rng.random(t.shape)  # in (0, 1]
        return self.inverse_cdf(t, u)


class ExponentialIndicator(_ExponentialKernel):
    """pi_t(x) = t exp(-t x) with g_k(x) = 1{x > k - 1/2} and phi_k(t) = exp(-(k - 1/2) t)."""

    name = "exp-indicator"

    @property
    def target_interval(self) -> Interval:
        return Interval(math.exp(-self.b), math.exp(-self.a))

    def g(self, k, x):
        return (np.asarray(x, dtype=float) > k - 0.5).astype(float)

    def phi(self, k, t):
        self._check_t(t)
        return np.exp(-(k - 0.5) * np.asarray(t, dtype=float))

    def phi_hp(self, ctx, m, t):
        x = ctx.mpf(float(t))
        u = ctx.exp(-x)
        out = [ctx.exp(-x / 2)]
        for _ in range(1, m):
            out.append(out[-1] * u)
        return out

    def apply_T(self, f):
        return lambda s: f(-np.log(s)) / np.sqrt(s)

    def to_target(self, t):
        return np.exp(-np.asarray(t, dtype=float))

    def from_target(self, s):
        s = np.asarray(s, dtype=float)
        return -np.log(s), 1.0 / s

    def apply_T_inverse(self, h):
        return lambda t: np.exp(-np.asarray(t, dtype=float) / 2) * h(np.exp(-np.asarray(t, dtype=float)))

    def variance_condition(self):
        return VarianceCondition("geometric", C0=1.0, B=1.0)


class ExponentialMoment(_ExponentialKernel):
    """pi_t(x) = t exp(-t x) with g_k(x) = x**k / k! and phi_k(t) = t**(-k).

    ``eta`` is the exponent of the super-geometric variance bound.  The
    default is derived from the exact variances of g_k(X) under a uniform
    mixing density on [a, b], plus ``eta_margin``.
    """

    name = "exp-moment"

    def __init__(self, a, b, eta: float | None = None, eta_margin: float = 0.5):
        super().__init__(a, b)
        self._eta = eta
        self.eta_margin = eta_margin

    @property
    def target_interval(self) -> Interval:
        return Interval(1.0 / self.b, 1.0 / self.a)

    def describe(self):
        d = super().describe()
        if self._eta is not None:
            d["eta"] = self._eta
        return d

    def g(self, k, x):
        x = np.asarray(x, dtype=float)
        return x**k / math.factorial(k)

    def phi(self, k, t):
        self._check_t(t)
        return np.asarray(t, dtype=float) ** (-k)

    def phi_hp(self, ctx, m, t):
        inv = 1 / ctx.mpf(float(t))
        out = [inv]
        for _ in range(1, m):
            out.append(out[-1] * inv)
        return out

    def apply_T(self, f):
        return lambda s: f(1.0 / np.asarray(s, dtype=float)) / np.asarray(s, dtype=float)

    def to_target(self, t):
        return 1.0 / np.asarray(t, dtype=float)

    def from_target(self, s):
        s = np.asarray(s, dtype=float)
        return 1.0 / s, 1.0 / (s * s)

    def apply_T_inverse(self, h):
        return lambda t: h(1.0 / np.asarray(t, dtype=float)) / np.asarray(t, dtype=float)

    def uniform_variances(self, k_max: int) -> np.ndarray:
        """Exact Var(g_k(X)), k = 1..k_max, when the mixing density is uniform on [a, b].

        E[g_k^2 | t] = C(2k, k) t^(-2k) and E[g_k | t] = t^(-k).
        """
        a, b = self.a, self.b

        def inv_moment(q):
            if q == 1:
                return math.log(b / a) / (b - a)
            return (a ** (1 - q) - b ** (1 - q)) / ((q - 1) * (b - a))

        return np.array(
            [math.comb(2 * k, k) * inv_moment(2 * k) - inv_moment(k) ** 2 for k in range(1, k_max + 1)]
        )

    def variance_condition(self):
        var = self.uniform_variances(30)
        c0 = max(1.0, 2.0 * float(var[0]))
        if self._eta is not None:
            return VarianceCondition("super_geometric", C0=c0, eta=float(self._eta))
        ks = np.arange(2, var.size + 1)
        needed = (np.log(var[1:]) - math.log(c0)) / (ks * np.log(ks))
        eta = max(float(np.max(needed)), 0.0) + self.eta_margin
        return VarianceCondition("super_geometric", C0=c0, eta=eta)


class GammaShape(MixtureFamily):
    """Gamma density with shape t and unit scale; g_k(x) = sum_l c~_{k,l} x**(l-1), phi_k(t) = t**(k-1)."""

    name = "gamma-shape"

    def kernel_density(self, t, x):
        self._check_t(t)
        return stats.gamma.pdf(np.asarray(x, dtype=float), t)

    def kernel_cdf(self, t, x):
        return special.gammainc(t, np.maximum(np.asarray(x, dtype=float), 0.0))

    def sample(self, t, rng):
        t = np.asarray(t, dtype=float)
        self._check_t(t)
        return rng.standard_gamma(t)

    def g(self, k, x):
        x = np.asarray(x, dtype=float)
        acc = np.zeros_like(x)
        for c in reversed(gamma_coeff_table(k).row(k)):
            acc = acc * x + c
        return acc

    def phi(self, k, t):
        self._check_t(t)
        return np.asarray(t, dtype=float) ** (k - 1)

    def phi_hp(self, ctx, m, t):
        return _poly_phi_hp(ctx, m, t)

    def variance_condition(self):
        return VarianceCondition("super_geometric", C0=_gamma_c0(self.b), eta=4.0)


class BetaScale(MixtureFamily):
    """Scale mixture of B(1, k): pi_t(x) = (k/t)(1 - x/t)**(k-1) on [0, t].

    g_p(x) = x**(p-1) / (k beta(p, k)) so that phi_p(t) = t**(p-1).  k = 1 is
    the uniform scale mixture.
    """

    name = "beta-scale"

    def __init__(self, a, b, k: int = 1):
        super().__init__(a, b)
        if int(k) != k or k < 1:
            raise ParameterOutOfRange(f"beta-scale needs integer k >= 1, got {k}")
        self.k = int(k)

    def __repr__(self):
        return f"BetaScale(a={self.a!r}, b={self.b!r}, k={self.k})"

    def describe(self):
        return {**super().describe(), "k": self.k}

    def kernel_support(self, t):
        return 0.0, float(t)

    def kernel_density(self, t, x):
        self._check_t(t)
        x = np.asarray(x, dtype=float)
        inside = (x >= 0) & (x <= t)
        z = np.clip(1.0 - x / t, 0.0, 1.0)
        return np.where(inside, self.k / t * z ** (self.k - 1), 0.0)

    def kernel_cdf(self, t, x):
        z = np.clip(np.asarray(x, dtype=float) / t, 0.0, 1.0)
        return 1.0 - (1.0 - z) ** self.k

    def inverse_cdf(self, t, u):
        return t * (1.0 - (1.0 - u) ** (1.0 / self.k))

    def sample(self, t, rng):
        t = np.asarray(t, dtype=float)
        self._check_t(t)
        return self.inverse_cdf(t, rng.random(t.shape))

    def scale_constant(self, p: int) -> float:
        """a_p = 1 / (k beta(p, k)) = C(p + k - 1, k)."""
        return float(math.comb(p + self.k - 1, self.k))

    def g(self, p, x):
        x = np.asarray(x, dtype=float)
        return self.scale_constant(p) * x ** (p - 1)

    def phi(self, k, t):
        self._check_t(t)
        return np.asarray(t, dtype=float) ** (k - 1)

    def phi_hp(self, ctx, m, t):
        return _poly_phi_hp(ctx, m, t)

    def variance_condition(self):
        return VarianceCondition("geometric", C0=1.0, B=max(1.0, self.b) * self.k)


# ---------------------------------------------------------------------------
# Generic compactly supported scale family


class UnitScaleDensity:
    """Density pi_1 supported in [0, support] for a generic scale family.

    ``kind`` is ``"uniform"``, ``"beta"`` (params p, q, rescaled to
    [0, support]) or ``"tabulated"`` (piecewise linear through ``x``,
    ``values``, renormalized).  Raw moments int x**j pi_1 are taken from
    ``moments`` when given, otherwise integrated numerically.
    """

    def __init__(self, kind: str, support: float = 1.0, params=(), x=None, values=None, moments=None):
        if support <= 0:
            raise ValueError("support bound must be positive")
        self.kind = kind
        self.support = float(support)
        self.params = tuple(float(p) for p in params)
        self._moments = None if moments is None else [float(v) for v in moments]
        if kind == "uniform":
            self._dist = stats.uniform(0.0, self.support)
        elif kind == "beta":
            if len(self.params) != 2 or min(self.params) <= 0:
                raise ValueError("beta unit density needs two positive params (p, q)")
            self._dist = stats.beta(self.params[0], self.params[1], scale=self.support)
        elif kind == "tabulated":
            xs = np.asarray(x, dtype=float)
            ys = np.asarray(values, dtype=float)
            if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
                raise ValueError("tabulated density needs matching 1-d x and values with >= 2 points")
            if np.any(np.diff(xs) <= 0) or xs[0] < 0 or xs[-1] > self.support:
                raise ValueError("tabulated x must be increasing inside [0, support]")
            if np.any(ys < 0):
                raise ValueError("tabulated density values must be nonnegative")
            mass = np.concatenate([[0.0], np.cumsum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs))])
            if mass[-1] <= 0:
                raise ValueError("tabulated density has zero mass")
            self._x, self._y, self._cum = xs, ys / mass[-1], mass / mass[-1]
            self._dist = None
        else:
            raise ValueError(f"unknown unit density kind {kind!r}")

    def describe(self) -> dict:
        d = {"density": self.kind, "support": self.support}
        if self.params:
            d["params"] = list(self.params)
        if self.kind == "tabulated":
            d["x"] = self._x.tolist()
            d["values"] = self._y.tolist()
        if self._moments is not None:
            d["moments"] = list(self._moments)
        return d

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self._dist is not None:
            return self._dist.pdf(x)
        return np.interp(x, self._x, self._y, left=0.0, right=0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self._dist is not None:
            return self._dist.cdf(x)
        idx = np.clip(np.searchsorted(self._x, x, side="right") - 1, 0, self._x.size - 2)
        x0, y0 = self._x[idx], self._y[idx]
        slope = (self._y[idx + 1] - y0) / (self._x[idx + 1] - x0)
        d = np.clip(x - x0, 0.0, self._x[idx + 1] - x0)
        val = self._cum[idx] + y0 * d + 0.5 * slope * d * d
        return np.where(x < self._x[0], 0.0, np.where(x >= self._x[-1], 1.0, val))

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if self._dist is not None:
            return self._dist.ppf(u)
        idx = np.clip(np.searchsorted(self._cum, u, side="right") - 1, 0, self._x.size - 2)
        x0, y0 = self._x[idx], self._y[idx]
        slope = (self._y[idx + 1] - y0) / (self._x[idx + 1] - x0)
        r = u - self._cum[idx]
        # solve y0 d + slope d^2 / 2 = r on the cell, in a cancellation-free form
        disc = np.sqrt(np.maximum(y0 * y0 + 2.0 * slope * r, 0.0))
        denom = y0 + disc
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(denom > 0, 2.0 * r / denom, 0.0)
        return np.clip(x0 + d, self._x[0], self._x[-1])

    def moment(self, j: int) -> float:
        """int x**j pi_1(x) dx."""
        if self._moments is not None and j < len(self._moments):
            return self._moments[j]
        if self.kind == "tabulated":
            # piecewise-linear density times x**j: Gauss with ceil((j+2)/2) nodes per cell is exact
            nodes, weights = np.polynomial.legendre.leggauss(j // 2 + 2)
            x0, x1 = self._x[:-1, None], self._x[1:, None]
            xs = 0.5 * (x1 - x0) * nodes + 0.5 * (x1 + x0)
            ws = 0.5 * (x1 - x0) * weights
            return float(np.sum(ws * xs**j * self.pdf(xs)))
        val, _ = quad(lambda x: x**j * float(self.pdf(x)), 0.0, self.support, limit=200, epsabs=0, epsrel=1e-13)
        return float(val)


def load_unit_density(path) -> UnitScaleDensity:
    """Read a unit density descriptor from a JSON file.

    Keys: ``density`` (uniform | beta | tabulated), ``support``, and optionally
    ``params``, ``x``, ``values``, ``moments``.  Unknown keys are rejected.
    """
    with open(path) as fh:
        doc = json.load(fh)
    return unit_density_from_dict(doc)


def unit_density_from_dict(doc: dict) -> UnitScaleDensity:
    allowed = {"density", "support", "params", "x", "values", "moments"}
    unknown = set(doc) - allowed
    if unknown:
        raise ValueError(f"unknown keys in unit density descriptor: {sorted(unknown)}")
    if "density" not in doc:
        raise ValueError("unit density descriptor needs a 'density' key")
    return UnitScaleDensity(
        doc["density"],
        support=doc.get("support", 1.0),
        params=doc.get("params", ()),
        x=doc.get("x"),
        values=doc.get("values"),
        moments=doc.get("moments"),
    )


class GenericScale(MixtureFamily):
    """Scale family pi_t(x) = pi_1(x/t)/t with compactly supported pi_1.

    g_k(x) = x**(k-1) / M_{k-1} with M_j = int x**j pi_1, so phi_k(t) = t**(k-1).
    """

    name = "generic-scale"

    def __init__(self, a, b, unit: UnitScaleDensity):
        super().__init__(a, b)
        self.unit = unit

    def describe(self):
        return {**super().describe(), "unit": self.unit.describe()}

    def kernel_support(self, t):
        return 0.0, float(t) * self.unit.support

    def kernel_density(self, t, x):
        self._check_t(t)
        return self.unit.pdf(np.asarray(x, dtype=float) / t) / t

    def kernel_cdf(self, t, x):
        return self.unit.cdf(np.asarray(x, dtype=float) / t)

    def inverse_cdf(self, t, u):
        return t * self.unit.ppf(u)

    def sample(self, t, rng):
        t = np.asarray(t, dtype=float)
        self._check_t(t)
        return self.inverse_cdf(t, rng.random(t.shape))

    def g(self, k, x):
        return np.asarray(x, dtype=float) ** (k - 1) / self.unit.moment(k - 1)

    def phi(self, k, t):
        self._check_t(t)
        return np.asarray(t, dtype=float) ** (k - 1)

    def phi_hp(self, ctx, m, t):
        return _poly_phi_hp(ctx, m, t)

    def variance_condition(self):
        # Var(g_k) <= b^(2k-2) M_{2k-2} / M_{k-1}^2 <= (b B2 / B1)^(2k-2), B1 = M_1 (Jensen)
        ratio = self.b * self.unit.support / self.unit.moment(1)
        return VarianceCondition("geometric", C0=1.0, B=max(1.0, ratio))


FAMILY_NAMES = ("exp-indicator", "exp-moment", "gamma-shape", "beta-scale", "generic-scale")


def make_family(name: str, a: float, b: float, k: int | None = None, unit: UnitScaleDensity | None = None,
                eta: float | None = None) -> MixtureFamily:
    """Build a family from its command-line name."""
    if name == "exp-indicator":
        return ExponentialIndicator(a, b)
    if name == "exp-moment":
        return ExponentialMoment(a, b, eta=eta)
    if name == "gamma-shape":
        return GammaShape(a, b)
    if name == "beta-scale":
        if k is None:
            raise ValueError("beta-scale requires k")
        return BetaScale(a, b, k)
    if name == "generic-scale":
        if unit is None:
            raise ValueError("generic-scale requires a unit density descriptor")
        return GenericScale(a, b, unit)
    raise ValueError(f"unknown family {name!r}; expected one of {', '.join(FAMILY_NAMES)}")


# ---------------------------------------------------------------------------
# Function-style entry points


def kernel_density(family: MixtureFamily, t: float, x):
    if np.any(np.asarray(x) < 0):
        raise ParameterOutOfRange("x must be >= 0")
    return family.kernel_density(t, x)


def sample_kernel(family: MixtureFamily, t: float, rng: np.random.Generator) -> float:
    return float(family.sample(np.array([t]), rng)[0])


def g(family: MixtureFamily, k: int, x):
    if k < 1:
        raise ValueError("k must be >= 1")
    return family.g(k, x)


def phi(family: MixtureFamily, k: int, t):
    if k < 1:
        raise ValueError("k must be >= 1")
    return family.phi(k, t)


def apply_T(family: MixtureFamily, f: Callable) -> Callable:
    return family.apply_T(f)


def apply_T_inverse(family: MixtureFamily, h: Callable) -> Callable:
    return family.apply_T_inverse(h)


def variance_condition_params(family: MixtureFamily) -> VarianceCondition:
    return family.variance_condition()
