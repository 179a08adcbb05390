"""Synthetic mixture samples and replicated estimation experiments.

Every random draw flows from ``master_seed``: replication r at sample size n
uses ``default_rng(deterministic_hash(master_seed, n, r))``, so a report
depends only on its configuration, never on scheduling or thread count.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._io import open_text
from .densities import MixingDensity
from .errors import EnvelopeViolation, ExperimentError
from .estimator import (
    EXACT_EXTRA_NODES,
    SelectionRule,
    estimate_coefficients,
    project_exact,
    psi_values,
    select_m,
)
from .families import MixtureFamily
from .legendre import DEFAULT_PRECISION, LegendreBasis, build_basis, hp_context

__all__ = [
    "deterministic_hash",
    "sample_mixture",
    "ExperimentConfig",
    "ExperimentReport",
    "run_experiment",
    "variance_condition_audit",
    "rate_table",
    "SIGMA_TAG",
]

MASK64 = (1 << 64) - 1
SIGMA_TAG = 0x5349474D41  # "SIGMA": seeds the covariance sample
AUDIT_TAG = 0x4155444954  # "AUDIT"
DECOMPOSITION_Z = 4.0


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def deterministic_hash(*values: int) -> int:
    """64-bit hash of a tuple of integers: a splitmix64 chain.

    h_0 = splitmix64(0), h_{i+1} = splitmix64(h_i xor (v_i mod 2**64)).
    Plain integer arithmetic, so the result is the same on every platform.
    """
    h = _splitmix64(0)
    for v in values:
        h = _splitmix64(h ^ (int(v) & MASK64))
    return h


def _draw_latent(f: MixingDensity, n: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = f.interval.as_tuple()
    out = np.empty(n)
    filled = 0
    accept_rate = 1.0 / (f.sup_bound * (hi - lo))
    while filled < n:
        need = n - filled
        batch = int(min(max(need / accept_rate * 1.1 + 16, 64), 4_000_000))
        t = lo + (hi - lo) * rng.random(batch)
        u = rng.random(batch) * f.sup_bound
        ft = f(t)
        if np.any(ft > f.sup_bound):
            raise EnvelopeViolation(
                f"{f.label}: f(t)={ft.max():.6g} exceeds sup_bound {f.sup_bound:.6g}"
            )
        kept = t[u < ft][:need]
        out[filled:filled + kept.size] = kept
        filled += kept.size
    return out


def sample_mixture(family: MixtureFamily, f_true: MixingDensity, n: int, rng: np.random.Generator,
                   return_latent: bool = False):
    """n draws from pi_f: t_i ~ f by rejection against U[a, b], then X_i ~ pi_{t_i}.

    With ``return_latent`` the pair (X, t) is returned.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if f_true.interval != family.theta_interval:
        raise ValueError(
            f"f_true lives on {f_true.interval.as_tuple()}, family on [{family.a}, {family.b}]"
        )
    if n == 0:
        x = np.empty(0)
        return (x, np.empty(0)) if return_latent else x
    t = _draw_latent(f_true, n, rng)
    x = family.sample(t, rng)
    return (x, t) if return_latent else x


@dataclass
class ExperimentConfig:
    """Replicated experiment: for each n in ``sample_sizes``, ``replications`` runs.

    Exactly one of ``m`` (fixed order) and ``selection`` (m_n rule) is used;
    ``m`` wins when both are given.  ``threads`` only changes scheduling.
    """

    family: MixtureFamily
    f_true: MixingDensity
    sample_sizes: tuple
    m: int | None = None
    selection: SelectionRule | None = None
    replications: int = 100
    master_seed: int = 0
    grid_points: int = 512
    n_mc: int = 100_000
    precision_digits: int = DEFAULT_PRECISION
    threads: int | None = None
    output_path: str | None = None

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sample_sizes)
        if not sizes:
            raise ValueError("sample_sizes must be nonempty")
        if any(n < 1 for n in sizes):
            raise ValueError("sample sizes must be positive")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("sample sizes must be strictly increasing")
        self.sample_sizes = sizes
        if self.replications < 2:
            raise ValueError("replications must be >= 2")
        if self.m is None and self.selection is None:
            raise ValueError("give a fixed m or a selection rule")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be >= 1")
        if self.grid_points < 2:
            raise ValueError("grid_points must be >= 2")
        if self.n_mc < 2:
            raise ValueError("n_mc must be >= 2")
        if not 0 <= int(self.master_seed) <= MASK64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        self.master_seed = int(self.master_seed)
        if self.threads is not None and self.threads < 1:
            raise ValueError("threads must be >= 1")

    def m_for(self, n: int) -> int:
        if self.m is not None:
            return self.m
        return select_m(self.selection, n, self.family)

    def echo(self) -> dict:
        """Resolved configuration (scheduling-only fields such as threads omitted)."""
        return {
            "family": self.family.describe(),
            "f_true": self.f_true.describe(),
            "sample_sizes": list(self.sample_sizes),
            "m": self.m,
            "selection": None if self.selection is None else str(self.selection),
            "replications": self.replications,
            "master_seed": self.master_seed,
            "grid_points": self.grid_points,
            "n_mc": self.n_mc,
            "precision_digits": self.precision_digits,
        }


def _fmean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def _fvar(values, mean: float) -> float:
    values = list(values)
    return math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1)


def _lag1_autocorr(values) -> float:
    v = np.asarray(values, dtype=float)
    d = v - _fmean(v)
    denom = math.fsum(d * d)
    if denom == 0.0:
        return 0.0
    return math.fsum(d[:-1] * d[1:]) / denom


def _trace_variance(basis: LegendreBasis, sigma: np.ndarray, m: int) -> float:
    """tr(Q Sigma Q^T) at the basis precision (Q has large entries of mixed sign)."""
    ctx = hp_context(basis.precision_digits)
    rows = basis.hp_coefficients(ctx)[:m]
    s = [[ctx.mpf(float(sigma[i, j])) for j in range(m)] for i in range(m)]
    total = ctx.zero
    for row in rows:
        k = len(row)
        for i in range(k):
            total += row[i] * ctx.fdot(s[i][:k], row)
    return float(total)


def _sigma_hat(config: ExperimentConfig, m: int) -> np.ndarray:
    rng = np.random.default_rng(deterministic_hash(config.master_seed, SIGMA_TAG, m))
    x = sample_mixture(config.family, config.f_true, config.n_mc, rng)
    return np.atleast_2d(np.cov(config.family.g_matrix(m, x), rowvar=False))


@dataclass
class _Cell:
    n: int
    m: int
    basis: LegendreBasis
    nodes: np.ndarray
    weights: np.ndarray
    nodes2: np.ndarray
    weights2: np.ndarray
    psi: np.ndarray
    psi2: np.ndarray
    f_nodes: np.ndarray
    f_nodes2: np.ndarray
    grid: np.ndarray
    psi_grid: np.ndarray
    f_grid: np.ndarray
    coeffs: np.ndarray
    bias_sq: float


def _ise(c_hat, psi, f_vals, w) -> float:
    d = c_hat @ psi - f_vals
    return math.fsum(w * d * d)


def _run_one(config: ExperimentConfig, cell: _Cell, r: int) -> dict:
    seed = deterministic_hash(config.master_seed, cell.n, r)
    rng = np.random.default_rng(seed)
    x = sample_mixture(config.family, config.f_true, cell.n, rng)
    est = estimate_coefficients(config.family, cell.basis, x, cell.m)
    c_hat = est.c_hat
    return {
        "n": cell.n,
        "replication": r,
        "seed": seed,
        "m": cell.m,
        "c_hat": c_hat,
        "ise": _ise(c_hat, cell.psi, cell.f_nodes, cell.weights),
        "ise_refined": _ise(c_hat, cell.psi2, cell.f_nodes2, cell.weights2),
        "ise_parseval": math.fsum((c_hat - cell.coeffs) ** 2) + cell.bias_sq,
        "ise_grid": float(np.trapezoid((c_hat @ cell.psi_grid - cell.f_grid) ** 2, cell.grid)),
    }


@dataclass
class ExperimentReport:
    """Per-replication results plus per-n aggregates and the config echo."""

    config_echo: dict
    replications: list
    aggregates: list
    sigma_seeds: dict = field(default_factory=dict)

    def aggregate(self, n: int) -> dict:
        for row in self.aggregates:
            if row["n"] == n:
                return row
        raise KeyError(n)

    def ise_values(self, n: int) -> np.ndarray:
        return np.array([row["ise"] for row in self.replications if row["n"] == n])

    def coefficient_matrix(self, n: int) -> np.ndarray:
        return np.array([row["c_hat"] for row in self.replications if row["n"] == n])

    def summary(self) -> dict:
        return {
            "config": self.config_echo,
            "sigma_seeds": {str(k): v for k, v in sorted(self.sigma_seeds.items())},
            "seeds": [[row["n"], row["replication"], row["seed"]] for row in self.replications],
            "aggregates": self.aggregates,
        }

    def write_csv(self, path) -> None:
        with open_text(path) as fh:
            fh.write(f"# config: {json.dumps(self.config_echo, sort_keys=True)}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["n", "replication", "seed", "m", "ISE"])
            for row in self.replications:
                writer.writerow([row["n"], row["replication"], row["seed"], row["m"], repr(row["ise"])])

    def write_summary(self, path) -> None:
        with open_text(path) as fh:
            json.dump(_jsonable(self.summary()), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write(self, prefix) -> tuple[str, str]:
        """Write ``<prefix>.csv`` (long format) and ``<prefix>.json`` (summary)."""
        prefix = os.fspath(prefix)
        csv_path, json_path = prefix + ".csv", prefix + ".json"
        self.write_csv(csv_path)
        self.write_summary(json_path)
        return csv_path, json_path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _prepare_cells(config: ExperimentConfig) -> list[_Cell]:
    fam, f = config.family, config.f_true
    orders = {n: config.m_for(n) for n in config.sample_sizes}
    basis = build_basis(fam.target_interval, max(orders.values()), config.precision_digits)
    grid = np.linspace(fam.a, fam.b, config.grid_points)
    cells, by_m = [], {}
    for n in config.sample_sizes:
        m = orders[n]
        if m not in by_m:
            proj = project_exact(fam, basis, f, m)
            x, w = fam.quadrature(m + EXACT_EXTRA_NODES, f.quadrature_breakpoints)
            x2, w2 = fam.quadrature(2 * (m + EXACT_EXTRA_NODES), f.quadrature_breakpoints)
            by_m[m] = dict(
                nodes=x, weights=w, nodes2=x2, weights2=w2,
                psi=psi_values(fam, basis, x, m), psi2=psi_values(fam, basis, x2, m),
                f_nodes=f(x), f_nodes2=f(x2), grid=grid,
                psi_grid=psi_values(fam, basis, grid, m), f_grid=f(grid),
                coeffs=np.asarray(proj.coeffs), bias_sq=proj.bias_sq,
            )
        cells.append(_Cell(n=n, m=m, basis=basis, **by_m[m]))
    return cells


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run all (n, replication) tasks and aggregate per n.

    Aggregates per n: MISE (mean ISE) and its standard error, exact squared
    bias, integrated variance both as the across-replication variance of
    c_hat (summed over k, the basis being orthonormal) and as
    tr(Q Sigma_hat Q^T) / n with Sigma_hat from an independent sample of
    size ``n_mc``, the decomposition gap MISE - (bias^2 + trace variance),
    per-coefficient mean / SE / exact value, and the lag-1 autocorrelation
    of the ISE sequence.  Sums are compensated so the result does not depend
    on the order in which tasks finish.
    """
    cells = _prepare_cells(config)
    tasks = [(cell, r) for cell in cells for r in range(config.replications)]

    def work(task):
        cell, r = task
        try:
            return _run_one(config, cell, r)
        except Exception as exc:  # annotate with the cell that failed
            raise ExperimentError(cell.n, r, exc) from exc

    workers = config.threads or os.cpu_count() or 1
    if workers == 1:
        results = [work(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, tasks))
    results.sort(key=lambda row: (row["n"], row["replication"]))

    seeds = [row["seed"] for row in results]
    if len(set(seeds)) != len(seeds):
        raise ExperimentError(-1, -1, RuntimeError("replication seeds collide"))

    sigmas, sigma_seeds = {}, {}
    for cell in cells:
        if cell.m not in sigmas:
            sigmas[cell.m] = _sigma_hat(config, cell.m)
            sigma_seeds[cell.m] = deterministic_hash(config.master_seed, SIGMA_TAG, cell.m)

    aggregates = []
    R = config.replications
    for cell in cells:
        rows = [row for row in results if row["n"] == cell.n]
        ise = [row["ise"] for row in rows]
        mise = _fmean(ise)
        se = math.sqrt(_fvar(ise, mise) / R)
        chat = np.array([row["c_hat"] for row in rows])
        c_mean = np.array([_fmean(chat[:, k]) for k in range(cell.m)])
        c_var = np.array([_fvar(chat[:, k], c_mean[k]) for k in range(cell.m)])
        var_emp = math.fsum(c_var)
        var_trace = _trace_variance(cell.basis, sigmas[cell.m], cell.m) / cell.n
        gap = mise - (cell.bias_sq + var_trace)
        c_se = np.sqrt(c_var / R)
        z = np.where(c_se > 0, (c_mean - cell.coeffs) / np.where(c_se > 0, c_se, 1.0), 0.0)
        ref = [row["ise_refined"] for row in rows]
        aggregates.append({
            "n": cell.n,
            "m": cell.m,
            "replications": R,
            "mise": mise,
            "mise_se": se,
            "mise_parseval": _fmean(row["ise_parseval"] for row in rows),
            "mise_grid": _fmean(row["ise_grid"] for row in rows),
            "mise_refined": _fmean(ref),
            "bias_sq": cell.bias_sq,
            "variance_empirical": var_emp,
            "variance_trace": var_trace,
            "decomposition_gap": gap,
            "decomposition_ok": bool(abs(gap) < DECOMPOSITION_Z * se),
            "coef_mean": c_mean,
            "coef_se": c_se,
            "coef_exact": cell.coeffs,
            "coef_z": z,
            "ise_lag1_autocorr": _lag1_autocorr(ise),
        })
    report = ExperimentReport(config.echo(), results, aggregates, sigma_seeds)
    if config.output_path:
        report.write(config.output_path)
    return report


def variance_condition_audit(family: MixtureFamily, f_true: MixingDensity, k_max: int,
                             n_mc: int = 100_000, seed: int = 0) -> list[dict]:
    """Monte Carlo Var(g_k(X)), k = 1..k_max, against the family's declared bound.

    The standard error of the sample variance uses the fourth central moment,
    SE = sqrt((mu_4 - s^4) / n).  A row is flagged when Var_hat - 4 SE still
    exceeds the bound.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    rng = np.random.default_rng(deterministic_hash(seed, AUDIT_TAG))
    x = sample_mixture(family, f_true, n_mc, rng)
    cond = family.variance_condition()
    rows = []
    for k in range(1, k_max + 1):
        gk = family.g(k, x)
        mean = math.fsum(gk) / gk.size
        d = gk - mean
        var = math.fsum(d * d) / (gk.size - 1)
        mu4 = math.fsum(d**4) / gk.size
        se = math.sqrt(max(mu4 - var * var, 0.0) / gk.size)
        log_bound = cond.log_bound(k)
        rows.append({
            "k": k,
            "variance": var,
            "variance_se": se,
            "bound": math.exp(log_bound) if log_bound < 700 else math.inf,
            "log_bound": log_bound,
            "violated": bool(var - 4 * se > 0 and math.log(var - 4 * se) > log_bound),
        })
    return rows


def rate_table(config: ExperimentConfig, alpha: float, C: float,
               report: ExperimentReport | None = None) -> list[dict]:
    """(n, m_n, MISE, SE, m_n^{-2 alpha}, C^2 m_n^{-2 alpha}) per sample size.

    Needs a selection rule and at least three sample sizes.  The envelope is
    reported next to the Monte Carlo MISE; nothing is fitted.
    """
    if config.selection is None or config.m is not None:
        raise ValueError("rate_table needs a selection rule (and no fixed m)")
    if len(config.sample_sizes) < 3:
        raise ValueError("rate_table needs at least 3 sample sizes")
    if not (alpha > 0 and C > 0):
        raise ValueError("alpha and C must be positive")
    report = report or run_experiment(config)
    rows = []
    for agg in report.aggregates:
        rate = agg["m"] ** (-2.0 * alpha)
        rows.append({
            "n": agg["n"],
            "m_n": agg["m"],
            "mise": agg["mise"],
            "mise_se": agg["mise_se"],
            "rate": rate,
            "envelope": C * C * rate,
        })
    return rows
