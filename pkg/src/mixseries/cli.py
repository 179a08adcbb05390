"""Command-line interface: ``mixseries <command> [flags]``.

Commands: basis, estimate, simulate, rates, audit, smoothness.  Flags may
also come from a JSON file given with ``--config``; flags on the command
line win.  Failures print one ``error: <Kind>: <message>`` line to stderr
and exit with 2 (usage) or 1 (runtime).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from ._io import open_text
from .densities import MixingDensity, beta_shaped, cosine_bump, uniform
from .errors import DataFormatError, UsageError
from .estimator import SelectionRule, estimate_coefficients, in_basis_density, select_m
from .families import FAMILY_NAMES, MixtureFamily, load_unit_density, make_family
from .legendre import DEFAULT_PRECISION, Interval, build_basis
from .simulation import (
    ExperimentConfig,
    deterministic_hash,
    rate_table,
    run_experiment,
    sample_mixture,
    variance_condition_audit,
)
from .smoothness import ModulusQuery, certify_class, default_t_grid, weighted_modulus

__all__ = ["RunConfig", "parse_config", "run", "main", "read_data", "build_f_true"]

COMMANDS = ("basis", "estimate", "simulate", "rates", "audit", "smoothness")
# fields that only say where output goes or how work is scheduled; left out of the echo
_NOT_ECHOED = ("out", "dump_data", "threads")


@dataclass
class RunConfig:
    command: str
    family: str | None = None
    a: float | None = None
    b: float | None = None
    k: int | None = None
    unit: str | None = None
    eta: float | None = None
    m: int | None = None
    rule: str | None = None
    n: list = field(default_factory=list)
    reps: int = 100
    seed: int = 0
    grid: int = 512
    precision: int = DEFAULT_PRECISION
    out: str | None = None
    threads: int | None = None
    postprocess: str = "raw"
    f_true: str | None = None
    input: str | None = None
    dump_data: str | None = None
    alpha: float | None = None
    C: float | None = None
    k_max: int = 8
    n_mc: int = 100_000

    def echo(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if k not in _NOT_ECHOED}


# ---------------------------------------------------------------------------
# parsing


def _int(text) -> int:
    if isinstance(text, bool):
        raise ValueError(f"not an integer: {text!r}")
    if isinstance(text, int):
        return text
    value = float(text) if isinstance(text, float) else None
    if value is None:
        try:
            return int(str(text).strip())
        except ValueError:
            value = float(str(text))
    if not value.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _float(text) -> float:
    if isinstance(text, bool):
        raise ValueError(f"not a number: {text!r}")
    value = float(text)
    if not np.isfinite(value):
        raise ValueError(f"not a finite number: {text!r}")
    return value


def _int_list(text) -> list:
    items = text if isinstance(text, list) else [s for s in str(text).split(",")]
    if not items or any(str(s).strip() == "" for s in items):
        raise ValueError(f"expected a comma-separated list of integers, got {text!r}")
    return [_int(s) for s in items]


def _str(text) -> str:
    if not isinstance(text, str):
        raise ValueError(f"expected a string, got {text!r}")
    return text


_CONVERTERS = {
    "family": _str, "a": _float, "b": _float, "k": _int, "unit": _str, "eta": _float,
    "m": _int, "rule": _str, "n": _int_list, "reps": _int, "seed": _int, "grid": _int,
    "precision": _int, "out": _str, "threads": _int, "postprocess": _str, "f_true": _str,
    "input": _str, "dump_data": _str, "alpha": _float, "C": _float, "k_max": _int, "n_mc": _int,
}


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    for key in _CONVERTERS:
        common.add_argument(_flag(key), dest=key, default=argparse.SUPPRESS, metavar=key.upper())
    common.add_argument("--config", dest="config", default=None, metavar="JSON")
    parser = _Parser(prog="mixseries", description="Projection estimator for mixing densities.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "basis": "write the normalized Legendre coefficients Q",
        "estimate": "estimate the mixing density from a data file",
        "simulate": "run a replicated Monte Carlo experiment",
        "rates": "MISE against the m_n^{-2 alpha} envelope",
        "audit": "Monte Carlo check of the variance condition",
        "smoothness": "weighted modulus of smoothness and class check",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _convert(key: str, value, source: str):
    try:
        return _CONVERTERS[key](value)
    except (TypeError, ValueError) as exc:
        where = _flag(key) if source == "flag" else f"--config key '{key}'"
        raise UsageError(f"{where}: {exc}") from None


def _load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"--config: cannot read {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("--config: top level must be a JSON object")
    out = {}
    for raw_key, value in data.items():
        key = str(raw_key).replace("-", "_")
        if key not in _CONVERTERS:
            raise UsageError(f"--config: unknown key '{raw_key}'")
        out[key] = _convert(key, value, "file")
    return out


def parse_config(argv: list[str]) -> RunConfig:
    """Merge defaults, the ``--config`` file and command-line flags (flags win)."""
    ns = vars(_build_parser().parse_args(argv))
    command = ns.pop("command")
    file_path = ns.pop("config", None)
    values = _load_config_file(file_path) if file_path else {}
    for key, value in ns.items():
        values[key] = _convert(key, value, "flag")
    cfg = RunConfig(command=command, **values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    def need(key, why):
        if getattr(cfg, key) in (None, []):
            raise UsageError(f"{_flag(key)} is required {why}")

    if cfg.family is not None and cfg.family not in FAMILY_NAMES:
        raise UsageError(f"--family: unknown family '{cfg.family}' (choose from {', '.join(FAMILY_NAMES)})")
    if cfg.family == "beta-scale":
        need("k", "for --family beta-scale")
        if cfg.k < 1:
            raise UsageError("--k must be >= 1")
    if cfg.family == "generic-scale":
        need("unit", "for --family generic-scale")
    if cfg.postprocess not in ("raw", "clip"):
        raise UsageError("--postprocess must be raw or clip")
    if cfg.precision < 15:
        raise UsageError("--precision must be >= 15")
    if cfg.grid < 2:
        raise UsageError("--grid must be >= 2")
    if cfg.threads is not None and cfg.threads < 1:
        raise UsageError("--threads must be >= 1")
    if not 0 <= cfg.seed < 2**64:
        raise UsageError("--seed must be a 64-bit unsigned integer")
    if cfg.m is not None and cfg.m < 1:
        raise UsageError("--m must be >= 1")
    if cfg.rule is not None:
        try:
            SelectionRule.parse(cfg.rule)
        except ValueError as exc:
            raise UsageError(f"--rule: {exc}") from None
    if cfg.command != "basis" or cfg.family is None:
        if cfg.a is not None and cfg.b is not None and not cfg.a < cfg.b:
            raise UsageError("--a must be smaller than --b")

    cmd = cfg.command
    if cmd == "basis":
        need("m", "for basis")
        if cfg.family is None:
            need("a", "for basis without --family")
            need("b", "for basis without --family")
            if not cfg.a < cfg.b:
                raise UsageError("--a must be smaller than --b")
    if cmd in ("estimate", "simulate", "rates", "audit"):
        need("family", f"for {cmd}")
    if cmd in ("estimate", "simulate", "rates", "audit", "smoothness"):
        need("a", f"for {cmd}")
        need("b", f"for {cmd}")
    if cmd == "estimate":
        need("input", "for estimate")
    if cmd in ("simulate", "rates"):
        need("f_true", f"for {cmd}")
        need("n", f"for {cmd}")
        if any(v < 1 for v in cfg.n):
            raise UsageError("--n values must be positive")
        if any(y <= x for x, y in zip(cfg.n, cfg.n[1:])):
            raise UsageError("--n must be strictly increasing")
        if cfg.reps < 2:
            raise UsageError("--reps must be >= 2")
        if cfg.n_mc < 2:
            raise UsageError("--n-mc must be >= 2")
    if cmd == "rates":
        if cfg.m is not None:
            raise UsageError("--m cannot be used with rates; give --rule")
        if len(cfg.n) < 3:
            raise UsageError("--n needs at least 3 sample sizes for rates")
        need("alpha", "for rates")
        need("C", "for rates")
    if cmd == "audit":
        if cfg.k_max < 1:
            raise UsageError("--k-max must be >= 1")
        if cfg.n_mc < 2:
            raise UsageError("--n-mc must be >= 2")
    if cmd == "smoothness":
        need("f_true", "for smoothness")
        need("alpha", "for smoothness")
        need("C", "for smoothness")
    for key in ("alpha", "C"):
        value = getattr(cfg, key)
        if value is not None and not value > 0:
            raise UsageError(f"{_flag(key)} must be positive")


# ---------------------------------------------------------------------------
# building blocks


def _family(cfg: RunConfig) -> MixtureFamily:
    unit = load_unit_density(cfg.unit) if cfg.family == "generic-scale" else None
    return make_family(cfg.family, cfg.a, cfg.b, k=cfg.k, unit=unit, eta=cfg.eta)


def _numbers(text: str, flag: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",")]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated numbers, got {text!r}") from None


def build_f_true(text: str, interval: Interval, family: MixtureFamily | None = None,
                 precision_digits: int = DEFAULT_PRECISION) -> MixingDensity:
    """``uniform`` | ``cosine-bump`` | ``beta-shaped:p,q`` | ``in-basis:c1,...,cm``."""
    name, _, args = text.partition(":")
    if name == "uniform" and not args:
        return uniform(interval)
    if name == "cosine-bump" and not args:
        return cosine_bump(interval)
    if name == "beta-shaped":
        vals = _numbers(args, "--f-true")
        if len(vals) != 2:
            raise UsageError("--f-true: beta-shaped needs two parameters, e.g. beta-shaped:2,3")
        return beta_shaped(interval, *vals)
    if name == "in-basis":
        if family is None:
            raise UsageError("--f-true: in-basis needs --family")
        return in_basis_density(family, _numbers(args, "--f-true"), precision_digits=precision_digits)
    raise UsageError(f"--f-true: unknown density '{text}'")


def read_data(path) -> np.ndarray:
    """One decimal number per line; lines starting with '#' are comments."""
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if text.startswith("#"):
                continue
            try:
                value = float(text)
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: not a number: {line.rstrip()!r}") from None
            if not np.isfinite(value):
                raise DataFormatError(f"{path}:{lineno}: not a finite number: {text!r}")
            values.append(value)
    if not values:
        raise DataFormatError(f"{path}: no observations")
    return np.array(values)


def _write_data(path, x: np.ndarray, comments: list[str]) -> None:
    with open_text(path) as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        for v in x:
            fh.write(f"{float(v)!r}\n")


def _comments(cfg: RunConfig, extra: dict | None = None) -> list[str]:
    echo = cfg.echo()
    if extra:
        echo.update(extra)
    return [f"mixseries {cfg.command}", "config: " + json.dumps(echo, sort_keys=True)]


def _rule(cfg: RunConfig, family: MixtureFamily) -> SelectionRule:
    return SelectionRule.parse(cfg.rule) if cfg.rule else SelectionRule.default(family)


def _write_rows(path, header: list[str], rows, comments: list[str]) -> None:
    with open_text(path) as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(row[h]) for h in header) + "\n")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# commands


def _cmd_basis(cfg: RunConfig, stdout) -> None:
    if cfg.family is not None:
        interval = _family(cfg).target_interval
    else:
        interval = Interval(cfg.a, cfg.b)
    basis = build_basis(interval, cfg.m, cfg.precision)
    extra = {"interval": list(interval.as_tuple())}
    basis.to_csv(cfg.out or stdout, _comments(cfg, extra))


def _cmd_estimate(cfg: RunConfig, stdout) -> None:
    family = _family(cfg)
    x = read_data(cfg.input)
    if cfg.m is not None:
        m, rule = cfg.m, None
    else:
        rule = _rule(cfg, family)
        m = select_m(rule, x.size, family)
    basis = build_basis(family.target_interval, m, cfg.precision)
    est = estimate_coefficients(family, basis, x, m, provenance={"input": cfg.input})
    extra = {"m_resolved": m, "rule_resolved": None if rule is None else str(rule), "n_obs": int(x.size)}
    comments = _comments(cfg, extra) + ["c_hat: " + json.dumps([float(c) for c in est.c_hat])]
    est.export_csv(cfg.out or stdout, cfg.grid, comments, mode=cfg.postprocess)


def _experiment(cfg: RunConfig, fixed_m: bool = True) -> ExperimentConfig:
    family = _family(cfg)
    f_true = build_f_true(cfg.f_true, family.theta_interval, family, cfg.precision)
    m = cfg.m if fixed_m else None
    selection = None if m is not None else _rule(cfg, family)
    return ExperimentConfig(
        family, f_true, tuple(cfg.n), m=m, selection=selection, replications=cfg.reps,
        master_seed=cfg.seed, grid_points=cfg.grid, n_mc=cfg.n_mc,
        precision_digits=cfg.precision, threads=cfg.threads,
    )


def _dump_paths(base: str, sizes) -> dict:
    if len(sizes) == 1:
        return {sizes[0]: base}
    root, ext = os.path.splitext(base)
    return {n: f"{root}.n{n}{ext}" for n in sizes}


def _cmd_simulate(cfg: RunConfig, stdout) -> None:
    exp = _experiment(cfg)
    report = run_experiment(exp)
    report.config_echo = {**report.config_echo, "cli": cfg.echo()}
    prefix = cfg.out or "simulation"
    csv_path, json_path = report.write(prefix)
    if cfg.dump_data:
        for n, path in _dump_paths(cfg.dump_data, exp.sample_sizes).items():
            seed = deterministic_hash(exp.master_seed, n, 0)
            x = sample_mixture(exp.family, exp.f_true, n, np.random.default_rng(seed))
            _write_data(path, x, _comments(cfg, {"n": n, "replication": 0, "replication_seed": seed}))
    header = ["n", "m", "mise", "mise_se", "bias_sq", "variance_trace", "variance_empirical", "decomposition_ok"]
    _write_rows(stdout, header, report.aggregates, [])
    stdout.write(f"# wrote {csv_path} and {json_path}\n")


def _cmd_rates(cfg: RunConfig, stdout) -> None:
    exp = _experiment(cfg, fixed_m=False)
    rows = rate_table(exp, cfg.alpha, cfg.C)
    extra = {"rule_resolved": str(exp.selection)}
    _write_rows(cfg.out or stdout, ["n", "m_n", "mise", "mise_se", "rate", "envelope"], rows, _comments(cfg, extra))


def _cmd_audit(cfg: RunConfig, stdout) -> None:
    family = _family(cfg)
    f_true = build_f_true(cfg.f_true or "uniform", family.theta_interval, family, cfg.precision)
    rows = variance_condition_audit(family, f_true, cfg.k_max, cfg.n_mc, cfg.seed)
    extra = {"variance_condition": family.variance_condition().as_dict()}
    header = ["k", "variance", "variance_se", "bound", "log_bound", "violated"]
    _write_rows(cfg.out or stdout, header, rows, _comments(cfg, extra))


def _cmd_smoothness(cfg: RunConfig, stdout) -> None:
    interval = Interval(cfg.a, cfg.b)
    family = _family(cfg) if cfg.family else None
    f = build_f_true(cfg.f_true, interval, family, cfg.precision)
    cert = certify_class(f, cfg.alpha, cfg.C)
    curve = cert.curve or weighted_modulus(ModulusQuery(f, cert.r, tuple(default_t_grid())))
    witness = cert.witness if cert.witness is not None else "none"
    extra = {"r": cert.r, "verdict": cert.verdict, "witness": witness, "margin": cert.margin}
    curve.to_csv(cfg.out or stdout, cfg.alpha, cfg.C, _comments(cfg, extra))
    if cfg.out:
        stdout.write(f"verdict={cert.verdict} witness={witness} margin={cert.margin!r} r={cert.r}\n")


_DISPATCH = {
    "basis": _cmd_basis,
    "estimate": _cmd_estimate,
    "simulate": _cmd_simulate,
    "rates": _cmd_rates,
    "audit": _cmd_audit,
    "smoothness": _cmd_smoothness,
}


def _error_line(exc: BaseException) -> str:
    return f"error: {type(exc).__name__}: {exc}".replace("\n", " ")


def run(cfg: RunConfig, stdout=None, stderr=None) -> int:
    """Execute a parsed config.  Returns 0 on success, 2 on usage errors, 1 otherwise."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        _DISPATCH[cfg.command](cfg, stdout)
    except UsageError as exc:
        stderr.write(_error_line(exc) + "\n")
        return 2
    except Exception as exc:  # report, never traceback on user input
        stderr.write(_error_line(exc) + "\n")
        return 1
    return 0


def main(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    stderr = stderr or sys.stderr
    try:
        cfg = parse_config(list(sys.argv[1:] if argv is None else argv))
    except UsageError as exc:
        stderr.write(_error_line(exc) + "\n")
        return 2
    return run(cfg, stdout, stderr)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
