"""Command-line front end: ``nlpdhgm run | sweep | check``.

Configuration comes from an optional flat ``key = value`` file (one key per
line, ``#`` comments, keys are :class:`ExperimentConfig` field names) and
from ``--field value`` flags, which take precedence.  ``--full-scale``
switches to ``mesh_n=1000, n_max=10000`` below any explicit setting.

Outputs
-------
CSV, one row per iteration::

    iter,tau,sigma,omega,err_x_sq,err_u_sq,metric_err_sq,bound

with floats printed as ``%.17g`` and LF line endings.

Summary JSON (``schema`` = ``nlpdhgm.summary/1``)::

    schema, version, seed, duration_s, config, csv_path, L_tilde, rule,
    diverged, diagnostic, n_records,
    final:   {iter, err_x_sq, err_u_sq, metric_err_sq}
    fits:    {power: {slope, window} | null,
              linear: {ratio, slope, window} | null,
              theoretical_ratio: float | null,
              dominance: {passed, worst_local_ratio, constant, window} | null}
    bounds:  {passed, violated, checks: {name: {value, bound, passed, margin}}, r_max}
    assertions: {name: bool}

Exit status is 0 only when the run finished without divergence and every
requested assertion held.  Failures print ``error: <category>: <message>``
on stderr; categories are ``config``, ``io``, ``diverged``, ``assertion``.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from . import __version__
from .experiments import (
    ConfigError,
    ExperimentConfig,
    ExperimentResult,
    fit_linear_rate,
    fit_power_rate,
    linear_rate_dominance,
    run_experiment,
)
from .solver import IterationRecord, LinearRate

__all__ = [
    "RunManifest",
    "parse_config",
    "parse_config_text",
    "emit_csv",
    "format_csv",
    "build_summary",
    "emit_summary",
    "main",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_IO",
    "EXIT_DIVERGED",
    "EXIT_ASSERTION",
]

SUMMARY_SCHEMA = "nlpdhgm.summary/1"
CSV_HEADER = "iter,tau,sigma,omega,err_x_sq,err_u_sq,metric_err_sq,bound"
FULL_SCALE = {"mesh_n": 1000, "n_max": 10_000}

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGED = 4
EXIT_ASSERTION = 5

_CATEGORY = {EXIT_CONFIG: "config", EXIT_IO: "io", EXIT_DIVERGED: "diverged",
             EXIT_ASSERTION: "assertion"}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class RunManifest:
    config: ExperimentConfig
    csv_path: str
    summary_path: str
    version: str
    duration_s: float

    def __post_init__(self):
        if os.path.abspath(self.csv_path) == os.path.abspath(self.summary_path):
            raise ValueError("CSV and summary paths must differ")
        if not self.version:
            raise ValueError("version string must be non-empty")


# -- configuration -------------------------------------------------------------


def _field_kinds() -> dict[str, tuple[type, bool]]:
    # annotations are strings ("float | None"); map them to a converter and optionality
    kinds = {}
    for f in fields(ExperimentConfig):
        parts = [p.strip() for p in str(f.type).split("|")]
        base = {"int": int, "float": float, "str": str}[parts[0]]
        kinds[f.name] = (base, "None" in parts)
    return kinds


def _convert(name: str, raw: str):
    kinds = _field_kinds()
    if name not in kinds:
        raise ConfigError(f"{name}: unknown key")
    base, optional = kinds[name]
    text = raw.strip().strip('"').strip("'")
    if optional and text.lower() in ("", "none", "null"):
        return None
    try:
        if base is int:
            value = float(text)
            if not value.is_integer():
                raise ValueError
            return int(value)
        if base is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: expected {base.__name__}, got {raw.strip()!r}") from None
    return text


def parse_config_text(text: str) -> dict:
    """Parse a flat ``key = value`` document into converted field values."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                       delimiters=("=", ":"))
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"config: cannot parse ({exc.__class__.__name__})") from None
    if parser.sections() != ["config"]:
        raise ConfigError("config: sections are not supported, use flat keys")
    return {key: _convert(key, value) for key, value in parser["config"].items()}


def parse_config(text: str = "", overrides: dict | None = None,
                 full_scale: bool = False) -> ExperimentConfig:
    """Build a validated config from file text and flag overrides.

    Precedence, lowest first: field defaults, ``full_scale`` sizes, file
    values, flag overrides.  Flag values may be strings (converted like
    file values) or already typed.
    """
    values = dict(FULL_SCALE) if full_scale else {}
    values.update(parse_config_text(text) if text.strip() else {})
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        values[key] = _convert(key, value) if isinstance(value, str) else value
    unknown = set(values) - set(_field_kinds())
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown key")
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"config: {exc}") from None


# -- outputs -------------------------------------------------------------------


def _fmt(value) -> str:
    return "%.17g" % value


def format_csv(records: list[IterationRecord]) -> str:
    if not records:
        raise ValueError("no records to emit")
    lines = [CSV_HEADER]
    for r in records:
        lines.append(",".join([str(int(r.iter)), _fmt(r.tau), _fmt(r.sigma), _fmt(r.omega),
                               _fmt(r.err_x_sq), _fmt(r.err_u_sq), _fmt(r.metric_err_sq),
                               _fmt(r.theoretical_bound)]))
    return "\n".join(lines) + "\n"


def emit_csv(records: list[IterationRecord], path: str) -> None:
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write(format_csv(records))


def _json_float(value):
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else str(value)


def _tail_window(n_last: int):
    lo = max(1, n_last // 4)
    return (lo, n_last) if n_last - lo + 1 >= 10 else None


def _fits(result: ExperimentResult) -> dict:
    out = {"power": None, "linear": None, "theoretical_ratio": None, "dominance": None}
    if result.reference is None:
        return out
    n_last = result.records[-1].iter
    if isinstance(result.rule, LinearRate):
        errors = result.column("err_u_sq")
        out["theoretical_ratio"] = result.rule.ratio
        try:
            dom = linear_rate_dominance(errors, result.rule.ratio)
        except (ValueError, IndexError):
            return out
        out["dominance"] = {"passed": dom.passed, "worst_local_ratio": dom.worst_local_ratio,
                            "constant": dom.constant, "window": list(dom.window)}
        fit = fit_linear_rate(errors, dom.window)
        out["linear"] = {"ratio": fit.ratio, "slope": fit.slope, "window": list(fit.window)}
    else:
        window = _tail_window(n_last)
        errors = result.column("err_x_sq")
        if window is not None and np.all(errors[window[0]:window[1] + 1] > 0):
            fit = fit_power_rate(errors, window)
            out["power"] = {"slope": fit.slope, "window": list(fit.window)}
    return out


def build_summary(result: ExperimentResult, *, csv_path: str, duration_s: float,
                  assertions: dict | None = None) -> dict:
    last = result.records[-1]
    fits = _fits(result)
    for group in ("power", "linear", "dominance"):
        if fits[group] is not None:
            fits[group] = {k: (_json_float(v) if isinstance(v, float) else v)
                           for k, v in fits[group].items()}
    bounds = result.bound_report.as_dict()
    bounds["r_max"] = _json_float(bounds["r_max"])
    for check in bounds["checks"].values():
        for key in ("value", "bound", "margin"):
            check[key] = _json_float(check[key])
    return {
        "schema": SUMMARY_SCHEMA,
        "version": __version__,
        "seed": result.config.seed,
        "duration_s": duration_s,
        "config": {k: _json_float(v) if isinstance(v, float) else v
                   for k, v in result.config.as_dict().items()},
        "csv_path": csv_path,
        "L_tilde": result.L_tilde,
        "rule": {"name": result.rule.name,
                 **{f.name: getattr(result.rule, f.name) for f in fields(result.rule)}},
        "diverged": result.diverged,
        "diagnostic": result.diagnostic,
        "n_records": len(result.records),
        "final": {"iter": last.iter, "err_x_sq": _json_float(last.err_x_sq),
                  "err_u_sq": _json_float(last.err_u_sq),
                  "metric_err_sq": _json_float(last.metric_err_sq)},
        "fits": {**fits, "theoretical_ratio": _json_float(fits["theoretical_ratio"])},
        "bounds": bounds,
        "assertions": dict(assertions or {}),
    }


def emit_summary(summary: dict, path: str) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- commands ------------------------------------------------------------------


def _default_stem(cfg: ExperimentConfig) -> str:
    stem = f"{cfg.experiment}_{cfg.rule}"
    if cfg.moreau_gamma > 0:
        stem += f"_gamma{cfg.moreau_gamma:g}"
    return stem


def _evaluate_assertions(args, result: ExperimentResult, summary: dict) -> dict:
    checks = {}
    if getattr(args, "assert_bounds", False):
        checks["bounds"] = bool(result.bound_report.passed)
    if getattr(args, "assert_slope_max", None) is not None:
        power = summary["fits"]["power"]
        checks["slope"] = bool(power is not None and power["slope"] <= args.assert_slope_max)
    if getattr(args, "assert_dominance", False):
        dom = summary["fits"]["dominance"]
        checks["dominance"] = bool(dom is not None and dom["passed"])
    return checks


def execute_run(cfg: ExperimentConfig, csv_path: str, summary_path: str, args=None) -> dict:
    """Run one experiment and write its CSV and summary; returns the summary."""
    start = time.perf_counter()
    result = run_experiment(cfg)
    duration = time.perf_counter() - start
    manifest = RunManifest(cfg, csv_path, summary_path, __version__, duration)
    summary = build_summary(result, csv_path=manifest.csv_path, duration_s=manifest.duration_s)
    summary["assertions"] = _evaluate_assertions(args, result, summary) if args else {}
    try:
        for path in (csv_path, summary_path):
            parent = os.path.dirname(os.path.abspath(path))
            os.makedirs(parent, exist_ok=True)
        emit_csv(result.records, csv_path)
        emit_summary(summary, summary_path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"{exc.filename}: {exc.strerror}") from None
    return summary


def _status(summary: dict) -> tuple[int, str]:
    if summary["diverged"]:
        return EXIT_DIVERGED, summary["diagnostic"] or "run diverged"
    failed = [name for name, ok in summary["assertions"].items() if not ok]
    if failed:
        return EXIT_ASSERTION, "failed: " + ", ".join(failed)
    return EXIT_OK, ""


def _config_from_args(args) -> ExperimentConfig:
    text = ""
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise CliError(EXIT_IO, f"{args.config}: {exc.strerror}") from None
    overrides = {f.name: getattr(args, f.name) for f in fields(ExperimentConfig)}
    return parse_config(text, overrides, full_scale=args.full_scale)


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    stem = os.path.join(args.out_dir, _default_stem(cfg))
    csv_path = args.csv or stem + ".csv"
    summary_path = args.summary or stem + ".json"
    if os.path.abspath(csv_path) == os.path.abspath(summary_path):
        raise CliError(EXIT_CONFIG, "csv and summary paths must differ")
    summary = execute_run(cfg, csv_path, summary_path, args)
    code, message = _status(summary)
    print(json.dumps({"csv": csv_path, "summary": summary_path, "final": summary["final"],
                      "fits": summary["fits"], "bounds_passed": summary["bounds"]["passed"]},
                     sort_keys=True))
    if code:
        raise CliError(code, message)
    return EXIT_OK


def _sweep_job(job):
    cfg, csv_path, summary_path = job
    return execute_run(cfg, csv_path, summary_path)


def cmd_sweep(args) -> int:
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise CliError(EXIT_CONFIG, f"values: expected comma-separated numbers, got {args.values!r}")
    if not values:
        raise CliError(EXIT_CONFIG, "values: empty list")
    fixed_gammaF = args.gammaFstar_tilde is not None
    # validate the base config at the first sweep value
    setattr(args, args.param, repr(values[0]))
    base = _config_from_args(args)
    jobs = []
    for value in values:
        changes = {args.param: value}
        if args.param == "moreau_gamma" and not fixed_gammaF:
            # the linear rule takes gammaF* = gamma unless it was fixed explicitly
            changes["gammaFstar_tilde"] = value if base.rule == "linear" else None
        try:
            cfg = replace(base, **changes)
        except (ConfigError, TypeError) as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from None
        stem = os.path.join(args.out_dir, f"{cfg.experiment}_{cfg.rule}_{args.param}{value:g}")
        jobs.append((cfg, stem + ".csv", stem + ".json"))
    if len({j[1] for j in jobs}) != len(jobs):
        raise CliError(EXIT_CONFIG, "values: duplicate entries map to the same output path")
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(_sweep_job, jobs))
    else:
        summaries = [_sweep_job(job) for job in jobs]
    rows = []
    worst = EXIT_OK
    for (cfg, csv_path, _), summary in zip(jobs, summaries):
        if args.assert_dominance:
            dom = summary["fits"]["dominance"]
            summary["assertions"]["dominance"] = bool(dom is not None and dom["passed"])
        code, _ = _status(summary)
        worst = max(worst, code)
        rows.append({args.param: getattr(cfg, args.param), "csv": csv_path,
                     "final": summary["final"], "fits": summary["fits"], "status": code})
    print(json.dumps(rows, sort_keys=True))
    if worst:
        raise CliError(worst, "at least one sweep member failed")
    return EXIT_OK


def cmd_check(args) -> int:
    from .checks import run_all

    results = run_all(seed=args.seed if args.seed is not None else 0)
    for r in results:
        print(r.line())
    if args.json:
        try:
            with open(args.json, "w", newline="\n", encoding="utf-8") as fh:
                json.dump([r.as_dict() for r in results], fh, indent=2)
                fh.write("\n")
        except OSError as exc:
            raise CliError(EXIT_IO, f"{args.json}: {exc.strerror}") from None
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise CliError(EXIT_ASSERTION, "failed: " + ", ".join(failed))
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(EXIT_CONFIG, message)


def _add_config_flags(p):
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--full-scale", action="store_true",
                   help="mesh_n=1000 and n_max=10000 unless set explicitly")
    p.add_argument("--out-dir", default=".", help="directory for default output names")
    group = p.add_argument_group("experiment fields (override the file)")
    for f in fields(ExperimentConfig):
        group.add_argument(f"--{f.name}", dest=f.name, default=None, metavar=str(f.type).split()[0].upper())


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nlpdhgm", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"nlpdhgm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one experiment")
    _add_config_flags(run)
    run.add_argument("--csv", help="CSV output path")
    run.add_argument("--summary", help="summary JSON output path")
    run.add_argument("--assert-bounds", action="store_true",
                     help="fail unless the step-bound report passes")
    run.add_argument("--assert-slope-max", type=float, default=None,
                     help="fail unless the tail log-log slope is at most this value")
    run.add_argument("--assert-dominance", action="store_true",
                     help="fail unless a linear-rate run stays under its rate bound")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run one experiment for several parameter values")
    _add_config_flags(sweep)
    sweep.add_argument("--param", default="moreau_gamma",
                       choices=["moreau_gamma", "gammaG_tilde", "gammaFstar_tilde"])
    sweep.add_argument("--values", default="0.1,1", help="comma-separated values")
    sweep.add_argument("--jobs", type=int, default=1, help="worker processes")
    sweep.add_argument("--assert-dominance", action="store_true")
    sweep.set_defaults(func=cmd_sweep)

    check = sub.add_parser("check", help="run the diagnostic suites only")
    check.add_argument("--seed", type=int, default=None)
    check.add_argument("--json", help="write the results as JSON")
    check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {_CATEGORY.get(exc.code, 'internal')}: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
