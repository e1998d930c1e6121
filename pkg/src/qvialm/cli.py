"""Experiment harness: config parsing, single runs, n-sweeps and the CLI.

Configs are plain ``key = value`` lines; ``#`` starts a comment.  Example::

    problem = signorini
    n = 32
    tol_outer = 1e-4
    output_path = signorini32.csv
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .alm import AlmConfig, AlmReport, Status, alm_solve
from .problem import BoxSet, QviProblem
from .problems import (
    GnepData,
    GradientQviData,
    SignoriniData,
    build_analytic_moving_set,
    build_gnep,
    build_gradient_qvi,
    build_linear_vi,
    build_signorini,
)

PROBLEMS = ("analytic", "signorini", "gradient", "gnep", "vi")
CSV_COLUMNS = ("k", "rho", "V", "feasibility", "kkt_residual", "r_k", "inner_iters",
               "lambda_norm", "wall_ms")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_MAX_OUTER = 2
EXIT_SUBPROBLEM = 3
EXIT_IO = 4

_STATUS_CODES = {
    Status.CONVERGED: EXIT_OK,
    Status.MAX_OUTER: EXIT_MAX_OUTER,
    Status.SUBPROBLEM_FAILURE: EXIT_SUBPROBLEM,
}

# (tol_outer, tol_inner) when not given explicitly.  The analytic problem is
# tiny and its oracle asks for 1e-6 accuracy in x, hence the tight pair.
_DEFAULT_TOLS = {
    "gradient": (1e-6, 1e-8),
    "analytic": (1e-8, 1e-10),
}
_FALLBACK_TOLS = (1e-4, 1e-6)


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: Optional[str] = None
    n: int = 16
    tol_outer: Optional[float] = None
    tol_inner: Optional[float] = None
    max_outer: int = 50
    max_inner: int = 100
    rho0: float = 1.0
    gamma: float = 10.0
    tau: float = 0.1
    safeguard_bound: float = 1e6
    p: float = 2.0
    f: Optional[float] = None
    own_slot: str = "x"
    output_path: Optional[str] = None
    seed: int = 0
    # wall_ms is written as 0 when off, making the CSV reproducible byte for byte
    timing: bool = True

    def with_problem_defaults(self) -> "ExperimentConfig":
        """Fill in the tolerance pair that belongs to ``problem``."""
        outer, inner = _DEFAULT_TOLS.get(self.problem, _FALLBACK_TOLS)
        return dataclasses.replace(
            self,
            tol_outer=outer if self.tol_outer is None else self.tol_outer,
            tol_inner=inner if self.tol_inner is None else self.tol_inner,
        )

    def alm_config(self) -> AlmConfig:
        c = self.with_problem_defaults()
        return AlmConfig(rho0=c.rho0, gamma=c.gamma, tau=c.tau,
                         safeguard_bound=c.safeguard_bound, tol_outer=c.tol_outer,
                         tol_inner=c.tol_inner, max_outer=c.max_outer,
                         max_inner=c.max_inner)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_INT_KEYS = {"n", "max_outer", "max_inner", "seed"}
_FLOAT_KEYS = {"tol_outer", "tol_inner", "rho0", "gamma", "tau", "safeguard_bound", "p", "f"}
_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def _convert(key: str, raw: str, line: Optional[int]):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            val = float(raw)
            if not math.isfinite(val):
                raise ValueError(raw)
            return val
    except ValueError:
        raise ConfigError(f"cannot parse {key} = {raw!r}", line) from None
    if key == "timing":
        try:
            return _BOOL_WORDS[raw.lower()]
        except KeyError:
            raise ConfigError(f"cannot parse timing = {raw!r} (expected true/false)", line) from None
    return raw


# key -> (predicate, message)
_CHECKS = {
    "problem": (lambda v: v in PROBLEMS, "problem must be one of " + ", ".join(PROBLEMS)),
    "n": (lambda v: v >= 1, "n must be positive"),
    "tol_outer": (lambda v: v > 0, "tol_outer must be positive"),
    "tol_inner": (lambda v: v > 0, "tol_inner must be positive"),
    "max_outer": (lambda v: v >= 0, "max_outer must be nonnegative"),
    "max_inner": (lambda v: v >= 0, "max_inner must be nonnegative"),
    "rho0": (lambda v: v > 0, "rho0 must be positive"),
    "gamma": (lambda v: v > 1, "gamma must exceed 1"),
    "tau": (lambda v: 0 < v < 1, "tau must lie in (0, 1)"),
    "safeguard_bound": (lambda v: v > 0, "safeguard_bound must be positive"),
    "p": (lambda v: v >= 2, "p must be at least 2"),
    "own_slot": (lambda v: v in ("x", "y"), "own_slot must be x or y"),
    "seed": (lambda v: v >= 0, "seed must be nonnegative"),
}


def _check(key, value, line=None):
    if value is None or key not in _CHECKS:
        return
    ok, msg = _CHECKS[key]
    if not ok(value):
        raise ConfigError(msg, line)


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    for key in _FIELDS:
        _check(key, getattr(cfg, key))
    if cfg.problem in ("signorini",) and cfg.n < 3:
        raise ConfigError("signorini needs n >= 3")
    if cfg.problem in ("gradient", "gnep") and cfg.n < 2:
        raise ConfigError(f"{cfg.problem} needs n >= 2")
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines into a validated :class:`ExperimentConfig`.

    Unset keys keep their defaults.  Errors name the offending line.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        if not raw:
            raise ConfigError(f"missing value for {key!r}", lineno)
        value = _convert(key, raw, lineno)
        _check(key, value, lineno)
        values[key] = value
    return validate_config(ExperimentConfig(**values))


def format_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config` (unset optional keys are omitted)."""
    lines = []
    for key in _FIELDS:
        val = getattr(cfg, key)
        if val is None:
            continue
        if isinstance(val, bool):
            val = "true" if val else "false"
        elif isinstance(val, float):
            val = repr(val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# problems


def _random_vi(n: int, seed: int) -> QviProblem:
    """Strongly monotone affine VI on ``[-1, 1]^n`` drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    S = rng.standard_normal((n, n))
    A = B @ B.T / n + np.eye(n) + (S - S.T) / 2
    b = 2.0 * rng.standard_normal(n)
    return build_linear_vi(A, b, BoxSet.uniform(n, -1.0, 1.0))


def build_problem(cfg: ExperimentConfig) -> QviProblem:
    name = cfg.problem
    if name == "analytic":
        return build_analytic_moving_set()
    if name == "signorini":
        return build_signorini(SignoriniData(cfg.n, f=cfg.f))
    if name == "gradient":
        return build_gradient_qvi(GradientQviData(cfg.n, p=cfg.p, f=cfg.f))
    if name == "gnep":
        kw = {} if cfg.f is None else {"f": cfg.f}
        return build_gnep(GnepData(cfg.n, own_slot=cfg.own_slot, **kw))
    if name == "vi":
        return _random_vi(cfg.n, cfg.seed)
    raise ConfigError("no problem selected")


# ---------------------------------------------------------------------------
# output


def csv_rows(report: AlmReport, timing: bool = True) -> list:
    rows = []
    for r in report.records:
        rows.append([r.k, repr(r.rho), repr(r.v_value), repr(r.feasibility),
                     repr(r.kkt_residual), repr(r.r_k), r.inner_iterations,
                     repr(r.lambda_norm), repr(r.wall_ms if timing else 0.0)])
    return rows


def _write_csv_atomic(path: str, header: Sequence[str], rows: list) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".qvialm-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_rho(rho: float, rho0: float = 1.0, gamma: float = 10.0) -> str:
    """Penalty value as ``rho0 * gamma^k``; plain ``10^k`` in the usual setup."""
    if not (rho > 0 and math.isfinite(rho)):
        return "-"
    k = round(math.log(rho / rho0) / math.log(gamma))
    if rho0 == 1.0 and gamma == 10.0:
        return f"10^{k}"
    if rho0 == 1.0:
        return f"{gamma:g}^{k}"
    return f"{rho0:g}*{gamma:g}^{k}"


def summary_table(columns: Sequence[tuple], rho0: float = 1.0, gamma: float = 10.0) -> str:
    """Rows ``outer it. / inner it. / rho_max`` with one column per ``(n, report)``."""
    head = ["n"] + [str(n) for n, _ in columns]
    rows = [
        ["outer it."] + [str(r.outer_iterations) for _, r in columns],
        ["inner it."] + [str(r.inner_iterations) for _, r in columns],
        ["rho_max"] + [format_rho(r.rho_max, rho0, gamma) for _, r in columns],
        ["status"] + [r.status.value for _, r in columns],
    ]
    widths = [max(len(row[i]) for row in [head] + rows) for i in range(len(head))]

    def fmt(row):
        return "  ".join(c.ljust(widths[0]) if i == 0 else c.rjust(widths[i])
                         for i, c in enumerate(row))

    return "\n".join([fmt(head), "-" * len(fmt(head))] + [fmt(r) for r in rows])


def _solve(cfg: ExperimentConfig) -> AlmReport:
    cfg = validate_config(cfg)
    return alm_solve(build_problem(cfg), cfg.alm_config())


def run_experiment(cfg: ExperimentConfig, out=None) -> int:
    """Run one configuration, write its CSV and print the summary table."""
    out = out or sys.stdout
    try:
        report = _solve(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.output_path:
        try:
            _write_csv_atomic(cfg.output_path, CSV_COLUMNS, csv_rows(report, cfg.timing))
        except OSError as exc:
            print(f"cannot write {cfg.output_path}: {exc}", file=sys.stderr)
            return EXIT_IO
    print(summary_table([(cfg.n, report)], cfg.rho0, cfg.gamma), file=out)
    if report.message:
        print(report.message, file=out)
    return _STATUS_CODES[report.status]


def sweep(cfg: ExperimentConfig, n_list: Sequence[int], out=None) -> int:
    """Run ``cfg`` for every ``n`` and print one combined table.

    The combined CSV (``output_path``) gets an extra leading ``n`` column.
    The first nonzero exit code is returned once all runs are done.
    """
    out = out or sys.stdout
    if not n_list:
        print("config error: empty n list", file=sys.stderr)
        return EXIT_CONFIG
    columns, rows, code = [], [], EXIT_OK
    for n in n_list:
        c = dataclasses.replace(cfg, n=int(n))
        try:
            report = _solve(c)
        except ConfigError as exc:
            print(f"config error (n={n}): {exc}", file=sys.stderr)
            code = code or EXIT_CONFIG
            continue
        columns.append((n, report))
        rows.extend([n] + r for r in csv_rows(report, cfg.timing))
        code = code or _STATUS_CODES[report.status]
    if cfg.output_path:
        try:
            _write_csv_atomic(cfg.output_path, ("n",) + CSV_COLUMNS, rows)
        except OSError as exc:
            print(f"cannot write {cfg.output_path}: {exc}", file=sys.stderr)
            code = code or EXIT_IO
    if columns:
        print(summary_table(columns, cfg.rho0, cfg.gamma), file=out)
    return code


# ---------------------------------------------------------------------------
# command line


def _n_list(text: str) -> list:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad n list {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty n list")
    return vals


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qvialm",
                                 description="Augmented Lagrangian experiments for QVIs.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp_):
        sp_.add_argument("--problem", choices=PROBLEMS)
        sp_.add_argument("--config", help="key = value config file")
        sp_.add_argument("--out", help="CSV output path")
        sp_.add_argument("--tol-outer", type=float)
        sp_.add_argument("--tol-inner", type=float)
        sp_.add_argument("--no-timing", action="store_true",
                         help="write wall_ms = 0 for reproducible CSV files")

    run = sub.add_parser("run", help="run a single experiment")
    common(run)
    run.add_argument("--n", type=int)
    sw = sub.add_parser("sweep", help="run over several grid sizes")
    common(sw)
    sw.add_argument("--n-list", type=_n_list, required=True)
    return ap


def _load(args) -> ExperimentConfig:
    text = ""
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    cfg = parse_config(text)
    overrides = {
        "problem": args.problem,
        "n": getattr(args, "n", None),
        "output_path": args.out,
        "tol_outer": args.tol_outer,
        "tol_inner": args.tol_inner,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.no_timing:
        overrides["timing"] = False
    cfg = validate_config(dataclasses.replace(cfg, **overrides))
    if cfg.problem is None:
        raise ConfigError("no problem given (use --problem or 'problem = ...')")
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.command == "run":
        return run_experiment(cfg)
    return sweep(cfg, args.n_list)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
