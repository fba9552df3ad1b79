"""Command line front end: ``periodic-horizon {decompose,project,solve,verify}``.

Settings come from an INI file (``--config``) and are overridden by flags.
Reports are JSON.  Exit codes: 0 success, 1 a check failed, 2 bad
configuration or input.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import checks, lagrangians
from .averaging import AveragingParams
from .projection import decompose, decompose_oracle, orthogonality_residual, project_periodic
from .report import CheckReport, CheckResult, _plain
from .signal import DiscountConfig, PeriodSignal, Signal, TailPolicy, make_grid, weighted_lp_norm
from .variational import (
    SolveOptions,
    check_regularity_assumptions,
    euler_lagrange_residual,
    lift_solution,
    objective_value,
    raw_euler_lagrange_residual,
    reduce_problem,
    solve_finite_horizon,
)

logger = logging.getLogger("periodic_horizon")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_BAD_INPUT = 0, 1, 2

__all__ = [
    "RunConfig",
    "IngestError",
    "ConfigError",
    "load_config",
    "ingest_csv",
    "read_period_csv",
    "write_period_csv",
    "write_trajectory_csv",
    "cmd_decompose",
    "cmd_project",
    "cmd_solve",
    "cmd_verify",
    "check_determinism",
    "main",
]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class IngestError(ValueError):
    """A CSV file could not be read as a signal; the message names the line."""


@dataclass(frozen=True)
class RunConfig:
    r: float = 0.5
    T: float = 1.0
    m: int = 16
    K: int = 4
    alpha: float = 2.0
    tail: str = "zero"
    avg_tol: float = 1e-10
    max_terms: int = 10**6
    method: str = "bfgs"
    max_iters: int = 5000
    gtol: float = 1e-10
    multistart: int = 1
    polish: int = 20
    weighted: bool = True
    el_tol: Optional[float] = None
    lagrangian: str = "tracking"
    lagrangian_params: dict = field(default_factory=dict)
    eta: tuple = (0.0,)
    oracle: bool = True
    seed: int = 0
    input: Optional[str] = None
    out: Optional[str] = None
    seasonality_out: Optional[str] = None
    trajectory_out: Optional[str] = None

    def validate(self) -> "RunConfig":
        """Re-run the numeric validation of every module this config feeds."""
        try:
            self.discount()
            make_grid(self.discount(), self.m, self.K)
            TailPolicy(self.tail)
            AveragingParams(self.discount(), self.avg_tol, self.max_terms)
            self.solve_options()
            lagrangians.build(self.lagrangian, len(self.eta), self.T, **self.lagrangian_params)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if not self.alpha >= 1:
            raise ConfigError(f"alpha must be >= 1, got {self.alpha}")
        if self.el_tol is not None and not self.el_tol > 0:
            raise ConfigError("el_tol must be positive")
        if not all(math.isfinite(v) for v in self.eta):
            raise ConfigError("eta must be finite")
        return self

    def discount(self) -> DiscountConfig:
        return DiscountConfig(self.r, self.T)

    def averaging(self) -> AveragingParams:
        return AveragingParams(self.discount(), self.avg_tol, self.max_terms)

    def solve_options(self) -> SolveOptions:
        return SolveOptions(max_iters=self.max_iters, gtol=self.gtol, method=self.method,
                            multistart=self.multistart, polish=self.polish, seed=self.seed)

    def echo(self) -> dict:
        d = asdict(self)
        for k in ("out", "seasonality_out", "trajectory_out"):
            d.pop(k)
        d["eta"] = list(self.eta)
        return d


# INI layout: section -> {key: (field, parser)}
_INI = {
    "discount": {"r": ("r", float), "T": ("T", float)},
    "grid": {"m": ("m", int), "K": ("K", int)},
    "signal": {"alpha": ("alpha", float), "tail": ("tail", str), "input": ("input", str)},
    "averaging": {"tol": ("avg_tol", float), "max_terms": ("max_terms", int)},
    "solve": {
        "method": ("method", str),
        "max_iters": ("max_iters", int),
        "gtol": ("gtol", float),
        "multistart": ("multistart", int),
        "polish": ("polish", int),
        "weighted": ("weighted", "bool"),
        "el_tol": ("el_tol", float),
    },
    "lagrangian": {"name": ("lagrangian", str), "eta": ("eta", "vector")},
    "run": {"seed": ("seed", int), "oracle": ("oracle", "bool")},
    "io": {
        "out": ("out", str),
        "seasonality_csv": ("seasonality_out", str),
        "trajectory_csv": ("trajectory_out", str),
    },
}


def _parse_vector(text: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"cannot parse vector {text!r}") from None
    if not vals:
        raise ConfigError("empty vector")
    return vals


def load_config(path: Optional[str] = None, **overrides) -> RunConfig:
    """Defaults, then the INI file at ``path``, then ``overrides`` (``None`` values ignored)."""
    values = {}
    if path is not None:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for section in parser.sections():
            known = _INI.get(section)
            for key, raw in parser.items(section):
                if section == "lagrangian" and (known is None or key not in known):
                    try:
                        values.setdefault("lagrangian_params", {})[key] = float(raw)
                    except ValueError:
                        raise ConfigError(f"[lagrangian] {key} must be numeric") from None
                    continue
                if known is None or key not in known:
                    raise ConfigError(f"unknown config key [{section}] {key}")
                name, kind = known[key]
                try:
                    if kind == "bool":
                        values[name] = parser.getboolean(section, key)
                    elif kind == "vector":
                        values[name] = _parse_vector(raw)
                    else:
                        values[name] = kind(raw)
                except ValueError:
                    raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def ingest_csv(path: str, discount: DiscountConfig, m: int, tail=TailPolicy.ZERO) -> Signal:
    """Read ``t,x1..xn`` rows into a :class:`Signal` on the ``(T, m)`` grid.

    The time column must start at 0 and advance by ``T/m``; each step may
    deviate from it by at most ``1e-9`` relative.  The row count must be a
    multiple of ``m``.

    Raises
    ------
    IngestError
        On a missing or malformed header, unparsable or non-finite values,
        non-uniform time steps or a bad row count.  Line numbers are 1-based
        and count the header.
    """
    dt = discount.T / m
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise IngestError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise IngestError(f"{path}: empty file")
        header = [h.strip() for h in header]
        n = len(header) - 1
        if n < 1 or header[0] != "t" or header[1:] != [f"x{i}" for i in range(1, n + 1)]:
            raise IngestError(f"{path}:1: header must be t,x1..xn, got {','.join(header)}")
        times, rows = [], []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != n + 1:
                raise IngestError(f"{path}:{line}: expected {n + 1} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise IngestError(f"{path}:{line}: non-numeric field in {row}") from None
            if not all(math.isfinite(v) for v in vals):
                raise IngestError(f"{path}:{line}: non-finite value in {row}")
            i = len(times)
            if abs(vals[0] - i * dt) > 1e-9 * dt * max(1, i):
                what = "first time must be 0" if i == 0 else f"time step deviates from T/m = {dt!r}"
                if i > 0 and not vals[0] > times[-1]:
                    what = "times must be strictly increasing"
                raise IngestError(f"{path}:{line}: {what} (t = {vals[0]!r})")
            times.append(vals[0])
            rows.append(vals[1:])
    if not rows:
        raise IngestError(f"{path}: no data rows")
    if len(rows) % m:
        raise IngestError(f"{path}: {len(rows)} rows is not a multiple of m = {m}")
    grid = make_grid(discount, m, len(rows) // m)
    return Signal(grid, np.array(rows), tail)


def read_period_csv(path: str, discount: DiscountConfig, m: int) -> PeriodSignal:
    """Read one period written by :func:`write_period_csv`."""
    s = ingest_csv(path, discount, m)
    if s.grid.K != 1:
        raise IngestError(f"{path}: expected exactly {m} rows, got {s.grid.size}")
    return PeriodSignal(discount, s.values)


def _write_rows(path: str, t: np.ndarray, values: np.ndarray):
    n = values.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["t"] + [f"x{i}" for i in range(1, n + 1)]) + "\n")
        for ti, row in zip(t, values):
            fh.write(",".join("%.17g" % v for v in (ti, *row)) + "\n")


def write_period_csv(path: str, p: PeriodSignal):
    """Write ``p`` as ``t,x1..xn`` with 17 significant digits (round-trips exactly)."""
    _write_rows(path, p.times(), p.values)


def write_trajectory_csv(path: str, traj):
    """Write all ``m + 1`` nodes of a trajectory, endpoints included."""
    _write_rows(path, traj.nodes(), traj.values)


def _max_abs(a) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def cmd_decompose(cfg: RunConfig) -> dict:
    if not cfg.input:
        raise ConfigError("decompose needs an input CSV (--input)")
    x = ingest_csv(cfg.input, cfg.discount(), cfg.m, cfg.tail)
    dec = decompose(x)
    report = CheckReport()
    result = {
        "a_hat": dec.a_hat,
        "residual_energy": dec.residual_energy,
        "K": x.grid.K,
        "dim": x.dim,
        "p_hat": dec.p_hat.values,
    }
    if cfg.oracle:
        ref = decompose_oracle(x)
        scale = max(1.0, _max_abs(x.values))
        err = max(_max_abs(dec.p_hat.values - ref.p_hat.values), _max_abs(dec.a_hat - ref.a_hat)) / scale
        report.add(CheckResult("decomposition_vs_oracle", err < 1e-6, err, 1e-6))
        result["oracle_a_hat"] = ref.a_hat
    if cfg.seasonality_out:
        write_period_csv(cfg.seasonality_out, dec.p_hat)
        back = read_period_csv(cfg.seasonality_out, cfg.discount(), cfg.m)
        same = bool(np.array_equal(back.values, dec.p_hat.values))
        report.add(CheckResult("seasonality_csv_round_trip", same, 0.0 if same else 1.0, 0.0))
    return {"result": result, "checks": report}


def cmd_project(cfg: RunConfig) -> dict:
    if not cfg.input:
        raise ConfigError("project needs an input CSV (--input)")
    x = ingest_csv(cfg.input, cfg.discount(), cfg.m, cfg.tail)
    proj = project_periodic(x)
    report = CheckReport()
    result = {
        "period": proj.period.values,
        "norm": weighted_lp_norm(x, cfg.alpha),
        "projection_norm": weighted_lp_norm(proj.lifted.with_tail(x.tail), cfg.alpha),
    }
    if x.tail is TailPolicy.PERIODIC:
        res = x - proj.lifted
        scale = max(1.0, _max_abs(x.values))
        orth = orthogonality_residual(res) / scale
        report.add(CheckResult("projection_orthogonality", orth < 1e-10, orth, 1e-10))
    if cfg.seasonality_out:
        write_period_csv(cfg.seasonality_out, proj.period)
    return {"result": result, "checks": report}


def cmd_solve(cfg: RunConfig) -> dict:
    d = cfg.discount()
    eta = np.array(cfg.eta)
    L = lagrangians.build(cfg.lagrangian, eta.size, cfg.T, **cfg.lagrangian_params)
    problem = reduce_problem(L, d, eta, cfg.averaging(), cfg.weighted)
    traj = solve_finite_horizon(problem, cfg.m, cfg.solve_options())
    lifted = lift_solution(traj, cfg.K)
    el = euler_lagrange_residual(traj, problem.AL, cfg.weighted)
    raw = raw_euler_lagrange_residual(lifted, L)
    dt = d.T / cfg.m
    report = CheckReport()
    report.add(CheckResult("solver_converged", traj.converged, traj.grad_norm, cfg.gtol,
                           None if traj.converged else {"message": traj.message}))
    hist = np.diff(np.array(traj.history))
    rise = float(max(0.0, hist.max())) if hist.size else 0.0
    mono_tol = 1e-12 * max(1.0, abs(traj.objective))
    report.add(CheckResult("objective_nonincreasing", rise <= mono_tol, rise, mono_tol))
    el_max = _max_abs(el.values)
    el_tol = cfg.el_tol if cfg.el_tol is not None else 10 * dt
    report.add(CheckResult("euler_lagrange_residual", el_max <= el_tol, el_max, el_tol))
    result = {
        "lagrangian": L.name,
        "converged": traj.converged,
        "iterations": traj.iterations,
        "gradient_norm": traj.grad_norm,
        "reduced_objective": traj.objective,
        "el_residual_max": el_max,
        "raw_el_residual_max": _max_abs(raw),
        "trajectory": traj.values,
    }
    if cfg.weighted:
        full = objective_value(lifted, L)
        gap = abs(full - traj.objective) / max(abs(full), 1e-300)
        result["infinite_horizon_objective"] = full
        ok = gap < 10 * dt or full == traj.objective
        report.add(CheckResult("reduction_identity", ok, gap, 10 * dt))
    reg = check_regularity_assumptions(L, seed=cfg.seed)
    result["regularity"] = reg.as_dict()
    if cfg.trajectory_out:
        write_trajectory_csv(cfg.trajectory_out, traj)
    return {"result": result, "checks": report}


def _verify_checks(cfg: RunConfig) -> CheckReport:
    return checks.run_suite(cfg.discount(), cfg.seed)


def _canonical(payload: dict) -> str:
    return json.dumps(_plain(payload), sort_keys=True, allow_nan=False)


def check_determinism(cfg: RunConfig) -> CheckResult:
    """Run the suite twice with the same seed and compare the serialized payloads byte for byte."""
    a = _canonical(_verify_checks(cfg).as_dict())
    b = _canonical(_verify_checks(cfg).as_dict())
    same = a == b
    return CheckResult("determinism", same, 0.0 if same else 1.0, 0.0)


def cmd_verify(cfg: RunConfig) -> dict:
    report = _verify_checks(cfg)
    report.add(check_determinism(cfg))
    return {"result": {"checks_run": len(report.results)}, "checks": report}


COMMANDS = {
    "decompose": cmd_decompose,
    "project": cmd_project,
    "solve": cmd_solve,
    "verify": cmd_verify,
}


def run(command: str, cfg: RunConfig) -> tuple[dict, dict, int]:
    """Execute ``command``; return ``(payload, timings, exit_code)``.

    ``payload`` is deterministic for a fixed config; timings are kept apart.
    """
    start = time.perf_counter()
    out = COMMANDS[command](cfg)
    elapsed = time.perf_counter() - start
    report: CheckReport = out["checks"]
    payload = {
        "command": command,
        "config": cfg.echo(),
        "result": out["result"],
        "checks": report.as_dict()["checks"],
        "passed": report.passed,
    }
    return _plain(payload), {"total_seconds": elapsed}, EXIT_OK if report.passed else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI file with run settings")
    common.add_argument("--r", type=float, help="discount rate")
    common.add_argument("--T", type=float, help="period length")
    common.add_argument("--m", type=int, help="samples per period")
    common.add_argument("--K", type=int, help="stored periods (lift length for solve)")
    common.add_argument("--alpha", type=float, help="norm order")
    common.add_argument("--tail", choices=[t.value for t in TailPolicy], help="continuation beyond the data")
    common.add_argument("--lagrangian", choices=sorted(lagrangians.CATALOG), help="built-in running cost")
    common.add_argument("--eta", metavar="CSV-LIST", help="boundary value, e.g. 1.0,0.5")
    common.add_argument("--oracle", action=argparse.BooleanOptionalAction, default=None,
                        help="also run the normal-equations oracle")
    common.add_argument("--seed", type=int, help="random seed for fixtures and multistart")
    common.add_argument("--input", metavar="PATH", help="input CSV with header t,x1..xn")
    common.add_argument("--out", metavar="PATH", help="write the JSON report here instead of stdout")
    common.add_argument("--seasonality-out", metavar="PATH", help="CSV for the fitted period")
    common.add_argument("--trajectory-out", metavar="PATH", help="CSV for the solved trajectory")

    parser = argparse.ArgumentParser(prog="periodic-horizon", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("decompose", parents=[common], help="seasonality + trend split of a CSV signal")
    sub.add_parser("project", parents=[common], help="projection onto periodic signals")
    sub.add_parser("solve", parents=[common], help="solve the reduced periodic problem")
    sub.add_parser("verify", parents=[common], help="run the seeded invariant suite")
    return parser


def _setup_logging():
    level = os.environ.get("PERIODIC_HORIZON_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(
            args.config,
            r=args.r, T=args.T, m=args.m, K=args.K, alpha=args.alpha, tail=args.tail,
            lagrangian=args.lagrangian, eta=_parse_vector(args.eta) if args.eta else None,
            oracle=args.oracle, seed=args.seed, input=args.input, out=args.out,
            seasonality_out=args.seasonality_out, trajectory_out=args.trajectory_out,
        )
        payload, timings, code = run(args.command, cfg)
    except (ConfigError, IngestError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except (FloatingPointError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    text = json.dumps({**payload, "timings": timings}, indent=2, sort_keys=True, allow_nan=False)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    for c in payload["checks"]:
        logger.info("%-32s %s  value=%r tol=%r", c["name"], "PASS" if c["passed"] else "FAIL",
                    c["value"], c["tolerance"])
    return code


if __name__ == "__main__":
    sys.exit(main())
