"""Command-line front end: Theta solves, identity checks and eps-sweeps with JSON/CSV output.

Exit codes: 0 pass, 1 numerical failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bubbles import GridPolicy
from .checks import all_checks
from .constants import NoClosedForm, n_m_closed_form, normalize_order, sharp_target, theta_closed_form
from .constants import dgs_lower_bound
from .energy import DEFAULT_LADDERS, fit_line, fit_sharp_constant, sweep
from .theta_solver import InfeasibleError, SolverOptions, solve_theta

FORMAT_VERSION = 1
EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
WORKERS_ENV = "SHARPTRACE_WORKERS"
DEFAULT_DIMENSION = {"trace2": 3, "trace4": 5, "trace4D": 4, "widom2D": 2}
DEFAULT_FIT_TOLERANCE = {"trace2": 0.03, "trace4": 0.05, "trace4D": 0.15, "widom2D": 0.05}
DEFAULT_SLOPE_TOLERANCE = {"trace4D": 0.10, "widom2D": 0.05}
MOMENT_TOLERANCE = 1e-6
THETA_GAP_TOLERANCE = 1e-3


class ConfigError(ValueError):
    pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _parse_ladder(text) -> Optional[tuple]:
    if text is None:
        return None
    items = text if isinstance(text, (list, tuple)) else str(text).split(",")
    try:
        ladder = tuple(float(x) for x in items if str(x).strip())
    except ValueError as exc:
        raise ConfigError(f"bad eps ladder {text!r}") from exc
    if len(ladder) < 3 or any(not (e > 0) for e in ladder):
        raise ConfigError("the eps ladder needs at least three positive values")
    return ladder


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer") from exc


# ----------------------------------------------------------------------------
# Commands


def cmd_theta(cfg: dict) -> tuple:
    m, theta, n = cfg["m"], cfg["theta"], cfg["n"]
    if m is None or theta is None:
        raise ConfigError("theta needs -m and -t")
    if not (0.0 < theta < 1.0):
        raise ConfigError("theta must lie in (0, 1); theta = 1 gives the value 1 for every measure")
    if m < 1 or n < 2:
        raise ConfigError("need m >= 1 and n >= 2")
    opts = SolverOptions(seed=cfg["seed"], tol=cfg["tol"] or 1e-9, starts=cfg["starts"])
    res = solve_theta(m, theta, n, opts)
    try:
        closed = theta_closed_form(m, theta, n)
    except NoClosedForm:
        closed = None
    gap = None if closed is None else (res.value - closed) / closed
    n_m = n_m_closed_form(m, n)
    result = {
        "value": res.value, "closed_form": closed, "gap": gap, "residual": res.residual,
        "support": res.support, "dgs_lower_bound": dgs_lower_bound(m, n), "n_m": n_m,
        "n_m_gap": None if n_m is None else (res.value - n_m) / n_m,
        "certificate": res.certificate, "measure": res.measure.to_dict(),
    }
    passed = res.residual <= opts.tol and (gap is None or abs(gap) <= THETA_GAP_TOLERANCE)
    tolerances = {"moment": opts.tol, "closed_form_gap": THETA_GAP_TOLERANCE, "prune": opts.prune}
    rows = [{k: v for k, v in result.items() if k != "measure"}]
    return result, passed, tolerances, rows


def cmd_verify(cfg: dict) -> tuple:
    checks = all_checks()
    rows = [c.to_dict() for c in checks]
    result = {"checks": rows, "failed": [c.name for c in checks if not c.passed]}
    return result, not result["failed"], {"per_check": "see checks"}, rows


def _slope_summary(order: str, n: int, m: int, reports) -> dict:
    x = np.log(1.0 / np.array([r.eps for r in reports]))
    count = n_m_closed_form(m, n) if m >= 1 else 1
    if order == "widom2D":
        target_interior, target_log = 4.0 * math.pi * count, 1.0
    else:
        target_interior, target_log = 16.0 * math.pi**2 * count, 3.0
    interior = fit_line(x, [r.interior for r in reports])
    log_avg = fit_line(x, [r.boundary_norm for r in reports])
    return {
        "interior_slope": interior.slope, "interior_target": target_interior,
        "interior_gap": (interior.slope - target_interior) / target_interior,
        "interior_r2": interior.r_squared,
        "log_average_slope": log_avg.slope, "log_average_target": target_log,
        "log_average_gap": (log_avg.slope - target_log) / target_log,
    }


def cmd_sweep(cfg: dict) -> tuple:
    if cfg["order"] is None:
        raise ConfigError("sweep needs --order")
    order = normalize_order(cfg["order"])
    n = cfg["n"] if cfg["n"] is not None else DEFAULT_DIMENSION[order]
    m = cfg["m"] if cfg["m"] is not None else 1
    ladder = cfg["eps_ladder"] or DEFAULT_LADDERS[order]
    grids = GridPolicy(cfg["level"])
    reports = sweep(order, n, m, ladder, delta=cfg["delta"], grids=grids, workers=_workers())
    target = sharp_target(order, n, m)
    fit = fit_sharp_constant(reports, target)
    tol = cfg["tol"] if cfg["tol"] is not None else DEFAULT_FIT_TOLERANCE[order]
    worst_moment = max(r.moment_residual for r in reports)
    passed = abs(fit.gap) <= tol and worst_moment < MOMENT_TOLERANCE
    result = {"reports": [r.to_dict() for r in reports], "fit": fit.to_dict(), "target": target.value,
              "worst_moment_residual": worst_moment}
    tolerances = {"fit_gap": tol, "moment": MOMENT_TOLERANCE, "grid_level": grids.level,
                  "gauss_order": grids.order()}
    if order in DEFAULT_SLOPE_TOLERANCE:
        slopes = _slope_summary(order, n, m, reports)
        result["slopes"] = slopes
        tolerances["interior_slope_gap"] = DEFAULT_SLOPE_TOLERANCE[order]
        passed = passed and abs(slopes["interior_gap"]) <= DEFAULT_SLOPE_TOLERANCE[order]
    rows = [{k: v for k, v in r.to_dict().items() if k != "grid"} for r in reports]
    return result, passed, tolerances, rows


COMMANDS = {"theta": cmd_theta, "verify": cmd_verify, "sweep": cmd_sweep}


# ----------------------------------------------------------------------------
# Argument handling


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file (default: standard output)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--config", help="JSON file whose keys override the flags")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=None, help="tolerance override")

    parser = argparse.ArgumentParser(prog="sharptrace", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    th = sub.add_parser("theta", parents=[common], help="minimize sum nu_i^theta over weighted designs")
    th.add_argument("-m", type=int, default=None)
    th.add_argument("-t", "--theta", type=float, default=None)
    th.add_argument("-n", type=int, default=3)
    th.add_argument("--starts", type=int, default=12)

    sub.add_parser("verify", parents=[common], help="run the closed-form identity checks")

    sw = sub.add_parser("sweep", parents=[common], help="energies along an eps-ladder and the fitted constant")
    sw.add_argument("--order", default=None, help="trace2, trace4, trace4D or widom2D")
    sw.add_argument("-n", type=int, default=None)
    sw.add_argument("-m", type=int, default=None)
    sw.add_argument("--eps-ladder", default=None, help="comma-separated eps values")
    sw.add_argument("--delta", type=float, default=None)
    sw.add_argument("--level", type=int, default=0, help="grid refinement level")
    return parser


CONFIG_KEYS = ("m", "theta", "n", "starts", "order", "eps_ladder", "delta", "level", "seed", "tol")


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = {k: getattr(args, k, None) for k in CONFIG_KEYS}
    if args.config:
        try:
            with open(args.config) as fh:
                extra = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(extra, dict):
            raise ConfigError("the config file must hold a JSON object")
        unknown = set(extra) - set(CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(extra)
    cfg["eps_ladder"] = _parse_ladder(cfg["eps_ladder"])
    if cfg["level"] is None:
        cfg["level"] = 0
    if cfg["starts"] is None:
        cfg["starts"] = 12
    if cfg["seed"] is None:
        cfg["seed"] = 0
    return {"command": args.command, **cfg}


def render(payload: dict, rows: Sequence[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n"
    buf = io.StringIO()
    fields = sorted({k for row in rows for k in row})
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: json.dumps(_jsonable(v)) if isinstance(v, (list, dict)) else _jsonable(v)
                         for k, v in row.items()})
    return buf.getvalue()


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        result, passed, tolerances, rows = COMMANDS[args.command](cfg)
    except (ConfigError, NoClosedForm, ValueError, KeyError, TypeError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleError, FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    payload = {"format_version": FORMAT_VERSION, "version": __version__, "command": args.command,
               "config": cfg, "seed": cfg["seed"], "tolerances": tolerances, "passed": passed,
               "result": result}
    text = render(payload, rows, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"{args.command}: {'pass' if passed else 'FAIL'} -> {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return EXIT_PASS if passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
