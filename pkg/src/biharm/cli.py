"""Batch front-end: certify, mu-curve, solve-sub, mountain-pass, solve-critical.

Runs are configured by a JSON file (schema below, documented in the
README) plus a few override flags, and write deterministic artifacts
into the output directory.  Every failure path exits nonzero and leaves
a machine-readable ``error.json``.

Config schema (all coefficients are expressions in the documented
mini-grammar)::

    {
      "geometry":     {"n_ambient": 6, "d_eff": 1, "grid_size": 128},
      "coefficients": {"a": "0.2", "h": "-1", "f": "cos(2*pi*x1) - 0.25"},
      "exponent":     {"q": 2.5},
      "curve":        {"k_min": 1.0, "k_max": 1e15, "k_steps": 48},
      "solver":       {"seed": 0, "tol_scale": 1e-8, "max_iter": 5000,
                       "battery_iter": 600, "multistart": true}
    }

Exit codes: 0 success (for ``certify``: conditions (1) and (2) hold),
2 configuration/validation error, 3 numeric failure, 4 hypothesis gate
failed, 5 non-convergence, 6 curve shape not found, 7 path collapse.
The environment variable BIHARM_THREADS caps internal parallelism (the
solvers are sequential, so any positive cap is honored).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import serialize as ser
from .certifier import certify
from .continuation import continue_to_critical
from .errors import (
    BiharmError,
    Collapse,
    ConfigError,
    DivergingNorms,
    ExpressionError,
    HypothesisViolated,
    InfeasibleConstraint,
    NonConvergence,
    ShapeNotFound,
)
from .geometry import TorusGeometry
from .minimizer import SolverOptions, first_solution, minimize_on_sphere, trace_mu_curve
from .mountainpass import align_sign, find_mu_zeros, mountain_pass
from .problem import ProblemData

_EXIT_CONFIG = 2
_EXIT_NUMERIC = 3
_EXIT_HYPOTHESIS = 4
_EXIT_NONCONVERGENCE = 5
_EXIT_SHAPE = 6
_EXIT_COLLAPSE = 7


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _require(cfg: dict, section: str, keys) -> dict:
    block = cfg.get(section)
    if not isinstance(block, dict):
        raise ConfigError(f"config section {section!r} is missing")
    for key in keys:
        if key not in block:
            raise ConfigError(f"config key {section}.{key} is missing")
    return block


def _build_problem(cfg: dict, require_f_minus: bool) -> tuple[ProblemData, dict]:
    gblock = _require(cfg, "geometry", ("n_ambient", "d_eff", "grid_size"))
    try:
        geometry = TorusGeometry(
            int(gblock["n_ambient"]), int(gblock["d_eff"]), int(gblock["grid_size"])
        )
    except ValueError as exc:
        raise ConfigError(str(exc))
    cblock = _require(cfg, "coefficients", ("a", "h", "f"))
    try:
        problem = ProblemData.from_expressions(
            geometry, str(cblock["a"]), str(cblock["h"]), str(cblock["f"])
        )
    except ExpressionError as exc:
        raise ConfigError(f"coefficient expression: {exc}")
    if not problem.h_negative:
        raise ConfigError("h must be negative at every grid node")
    if require_f_minus and not problem.f_minus_positive:
        raise ConfigError("this command requires int f^- > 0 (f must dip below zero)")
    return problem, gblock


def _solver_options(cfg: dict, args) -> SolverOptions:
    block = cfg.get("solver", {}) or {}
    opts = SolverOptions(
        seed=int(block.get("seed", 0)),
        max_iter=int(block.get("max_iter", 5000)),
        tol_scale=float(block.get("tol_scale", 1e-8)),
        battery_iter=int(block.get("battery_iter", 600)),
        multistart=bool(block.get("multistart", True)),
    )
    if getattr(args, "seed", None) is not None:
        opts.seed = args.seed
    threads = os.environ.get("BIHARM_THREADS")
    if threads is not None:
        try:
            cap = int(threads)
        except ValueError:
            raise ConfigError(f"BIHARM_THREADS must be an integer, got {threads!r}")
        if cap < 1:
            raise ConfigError("BIHARM_THREADS must be >= 1")
    return opts


def _exponent(cfg: dict, args) -> float:
    if getattr(args, "q", None) is not None:
        return float(args.q)
    block = cfg.get("exponent", {}) or {}
    if "q" not in block:
        raise ConfigError("exponent q missing: set exponent.q or pass --q")
    return float(block["q"])


def _k_range(cfg: dict, args) -> tuple[float, float, int]:
    block = cfg.get("curve", {}) or {}
    k_min = args.k_min if args.k_min is not None else block.get("k_min")
    k_max = args.k_max if args.k_max is not None else block.get("k_max")
    k_steps = args.k_steps if args.k_steps is not None else block.get("k_steps", 48)
    if k_min is None or k_max is None:
        raise ConfigError("k range missing: set curve.k_min/k_max or pass --k-min/--k-max")
    k_min, k_max, k_steps = float(k_min), float(k_max), int(k_steps)
    if not (0.0 < k_min < k_max) or k_steps < 8:
        raise ConfigError("need 0 < k_min < k_max and k_steps >= 8")
    return k_min, k_max, k_steps


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _gate(problem, q, opts, force: bool, subcritical: bool):
    report = certify(problem, q, opts)
    ok = report.passed_subcritical if subcritical else report.passed
    if not ok and not force:
        raise HypothesisViolated(
            "certificate conditions fail "
            f"(spectral={report.cond_spectral}, ratio={report.cond_ratio}, "
            f"positive={report.cond_positive}); rerun with --force to proceed"
        )
    return report


def _dump_solution(out: Path, stem: str, report) -> None:
    ser.write_json(out / f"{stem}.report.json", ser.critical_report_dict(report))
    ser.field_to_csv(report.field, out / f"{stem}.field.csv")
    ser.write_json(out / f"{stem}.spectral.json", ser.field_spectral_dict(report.field))


def cmd_certify(args) -> int:
    cfg = _load_config(args.config)
    problem, _ = _build_problem(cfg, require_f_minus=False)
    opts = _solver_options(cfg, args)
    q = _exponent(cfg, args)
    out = _out_dir(args)
    report = certify(problem, q, opts)
    ser.write_json(out / "report.json", ser.hypothesis_report_dict(report))
    return 0 if report.passed else _EXIT_HYPOTHESIS


def _trace_curve(problem, q, cfg, args, opts, certificate=None):
    k_min, k_max, k_steps = _k_range(cfg, args)
    return trace_mu_curve(
        problem, q, k_min, k_max, n_points=k_steps, opts=opts, certificate=certificate
    )


def cmd_mu_curve(args) -> int:
    cfg = _load_config(args.config)
    problem, _ = _build_problem(cfg, require_f_minus=True)
    opts = _solver_options(cfg, args)
    q = _exponent(cfg, args)
    out = _out_dir(args)
    certificate = certify(problem, q, opts)
    if not certificate.passed_subcritical and not args.force:
        ser.write_json(out / "report.json", ser.hypothesis_report_dict(certificate))
        raise HypothesisViolated(
            "certificate conditions fail; report.json written; use --force to trace anyway"
        )
    curve = _trace_curve(problem, q, cfg, args, opts, certificate)
    ser.curve_to_csv(curve, out / "mu.csv")
    ser.write_json(out / "annotations.json", ser.curve_annotations_dict(curve))
    (out / "mu.gp").write_text(
        ser.gnuplot_script("mu.csv", f"constrained energy infimum, q={q}"),
        encoding="utf-8",
    )
    return 0


def _two_solutions(problem, q, cfg, args, opts):
    """Shared pipeline: gate, curve, ball minimum, mountain pass."""
    out = _out_dir(args)
    certificate = _gate(problem, q, opts, args.force, subcritical=True)
    ser.write_json(out / "certificate.json", ser.hypothesis_report_dict(certificate))
    curve = _trace_curve(problem, q, cfg, args, opts, certificate)
    ser.curve_to_csv(curve, out / "mu.csv")
    ser.write_json(out / "annotations.json", ser.curve_annotations_dict(curve))
    l1, l2, l_o = find_mu_zeros(curve)
    end1 = minimize_on_sphere(problem, q, l1, opts=opts)
    end2 = minimize_on_sphere(problem, q, l2, opts=opts)
    seeds = [
        (float(k), v)
        for k, v in zip(curve.ks, curve.minimizers)
        if l1 <= k <= l2
    ]
    # the energy is even: use the endpoint representative aligned with u1
    u2 = align_sign(end2.v, end1.v)
    mp = mountain_pass(
        problem, q, end1.v, u2, opts=opts, interior_seeds=seeds,
    )
    ser.path_profile_csv(mp.profile_rows, out / "path_profile.csv")
    return certificate, curve, (l1, l2, l_o), mp


def cmd_mountain_pass(args) -> int:
    cfg = _load_config(args.config)
    problem, _ = _build_problem(cfg, require_f_minus=True)
    opts = _solver_options(cfg, args)
    q = _exponent(cfg, args)
    out = _out_dir(args)
    _, curve, (l1, l2, l_o), mp = _two_solutions(problem, q, cfg, args, opts)
    _dump_solution(out, "solution_mp", mp.report)
    summary = {
        "schema_version": 1,
        "q": q,
        "l1": l1,
        "l2": l2,
        "l_o": l_o,
        "nu": mp.nu,
        "mu_lo": curve.annotations.get("mu_lo"),
        "iterations": mp.iterations,
        "converged": mp.converged,
    }
    ser.write_json(out / "mountain_pass.json", summary)
    return 0


def cmd_solve_sub(args) -> int:
    cfg = _load_config(args.config)
    problem, _ = _build_problem(cfg, require_f_minus=True)
    opts = _solver_options(cfg, args)
    q = _exponent(cfg, args)
    out = _out_dir(args)
    certificate, curve, (l1, l2, l_o), mp = _two_solutions(problem, q, cfg, args, opts)
    rep_min = first_solution(
        problem, q, opts, certificate=certificate, force=args.force
    )
    _dump_solution(out, "solution_min", rep_min)
    _dump_solution(out, "solution_mp", mp.report)
    ordering_ok = rep_min.energy < 0.0 < mp.report.energy
    summary = {
        "schema_version": 1,
        "q": q,
        "l1": l1,
        "l2": l2,
        "l_o": l_o,
        "nu": mp.nu,
        "mu_lo": curve.annotations.get("mu_lo"),
        "energies": [rep_min.energy, mp.report.energy],
        "energy_ordering_ok": ordering_ok,
    }
    ser.write_json(out / "solve_sub.json", summary)
    if not ordering_ok:
        raise NonConvergence("energy ordering F(min) < 0 < F(mp) failed")
    return 0


def cmd_solve_critical(args) -> int:
    cfg = _load_config(args.config)
    problem, _ = _build_problem(cfg, require_f_minus=True)
    opts = _solver_options(cfg, args)
    out = _out_dir(args)
    N = problem.geometry.critical_exponent
    certificate = _gate(problem, 0.5 * (2.0 + N), opts, args.force, subcritical=False)
    ser.write_json(out / "certificate.json", ser.hypothesis_report_dict(certificate))
    trace = continue_to_critical(
        problem, opts, certificate=certificate, force=args.force
    )
    ser.write_json(out / "continuation.json", ser.continuation_trace_dict(trace))
    _dump_solution(out, "solution_critical", trace.final)
    return 0


_COMMANDS = {
    "certify": cmd_certify,
    "mu-curve": cmd_mu_curve,
    "solve-sub": cmd_solve_sub,
    "mountain-pass": cmd_mountain_pass,
    "solve-critical": cmd_solve_critical,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="path to the JSON run config")
    p.add_argument("--q", type=float, default=None, help="nonlinearity exponent")
    p.add_argument("--k-min", dest="k_min", type=float, default=None)
    p.add_argument("--k-max", dest="k_max", type=float, default=None)
    p.add_argument("--k-steps", dest="k_steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="override solver seed")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument(
        "--force",
        action="store_true",
        help="proceed even when the certificate conditions fail",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biharm",
        description=(
            "Spectral variational solver for fourth-order equations with "
            "sign-changing nonlinearity on flat unit-volume tori."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        _add_common(sub.add_parser(name))
    return parser


_ERROR_EXITS = (
    (ConfigError, _EXIT_CONFIG),
    (ExpressionError, _EXIT_CONFIG),
    (HypothesisViolated, _EXIT_HYPOTHESIS),
    (NonConvergence, _EXIT_NONCONVERGENCE),
    (ShapeNotFound, _EXIT_SHAPE),
    (Collapse, _EXIT_COLLAPSE),
    (DivergingNorms, _EXIT_NONCONVERGENCE),
    (InfeasibleConstraint, _EXIT_NUMERIC),
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except BiharmError as exc:
        code = _EXIT_NUMERIC
        for cls, mapped in _ERROR_EXITS:
            if isinstance(exc, cls):
                code = mapped
                break
        _write_error(args, exc, code)
        return code
    except (ValueError, FloatingPointError, ArithmeticError) as exc:
        _write_error(args, exc, _EXIT_NUMERIC)
        return _EXIT_NUMERIC


def _write_error(args, exc, code) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    try:
        out = Path(getattr(args, "out", ".") or ".")
        out.mkdir(parents=True, exist_ok=True)
        ser.write_json(out / "error.json", payload)
    except OSError:
        pass
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
