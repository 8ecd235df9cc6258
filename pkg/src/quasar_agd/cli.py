"""Command-line front end.

Subcommands: solve, bench-scaling, linesearch-probe, verify, instance-dump.
Exit codes: 0 success, 1 malformed input, 2 a run ended on a guard.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Optional

import numpy as np

from .bench import MAX_DIM, rows_as_dicts, run_scaling
from .core import ConfigurationError, QuasarProblem, SolverTrace, TerminationReason
from .instances import HardInstanceScaled, HardInstanceUnscaled, QuadraticInstance, instance_from_spec
from .linesearch import LineSearchParams, binary_line_search, relaxed_condition_residual
from .solvers import DEFAULT_MAX_EVALS, SOLVERS
from .verify import SamplerSpec, check_quasar_inequality, estimate_gamma, smoothness_estimate

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_GUARD = 2

TRACE_COLUMNS = (
    "k", "f_gap", "grad_norm_at_y", "alpha_k", "eta_k", "linesearch_evals",
    "cum_fn_evals", "cum_grad_evals",
)


class InputError(Exception):
    """Malformed command-line input; the message names the offending field."""


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_json_arg(text: str, field: str):
    """Parse ``text`` as inline JSON, or as a path to a JSON file."""
    if text is None:
        raise InputError(f"field '{field}' is required")
    try:
        if os.path.exists(text):
            with open(text, encoding="utf-8") as fh:
                return json.load(fh)
        return json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"field '{field}': not a JSON file or inline JSON ({exc})") from None


def load_instance(text: str):
    spec = load_json_arg(text, "instance")
    try:
        inst = instance_from_spec(spec)
    except ConfigurationError as exc:
        raise InputError(f"instance: {exc}") from None
    if inst.dim > MAX_DIM:
        raise InputError(f"instance: dimension {inst.dim} exceeds the cap {MAX_DIM}")
    return inst


def build_problem(inst, solver: str) -> QuasarProblem:
    if isinstance(inst, QuadraticInstance):
        return inst.problem(strong=solver == "agd-strong")
    return inst.problem()


def trace_rows(trace: SolverTrace) -> list[dict]:
    rows = []
    for r in trace.records:
        rows.append({
            "k": r.k,
            "f_gap": r.f_gap,
            "grad_norm_at_y": r.grad_norm_at_y,
            "alpha_k": r.alpha_k,
            "eta_k": r.eta_k,
            "linesearch_evals": r.linesearch_evals,
            "cum_fn_evals": r.cumulative_fn_evals,
            "cum_grad_evals": r.cumulative_grad_evals,
        })
    return rows


def render_trace(trace: SolverTrace, fmt: str) -> str:
    rows = trace_rows(trace)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in TRACE_COLUMNS])
        return buf.getvalue()
    doc = {
        "solver": trace.meta.get("solver"),
        "termination_reason": trace.termination_reason.value,
        "iterations": trace.iterations,
        "final_f_gap": trace.final_f_gap,
        "final_fn_evals": trace.final_fn_evals,
        "final_grad_evals": trace.final_grad_evals,
        "flags": trace.flags,
        "bound_violations": trace.bound_violations,
        "rows": rows,
    }
    return json.dumps(doc, indent=1) + "\n"


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _positive(value: Optional[float], field: str) -> None:
    if value is not None and not value > 0:
        raise InputError(f"field '{field}' must be positive, got {value}")


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    solver = args.solver
    if solver not in SOLVERS:
        raise InputError(f"field 'solver' must be one of {sorted(SOLVERS)}, got {solver!r}")
    _positive(args.eps, "eps")
    _positive(args.R, "R")
    if args.iters is not None and args.iters < 0:
        raise InputError(f"field 'iters' must be non-negative, got {args.iters}")
    if args.eps is None and args.iters is None:
        raise InputError("field 'eps' is required when 'iters' is absent")
    problem = build_problem(inst, solver)
    x0 = np.zeros(problem.dim)
    R = args.R if args.R is not None else problem.R
    kw = dict(max_evals=args.max_evals)
    try:
        if solver == "agd-strong":
            trace = SOLVERS[solver](problem, x0, args.iters, args.eps, **kw)
        elif solver == "agd-nonstrong":
            if args.eps is None:
                raise InputError("field 'eps' is required for agd-nonstrong")
            trace = SOLVERS[solver](problem, x0, args.iters, args.eps, R=R, **kw)
        elif solver == "gd":
            trace = SOLVERS[solver](problem, x0, args.iters, args.eps, **kw)
        else:
            if args.eps is None:
                raise InputError("field 'eps' is required for regularized")
            trace = SOLVERS[solver](problem, x0, R, args.eps, K=args.iters, **kw)
    except ConfigurationError as exc:
        raise InputError(f"solver configuration: {exc}") from None
    _emit(render_trace(trace, args.format), args.out)
    if trace.termination_reason is TerminationReason.GUARD_TRIPPED:
        print("run ended on a guard: " + "; ".join(trace.flags), file=sys.stderr)
        return EXIT_GUARD
    return EXIT_OK


def _parse_grid(text: str) -> list[tuple[float, float]]:
    grid = load_json_arg(text, "grid")
    try:
        points = [(float(g), float(e)) for g, e in grid]
    except (TypeError, ValueError):
        raise InputError("field 'grid' must be a list of [gamma, eps] pairs") from None
    if not points:
        raise InputError("field 'grid' must be non-empty")
    return points


def cmd_bench_scaling(args) -> int:
    grid = _parse_grid(args.grid)
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    for s in solvers:
        if s not in SOLVERS or s == "agd-strong":
            raise InputError(f"field 'solvers': {s!r} cannot run on the chain family")
    try:
        rows, slopes = run_scaling(grid, solvers, L=args.L, R=args.R,
                                   max_evals=args.max_evals, jobs=args.jobs)
    except ConfigurationError as exc:
        raise InputError(f"grid: {exc}") from None
    table = rows_as_dicts(rows)
    if args.format == "csv":
        buf = io.StringIO()
        cols = list(table[0].keys())
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for row in table:
            writer.writerow([_fmt(row[c]) for c in cols])
        for s, sl in slopes.items():
            buf.write(f"# slope {s} vs_eps={_fmt(sl['vs_eps'])} vs_gamma={_fmt(sl['vs_gamma'])}\n")
        text = buf.getvalue()
    else:
        text = json.dumps({"rows": table, "slopes": slopes}, indent=1) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def _vector_arg(text: Optional[str], field: str, dim: int, rng) -> np.ndarray:
    if text is None:
        return rng.standard_normal(dim)
    data = load_json_arg(text, field)
    try:
        vec = np.asarray(data, dtype=np.float64)
    except (TypeError, ValueError):
        raise InputError(f"field '{field}' must be a list of numbers") from None
    if vec.shape != (dim,) or not np.all(np.isfinite(vec)):
        raise InputError(f"field '{field}' must hold {dim} finite numbers")
    return vec


def cmd_linesearch_probe(args) -> int:
    inst = load_instance(args.instance)
    oracle = inst.oracle()
    rng = np.random.default_rng(args.seed)
    x = _vector_arg(args.x, "x", inst.dim, rng)
    v = _vector_arg(args.v, "v", inst.dim, rng)
    L = args.L if args.L is not None else build_problem(inst, "agd-nonstrong").L
    try:
        params = LineSearchParams(x, v, L, args.b, args.c, args.eps_tilde)
    except ValueError as exc:
        raise InputError(f"line-search parameters: {exc}") from None
    out = binary_line_search(params, oracle)
    evals_used = oracle.counts
    residual = relaxed_condition_residual(oracle.fresh(), params, out.alpha)
    report = {
        "alpha": out.alpha,
        "branch": out.branch,
        "evals": out.evals,
        "oracle_calls": {"fn": evals_used[0], "grad": evals_used[1]},
        "bound": out.bound if math.isfinite(out.bound) else None,  # null: no finite budget
        "residual": residual,
        "seed": args.seed,
    }
    _emit(json.dumps(report, indent=1) + "\n", args.out)
    return EXIT_GUARD if not out.accepted else EXIT_OK


def cmd_verify(args) -> int:
    inst = load_instance(args.instance)
    if args.samples < 1:
        raise InputError(f"field 'samples' must be positive, got {args.samples}")
    oracle = inst.oracle()
    x_star = inst.x_star
    is_chain = isinstance(inst, (HardInstanceScaled, HardInstanceUnscaled))
    mu = inst.mu if isinstance(inst, QuadraticInstance) else 0.0
    if isinstance(inst, HardInstanceScaled):
        # uniform chain coordinates, mapped to the scaled variables
        scale = inst.R / np.sqrt(inst.T)
        sampler = SamplerSpec(args.samples, args.seed, -2.0 * scale, 3.0 * scale)
    elif is_chain:
        sampler = SamplerSpec(args.samples, args.seed, transition_fraction=0.3)
    else:
        sampler = SamplerSpec(args.samples, args.seed, -3.0, 3.0, relative=True)
    declared = inst.certified_gamma
    cert = estimate_gamma(oracle, x_star, mu, sampler, f_star=inst.f_star)
    L_decl = build_problem(inst, "agd-strong").L
    smooth = smoothness_estimate(oracle, sampler, L=L_decl, center=x_star)
    violations = []
    if declared is not None:
        rep = check_quasar_inequality(oracle, x_star, declared, mu, sampler, f_star=inst.f_star)
        violations += [{"kind": "quasar", "sample": i} for i in rep.violations]
    violations += [{"kind": "descent", "sample": i} for i in smooth.descent_violations]
    report = {
        "gamma_hat": cert.gamma_hat,
        "declared_gamma": declared,
        "L_hat": smooth.L_hat,
        "declared_L": L_decl,
        "violations": violations,
        "samples": args.samples,
        "seed": args.seed,
    }
    _emit(json.dumps(report, indent=1) + "\n", args.out)
    return EXIT_OK


def cmd_instance_dump(args) -> int:
    inst = load_instance(args.instance)
    _emit(json.dumps(inst.to_spec(), indent=1, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quasar-agd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, instance=True):
        if instance:
            p.add_argument("--instance", required=True, help="instance JSON: path or inline")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output path (default: stdout)")

    p = sub.add_parser("solve", help="run a solver and write its trace")
    common(p)
    p.add_argument("--solver", required=True, choices=sorted(SOLVERS))
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--R", type=float, default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--max-evals", type=int, default=DEFAULT_MAX_EVALS)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench-scaling", help="iterations-to-eps over a (gamma, eps) grid")
    common(p, instance=False)
    p.add_argument("--grid", required=True, help="JSON list of [gamma, eps] pairs: path or inline")
    p.add_argument("--solvers", default="agd-nonstrong,gd")
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--max-evals", type=int, default=DEFAULT_MAX_EVALS)
    p.set_defaults(func=cmd_bench_scaling)

    p = sub.add_parser("linesearch-probe", help="run one momentum line search")
    common(p)
    p.add_argument("--x", default=None, help="JSON list; random if omitted")
    p.add_argument("--v", default=None, help="JSON list; random if omitted")
    p.add_argument("--L", type=float, default=None)
    p.add_argument("--b", type=float, default=0.0)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--eps-tilde", type=float, default=0.0)
    p.set_defaults(func=cmd_linesearch_probe)

    p = sub.add_parser("verify", help="sampled quasar-convexity and smoothness report")
    common(p)
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("instance-dump", help="write the normalized instance JSON")
    common(p)
    p.set_defaults(func=cmd_instance_dump)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; usage errors are input errors here
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
