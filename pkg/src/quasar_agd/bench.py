"""Iterations-to-target scaling studies on the scaled chain family."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ConfigurationError
from .instances import HardInstanceScaled
from .solvers import DEFAULT_MAX_EVALS, SOLVERS

MAX_DIM = 10**5
MIN_FIT_POINTS = 4


@dataclass
class BenchRow:
    solver: str
    gamma: float
    eps: float
    T: int
    reached: bool
    iterations: Optional[int]
    fn_evals: Optional[int]
    grad_evals: Optional[int]
    termination: str


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log10 y`` against ``log10 x``."""
    x = np.log10(np.asarray(x, dtype=np.float64))
    y = np.log10(np.asarray(y, dtype=np.float64))
    if x.size < MIN_FIT_POINTS:
        raise ValueError(f"need at least {MIN_FIT_POINTS} points for a slope, got {x.size}")
    if np.ptp(x) == 0:
        raise ValueError("abscissae are all equal")
    A = np.vstack([x, np.ones_like(x)]).T
    slope, _ = np.linalg.lstsq(A, y, rcond=None)[0]
    return float(slope)


def run_point(solver: str, gamma: float, eps: float, L: float = 1.0, R: float = 1.0,
              max_evals: int = DEFAULT_MAX_EVALS) -> BenchRow:
    """Run one solver on the scaled chain instance until the gap is ``<= eps``."""
    if solver not in SOLVERS:
        raise ConfigurationError(f"unknown solver {solver!r}")
    inst = HardInstanceScaled(L, R, gamma, eps)
    if inst.T > MAX_DIM:
        raise ConfigurationError(f"instance dimension T={inst.T} exceeds the cap {MAX_DIM}")
    problem = inst.problem()
    x0 = np.zeros(inst.T)
    kw = dict(target=eps, stop_at_target=True, record=False, max_evals=max_evals)
    if solver == "agd-strong":
        raise ConfigurationError("agd-strong needs mu > 0; the chain family has mu = 0")
    if solver == "gd":
        # run until the target or the evaluation cap
        trace = SOLVERS[solver](problem, x0, K=max_evals, epsilon=eps, **kw)
    elif solver == "regularized":
        trace = SOLVERS[solver](problem, x0, R, eps, **kw)
    else:
        trace = SOLVERS[solver](problem, x0, epsilon=eps, R=R, **kw)
    hit = trace.target_hit
    return BenchRow(
        solver, gamma, eps, inst.T, hit is not None,
        hit[0] if hit else None, hit[1] if hit else None, hit[2] if hit else None,
        trace.termination_reason.value,
    )


def _run_point_args(args):
    return run_point(*args)


def _fit(rows: list[BenchRow], solver: str, vary: str) -> Optional[float]:
    fixed = "gamma" if vary == "eps" else "eps"
    groups: dict[float, list[BenchRow]] = {}
    for r in rows:
        if r.solver == solver and r.reached:
            groups.setdefault(getattr(r, fixed), []).append(r)
    best = max(groups.values(), key=len, default=[])
    xs = [getattr(r, vary) for r in best]
    if len(set(xs)) < MIN_FIT_POINTS:
        return None
    return loglog_slope(xs, [r.iterations for r in best])


def run_scaling(
    grid: Sequence[tuple[float, float]],
    solvers: Sequence[str] = ("agd-nonstrong", "gd"),
    *,
    L: float = 1.0,
    R: float = 1.0,
    max_evals: int = DEFAULT_MAX_EVALS,
    jobs: int = 1,
) -> tuple[list[BenchRow], dict]:
    """Run every solver at every ``(gamma, eps)`` point.

    Returns the rows in grid order (solver-major) and the fitted slopes of
    iterations-to-target against ``eps`` (at the most populated fixed
    ``gamma``) and against ``gamma`` (at the most populated fixed ``eps``).
    A slope is ``None`` when fewer than four distinct points are available.
    """
    if not grid:
        raise ConfigurationError("grid must be non-empty")
    tasks = [(s, float(g), float(e), L, R, max_evals) for s in solvers for g, e in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_point_args, tasks))  # map keeps input order
    else:
        rows = [_run_point_args(t) for t in tasks]
    slopes = {
        s: {"vs_eps": _fit(rows, s, "eps"), "vs_gamma": _fit(rows, s, "gamma")} for s in solvers
    }
    return rows, slopes


def rows_as_dicts(rows: list[BenchRow]) -> list[dict]:
    return [asdict(r) for r in rows]


def eps_grid(gamma: float, eps_max: float, factor: float, n: int) -> list[tuple[float, float]]:
    """``n`` points ``eps_max * factor**-j`` at fixed ``gamma``."""
    return [(gamma, eps_max * factor ** (-j)) for j in range(n)]


def gamma_grid(eps: float, gamma_max: float, factor: float, n: int) -> list[tuple[float, float]]:
    return [(gamma_max * factor ** (-j), eps) for j in range(n)]


def lower_bound_calls(T: int) -> int:
    """Gradient calls a zero-respecting method needs before the gap can drop below target."""
    return math.ceil(T / 2)
