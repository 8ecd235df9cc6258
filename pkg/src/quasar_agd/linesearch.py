"""Binary search for the momentum parameter.

Finds ``alpha`` in [0, 1] with

    alpha*g'(alpha) - alpha**2 * b*||x - v||**2 <= c*(g(1) - g(alpha)) + eps_tilde

where ``g(alpha) = f(alpha*x + (1 - alpha)*v)``, without assuming ``g`` convex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import DifferentiableOracle, as_vector

EARLY_ONE = "early-one"
EARLY_ZERO = "early-zero"
BISECTION = "bisection"
GUARD = "guard"

# loop cap used only when neither b nor eps_tilde gives a finite bound
_UNBOUNDED_LOOP_CAP = 1100
_EXTRA_LOOP_ITERS = 10


@dataclass(frozen=True)
class LineSearchParams:
    x: np.ndarray
    v: np.ndarray
    L: float
    b: float = 0.0
    c: float = 0.0
    eps_tilde: float = 0.0

    def __post_init__(self):
        for name in ("b", "c", "eps_tilde"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {val}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"L must be positive, got {self.L}")
        x = as_vector(self.x)
        v = as_vector(self.v, x.size)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def dist2(self) -> float:
        d = self.x - self.v
        return float(d @ d)


@dataclass
class LineSearchOutcome:
    alpha: float
    evals: int
    branch: str
    # alpha*g'(alpha) - alpha^2 p - c(g(1) - g(alpha)) - eps_tilde; <= 0 means accepted
    residual: float
    bound: float
    g1: Optional[float] = None
    g_alpha: Optional[float] = None
    loops: int = 0
    intervals: list[tuple[float, float]] = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return self.branch != GUARD


class Segment:
    """The restriction ``g(alpha) = f(alpha*x + (1 - alpha)*v)``.

    A ``(g, g')`` query costs one combined oracle call; ``value`` costs a
    function evaluation only.
    """

    def __init__(self, oracle: DifferentiableOracle, x: np.ndarray, v: np.ndarray):
        self.oracle = oracle
        self.x = as_vector(x, oracle.dim)
        self.v = as_vector(v, oracle.dim)
        self.direction = self.x - self.v

    def point(self, alpha: float) -> np.ndarray:
        return alpha * self.x + (1.0 - alpha) * self.v

    def __call__(self, alpha: float) -> tuple[float, float]:
        value, grad = self.oracle(self.point(alpha))
        return value, float(grad @ self.direction)

    def value(self, alpha: float) -> float:
        return self.oracle.value(self.point(alpha))


def restrict_to_segment(oracle: DifferentiableOracle, x, v) -> Segment:
    return Segment(oracle, x, v)


def log2_plus(z: float) -> float:
    if z <= 0:
        return 1.0
    return max(math.log2(z), 1.0)


def bisection_budget(L: float, b: float, c: float, eps_tilde: float, dist2: float) -> float:
    """Maximum number of bisection steps; ``inf`` when no operand is finite."""
    operands = []
    if b > 0:
        operands.append((L / b) ** 3)
    if eps_tilde > 0:
        operands.append(L * dist2 / eps_tilde)
    if not operands:
        return math.inf
    return math.ceil(log2_plus((1.0 + c / 2.0) * min(operands)))


def evaluation_bound(L: float, b: float, c: float, eps_tilde: float, dist2: float) -> float:
    """Worst-case number of value and derivative queries of one search."""
    return 5 + 2 * bisection_budget(L, b, c, eps_tilde, dist2)


def binary_line_search(
    params: LineSearchParams,
    oracle: DifferentiableOracle,
    *,
    fx: Optional[float] = None,
    gx: Optional[np.ndarray] = None,
    record_intervals: bool = False,
) -> LineSearchOutcome:
    """Run the binary line search.

    ``fx``/``gx`` may carry an already computed ``f(x)`` and gradient at ``x``;
    they stand in for ``g(1)`` and ``g'(1)``. ``evals`` counts every value and
    every directional derivative consumed, cached or not, so that it is
    comparable with :func:`evaluation_bound`. When ``x == v`` the derivative is
    identically zero and nothing is consumed.
    """
    L, b, c, eps_t = params.L, params.b, params.c, params.eps_tilde
    dist2 = params.dist2
    bound = evaluation_bound(L, b, c, eps_t, dist2)
    p = b * dist2
    seg = Segment(oracle, params.x, params.v)

    if dist2 == 0.0:
        return LineSearchOutcome(1.0, 0, EARLY_ONE, -eps_t, bound)

    if fx is not None and gx is not None:
        g1, dg1 = float(fx), float(np.asarray(gx) @ seg.direction)
    else:
        g1, dg1 = seg(1.0)
    evals = 2

    if dg1 <= eps_t + p:
        return LineSearchOutcome(1.0, evals, EARLY_ONE, dg1 - p - eps_t, bound, g1, g1)

    if c == 0:
        return LineSearchOutcome(0.0, evals, EARLY_ZERO, -eps_t, bound, g1)
    g0 = seg.value(0.0)
    evals += 1
    if g0 <= g1 + eps_t / c:
        return LineSearchOutcome(0.0, evals, EARLY_ZERO, c * (g0 - g1) - eps_t, bound, g1, g0)

    Lhat = L * dist2
    assert Lhat > 0
    # tau < 0 only if the declared L understates the smoothness of f on this segment
    tau = max(1.0 - (eps_t + p) / Lhat, 0.0)

    rhs = c * g1 + eps_t

    def excess(a: float, ga: float, dga: float) -> float:
        return c * ga + a * (dga - a * p) - rhs

    budget = bisection_budget(L, b, c, eps_t, dist2)
    max_loops = _UNBOUNDED_LOOP_CAP if math.isinf(budget) else int(budget) + _EXTRA_LOOP_ITERS

    lo, hi, alpha = 0.0, tau, tau
    g_tau, dg_tau = seg(tau)
    evals += 2
    g_a, dg_a = g_tau, dg_tau
    intervals = [(lo, hi)] if record_intervals else []
    loops = 0
    while excess(alpha, g_a, dg_a) > 0:
        if loops >= max_loops:
            return LineSearchOutcome(
                alpha, evals, GUARD, excess(alpha, g_a, dg_a), bound, g1, g_a, loops, intervals
            )
        alpha = (lo + hi) / 2.0
        g_a, dg_a = seg(alpha)
        evals += 2
        loops += 1
        if g_a <= g_tau:
            hi = alpha
        else:
            lo = alpha
        if record_intervals:
            intervals.append((lo, hi))
    return LineSearchOutcome(
        alpha, evals, BISECTION, excess(alpha, g_a, dg_a), bound, g1, g_a, loops, intervals
    )


def relaxed_condition_residual(
    oracle: DifferentiableOracle, params: LineSearchParams, alpha: float
) -> float:
    """Independent re-evaluation of the acceptance condition at ``alpha``.

    Costs up to two oracle calls; meant for tests and probes, not solvers.
    """
    seg = Segment(oracle, params.x, params.v)
    g1 = oracle.value(params.x)
    ga, dga = seg(alpha)
    p = params.b * params.dist2
    return alpha * dga - alpha**2 * p - params.c * (g1 - ga) - params.eps_tilde
