"""Accelerated first-order methods for (strongly) quasar-convex objectives.

All methods are instances of one momentum framework:

    y      = alpha*x + (1 - alpha)*v
    x_next = y - grad f(y) / L
    v_next = beta*v + (1 - beta)*y - eta*grad f(y)

They differ only in ``beta``, the ``eta`` schedule and how ``alpha`` is chosen.
Runs are terminated by iteration count; ``x*``/``f*`` are used for
diagnostics only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    ConfigurationError,
    DifferentiableOracle,
    IterateRecord,
    OracleError,
    QuasarProblem,
    SolverTrace,
    TerminationReason,
    as_vector,
)
from .linesearch import GUARD, LineSearchOutcome, LineSearchParams, binary_line_search

DIVERGENCE_FACTOR = 1e6
DEFAULT_MAX_EVALS = 10**8
CONTRACTION_SLACK = 1e-10
ERROR_BOUND_SLACK = 1e-10


class OmegaSequence:
    """Memoized ``omega(-1) = 1``, ``omega(k) = w(sqrt(w^2 + 4) - w) / 2`` with ``w = omega(k-1)``."""

    def __init__(self):
        self._values = [1.0]  # index j holds omega(j - 1)

    def __len__(self) -> int:
        return len(self._values) - 1

    def extend_to(self, k: int) -> None:
        vals = self._values
        w = vals[-1]
        sqrt = math.sqrt
        for _ in range(k + 2 - len(vals)):
            w = 0.5 * w * (sqrt(w * w + 4.0) - w)
            vals.append(w)

    def __getitem__(self, k: int) -> float:
        if k < -1:
            raise IndexError(f"omega is defined for k >= -1, got {k}")
        self.extend_to(k)
        return self._values[k + 1]

    def values(self, k_max: int) -> np.ndarray:
        """``omega(0..k_max)`` as an array."""
        self.extend_to(k_max)
        return np.array(self._values[1 : k_max + 2])


_OMEGA = OmegaSequence()


def omega(k: int) -> float:
    return _OMEGA[k]


def log_plus(z: float) -> float:
    """``max(log z, 1)`` with the natural logarithm; 1 for non-positive ``z``."""
    if z <= 0:
        return 1.0
    return max(math.log(z), 1.0)


def strong_iteration_budget(kappa: float, gamma: float, eps0: float, epsilon: float) -> int:
    return math.ceil(math.sqrt(kappa) / gamma * log_plus(3.0 * eps0 / (gamma * epsilon)))


def nonstrong_iteration_budget(L: float, R: float, gamma: float, epsilon: float) -> int:
    # nudge before flooring so that exact products are not lost to rounding
    raw = 4.0 / gamma * math.sqrt(L) * R / math.sqrt(epsilon)
    return math.floor(raw * (1 + 1e-12))


@dataclass
class FrameworkConfig:
    """One instance of the momentum framework.

    ``eta_schedule(k)`` gives the step for ``v``; ``alpha_rule(k, x, v, fx, gx)``
    returns ``(alpha, LineSearchOutcome or None)``.
    """

    beta: float
    eta_schedule: Callable[[int], float]
    alpha_rule: Callable
    K: Optional[int]
    name: str = "agd"
    # derives K from f(x0) when K is None; lets the budget use the first evaluation
    budget_from_f0: Optional[Callable[[float], int]] = None

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigurationError(f"beta must lie in [0, 1], got {self.beta}")
        if self.K is None:
            if self.budget_from_f0 is None:
                raise ConfigurationError("iteration budget K is required")
        elif self.K < 0 or int(self.K) != self.K:
            raise ConfigurationError(f"iteration budget must be a non-negative integer, got {self.K}")
        else:
            self.K = int(self.K)


def constant_alpha(value: float = 1.0):
    def rule(k, x, v, fx, gx):
        return value, None

    return rule


def _step(problem, x, v, beta, eta_k, alpha_k, fx_cache):
    oracle = problem.oracle
    if alpha_k == 1.0:
        y = x
        fy, gy = fx_cache if fx_cache is not None else oracle(y)
    else:
        y = alpha_k * x + (1.0 - alpha_k) * v
        fy, gy = oracle(y)
    x_new = y - gy / problem.L
    v_new = beta * v + (1.0 - beta) * y - eta_k * gy
    return x_new, v_new, y, fy, gy


def agd_step(
    problem: QuasarProblem,
    x: np.ndarray,
    v: np.ndarray,
    k: int,
    beta: float,
    eta_k: float,
    alpha_k: float,
    fx_cache: Optional[tuple[float, np.ndarray]] = None,
) -> tuple[np.ndarray, np.ndarray, IterateRecord]:
    """One framework step from ``(x, v)``.

    Makes exactly one oracle call at ``y``, or none when ``alpha_k == 1`` and
    ``fx_cache`` already holds ``(f(x), grad f(x))``.
    """
    if not 0.0 <= alpha_k <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha_k}")
    if eta_k < problem.gamma / problem.L * (1 - 1e-12):
        raise ValueError(f"eta={eta_k} is below gamma/L={problem.gamma / problem.L}")
    x_new, v_new, y, fy, gy = _step(problem, x, v, beta, eta_k, alpha_k, fx_cache)
    fn, gn = problem.oracle.counts
    record = IterateRecord(
        k=k,
        fx=fx_cache[0] if fx_cache is not None else fy if alpha_k == 1.0 else float("nan"),
        alpha_k=alpha_k,
        eta_k=eta_k,
        grad_norm_at_y=float(np.linalg.norm(gy)),
        cumulative_fn_evals=fn,
        cumulative_grad_evals=gn,
        x=x,
        v=v,
        y=y,
    )
    return x_new, v_new, record


def _quasar_violated(problem: QuasarProblem, y: np.ndarray, fy: float, gy: np.ndarray) -> bool:
    d = problem.x_star - y
    rhs = fy + float(gy @ d) / problem.gamma + 0.5 * problem.mu * float(d @ d)
    scale = max(1.0, abs(fy), abs(problem.f_star))
    return problem.f_star < rhs - 1e-10 * scale


def run_framework(
    problem: QuasarProblem,
    x0,
    config: FrameworkConfig,
    *,
    target: Optional[float] = None,
    stop_at_target: bool = False,
    record: bool = True,
    store_iterates: bool = False,
    max_evals: int = DEFAULT_MAX_EVALS,
    check_quasar: bool = False,
    bound_check: Optional[Callable[[IterateRecord, IterateRecord, IterateRecord], bool]] = None,
    gap_fn: Optional[Callable[[np.ndarray, float], float]] = None,
) -> SolverTrace:
    """Run the framework for ``config.K`` steps from ``x0 = v0``.

    Each new ``x`` is evaluated once; the value and gradient are reused by the
    next line search and, when ``alpha == 1``, as the step's gradient.
    ``gap_fn(x, f(x))`` overrides the objective gap reported as ``f_gap`` and
    used against ``target`` (the default is ``f(x) - f*``).
    ``bound_check(first, previous, current)`` returns False when a per-iteration
    guarantee fails; the index is then listed in ``trace.bound_violations``.
    With ``record=False`` only the final record is kept.
    """
    oracle = problem.oracle
    x = as_vector(x0, oracle.dim).copy()
    v = x.copy()
    has_f = problem.f_star is not None
    has_x = problem.x_star is not None
    mu = problem.mu

    records: list[IterateRecord] = []
    flags: list[str] = []
    bound_violations: list[int] = []
    quasar_violations: list[int] = []
    target_hit = None
    reason = TerminationReason.ITERATION_BUDGET
    first: Optional[IterateRecord] = None
    prev: Optional[IterateRecord] = None
    eps0 = None

    try:
        fx, gx = oracle(x)
    except OracleError as exc:
        flags.append(f"oracle error at x0: {exc}")
        return SolverTrace([], x, TerminationReason.GUARD_TRIPPED, 0, *oracle.counts, target, None, flags)
    K = config.K if config.K is not None else config.budget_from_f0(fx)

    k = 0
    while True:
        fn, gn = oracle.counts
        rec = IterateRecord(k=k, fx=fx, cumulative_fn_evals=fn, cumulative_grad_evals=gn)
        if has_f:
            rec.eps_k = fx - problem.f_star
        if has_x:
            d = v - problem.x_star
            rec.r_k = float(d @ d)
        if rec.eps_k is not None and rec.r_k is not None:
            rec.potential = rec.eps_k + 0.5 * mu * rec.r_k
        if gap_fn is not None:
            rec.f_gap = gap_fn(x, fx)
        else:
            rec.f_gap = rec.eps_k
        if store_iterates:
            rec.x, rec.v = x.copy(), v.copy()
        if first is None:
            first = rec
            eps0 = rec.eps_k
        if bound_check is not None and prev is not None and not bound_check(first, prev, rec):
            bound_violations.append(k)
        if record:
            records.append(rec)
        prev = rec

        if target is not None and rec.f_gap is not None and target_hit is None and rec.f_gap <= target:
            target_hit = (k, fn, gn)
            if stop_at_target:
                reason = TerminationReason.TARGET_REACHED
                break
        if eps0 is not None and eps0 > 0 and rec.eps_k > DIVERGENCE_FACTOR * eps0:
            flags.append(f"divergence at k={k}: gap {rec.eps_k:.6g} exceeds {DIVERGENCE_FACTOR:g} x initial gap")
            reason = TerminationReason.GUARD_TRIPPED
            break
        if k >= K:
            break
        if max(fn, gn) >= max_evals:
            flags.append(f"evaluation cap {max_evals} reached at k={k}")
            break

        try:
            alpha, outcome = config.alpha_rule(k, x, v, fx, gx)
            if outcome is not None:
                rec.linesearch_evals = outcome.evals
                rec.linesearch_branch = outcome.branch
                if outcome.branch == GUARD:
                    flags.append(f"line-search guard at k={k}")
            alpha = min(max(alpha, 0.0), 1.0)
            eta = config.eta_schedule(k)
            if eta < problem.gamma / problem.L * (1 - 1e-12):
                raise ConfigurationError(f"eta={eta} at k={k} is below gamma/L")
            x_new, v_new, y, fy, gy = _step(problem, x, v, config.beta, eta, alpha, (fx, gx))
            rec.alpha_k, rec.eta_k = alpha, eta
            rec.grad_norm_at_y = math.sqrt(float(gy @ gy))
            if store_iterates:
                rec.y = y.copy()
            if check_quasar and problem.has_optimum and _quasar_violated(problem, y, fy, gy):
                quasar_violations.append(k)
            if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(v_new))):
                raise OracleError(f"non-finite iterate at k={k + 1}")
            fx, gx = oracle(x_new)
        except OracleError as exc:
            flags.append(f"guard: {exc}")
            reason = TerminationReason.GUARD_TRIPPED
            break
        x, v = x_new, v_new
        k += 1

    if not record:
        records.append(prev)
    fn, gn = oracle.counts
    return SolverTrace(
        records=records,
        final_point=x,
        termination_reason=reason,
        iterations=k,
        final_fn_evals=fn,
        final_grad_evals=gn,
        target=target,
        target_hit=target_hit,
        flags=flags,
        bound_violations=bound_violations,
        quasar_violations=quasar_violations,
        final_f_gap=prev.f_gap,
        meta={"solver": config.name, "K": K, "beta": config.beta},
    )


def _linesearch_rule(problem: QuasarProblem, b_of_k, c_of_k, eps_tilde: float):
    L, oracle = problem.L, problem.oracle

    def rule(k, x, v, fx, gx):
        params = LineSearchParams(x, v, L, b_of_k(k), c_of_k(k), eps_tilde)
        out: LineSearchOutcome = binary_line_search(params, oracle, fx=fx, gx=gx)
        return out.alpha, out

    return rule


def solve_strongly_qc(
    problem: QuasarProblem,
    x0,
    K: Optional[int] = None,
    epsilon: Optional[float] = None,
    *,
    eps0_bound: Optional[float] = None,
    **run_kw,
) -> SolverTrace:
    """Accelerated method for ``(gamma, mu)``-strongly quasar-convex ``f`` with ``mu > 0``.

    When ``K`` is omitted it is derived from ``epsilon`` and an upper bound on
    the initial gap (``eps0_bound``, or the exact gap when ``f*`` is known).
    With ``x*``/``f*`` known, the potential contraction is checked per step.
    """
    L, gamma, mu = problem.L, problem.gamma, problem.mu
    if mu <= 0:
        raise ConfigurationError("mu must be positive here; use solve_nonstrong_qc for mu = 0")
    if epsilon is not None and not epsilon > 0:
        raise ConfigurationError(f"epsilon must be positive, got {epsilon}")
    kappa = L / mu
    beta = max(1.0 - gamma * math.sqrt(mu / L), 0.0)
    eta = 1.0 / math.sqrt(mu * L)
    budget_from_f0 = None
    if K is None:
        if epsilon is None:
            raise ConfigurationError("either K or epsilon must be given")
        if eps0_bound is not None:
            if not eps0_bound >= 0:
                raise ConfigurationError(f"initial gap bound must be non-negative, got {eps0_bound}")
            K = strong_iteration_budget(kappa, gamma, eps0_bound, epsilon)
        elif problem.f_star is not None:
            f_star = problem.f_star

            def budget_from_f0(f0):
                return strong_iteration_budget(kappa, gamma, f0 - f_star, epsilon)
        else:
            raise ConfigurationError(
                "iteration budget needs K, or epsilon with an initial-gap bound or a known f*"
            )

    if beta > 0:
        b = (1.0 - beta) / (2.0 * eta)
        c = (L * eta - gamma) / beta
        alpha_rule = _linesearch_rule(problem, lambda k: b, lambda k: c, 0.0)
    else:
        alpha_rule = constant_alpha(1.0)
    config = FrameworkConfig(beta, lambda k: eta, alpha_rule, K, "agd-strong", budget_from_f0)

    rate = 1.0 - gamma / math.sqrt(kappa)

    def contraction(first, prev, cur):
        if prev.potential is None:
            return True
        return cur.potential <= rate * prev.potential + CONTRACTION_SLACK * first.potential

    run_kw.setdefault("target", epsilon)
    trace = run_framework(problem, x0, config, bound_check=contraction, **run_kw)
    trace.meta.update({"eta": eta, "kappa": kappa, "epsilon": epsilon, "contraction": rate})
    return trace


def solve_nonstrong_qc(
    problem: QuasarProblem,
    x0,
    K: Optional[int] = None,
    epsilon: Optional[float] = None,
    *,
    R: Optional[float] = None,
    **run_kw,
) -> SolverTrace:
    """Accelerated method for ``gamma``-quasar-convex ``f``.

    ``K`` defaults to ``floor(4 sqrt(L) R / (gamma sqrt(epsilon)))`` with ``R``
    taken from the argument or the problem. With ``x*``/``f*`` known, the
    per-iteration error bound is checked.
    """
    L, gamma = problem.L, problem.gamma
    if epsilon is None or not epsilon > 0:
        raise ConfigurationError(f"epsilon must be positive, got {epsilon}")
    R = R if R is not None else problem.R
    if K is None:
        if R is None:
            raise ConfigurationError("either K or R must be given")
        K = nonstrong_iteration_budget(L, R, gamma, epsilon)
    omegas = OmegaSequence()

    def eta_of(k):
        return gamma / (L * omegas[k])

    alpha_rule = _linesearch_rule(problem, lambda k: 0.0, lambda k: L * eta_of(k) - gamma, gamma * epsilon / 2.0)
    config = FrameworkConfig(1.0, eta_of, alpha_rule, K, name="agd-nonstrong")
    lead = L / (2.0 * gamma**2)

    def error_bound(first, prev, cur):
        if cur.eps_k is None or first.r_k is None:
            return True
        bound = 8.0 / (cur.k + 2) ** 2 * (first.eps_k + lead * first.r_k) + epsilon / 2.0
        return cur.eps_k <= bound * (1 + ERROR_BOUND_SLACK)

    run_kw.setdefault("target", epsilon)
    trace = run_framework(problem, x0, config, bound_check=error_bound, **run_kw)
    trace.meta.update({"epsilon": epsilon, "R": R})
    return trace


def solve_gd(
    problem: QuasarProblem,
    x0,
    K: Optional[int] = None,
    epsilon: Optional[float] = None,
    **run_kw,
) -> SolverTrace:
    """Gradient descent with step ``1/L``; one oracle call per iteration."""
    if K is None:
        if epsilon is None or problem.R is None:
            raise ConfigurationError("gradient descent needs K, or epsilon together with R")
        # O(L R^2 / (gamma epsilon)) iterations suffice for quasar-convex f
        K = math.ceil(problem.L * problem.R**2 / (problem.gamma * epsilon))
    L = problem.L
    config = FrameworkConfig(0.0, lambda k: 1.0 / L, constant_alpha(1.0), K, name="gd")
    run_kw.setdefault("target", epsilon)
    return run_framework(problem, x0, config, **run_kw)


class RegularizedOracle(DifferentiableOracle):
    """``g(x) = f(x) + (lam/2)||x - x0||^2``; every call is charged to the base oracle."""

    def __init__(self, base: DifferentiableOracle, lam: float, center: np.ndarray):
        # the counters live on ``base``; DifferentiableOracle.__init__ would reset them
        self.base = base
        self.lam = float(lam)
        self.center = as_vector(center, base.dim).copy()
        self.dim = base.dim
        self.fun = None
        self.batch_fun = None
        self.name = f"regularized({base.name})"

    @property
    def fn_evals(self) -> int:
        return self.base.fn_evals

    @property
    def grad_evals(self) -> int:
        return self.base.grad_evals

    def reset_counters(self) -> None:
        self.base.reset_counters()

    def fresh(self) -> "RegularizedOracle":
        return RegularizedOracle(self.base.fresh(), self.lam, self.center)

    def penalty(self, x: np.ndarray) -> float:
        d = x - self.center
        return 0.5 * self.lam * float(d @ d)

    def __call__(self, x):
        x = as_vector(x, self.dim)
        fv, gv = self.base(x)
        return fv + self.penalty(x), gv + self.lam * (x - self.center)

    def value(self, x):
        x = as_vector(x, self.dim)
        return self.base.value(x) + self.penalty(x)

    def batch(self, X):
        vals, grads = self.base.batch(X)
        D = np.asarray(X, dtype=np.float64) - self.center
        return vals + 0.5 * self.lam * np.sum(D * D, axis=1), grads + self.lam * D


def solve_via_regularization(
    problem: QuasarProblem,
    x0,
    R: Optional[float] = None,
    epsilon: Optional[float] = None,
    *,
    K: Optional[int] = None,
    eps0_bound: Optional[float] = None,
    **run_kw,
) -> SolverTrace:
    """Minimize a ``gamma``-quasar-convex ``f`` through a strongly quasar-convex proxy.

    Runs the strongly quasar-convex method to accuracy ``epsilon/2`` on
    ``g = f + epsilon/(2R^2) ||x - x0||^2``, whose condition number is
    ``1 + L R^2 / epsilon``. Records carry the gap of ``g`` in ``eps_k`` and the
    gap of ``f`` in ``f_gap`` (recovered exactly from ``g``; no extra calls).
    """
    R = R if R is not None else problem.R
    if R is None or not R > 0:
        raise ConfigurationError(f"R must be positive, got {R}")
    if epsilon is None or not epsilon > 0:
        raise ConfigurationError(f"epsilon must be positive, got {epsilon}")
    x0 = as_vector(x0, problem.dim)
    lam = epsilon / R**2
    reg = RegularizedOracle(problem.oracle, lam, x0)
    x_star = problem.x_star
    f_star_g = None
    if problem.has_optimum:
        f_star_g = problem.f_star + reg.penalty(x_star)
    inner = QuasarProblem(reg, problem.L + lam, problem.gamma, lam, R, x_star, f_star_g)
    if K is None and eps0_bound is None and f_star_g is None:
        # g(x0) - g(x*) <= f(x0) - f* <= L R^2 / 2
        eps0_bound = problem.L * R**2 / 2.0

    gap_fn = None
    if problem.f_star is not None:
        f_star = problem.f_star

        def gap_fn(x, gx_value):
            return gx_value - reg.penalty(x) - f_star

    run_kw.setdefault("target", epsilon)
    trace = solve_strongly_qc(
        inner, x0, K, epsilon / 2.0, eps0_bound=eps0_bound, gap_fn=gap_fn, **run_kw
    )
    trace.meta.update({"solver": "regularized", "lambda": lam, "inner_kappa": inner.kappa,
                       "epsilon": epsilon})
    return trace


SOLVERS = {
    "agd-strong": solve_strongly_qc,
    "agd-nonstrong": solve_nonstrong_qc,
    "gd": solve_gd,
    "regularized": solve_via_regularization,
}
