"""Sampling-based certificates: quasar-convexity, smoothness, structural facts
and zero-respecting instrumentation.

Everything here certifies a property on the sampled set only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DifferentiableOracle, QuasarProblem, as_vector

DEN_TOL = 1e-14
PREFIX_TOL = 0.0  # chain objectives produce exact zeros; any nonzero counts
_CHUNK_ENTRIES = 4_000_000  # rows * dim per batch call


@dataclass(frozen=True)
class SamplerSpec:
    """I.i.d. uniform coordinates on ``[low, high]``, optionally shifted by a center.

    ``transition_fraction`` of the samples (chain objectives only) are replaced
    by plateau-then-ramp vectors, see :func:`transition_samples`.
    """

    count: int
    seed: int = 0
    low: float = -2.0
    high: float = 3.0
    relative: bool = False
    transition_fraction: float = 0.0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("sample count must be positive")
        if not self.low < self.high:
            raise ValueError("need low < high")
        if not 0.0 <= self.transition_fraction <= 1.0:
            raise ValueError("transition_fraction must lie in [0, 1]")


def transition_samples(T: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Vectors whose leading block sits near the optimum (>= 0.9), followed by a
    descending ramp to <= 0.1 and a tail that is either exactly zero or near
    the origin."""
    X = np.empty((count, T))
    for row in range(count):
        start = int(rng.integers(0, T))
        ramp = int(rng.integers(1, max(2, T - start) + 1))
        stop = min(T, start + ramp)
        X[row, :start] = rng.uniform(0.9, 1.3, start)
        hi, lo = rng.uniform(0.9, 1.0), rng.uniform(-0.1, 0.1)
        X[row, start:stop] = np.linspace(hi, lo, stop - start)
        if rng.random() < 0.5:
            X[row, stop:] = 0.0
        else:
            X[row, stop:] = rng.uniform(-0.3, 0.1, T - stop)
    return X


def sample_points(spec: SamplerSpec, dim: int, center: Optional[np.ndarray] = None) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    n_trans = int(round(spec.transition_fraction * spec.count))
    X = rng.uniform(spec.low, spec.high, size=(spec.count - n_trans, dim))
    if spec.relative and center is not None:
        X += center
    if n_trans:
        X = np.vstack([X, transition_samples(dim, n_trans, rng)])
    return X


def _batched(oracle: DifferentiableOracle, X: np.ndarray):
    step = max(1, _CHUNK_ENTRIES // max(1, X.shape[1]))
    for start in range(0, X.shape[0], step):
        chunk = X[start : start + step]
        vals, grads = oracle.batch(chunk)
        yield start, chunk, vals, grads


def _f_star(oracle: DifferentiableOracle, x_star: np.ndarray, f_star: Optional[float]) -> float:
    return oracle(x_star)[0] if f_star is None else float(f_star)


@dataclass
class QuasarCertificate:
    """Largest ``gamma`` in ``(0, 1]`` consistent with every sample.

    ``gamma_hat == 0`` means some sample admits no ``gamma`` at all.
    """

    gamma_hat: float
    witnesses: list[tuple[np.ndarray, float]]
    sample_count: int
    seed: Optional[int]

    @property
    def certified(self) -> bool:
        return self.gamma_hat > 0


def per_sample_gamma(num: np.ndarray, den: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Supremum of ``gamma in (0, 1]`` with ``num >= gamma * den`` (0 if none).

    ``num = grad f(x)^T (x - x*)`` and ``den = f(x) - f* + mu/2 ||x - x*||^2``.
    """
    tol = DEN_TOL * scale
    g = np.ones_like(num)
    pos = den > tol
    with np.errstate(divide="ignore", invalid="ignore"):
        g[pos] = np.clip(num[pos] / den[pos], 0.0, 1.0)
    flat = np.abs(den) <= tol
    g[flat & (num < -tol)] = 0.0
    neg = den < -tol
    g[neg & (num < den)] = 0.0  # would need gamma > 1
    return g


def estimate_gamma(
    oracle: DifferentiableOracle,
    x_star,
    mu: float = 0.0,
    sampler: Optional[SamplerSpec] = None,
    *,
    points: Optional[np.ndarray] = None,
    f_star: Optional[float] = None,
    n_witnesses: int = 5,
    value_tol: float = 1e-12,
) -> QuasarCertificate:
    """Empirical quasar-convexity parameter with respect to ``x_star``."""
    x_star = as_vector(x_star, oracle.dim)
    if points is None:
        if sampler is None:
            raise ValueError("need a sampler spec or explicit points")
        points = sample_points(sampler, oracle.dim, x_star)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    fs = _f_star(oracle, x_star, f_star)
    gammas = np.empty(points.shape[0])
    for start, X, vals, grads in _batched(oracle, points):
        D = X - x_star
        if np.any(vals < fs - value_tol * max(1.0, abs(fs))):
            bad = start + int(np.argmin(vals))
            raise ValueError(
                f"sample {bad} has f = {vals.min():.6g} below f(x_star) = {fs:.6g}; x_star is not a minimizer"
            )
        num = np.einsum("ij,ij->i", grads, D)
        den = vals - fs + 0.5 * mu * np.einsum("ij,ij->i", D, D)
        scale = np.maximum(1.0, np.maximum(np.abs(vals), np.abs(num)))
        gammas[start : start + X.shape[0]] = per_sample_gamma(num, den, scale)
    order = np.argsort(gammas, kind="stable")[:n_witnesses]
    witnesses = [(points[i].copy(), float(gammas[i])) for i in order]
    return QuasarCertificate(
        float(gammas.min()), witnesses, points.shape[0], sampler.seed if sampler else None
    )


@dataclass
class InequalityReport:
    checked: int
    violations: list[int]
    worst_margin: float

    @property
    def passed(self) -> bool:
        return not self.violations


def check_quasar_inequality(
    oracle: DifferentiableOracle,
    x_star,
    gamma: float,
    mu: float = 0.0,
    sampler: Optional[SamplerSpec] = None,
    *,
    points: Optional[np.ndarray] = None,
    f_star: Optional[float] = None,
    rel_tol: float = 1e-12,
) -> InequalityReport:
    """Check ``(1/gamma) grad f(x)^T (x - x*) >= f(x) - f* + mu/2 ||x - x*||^2`` at samples.

    ``worst_margin`` is the smallest left-minus-right difference seen.
    """
    x_star = as_vector(x_star, oracle.dim)
    if points is None:
        points = sample_points(sampler, oracle.dim, x_star)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    fs = _f_star(oracle, x_star, f_star)
    violations: list[int] = []
    worst = math.inf
    for start, X, vals, grads in _batched(oracle, points):
        D = X - x_star
        lhs = np.einsum("ij,ij->i", grads, D) / gamma
        rhs = vals - fs + 0.5 * mu * np.einsum("ij,ij->i", D, D)
        margin = lhs - rhs
        tol = rel_tol * np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(vals)))
        violations.extend((start + np.flatnonzero(margin < -tol)).tolist())
        worst = min(worst, float(margin.min()))
    return InequalityReport(points.shape[0], violations, worst)


@dataclass
class EquivalenceReport:
    holds_gradient_form: np.ndarray
    holds_segment_form: np.ndarray
    mismatches: list[int]
    distance_bound_violations: list[int]

    @property
    def passed(self) -> bool:
        return not self.mismatches and not self.distance_bound_violations


DEFAULT_T_GRID = np.concatenate([[0.0, 1e-4, 1e-3, 1e-2], np.linspace(0.05, 1.0, 20)])


def check_segment_equivalence(
    oracle: DifferentiableOracle,
    x_star,
    gamma: float,
    mu: float,
    samples,
    *,
    t_grid: Sequence[float] = DEFAULT_T_GRID,
    f_star: Optional[float] = None,
    rel_tol: float = 1e-10,
) -> EquivalenceReport:
    """Compare the gradient form of strong quasar-convexity with its segment form.

    Segment form, for ``t`` on ``t_grid``:
    ``f(t x* + (1-t) x) + t (1 - t/(2-gamma)) (gamma mu / 2) ||x* - x||^2
    <= gamma t f* + (1 - gamma t) f(x)``.
    ``samples`` is a SamplerSpec or an array of points. The ``t = 1`` case is
    the distance bound ``f(x) - f* >= gamma mu / (2 (2 - gamma)) ||x - x*||^2``,
    reported separately.
    """
    x_star = as_vector(x_star, oracle.dim)
    if isinstance(samples, SamplerSpec):
        points = sample_points(samples, oracle.dim, x_star)
    else:
        points = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    fs = _f_star(oracle, x_star, f_star)
    t = np.asarray(t_grid, dtype=np.float64)
    grad_ok = np.zeros(points.shape[0], dtype=bool)
    seg_ok = np.zeros(points.shape[0], dtype=bool)
    dist_bad: list[int] = []
    for i, x in enumerate(points):
        D = x_star - x
        r = float(D @ D)
        fx, gx = oracle(x)
        lhs8 = fx + float(gx @ D) / gamma + 0.5 * mu * r
        grad_ok[i] = fs >= lhs8 - rel_tol * max(1.0, abs(fx), abs(lhs8))
        P = t[:, None] * x_star + (1.0 - t[:, None]) * x
        fP, _ = oracle.batch(P)
        lhs7 = fP + t * (1.0 - t / (2.0 - gamma)) * (gamma * mu / 2.0) * r
        rhs7 = gamma * t * fs + (1.0 - gamma * t) * fx
        seg_ok[i] = bool(np.all(lhs7 <= rhs7 + rel_tol * np.maximum(1.0, np.abs(rhs7))))
        if fx - fs < gamma * mu / (2.0 * (2.0 - gamma)) * r - rel_tol * max(1.0, abs(fx)):
            dist_bad.append(i)
    mismatches = np.flatnonzero(grad_ok != seg_ok).tolist()
    return EquivalenceReport(grad_ok, seg_ok, mismatches, dist_bad)


@dataclass
class SmoothnessReport:
    L_hat: float
    descent_violations: list[int]
    pair_count: int
    seed: int


def smoothness_estimate(
    oracle: DifferentiableOracle,
    sampler: SamplerSpec,
    *,
    L: Optional[float] = None,
    center: Optional[np.ndarray] = None,
    local_scale: float = 1e-2,
    rel_tol: float = 1e-12,
) -> SmoothnessReport:
    """Largest gradient-difference ratio over sampled pairs, plus the descent check.

    Half of the pairs are independent draws, half are close pairs
    ``(x, x + local_scale * noise)`` that probe local curvature. The descent
    check ``f(x - grad f(x)/L) <= f(x) - ||grad f(x)||^2 / (2L)`` uses the
    declared ``L`` when given, otherwise ``L_hat``.
    """
    X = sample_points(sampler, oracle.dim, center)
    rng = np.random.default_rng(sampler.seed + 1)
    half = X.shape[0] // 2
    Y = np.empty_like(X)
    Y[:half] = sample_points(SamplerSpec(max(half, 1), sampler.seed + 2, sampler.low, sampler.high,
                                         sampler.relative), oracle.dim, center)[:half]
    Y[half:] = X[half:] + local_scale * rng.standard_normal(X[half:].shape)
    L_hat = 0.0
    fx_all = np.empty(X.shape[0])
    gx_all = np.empty_like(X)
    for start, chunk, vals, grads in _batched(oracle, X):
        fx_all[start : start + len(chunk)] = vals
        gx_all[start : start + len(chunk)] = grads
    for start, chunk, vals, grads in _batched(oracle, Y):
        gx = gx_all[start : start + len(chunk)]
        dx = np.linalg.norm(chunk - X[start : start + len(chunk)], axis=1)
        dg = np.linalg.norm(grads - gx, axis=1)
        ok = dx > 0
        if np.any(ok):
            L_hat = max(L_hat, float(np.max(dg[ok] / dx[ok])))
    L_use = L if L is not None else L_hat
    violations: list[int] = []
    if L_use > 0:
        Z = X - gx_all / L_use
        for start, chunk, vals, _ in _batched(oracle, Z):
            f0 = fx_all[start : start + len(chunk)]
            g2 = np.einsum("ij,ij->i", gx_all[start : start + len(chunk)], gx_all[start : start + len(chunk)])
            bound = f0 - g2 / (2.0 * L_use)
            bad = vals > bound + rel_tol * np.maximum(1.0, np.abs(f0))
            violations.extend((start + np.flatnonzero(bad)).tolist())
    return SmoothnessReport(L_hat, violations, X.shape[0], sampler.seed)


# structural observations -------------------------------------------------


def scaled_oracle(oracle: DifferentiableOracle, a: float, b: float) -> DifferentiableOracle:
    """``g(x) = a * f(b x)``, gradient ``a b grad f(b x)``."""

    def fun(x):
        v, g = oracle.fun(b * x)
        return a * v, a * b * np.asarray(g)

    def batch_fun(X):
        if oracle.batch_fun is None:
            out = [oracle.fun(b * row) for row in X]
            return a * np.array([o[0] for o in out]), a * b * np.array([o[1] for o in out])
        v, g = oracle.batch_fun(b * X)
        return a * v, a * b * g

    return DifferentiableOracle(fun, oracle.dim, batch_fun=batch_fun, name=f"{a:g}*f({b:g}x)")


def check_scaling_invariance(
    oracle: DifferentiableOracle, x_star, sampler: SamplerSpec, a: float, b: float,
    mu: float = 0.0, rel_tol: float = 1e-9,
) -> dict:
    """``gamma_hat`` of ``a f(b x)`` at the mapped samples ``x / b`` equals that of ``f``."""
    x_star = as_vector(x_star, oracle.dim)
    X = sample_points(sampler, oracle.dim, x_star)
    base = estimate_gamma(oracle, x_star, mu, points=X)
    g = scaled_oracle(oracle, a, b)
    # mu scales with a b^2 for the strongly quasar-convex form
    scaled = estimate_gamma(g, x_star / b, mu * a * b * b, points=X / b)
    ok = abs(base.gamma_hat - scaled.gamma_hat) <= rel_tol * max(1.0, base.gamma_hat)
    return {"gamma_hat": base.gamma_hat, "gamma_hat_scaled": scaled.gamma_hat, "a": a, "b": b, "passed": ok}


def check_tradeoff(
    oracle: DifferentiableOracle, x_star, gamma: float, mu: float, sampler: SamplerSpec,
    thetas: Sequence[float] = (0.5, 0.1),
) -> dict:
    """If the inequality holds at ``(gamma, mu)`` it must hold at ``(theta gamma, mu / theta)``."""
    x_star = as_vector(x_star, oracle.dim)
    X = sample_points(sampler, oracle.dim, x_star)
    base = check_quasar_inequality(oracle, x_star, gamma, mu, points=X)
    results = {}
    for theta in thetas:
        rep = check_quasar_inequality(oracle, x_star, theta * gamma, mu / theta, points=X)
        results[theta] = rep.passed
    return {"base_holds": base.passed, "theta_holds": results,
            "passed": (not base.passed) or all(results.values())}


def check_unimodal_1d(
    derivative: Callable[[np.ndarray], np.ndarray], x_star: float, grid: np.ndarray,
    exclude: float = 1e-9,
) -> dict:
    """``sign f'(s) == sign(s - x*)`` on a grid, skipping points within ``exclude`` of ``x*``."""
    grid = np.asarray(grid, dtype=np.float64)
    keep = np.abs(grid - x_star) > exclude
    s = grid[keep]
    d = np.asarray(derivative(s))
    bad = np.flatnonzero(np.sign(d) != np.sign(s - x_star))
    return {"checked": int(s.size), "violations": s[bad].tolist(), "passed": bad.size == 0}


def axis_derivative(oracle: DifferentiableOracle, x_star: np.ndarray, axis: int):
    """Derivative of ``s -> f(x* + s e_axis)`` evaluated at absolute positions."""
    x_star = as_vector(x_star, oracle.dim)

    def deriv(positions):
        P = np.tile(x_star, (len(positions), 1))
        P[:, axis] = positions
        _, G = oracle.batch(P)
        return G[:, axis]

    return deriv


def check_uniqueness(
    oracle: DifferentiableOracle, x_star, gamma: float, mu: float, sampler: SamplerSpec,
) -> dict:
    """With ``mu > 0`` no sample other than ``x*`` may attain ``f*``; checked through
    the quadratic-growth bound, which is strictly positive off ``x*``."""
    x_star = as_vector(x_star, oracle.dim)
    rep = check_segment_equivalence(
        oracle, x_star, gamma, mu, sampler, t_grid=[1.0]
    )
    X = sample_points(sampler, oracle.dim, x_star)
    fs = oracle(x_star)[0]
    vals, _ = oracle.batch(X)
    off = np.linalg.norm(X - x_star, axis=1) > 0
    ties = np.flatnonzero(off & (vals <= fs)).tolist()
    return {"ties": ties, "distance_bound_violations": rep.distance_bound_violations,
            "passed": not ties and not rep.distance_bound_violations}


def check_structural_observations(
    oracle: DifferentiableOracle,
    x_star,
    gamma: float,
    mu: float,
    sampler: SamplerSpec,
    *,
    scalings: Sequence[tuple[float, float]] = ((2.0, 3.0), (0.5, -1.5)),
    thetas: Sequence[float] = (0.5, 0.1),
    axes: Sequence[int] = (0,),
    grid: Optional[np.ndarray] = None,
) -> dict:
    """Run the scaling, tradeoff, uniqueness (``mu > 0``) and axis-unimodality checks."""
    x_star = as_vector(x_star, oracle.dim)
    report = {
        "scaling": [check_scaling_invariance(oracle, x_star, sampler, a, b, mu) for a, b in scalings],
        "tradeoff": check_tradeoff(oracle, x_star, gamma, mu, sampler, thetas),
    }
    if mu > 0:
        report["uniqueness"] = check_uniqueness(oracle, x_star, gamma, mu, sampler)
    offsets = np.linspace(-3.0, 3.0, 601) if grid is None else np.asarray(grid)
    report["unimodal"] = [
        check_unimodal_1d(axis_derivative(oracle, x_star, ax), float(x_star[ax]), x_star[ax] + offsets)
        for ax in axes
    ]
    report["passed"] = (
        all(r["passed"] for r in report["scaling"])
        and report["tradeoff"]["passed"]
        and report.get("uniqueness", {"passed": True})["passed"]
        and all(r["passed"] for r in report["unimodal"])
    )
    return report


# zero-respecting instrumentation -----------------------------------------


def nonzero_prefix(x: np.ndarray, tol: float = PREFIX_TOL) -> int:
    """Index (1-based) of the last entry with ``|x_i| > tol``; 0 for the zero vector."""
    nz = np.flatnonzero(np.abs(x) > tol)
    return int(nz[-1]) + 1 if nz.size else 0


@dataclass
class PrefixTrace:
    """Per-query support record of a run on a chain objective.

    ``query_prefix[j]`` is the prefix length of the j-th query point and
    ``grad_prefix[j]`` that of the returned gradient (``None`` for value-only
    queries). ``jumps`` lists queries that reach beyond every gradient seen so
    far.
    """

    query_prefix: list[int] = field(default_factory=list)
    grad_prefix: list[Optional[int]] = field(default_factory=list)
    gap: list[Optional[float]] = field(default_factory=list)
    jumps: list[int] = field(default_factory=list)
    gradient_calls_before_eps: Optional[int] = None
    epsilon: Optional[float] = None

    @property
    def gradient_calls(self) -> int:
        return sum(g is not None for g in self.grad_prefix)

    @property
    def zero_respecting(self) -> bool:
        return not self.jumps

    @property
    def max_growth_per_gradient_call(self) -> int:
        """Largest increase of the running maximal query prefix between gradient calls."""
        best, growth = 0, 0
        for q, g in zip(self.query_prefix, self.grad_prefix):
            if g is None:
                continue
            growth = max(growth, q - best)
            best = max(best, q)
        return growth


class PrefixRecordingOracle(DifferentiableOracle):
    """Wraps an oracle and records supports of queries and returned gradients."""

    def __init__(self, base: DifferentiableOracle, trace: PrefixTrace, f_star: Optional[float] = None):
        super().__init__(base.fun, base.dim, batch_fun=base.batch_fun, name=f"prefix({base.name})")
        self.trace = trace
        self.f_star = f_star
        self._support = 0  # union of returned gradient supports so far

    def _log(self, x, value, grad):
        tr = self.trace
        j = len(tr.query_prefix)
        qp = nonzero_prefix(x)
        if qp > self._support:
            tr.jumps.append(j)
        tr.query_prefix.append(qp)
        gp = None if grad is None else nonzero_prefix(grad)
        tr.grad_prefix.append(gp)
        if gp is not None:
            self._support = max(self._support, gp)
        gap = None if self.f_star is None else value - self.f_star
        tr.gap.append(gap)
        if (gap is not None and tr.epsilon is not None and tr.gradient_calls_before_eps is None
                and gap <= tr.epsilon):
            # number of gradients returned before this point was queried
            tr.gradient_calls_before_eps = sum(g is not None for g in tr.grad_prefix[:-1])

    def __call__(self, x):
        value, grad = super().__call__(x)
        self._log(np.asarray(x), value, grad)
        return value, grad

    def value(self, x):
        value = super().value(x)
        self._log(np.asarray(x), value, None)
        return value


def run_with_prefix_instrumentation(
    solve: Callable[..., object],
    problem: QuasarProblem,
    x0=None,
    *,
    gap_target: Optional[float] = None,
    **solve_kw,
) -> tuple[PrefixTrace, object]:
    """Run ``solve(problem, x0, **solve_kw)`` through a support-recording oracle.

    A method is zero-respecting on a chain started at the origin when no query
    reaches a coordinate that no earlier gradient touched; every violation is
    listed in ``PrefixTrace.jumps`` (reported, not raised). With ``gap_target``,
    the number of gradient calls made before the first query with gap
    ``<= gap_target`` is recorded; ``solve_kw`` go to the solver unchanged.
    """
    x0 = np.zeros(problem.dim) if x0 is None else as_vector(x0, problem.dim)
    trace = PrefixTrace(epsilon=gap_target)
    oracle = PrefixRecordingOracle(problem.oracle, trace, problem.f_star)
    result = solve(problem.with_oracle(oracle), x0, **solve_kw)
    return trace, result
