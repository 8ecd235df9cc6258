import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasar_agd.core import ConfigurationError, DifferentiableOracle, QuasarProblem, TerminationReason
from quasar_agd.instances import HardInstanceScaled, QuadraticInstance
from quasar_agd.linesearch import evaluation_bound
from quasar_agd.solvers import (
    FrameworkConfig,
    OmegaSequence,
    agd_step,
    constant_alpha,
    nonstrong_iteration_budget,
    omega,
    run_framework,
    solve_gd,
    solve_nonstrong_qc,
    solve_strongly_qc,
    solve_via_regularization,
    strong_iteration_budget,
)


def half_square(dim=1, L=1.0, mu=1.0, gamma=1.0):
    f = DifferentiableOracle(lambda x: (0.5 * L * float(x @ x), L * x), dim)
    return QuasarProblem(f, L, gamma, mu, None, np.zeros(dim), 0.0)


def mp_omega(k, digits=50):
    with mpmath.workdps(digits):
        w = mpmath.mpf(1)
        for _ in range(k + 1):
            w = w * (mpmath.sqrt(w * w + 4) - w) / 2
        return float(w)


# omega ---------------------------------------------------------------------


def test_omega_frozen_values():
    assert omega(-1) == 1.0
    assert omega(0) == pytest.approx((math.sqrt(5) - 1) / 2, rel=1e-15)
    # frozen from a 50-digit evaluation of the recursion
    assert omega(1) == pytest.approx(0.45588678010286656, rel=1e-14)
    assert omega(2) == pytest.approx(0.36366395711908760, rel=1e-14)
    assert 1 / 3 <= omega(1) <= 4 / 7


@pytest.mark.parametrize("k", [0, 1, 5, 50, 1000])
def test_omega_matches_extended_precision(k):
    assert omega(k) == pytest.approx(mp_omega(k), rel=1e-13)


def test_omega_decreasing_in_unit_interval():
    w = OmegaSequence().values(10_000)
    assert np.all((w > 0) & (w < 1))
    assert np.all(np.diff(w) < 0)
    with pytest.raises(IndexError):
        omega(-2)


# budgets -------------------------------------------------------------------


def test_budget_formulas():
    # log+ uses the natural log and is at least 1
    assert strong_iteration_budget(100.0, 1.0, 1.0, 1.0) == math.ceil(10 * math.log(3.0))
    assert strong_iteration_budget(100.0, 1.0, 0.1, 1.0) == 10
    assert nonstrong_iteration_budget(1.0, 1.0, 0.01, 1e-6) == 400_000
    assert nonstrong_iteration_budget(4.0, 2.0, 0.5, 0.25) == 64


# framework step --------------------------------------------------------------


def test_step_one_dimensional_exact():
    p = half_square()
    x_new, v_new, rec = agd_step(p, np.array([1.0]), np.array([1.0]), 0, 0.0, 1.0, 1.0)
    assert rec.y[0] == 1.0 and x_new[0] == 0.0 and v_new[0] == 0.0
    assert p.oracle.counts == (1, 1)


def test_step_beta_one():
    p = half_square(2, L=2.0, mu=0.0, gamma=0.5)
    x = np.array([1.0, -2.0])
    x_new, v_new, _ = agd_step(p, x, x.copy(), 0, 1.0, 0.5 / 2.0, 1.0)
    g = 2.0 * x
    assert np.allclose(x_new, x - g / 2.0) and np.allclose(v_new, x - 0.25 * g)


def test_step_fixed_point_and_validation():
    p = half_square(3)
    z = np.zeros(3)
    x_new, v_new, rec = agd_step(p, z, z, 0, 0.5, 1.0, 0.3)
    assert np.array_equal(x_new, z) and np.array_equal(v_new, z) and rec.grad_norm_at_y == 0
    with pytest.raises(ValueError):
        agd_step(p, z, z, 0, 0.5, 1.0, 1.5)
    with pytest.raises(ValueError):
        agd_step(p, z, z, 0, 0.5, 0.1, 0.5)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        FrameworkConfig(1.5, lambda k: 1.0, constant_alpha(), 3)
    with pytest.raises(ConfigurationError):
        FrameworkConfig(0.5, lambda k: 1.0, constant_alpha(), -1)
    with pytest.raises(ConfigurationError):
        FrameworkConfig(0.5, lambda k: 1.0, constant_alpha(), None)


# strong case -------------------------------------------------------------------


def test_strong_unit_condition_is_gradient_descent():
    p = half_square(2)
    trace = solve_strongly_qc(p, [3.0, -1.0], K=4)
    assert trace.meta["beta"] == 0.0
    assert all(r.alpha_k == 1.0 for r in trace.records[:-1])
    assert trace.records[1].eps_k == 0.0


def test_strong_requires_mu_and_budget():
    p = half_square(mu=0.0)
    with pytest.raises(ConfigurationError, match="solve_nonstrong_qc"):
        solve_strongly_qc(p, [1.0], K=3)
    f = DifferentiableOracle(lambda x: (0.5 * float(x @ x), x), 1)
    with pytest.raises(ConfigurationError):
        solve_strongly_qc(QuasarProblem(f, 1.0, 1.0, 0.5), [1.0], epsilon=1e-3)


def test_strong_accounting_and_invariants():
    inst = QuadraticInstance(20, 1e-3, 1.0)
    p = inst.problem(strong=True)
    trace = solve_strongly_qc(p, np.zeros(20), epsilon=1e-8)
    K = trace.meta["K"]
    beta, eta = trace.meta["beta"], trace.meta["eta"]
    b = (1 - beta) / (2 * eta)
    c = (p.L * eta - p.gamma) / beta
    per_call = evaluation_bound(p.L, b, c, 0.0, np.inf)
    # dist2 only enters the eps_tilde operand, which is absent here
    assert trace.final_fn_evals <= K * (2 * per_call + 1) + 1
    assert trace.final_grad_evals == p.oracle.grad_evals
    assert trace.records[-1].eps_k <= 1e-8
    fn = [r.cumulative_fn_evals for r in trace.records]
    assert fn == sorted(fn)
    for r in trace.records[:-1]:
        assert 0.0 <= r.alpha_k <= 1.0 and r.eta_k >= p.gamma / p.L
    phi = np.array([r.potential for r in trace.records])
    assert np.all(np.diff(phi) <= 1e-10 * phi[0])


def test_strong_with_bad_declared_gamma_flags_quasar_violations():
    # a convex quadratic declared with a too-large mu violates the strong inequality somewhere
    inst = QuadraticInstance(10, 1e-2, 1.0, spectrum="linear")
    bad = QuasarProblem(inst.oracle(), 1.0, 1.0, 0.5, None, inst.x_star, 0.0)
    trace = solve_strongly_qc(bad, np.zeros(10), K=50, check_quasar=True)
    assert trace.quasar_violations


# non-strong case ---------------------------------------------------------------


def test_nonstrong_half_norm_error_bound():
    p = half_square(5, mu=0.0)
    x0 = np.full(5, 2.0)
    R = float(np.linalg.norm(x0))
    trace = solve_nonstrong_qc(p, x0, epsilon=1e-4, R=R)
    assert trace.bound_violations == []
    assert trace.iterations == math.floor(4 * R / math.sqrt(1e-4) * (1 + 1e-12))
    rec0 = trace.records[0]
    lead = rec0.eps_k + 1.0 / 2.0 * rec0.r_k
    for r in trace.records:
        assert r.eps_k <= (8 / (r.k + 2) ** 2 * lead + 5e-5) * (1 + 1e-10)
    assert trace.records[0].eta_k == pytest.approx(1.0 / omega(0))


def test_nonstrong_small_chain_reaches_target():
    inst = HardInstanceScaled.unchecked(1.0, 1.0, 0.01, 1e-2)  # T = 10
    p = inst.problem()
    K = nonstrong_iteration_budget(p.L, 1.0, p.gamma, 1e-2)
    trace = solve_nonstrong_qc(p, np.zeros(inst.T), epsilon=1e-2, R=1.0)
    assert trace.iterations == K
    assert trace.target_hit is not None and trace.target_hit[0] <= K
    assert trace.bound_violations == []


def test_nonstrong_validation():
    p = half_square(mu=0.0)
    with pytest.raises(ConfigurationError):
        solve_nonstrong_qc(p, [1.0], epsilon=0.0)
    with pytest.raises(ConfigurationError):
        solve_nonstrong_qc(p, [1.0], epsilon=1e-3)


# gradient descent ----------------------------------------------------------------


@pytest.mark.parametrize("L", [1.0, 3.5])
def test_gd_one_step(L):
    p = half_square(3, L=L, mu=0.0)
    trace = solve_gd(p, [1.0, -2.0, 4.0], K=1)
    assert np.array_equal(trace.final_point, np.zeros(3))
    assert trace.final_grad_evals == 2  # x0, then x1


def test_gd_one_call_per_iteration():
    inst = QuadraticInstance(10, 0.01, 1.0)
    p = inst.problem(strong=False)
    trace = solve_gd(p, np.zeros(10), K=25)
    assert trace.final_grad_evals == 26 and trace.final_fn_evals == 26


# regularization ----------------------------------------------------------------


def test_regularized_quadratic_reaches_f_gap():
    inst = QuadraticInstance(10, 1e-3, 1.0)
    p = inst.problem(strong=False)
    x0 = np.zeros(10)
    R = float(np.linalg.norm(x0 - inst.x_star))
    eps = 1e-3
    trace = solve_via_regularization(p, x0, R, eps)
    assert trace.meta["inner_kappa"] == pytest.approx(1 + p.L * R**2 / eps)
    f_gap = inst.oracle()(trace.final_point)[0]
    assert f_gap <= eps
    assert trace.records[-1].f_gap == pytest.approx(f_gap, rel=1e-9, abs=1e-15)
    assert trace.final_grad_evals == p.oracle.grad_evals


def test_regularized_dominant_regularizer():
    inst = QuadraticInstance(4, 0.5, 1.0)
    p = inst.problem(strong=False)
    R = float(np.linalg.norm(inst.x_star))
    eps = 4.0 * R**2  # eps / R^2 > L
    trace = solve_via_regularization(p, np.zeros(4), R, eps)
    assert inst.oracle()(trace.final_point)[0] <= eps


def test_regularized_validation():
    p = half_square(mu=0.0)
    with pytest.raises(ConfigurationError):
        solve_via_regularization(p, [1.0], 0.0, 1e-3)


# guards and determinism ------------------------------------------------------------


def test_divergence_guard_trips():
    # declared L far too small: steps overshoot and the gap explodes
    f = DifferentiableOracle(lambda x: (50.0 * float(x @ x), 100.0 * x), 2)
    p = QuasarProblem(f, 1.0, 1.0, 0.0, None, np.zeros(2), 0.0)
    trace = solve_gd(p, [1.0, 1.0], K=100)
    assert trace.termination_reason is TerminationReason.GUARD_TRIPPED
    assert not trace.ok


def test_non_finite_iterate_trips_guard():
    # no optimum declared, so only the finiteness check can stop the overflow
    f = DifferentiableOracle(lambda x: (0.25 * float(x[0] ** 4), x**3), 1)
    p = QuasarProblem(f, 1.0, 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        trace = solve_gd(p, [1e3], K=20)
    assert trace.termination_reason is TerminationReason.GUARD_TRIPPED


def test_evaluation_cap_ends_as_budget():
    inst = QuadraticInstance(5, 0.01, 1.0)
    p = inst.problem(strong=False)
    trace = solve_gd(p, np.zeros(5), K=1000, max_evals=10)
    assert trace.termination_reason is TerminationReason.ITERATION_BUDGET
    assert trace.final_grad_evals <= 11 and trace.flags


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), gamma=st.floats(0.2, 1.0))
def test_runs_are_deterministic(seed, gamma):
    rng = np.random.default_rng(seed)
    inst = QuadraticInstance(6, 0.05, 1.0, xstar_seed=seed)
    x0 = rng.standard_normal(6)

    def run():
        base = inst.problem(strong=True)
        p = QuasarProblem(base.oracle, base.L, gamma, base.mu * 0.5, None, base.x_star, base.f_star)
        t = solve_strongly_qc(p, x0, K=30, store_iterates=True)
        return [(r.fx, r.alpha_k, r.cumulative_fn_evals) for r in t.records], t.final_point

    a, b = run(), run()
    assert a[0] == b[0] and np.array_equal(a[1], b[1])


def test_records_contiguous():
    inst = QuadraticInstance(6, 0.05, 1.0)
    trace = solve_nonstrong_qc(inst.problem(strong=False), np.zeros(6), K=40, epsilon=1e-3)
    assert [r.k for r in trace.records] == list(range(41))
    assert trace.records[-1].alpha_k is None
