import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasar_agd.core import DifferentiableOracle, QuasarProblem
from quasar_agd.instances import HardInstanceScaled, HardInstanceUnscaled, QuadraticInstance
from quasar_agd.solvers import solve_gd
from quasar_agd.verify import (
    SamplerSpec,
    check_segment_equivalence,
    check_quasar_inequality,
    check_scaling_invariance,
    check_tradeoff,
    check_uniqueness,
    estimate_gamma,
    nonzero_prefix,
    per_sample_gamma,
    run_with_prefix_instrumentation,
    sample_points,
    smoothness_estimate,
    transition_samples,
)


def half_norm(dim):
    return DifferentiableOracle(lambda x: (0.5 * float(x @ x), x.copy()), dim,
                                batch_fun=lambda X: (0.5 * np.sum(X * X, axis=1), X.copy()))


def test_gamma_of_half_norm():
    cert = estimate_gamma(half_norm(3), np.zeros(3), 0.0, SamplerSpec(200, seed=1))
    assert cert.gamma_hat == 1.0 and cert.certified
    cert = estimate_gamma(half_norm(1), np.zeros(1), 1.0, SamplerSpec(200, seed=1))
    assert cert.gamma_hat == 1.0


def test_gamma_reproducible_and_monotone():
    inst = HardInstanceUnscaled(50, 1e-4, checked=False)
    spec = SamplerSpec(300, seed=9, transition_fraction=0.5)
    a = estimate_gamma(inst.oracle(), inst.x_star, sampler=spec)
    b = estimate_gamma(inst.oracle(), inst.x_star, sampler=spec)
    assert a.gamma_hat == b.gamma_hat and a.seed == 9
    X = sample_points(spec, inst.dim, inst.x_star)
    more = np.vstack([X, sample_points(SamplerSpec(300, seed=10), inst.dim)])
    c = estimate_gamma(inst.oracle(), inst.x_star, points=more)
    assert c.gamma_hat <= a.gamma_hat


def test_gamma_rejects_wrong_minimizer():
    with pytest.raises(ValueError, match="not a minimizer"):
        estimate_gamma(half_norm(2), np.ones(2), sampler=SamplerSpec(50, seed=0))


def test_non_quasar_function_has_zero_gamma():
    # a double well about one of its minima fails at the other well
    f = DifferentiableOracle(lambda x: (float((x[0] ** 2 - 1) ** 2), np.array([4 * x[0] * (x[0] ** 2 - 1)])), 1)
    cert = estimate_gamma(f, [1.0], points=np.linspace(-2, 2, 401)[:, None])
    assert cert.gamma_hat == 0.0 and not cert.certified


@settings(max_examples=100)
@given(st.floats(-1e3, 1e3), st.floats(1e-6, 1e3))
def test_per_sample_gamma_cases(num, den):
    g = per_sample_gamma(np.array([num]), np.array([den]), np.array([1.0]))[0]
    assert 0.0 <= g <= 1.0
    if num >= den:
        assert g == 1.0
    elif num > 0:
        assert g == pytest.approx(num / den)


def test_chain_certificate_on_samples():
    inst = HardInstanceUnscaled(1000, 1e-6)
    spec = SamplerSpec(2000, seed=3, transition_fraction=0.3)
    cert = estimate_gamma(inst.oracle(), inst.x_star, sampler=spec, f_star=0.0)
    assert cert.gamma_hat >= inst.certified_gamma
    rep = check_quasar_inequality(inst.oracle(), inst.x_star, inst.gamma, sampler=spec, f_star=0.0)
    assert rep.passed and rep.checked == 2000


def test_transition_samples_shape():
    X = transition_samples(40, 30, np.random.default_rng(0))
    assert X.shape == (30, 40)
    assert X.min() >= -0.3 and X.max() <= 1.3
    assert any(row[-1] == 0.0 for row in X)


def test_smoothness_examples():
    rep = smoothness_estimate(half_norm(4), SamplerSpec(400, seed=2))
    assert rep.L_hat == pytest.approx(1.0, rel=1e-12) and rep.descent_violations == []
    inst = HardInstanceScaled(1.0, 1.0, 0.01, 1e-6)
    scale = inst.R / math.sqrt(inst.T)
    rep = smoothness_estimate(inst.oracle(), SamplerSpec(400, seed=2, low=-2 * scale, high=3 * scale),
                              L=inst.smoothness_bound)
    assert rep.L_hat <= inst.smoothness_bound and rep.descent_violations == []
    assert rep.L_hat > inst.L  # the nominal constant is exceeded


def test_descent_check_catches_understated_L():
    f = DifferentiableOracle(lambda x: (2.0 * float(x @ x), 4.0 * x), 3)
    rep = smoothness_estimate(f, SamplerSpec(100, seed=1), L=1.0)
    assert rep.descent_violations


def test_equivalence_examples():
    inst = QuadraticInstance(6, 0.2, 1.0, spectrum="linear")
    rep = check_segment_equivalence(inst.oracle(), inst.x_star, 1.0, 0.2, SamplerSpec(100, seed=4, relative=True))
    assert rep.passed and rep.holds_segment_form.all()
    rep = check_segment_equivalence(inst.oracle(), inst.x_star, 1.0, 0.0, SamplerSpec(100, seed=4, relative=True))
    assert rep.passed
    chain = HardInstanceUnscaled(1000, 1e-6)
    rep = check_segment_equivalence(chain.oracle(), chain.x_star, chain.gamma, 0.0,
                                    SamplerSpec(40, seed=5, transition_fraction=0.5), f_star=0.0)
    assert rep.passed and rep.holds_gradient_form.all()


def test_equivalence_both_forms_fail_together():
    # declared mu too large for the flat direction: both forms reject the same points
    inst = QuadraticInstance(4, 0.01, 1.0, spectrum="linear")
    rep = check_segment_equivalence(inst.oracle(), inst.x_star, 1.0, 0.9,
                                    SamplerSpec(200, seed=6, relative=True))
    assert not rep.holds_gradient_form.all()
    assert not rep.holds_segment_form.all()


def test_structural_helpers_on_half_square():
    f = half_norm(1)
    spec = SamplerSpec(300, seed=8)
    res = check_scaling_invariance(f, [0.0], spec, 2.0, 3.0)
    assert res["passed"] and res["gamma_hat"] == 1.0
    res = check_tradeoff(f, [0.0], 1.0, 1.0, spec, thetas=(0.5,))
    assert res["base_holds"] and res["passed"]
    assert check_uniqueness(f, [0.0], 1.0, 1.0, spec)["passed"]


def test_scaling_invariance_chain():
    chain = HardInstanceUnscaled(30, 1e-4, checked=False)
    res = check_scaling_invariance(chain.oracle(), chain.x_star, SamplerSpec(200, seed=3), 0.7, -2.0)
    assert res["passed"]


def test_nonzero_prefix():
    assert nonzero_prefix(np.zeros(5)) == 0
    assert nonzero_prefix(np.array([1.0, 0.0, 1e-300, 0.0])) == 3


def test_gd_prefix_growth_on_chain():
    inst = HardInstanceUnscaled(60, 1e-4, checked=False)
    p = inst.problem()
    trace, _ = run_with_prefix_instrumentation(solve_gd, p, K=40)
    assert trace.zero_respecting
    assert trace.max_growth_per_gradient_call == 1
    assert max(trace.query_prefix) == 40


def test_dense_method_flagged():
    inst = HardInstanceUnscaled(60, 1e-4, checked=False)
    p = inst.problem()
    dense = np.linspace(0.1, 0.2, 60)

    def dense_method(problem, x0, K=5):
        x = x0
        for _ in range(K):
            _, g = problem.oracle(x)
            x = x - g / problem.L + 1e-3 * dense
        return x

    trace, _ = run_with_prefix_instrumentation(dense_method, p)
    assert not trace.zero_respecting
    assert trace.max_growth_per_gradient_call > 1
