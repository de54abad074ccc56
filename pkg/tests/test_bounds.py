import math

import numpy as np
import pytest

from kernelbounds.baselines import golomb_envelope
from kernelbounds.bounds import (
    BoundSolver,
    CaseLabel,
    SigmaOptimizerConfig,
    case1_bound,
    case1_feasible,
    case2_bound,
    case2_feasible,
    corollary_bound,
    corollary_feasible,
    decompose,
    envelope,
    envelope_arrays,
    optimal_bound,
    relaxed_envelope,
    relaxed_lower,
    relaxed_upper,
)
from kernelbounds.errors import HypothesisFalsified, InvalidInput, OptimizerFailed
from kernelbounds.gp_core import ProblemData, beta_sq, posterior_mean, posterior_state
from kernelbounds.kernels import Dirac, LinearFeatures, Scaled, SquaredExponential
from kernelbounds.oracle import QcqpInstance, oracle_lower, oracle_upper
from kernelbounds.synth import NoiseModel, make_dataset, rng_for, sample_inputs, sample_rkhs_function

from conftest import consistent_instance

SE = SquaredExponential(1.0)
EMPTY = ProblemData(np.zeros((0, 1)), [], SE)


def test_relaxed_empty_data():
    assert relaxed_upper(EMPTY, 1.0, 0.7) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert relaxed_lower(EMPTY, 1.0, 0.7) == pytest.approx(-math.sqrt(2), abs=1e-15)


def test_relaxed_single_point():
    d = ProblemData([0.0], [1.0], SE, Dirac(), 4.0, 1.0)
    # 0.5 +- sqrt(4.5) sqrt(0.5) = 0.5 +- 1.5
    assert relaxed_upper(d, 1.0, 0.0) == pytest.approx(2.0, abs=1e-14)
    assert relaxed_lower(d, 1.0, 0.0) == pytest.approx(-1.0, abs=1e-14)


def test_relaxed_symmetry_identity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = consistent_instance(rng).data
        q, s = rng.uniform(0, 4), float(10 ** rng.uniform(-1, 2))
        if beta_sq(d, s) < 0:
            continue
        assert relaxed_upper(d, s, q) + relaxed_lower(d, s, q) == pytest.approx(2 * posterior_mean(d, s, q), abs=1e-12)


def test_relaxed_raises_when_sigma_infeasible():
    d = ProblemData([0.0], [100.0], SE, Dirac(), 1.0, 1.0)
    with pytest.raises(HypothesisFalsified) as info:
        relaxed_upper(d, 1.0, 0.0)
    assert info.value.context["beta_sq"] < 0
    with pytest.raises(HypothesisFalsified):
        relaxed_envelope(d, 1.0, [0.0, 1.0])


def test_relaxed_envelope_matches_pointwise():
    d = consistent_instance(np.random.default_rng(1), 6).data
    q = np.linspace(0, 4, 7)
    lo, up = relaxed_envelope(d, 0.3, q)
    np.testing.assert_allclose(up, [relaxed_upper(d, 0.3, x) for x in q], rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(lo, [relaxed_lower(d, 0.3, x) for x in q], rtol=1e-12, atol=1e-14)


def test_case1_far_query_and_huge_outputs():
    d = ProblemData([0.0, 0.5], [0.1, -0.2], SE, Dirac(), 1.0, 1.0)
    assert case1_feasible(d, 50.0) and case1_feasible(d, 50.0, "lower")
    assert case1_bound(d, 50.0) == 1.0 and case1_bound(d, 50.0, "lower") == -1.0
    assert case1_bound(d.with_budgets(gamma_f_sq=4.0), 3.0) == 2.0
    assert not case1_feasible(ProblemData([0.0], [100.0], SE), 50.0)


def test_case1_limit_of_relaxed():
    rng = np.random.default_rng(2)
    hits = 0
    for _ in range(60):
        d = consistent_instance(rng).data
        q = rng.uniform(-2, 6)
        for side, fn in (("upper", relaxed_upper), ("lower", relaxed_lower)):
            if case1_feasible(d, q, side):
                hits += 1
                c1 = case1_bound(d, q, side)
                assert abs(fn(d, 1e8, q) - c1) <= 1e-5 * (1 + abs(c1))
    assert hits > 10


def test_case2_se_kernel_off_training_set():
    d = ProblemData([0.0, 1.0], [0.1, 0.2], SE)
    assert not case2_feasible(d, 0.5)


def test_case2_linear_kernel_matches_brute_force():
    # k(x, x') = x x'; feasible set of theta is an interval
    k = LinearFeatures(lambda x: x[:, :1], 1, "identity")
    x, y = np.array([1.0, 2.0]), np.array([1.1, 1.9])
    d = ProblemData(x, y, k, Dirac(), 100.0, 0.1)
    thetas = np.linspace(0.5, 1.5, 200001)
    ok = ((y[None, :] - thetas[:, None] * x[None, :]) ** 2).sum(axis=1) <= 0.1
    for q in (0.5, 3.0):
        assert case2_feasible(d, q)
        assert case2_bound(d, q) == pytest.approx(q * thetas[ok].max(), abs=1e-4)
        assert case2_bound(d, q, side="lower") == pytest.approx(q * thetas[ok].min(), abs=1e-4)


def test_case2_equals_corollary_at_training_point():
    rng = np.random.default_rng(3)
    for _ in range(10):
        d = consistent_instance(rng, 3, kf=Scaled(LinearFeatures.poly(3), 1.0), kw=Dirac(), spacing=0.5).data
        d = d.with_budgets(gamma_f_sq=1e4)
        for k in range(d.n):
            q = d.inputs[k, 0]
            for side in ("upper", "lower"):
                assert corollary_feasible(d, k, side)
                assert case2_bound(d, q, side=side) == pytest.approx(corollary_bound(d, k, side), abs=1e-8)


def test_case2_limit_of_relaxed():
    rng = np.random.default_rng(4)
    hits = 0
    for _ in range(40):
        d = consistent_instance(rng, int(rng.integers(3, 8)), kf=Scaled(LinearFeatures.poly(1), 1.0)).data
        q = rng.uniform(0, 4)
        for side, fn in (("upper", relaxed_upper), ("lower", relaxed_lower)):
            dec = decompose(d, q)
            if case2_feasible(d, q, dec, side):
                hits += 1
                c2 = case2_bound(d, q, dec, side)
                assert abs(fn(d, 1e-6, q) - c2) <= 1e-3 * (1 + abs(c2))
    assert hits > 10


def test_tie_case_values_agree():
    # Far query for a linear kernel: feature row is spanned and both budgets can be slack.
    rng = np.random.default_rng(5)
    seen = 0
    for _ in range(200):
        d = consistent_instance(rng, int(rng.integers(2, 6)), kf=Scaled(LinearFeatures.poly(1), 1.0)).data
        q = rng.uniform(0, 4)
        for side in ("upper", "lower"):
            if case1_feasible(d, q, side) and case2_feasible(d, q, side=side):
                seen += 1
                c1 = case1_bound(d, q, side)
                assert abs(c1 - case2_bound(d, q, side=side)) <= 1e-8 * (1 + abs(c1))
                assert optimal_bound(d, q).side(side)[2] is CaseLabel.TIE
    # ties sit on a measure-zero set, so none may show up; the check is conditional


def test_corollary_examples():
    d = ProblemData([0.0, 1.0], [2.0, 0.5], SE, Dirac(), 10.0, 0.01)
    assert corollary_bound(d, 0) == pytest.approx(2.1)
    assert corollary_bound(d, 0, "lower") == pytest.approx(1.9)
    tiny = d.with_budgets(gamma_w_sq=1e-30)
    assert corollary_bound(tiny, 0) == pytest.approx(2.0, abs=1e-14)
    with pytest.raises(InvalidInput):
        corollary_bound(d, 5)


def test_optimal_empty_data():
    r = optimal_bound(EMPTY.with_budgets(gamma_f_sq=4.0), 1.5)
    assert (r.upper, r.lower) == (2.0, -2.0)
    assert r.case_upper is CaseLabel.CASE1 and r.case_lower is CaseLabel.CASE1
    assert r.sigma_star_upper == math.inf


def test_optimal_training_point_dirac():
    d = ProblemData([0.0, 1.0, 2.5], [0.3, -0.1, 0.2], SE, Dirac(), 10.0, 0.04)
    for k in range(3):
        r = optimal_bound(d, d.inputs[k, 0])
        assert r.upper == pytest.approx(d.outputs[k] + 0.2, abs=1e-12)
        assert r.lower == pytest.approx(d.outputs[k] - 0.2, abs=1e-12)
        assert r.case_upper is CaseLabel.CASE2


def test_optimal_matches_oracle_se_five_points():
    rng = np.random.default_rng(6)
    d = consistent_instance(rng, 5, kf=SE, kw=Dirac()).data
    for q in (0.37, 1.9, 3.2):
        r = optimal_bound(d, q)
        inst = QcqpInstance.from_problem(d, q)
        up, lo = oracle_upper(inst), oracle_lower(inst)
        assert abs(r.upper - up.value) <= 1e-6 * (1 + abs(up.value))
        assert abs(r.lower - lo.value) <= 1e-6 * (1 + abs(lo.value))


def test_sides_are_searched_independently():
    rng = np.random.default_rng(7)
    found = False
    for _ in range(30):
        d = consistent_instance(rng, 6, kf=SE).data
        q = rng.uniform(0, 4)
        r = optimal_bound(d, q)
        if r.case_upper is CaseLabel.CASE3 and r.case_lower is CaseLabel.CASE3:
            found = found or not math.isclose(r.sigma_star_upper, r.sigma_star_lower, rel_tol=1e-3)
            su, sl = r.sigma_star_upper, r.sigma_star_lower
            assert relaxed_upper(d, su, q) == pytest.approx(r.upper, rel=1e-9, abs=1e-9)
            assert relaxed_lower(d, sl, q) == pytest.approx(r.lower, rel=1e-9, abs=1e-9)
            assert r.upper <= relaxed_upper(d, sl, q) + 1e-9
            assert r.lower >= relaxed_lower(d, su, q) - 1e-9
    assert found


def test_degenerate_query():
    d = ProblemData([1.0, 2.0], [0.5, 1.1], LinearFeatures(lambda x: x[:, :1], 1, "identity"), Dirac(), 4.0, 0.1)
    r = optimal_bound(d, 0.0)
    assert (r.upper, r.lower) == (0.0, 0.0)
    assert r.case_upper is CaseLabel.DEGENERATE


def test_falsified_data_raise_with_diagnostic():
    d = ProblemData([0.0, 0.1], [1.0, -1.0], SE, Dirac(), 0.1, 0.1)
    with pytest.raises(HypothesisFalsified) as info:
        optimal_bound(d, 0.5)
    ctx = info.value.context
    assert ctx["min_beta_sq"] < 0 and ctx["inflation"] > 1
    with pytest.raises(HypothesisFalsified):
        envelope(d, [0.0, 1.0])
    # inflating both budgets by the reported factor restores consistency
    k = ctx["inflation"] * (1 + 1e-6)
    optimal_bound(d.with_budgets(0.1 * k, 0.1 * k), 0.5)


def test_one_negative_beta_falsifies_even_if_others_are_positive():
    # any (f, w) inside both budgets keeps beta^2 >= 0 at every sigma
    d = ProblemData([0.0], [100.0], SE, Dirac(), 1.0, 1.0)
    assert beta_sq(d, 1e-3) > 0 > beta_sq(d, 1.0)
    with pytest.raises(HypothesisFalsified):
        optimal_bound(d, 0.2)


def test_relaxed_agrees_with_direct_posterior_formula():
    rng = np.random.default_rng(14)
    for _ in range(30):
        d = consistent_instance(rng).data
        q, s = rng.uniform(0, 4), float(10 ** rng.uniform(-2, 2))
        st = posterior_state(d, s, q)
        if st.beta_sq < 0:
            continue
        ref = st.mean_at_query + math.sqrt(st.beta_sq * st.var_at_query)
        assert relaxed_upper(d, s, q) == pytest.approx(ref, rel=1e-8, abs=1e-8)


def test_envelope_three_points_empty():
    rs = envelope(EMPTY, [0.0, 1.0, 2.0])
    assert len(rs) == 3 and all(r == rs[0] for r in rs)
    assert rs[0].case_upper is CaseLabel.CASE1


def test_envelope_collects_errors_in_place():
    cfg = SigmaOptimizerConfig(max_iters=1, grid_points=2, seeds=(0.0,))
    d = consistent_instance(np.random.default_rng(8), 6, kf=SE).data
    rs = envelope(d, np.linspace(0.1, 3.9, 5), cfg)
    assert len(rs) == 5
    for r in rs:
        if isinstance(r, OptimizerFailed):
            assert r.context["result"].upper >= r.context["result"].lower
    lo, up = envelope_arrays(rs)
    assert np.all(lo <= up)


def test_containment_on_synthetic_data():
    rng = np.random.default_rng(9)
    for trial in range(5):
        f = sample_rkhs_function(SE, (0, 4), 50, 1.0, seed=trial)
        x = sample_inputs((0, 4), 20, rng)
        d = make_dataset(f, NoiseModel("truncated_gaussian", 0.01, seed=trial), x, gamma_f_sq=1.0, rng=rng)
        grid = np.linspace(0, 4, 50)
        lo, up = envelope_arrays(envelope(d, grid))
        truth = f(grid)
        assert np.all(lo <= truth) and np.all(truth <= up)


def test_sigma_star_varies_and_envelope_is_inside_relaxed():
    f = sample_rkhs_function(SE, (0, 4), 50, 0.5, seed=11)
    x = sample_inputs((0, 4), 8, rng_for(11, 1))
    d = make_dataset(f, NoiseModel("truncated_gaussian", 0.05, seed=3), x, gamma_f_sq=1.0)
    grid = np.linspace(-1, 5, 60)
    rs = envelope(d, grid)
    lo, up = envelope_arrays(rs)
    sig = {round(math.log10(r.sigma_star_upper), 1) for r in rs if r.case_upper is CaseLabel.CASE3}
    assert len(sig) > 3
    for s in (1e2, 1.0, 1e-2):
        rlo, rup = relaxed_envelope(d, s, grid)
        assert np.all(up <= rup + 1e-12) and np.all(lo >= rlo - 1e-12)


def test_noise_free_recovery_matches_power_function_envelope():
    rng = np.random.default_rng(12)
    for _ in range(5):
        inst = consistent_instance(rng, int(rng.integers(1, 7)), kf=SE, kw=Dirac(), spacing=0.4)
        clean = ProblemData(inst.data.inputs, inst.f(inst.data.inputs[:, 0]), SE, Dirac(), inst.data.gamma_f_sq, 1e-12)
        grid = np.linspace(0, 4, 25)
        lo, up = envelope_arrays(envelope(clean, grid))
        glo, gup = golomb_envelope(clean, grid)
        np.testing.assert_allclose(up, gup, rtol=1e-3, atol=1e-3)
        np.testing.assert_allclose(lo, glo, rtol=1e-3, atol=1e-3)


def test_config_validation():
    with pytest.raises(InvalidInput):
        SigmaOptimizerConfig(log_sigma_min=1.0, log_sigma_max=0.0)
    with pytest.raises(InvalidInput):
        SigmaOptimizerConfig.from_dict({"tolerance": 1})
    cfg = SigmaOptimizerConfig(seeds=[1, 2])
    assert SigmaOptimizerConfig.from_dict(cfg.to_dict()) == cfg


def test_solver_shared_across_queries_matches_single_calls():
    d = consistent_instance(np.random.default_rng(13), 7).data
    q = np.linspace(0, 4, 9)
    batch = BoundSolver(d).solve(q)
    for x, r in zip(q, batch):
        one = optimal_bound(d, x)
        assert one.case_upper == r.case_upper and one.case_lower == r.case_lower
        assert one.upper == pytest.approx(r.upper, rel=1e-12, abs=1e-12)
        assert one.lower == pytest.approx(r.lower, rel=1e-12, abs=1e-12)
