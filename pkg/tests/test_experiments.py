import math

import numpy as np
import pytest
from scipy import integrate

from kernelbounds.errors import InvalidInput, RunDegraded
from kernelbounds.experiments import (
    AreaConfig,
    ControlConfig,
    ControlMethod,
    ControlProblem,
    OracleCheckConfig,
    run_area_comparison,
    run_control_study,
    run_oracle_check,
    solve_safe_control,
    summarize_area,
    summarize_control,
)
from kernelbounds.experiments._runner import parallel_map
from kernelbounds.experiments.area import area_trial, binomial_floor
from kernelbounds.experiments.control import control_dataset, nearest_subset, residual
from kernelbounds.gp_core import ProblemData
from kernelbounds.kernels import SquaredExponential
from kernelbounds.synth import NoiseModel, noisy_dataset

SMALL_AREA = AreaConfig(n_schedule=(1, 5, 20), trials=4, grid_points=60)


def test_residual_norm_below_budget():
    # |f|^2 = (1/2pi) int |f_hat|^2 / k_hat with k_hat(w) = l sqrt(pi) exp(-l^2 w^2 / 4)
    ell = ControlProblem().lengthscale

    def integrand(w):
        fh2 = math.pi / 4 * (math.exp(-((w - 10) ** 2) / 4) - math.exp(-((w + 10) ** 2) / 4)) ** 2
        return fh2 / (ell * math.sqrt(math.pi) * math.exp(-(ell**2) * w**2 / 4))

    val, err = integrate.quad(integrand, -80, 80, points=[-10, 10], limit=200)
    norm_sq = val / (2 * math.pi)
    assert norm_sq == pytest.approx(5.6746, abs=1e-3)
    assert norm_sq < ControlProblem().gamma_f_sq


def test_area_trial_report():
    r = area_trial(SMALL_AREA, 5, 0)
    assert r.N == 5 and r.trial == 0
    for m in ("optimal", "relaxed_eps", "prob"):
        assert r.area(m) >= 0
    assert r.contained["optimal"] and r.contained["relaxed_eps"]
    assert r.area_optimal <= r.area_relaxed_eps
    row = r.to_row()
    assert row["area_prob"] == r.area_prob and "time_optimal" in row


def test_area_comparison_is_deterministic_and_thread_independent():
    a = run_area_comparison(SMALL_AREA, threads=1)
    b = run_area_comparison(SMALL_AREA, threads=3)
    assert len(a) == 12
    key = lambda r: (r.N, r.trial, r.area_optimal, r.area_relaxed_eps, r.area_prob, tuple(sorted(r.contained.items())))
    assert [key(r) for r in a] == [key(r) for r in b]
    s = summarize_area(a)
    assert set(s) == {"1", "5", "20"}
    assert s["5"]["optimal"]["contained_rate"] == 1.0
    assert s["5"]["optimal"]["p5"] <= s["5"]["optimal"]["median"] <= s["5"]["optimal"]["p95"]


def test_area_function_is_nested_across_n():
    # the latent function depends on the trial only
    from kernelbounds.synth import rng_for, sample_rkhs_function

    f1 = sample_rkhs_function(SquaredExponential(1.0), (0, 4), 50, 1.0, rng_for(0, 3, 0))
    f2 = sample_rkhs_function(SquaredExponential(1.0), (0, 4), 50, 1.0, rng_for(0, 3, 0))
    np.testing.assert_array_equal(f1.coefficients, f2.coefficients)


def test_area_degraded_run(monkeypatch):
    import kernelbounds.experiments.area as area

    def boom(*args, **kwargs):
        raise InvalidInput("synthetic failure")

    monkeypatch.setattr(area, "area_trial", boom)
    failures = []
    with pytest.raises(RunDegraded):
        area.run_area_comparison(SMALL_AREA, failures=failures)
    assert len(failures) == 12 and failures[0]["kind"] == "InvalidInput"


def test_binomial_floor():
    assert binomial_floor(0.99, 100) == pytest.approx(0.99 - 3 * math.sqrt(0.99 * 0.01 / 100))


def test_parallel_map_preserves_order():
    assert parallel_map(lambda i: i * i, range(20), threads=4) == [i * i for i in range(20)]


def test_nearest_subset():
    p = ControlProblem()
    d = control_dataset(p, 30, 0, 0)
    s = nearest_subset(d, 0.3, 10)
    assert s.n == 10
    far = np.abs(d.inputs[:, 0] - 0.3)
    assert np.max(np.abs(s.inputs[:, 0] - 0.3)) <= np.sort(far)[9]
    assert s.gamma_w_sq == d.gamma_w_sq
    assert nearest_subset(s, 0.0, 10) is s


def test_control_solution_fields():
    p = ControlProblem()
    d = control_dataset(p, 30, 0, 0)
    for m in ControlMethod:
        sol = solve_safe_control(p, d, 0.4, m)
        assert p.u_min <= sol.u <= p.u_max
        assert sol.slack >= 0 and sol.time >= 0 and sol.sigma > 0
        assert sol.feasible == (sol.slack <= p.slack_tol)
    assert solve_safe_control(p, d, 0.4, "Probabilistic").sigma == p.eps


def test_control_low_uncertainty_limit():
    # dense data and a tiny noise level: the robust constraint reduces to the nominal barrier
    p = ControlProblem(eps=1e-6)
    x = np.linspace(-2, 2, 400)
    d = noisy_dataset(residual, x, SquaredExponential(p.lengthscale), NoiseModel("none", 1e-6), p.gamma_f_sq)
    checked = 0
    for xs in np.linspace(-1.9, 1.9, 41):
        u_req = (1 - p.gamma) * xs - p.kx * xs - p.k0 - float(residual(xs))
        if abs(u_req - p.u_max) < 0.05:
            continue
        sol = solve_safe_control(p, d, xs, ControlMethod.FULL)
        assert sol.feasible == (u_req <= p.u_max)
        if sol.feasible:
            assert sol.u >= u_req - 1e-9
            assert sol.u == pytest.approx(max(u_req, -(p.kx * xs + p.k0 + float(residual(xs))) / 2), abs=1e-2)
        else:
            # the penalty makes the solver push u to its limit before paying slack
            assert sol.u == p.u_max
        checked += 1
    assert checked > 30


def test_control_study_small():
    cfg = ControlConfig(n_schedule=(10, 30), repetitions=2, states=25)
    reports = run_control_study(cfg)
    assert len(reports) == 12
    for r in reports:
        assert 0 <= r.success_rate <= 1 and r.safety_violations == 0
    s = summarize_control(reports)
    assert set(s) == {"10", "30"} and set(s["10"]) == {m.value for m in ControlMethod}
    with pytest.raises(InvalidInput):
        run_control_study(ControlConfig(methods=("MPC",)))


def test_control_problem_round_trip():
    p = ControlProblem(gamma=0.9)
    assert ControlProblem.from_dict(p.to_dict()) == p
    with pytest.raises(InvalidInput):
        ControlProblem.from_dict({"gama": 0.9})
    assert p.true_next(1.0, 0.5) == pytest.approx(0.5 + 0.5 - 1 + float(residual(1.0)))


def test_oracle_check_small():
    rep = run_oracle_check(OracleCheckConfig(instances=12, master_seed=3))
    assert rep.instances == 12 and rep.passed
    assert rep.max_discrepancy <= 1e-6
    d = rep.to_dict()
    assert d["passed"] and "wall_time" not in d
