import math

import numpy as np
import pytest

from kernelbounds.bounds import CaseLabel, optimal_bound
from kernelbounds.errors import InvalidInput
from kernelbounds.kernels import Dirac, SquaredExponential
from kernelbounds.oracle import OracleConfig, QcqpInstance, oracle_lower, oracle_upper

from conftest import consistent_instance


def _scalar(gw2):
    return QcqpInstance(np.array([[1.0]]), np.array([1.0]), np.eye(1), np.zeros(1), 1.0, gw2)


def test_function_budget_binds():
    up, lo = oracle_upper(_scalar(1.0)), oracle_lower(_scalar(1.0))
    assert up.value == pytest.approx(1.0, abs=1e-9)
    assert lo.value == pytest.approx(-1.0, abs=1e-9)
    np.testing.assert_allclose(up.theta, [1.0], atol=1e-6)


def test_noise_budget_binds():
    up, lo = oracle_upper(_scalar(0.25)), oracle_lower(_scalar(0.25))
    assert up.value == pytest.approx(0.5, abs=1e-9)
    assert lo.value == pytest.approx(-0.5, abs=1e-9)


def test_zero_query_features():
    inst = QcqpInstance(np.array([[1.0, 0.0]]), np.zeros(2), np.eye(1), np.ones(1), 4.0, 1.0)
    assert oracle_upper(inst).value == 0.0


def test_shape_validation():
    with pytest.raises(InvalidInput):
        QcqpInstance(np.ones((2, 1)), np.ones(1), np.eye(3), np.zeros(2), 1.0, 1.0)


def test_duality_and_mirror():
    rng = np.random.default_rng(1)
    for _ in range(10):
        d = consistent_instance(rng, 5, kf=SquaredExponential(1.0)).data
        inst = QcqpInstance.from_problem(d, rng.uniform(0, 4))
        up = oracle_upper(inst)
        assert up.value >= up.primal - 1e-12
        assert up.gap <= 1e-6 * (1 + abs(up.value))
        assert min(up.multipliers) >= 0
        assert oracle_lower(inst).value == pytest.approx(-oracle_upper(inst.negated()).value, abs=1e-12)


def test_multipliers_follow_case_labels():
    rng = np.random.default_rng(2)
    seen = set()
    for _ in range(60):
        d = consistent_instance(rng).data
        q = rng.uniform(-1, 5)
        r = optimal_bound(d, q)
        up = oracle_upper(QcqpInstance.from_problem(d, q))
        lf, lw = up.multipliers
        if r.case_upper is CaseLabel.CASE1:
            assert lw <= 1e-6 * lf
        elif r.case_upper is CaseLabel.CASE2:
            assert lf <= 1e-6 * lw
        elif r.case_upper is CaseLabel.CASE3:
            assert lf > 1e-6 and lw > 1e-6
            # both budgets active: the multiplier ratio is the optimal sigma
            assert up.sigma == pytest.approx(r.sigma_star_upper, rel=1e-3)
        seen.add(r.case_upper)
    assert {CaseLabel.CASE1, CaseLabel.CASE3} <= seen


def test_config_grid_is_only_a_starting_point():
    d = consistent_instance(np.random.default_rng(3), 4, kf=SquaredExponential(0.8), kw=Dirac()).data
    inst = QcqpInstance.from_problem(d, 1.1)
    a = oracle_upper(inst).value
    b = oracle_upper(inst, OracleConfig(grid_points=9)).value
    assert a == pytest.approx(b, rel=1e-9)
    assert math.isfinite(a)
