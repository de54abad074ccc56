import numpy as np
import pytest

from kernelbounds.errors import InvalidInput
from kernelbounds.gp_core import (
    ProblemData,
    beta_sq,
    interpolant_norm_sq,
    posterior_mean,
    posterior_state,
    posterior_var,
)
from kernelbounds.kernels import Dirac, SquaredExponential

from conftest import consistent_instance

SE = SquaredExponential(1.0)


def _one(y=1.0, gf2=1.0, gw2=1.0):
    return ProblemData([0.0], [y], SE, Dirac(), gf2, gw2)


def test_empty_data():
    d = ProblemData(np.zeros((0, 1)), [], SE)
    assert posterior_mean(d, 1.0, 0.3) == 0.0
    assert posterior_var(d, 1.0, 0.3) == 1.0
    assert beta_sq(d, 1.0) == 2.0


def test_zero_outputs():
    d = ProblemData([0.0, 1.0], [0.0, 0.0], SE)
    np.testing.assert_array_equal(posterior_mean(d, 0.5, [0.2, 3.0]), 0.0)
    assert interpolant_norm_sq(d, 0.5) == 0.0


def test_single_point_scalar_formulas():
    d = _one()
    assert posterior_mean(d, 1.0, 0.0) == pytest.approx(0.5, abs=1e-15)
    assert posterior_var(d, 1.0, 0.0) == pytest.approx(0.5, abs=1e-15)
    assert interpolant_norm_sq(d, 1.0) == pytest.approx(0.5, abs=1e-15)
    assert interpolant_norm_sq(ProblemData([2.7], [1.0], SE), 1.0) == pytest.approx(0.5, abs=1e-15)


def test_large_sigma_limit():
    rng = np.random.default_rng(0)
    d = consistent_instance(rng, 6, kf=SE).data
    assert posterior_var(d, 1e8, 1.3) == pytest.approx(1.0, abs=1e-6)


def test_beta_sq_experiment_setting():
    eps = 0.01
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 4)
    y = float(np.sin(x)) * 0.5 + rng.uniform(-eps, eps)
    d = ProblemData([x], [y], SE, Dirac(), 1.0, eps**2)
    for s in (1e-3, 1e-2, 0.1, 1.0):
        assert beta_sq(d, s) > 0


def test_beta_sq_falsified_data():
    d = _one(y=100.0)
    for s in (0.1, 0.5, 1.0):
        assert beta_sq(d, s) < 0
    # the noise budget term wins again once sigma is tiny
    assert beta_sq(d, 1e-3) > 0


def test_state_bundles_consistent_values():
    d = consistent_instance(np.random.default_rng(4), 5).data
    st = posterior_state(d, 0.3, 1.7)
    assert st.beta_sq == d.gamma_f_sq + d.gamma_w_sq / 0.3**2 - st.interpolant_norm_sq
    assert st.mean_at_query == pytest.approx(posterior_mean(d, 0.3, 1.7), rel=1e-14)
    assert 0 <= st.var_at_query <= d.kf.diag(np.array([[1.7]]))[0] + 1e-8


def test_continuity_and_monotonicity():
    rng = np.random.default_rng(5)
    for _ in range(20):
        d = consistent_instance(rng).data
        q = rng.uniform(0, 4)
        s = float(10 ** rng.uniform(-2, 1))
        h = 1e-7 * s
        for fn in (posterior_mean, posterior_var):
            a, b = fn(d, s, q), fn(d, s + h, q)
            assert abs(a - b) <= 1e-5 * (1 + abs(a))
        s1, s2 = sorted(10 ** rng.uniform(-2, 2, 2))
        assert posterior_var(d, s1, q) <= posterior_var(d, s2, q) + 1e-12
        assert interpolant_norm_sq(d, s2) <= interpolant_norm_sq(d, s1) + 1e-12


def test_training_point_small_sigma():
    rng = np.random.default_rng(6)
    d = consistent_instance(rng, 5, kf=SE, spacing=0.5).data
    for k in range(d.n):
        x = d.inputs[k, 0]
        assert posterior_mean(d, 1e-6, x) == pytest.approx(d.outputs[k], abs=1e-3)
        assert posterior_var(d, 1e-6, x) <= 1e-3


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(inputs=[0.0, 0.0], outputs=[1.0, 2.0]),
        dict(inputs=[0.0, 1.0], outputs=[1.0]),
        dict(inputs=[0.0], outputs=[np.nan]),
        dict(inputs=[0.0], outputs=[1.0], gamma_f_sq=0.0),
        dict(inputs=[0.0], outputs=[1.0], gamma_w_sq=-1.0),
    ],
)
def test_problem_validation(kwargs):
    with pytest.raises(InvalidInput):
        ProblemData(kf=SE, **kwargs)
