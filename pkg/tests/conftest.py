import math

import numpy as np
import pytest

from kernelbounds.gp_core import ProblemData
from kernelbounds.kernels import Dirac, LinearFeatures, Scaled, SquaredExponential, gram_matrix

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


class Consistent:
    """A dataset together with the (f, w) pair that generated it."""

    def __init__(self, data, f, w_fun):
        self.data = data
        self.f = f
        self.w_fun = w_fun  # noise value at a new input keeping the noise norm unchanged


def consistent_instance(rng, n=None, kf=None, kw=None, fill=(0.05, 0.95), spacing=0.2):
    n = int(rng.integers(1, 11)) if n is None else n
    while True:
        x = np.sort(rng.uniform(0.0, 4.0, n))
        if n < 2 or np.diff(x).min() > spacing:
            break
    if kf is None:
        kf = SquaredExponential(float(rng.uniform(0.5, 1.5))) if rng.uniform() < 0.5 else Scaled(
            LinearFeatures.poly(int(rng.integers(1, 4))), float(rng.uniform(0.2, 2.0))
        )
    if kw is None:
        kw = Dirac() if rng.uniform() < 0.5 else Scaled(SquaredExponential(0.1), 1.0)
    gf2, gw2 = (float(v) for v in rng.uniform(0.1, 10.0, 2))
    if kf.finite_rank is not None:
        theta = rng.standard_normal(kf.finite_rank)
        theta *= math.sqrt(rng.uniform(*fill) * gf2 / float(theta @ theta))

        def f(z):
            return kf.features(np.asarray(z, dtype=float).reshape(-1, 1)) @ theta

    else:
        c = rng.uniform(0, 4, 8)
        a = rng.standard_normal(8)
        a *= math.sqrt(rng.uniform(*fill) * gf2 / float(a @ gram_matrix(kf, c, c) @ a))

        def f(z):
            return gram_matrix(kf, np.asarray(z, dtype=float).reshape(-1), c) @ a

    kwm = gram_matrix(kw, x, x)
    w = rng.standard_normal(n)
    w *= math.sqrt(rng.uniform(*fill) * gw2 / float(w @ np.linalg.solve(kwm, w)))
    coef = np.linalg.solve(kwm, w)

    def w_fun(z):
        return float((gram_matrix(kw, np.atleast_1d(z), x) @ coef)[0])

    return Consistent(ProblemData(x, f(x) + w, kf, kw, gf2, gw2), f, w_fun)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
