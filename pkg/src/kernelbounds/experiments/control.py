"""One-step safe control of ``x+ = 0.5 x + u - 1 + f_res(x)`` with a learned residual.

For each state the controller minimises ``(x+_nominal)^2 + u^2 + omega * s``
subject to ``x+_nominal - beta * sqrt(Sigma) >= (1 - gamma) x - s``, where the
nominal prediction uses the posterior mean. The deterministic methods treat
sigma as a decision variable: for fixed sigma the problem in ``u`` is convex
piecewise quadratic and solved exactly, and the outer search over sigma is the
same scalar search used for the bounds.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .. import _backend
from ..baselines import ProbBoundParams, prob_beta
from ..bounds import BoundSolver, SigmaOptimizerConfig
from ..errors import BoundError, InvalidInput
from ..gp_core import ProblemData, _Regularized
from ..kernels import SquaredExponential
from ..synth import NoiseModel, noisy_dataset, rng_for, sample_inputs
from ._runner import dataclass_from_dict, dataclass_to_dict, guarded, parallel_map
from .area import MAX_FAILURE_RATE


class ControlMethod(str, Enum):
    FULL = "DeterministicFull"
    SUBSET = "DeterministicSubset"
    PROB = "Probabilistic"


def residual(x):
    """True residual dynamics exp(-x^2) sin(10 x)."""
    x = np.asarray(x, dtype=float)
    return np.exp(-(x**2)) * np.sin(10.0 * x)


@dataclass(frozen=True)
class ControlProblem:
    kx: float = 0.5
    ku: float = 1.0
    k0: float = -1.0
    gamma: float = 0.95
    omega: float = 1e4
    u_min: float = -2.0
    u_max: float = 2.0
    lengthscale: float = math.sqrt(2.0) / 20.0
    eps: float = 0.01
    p: float = 0.99
    # norm^2 of the residual in the latent RKHS is about 5.675
    gamma_f_sq: float = 6.0
    subset_k: int = 10
    slack_tol: float = 1e-6

    def f_known(self, x, u):
        return self.kx * x + self.ku * u + self.k0

    def true_next(self, x, u):
        return self.f_known(x, u) + float(residual(x))

    def ctl(self, x: float) -> np.ndarray:
        return np.array([x, self.kx, self.ku, self.k0, self.gamma, self.omega, self.u_min, self.u_max])

    @classmethod
    def from_dict(cls, d: dict) -> "ControlProblem":
        return dataclass_from_dict(cls, d)

    def to_dict(self) -> dict:
        return dataclass_to_dict(self)


@dataclass(frozen=True)
class ControlSolution:
    u: float
    sigma: float
    slack: float
    feasible: bool
    time: float
    cost: float
    lower: float  # lower bound on the residual used in the constraint


def _finish(problem, x, mean, half, sigma, t0):
    cost, u, slack = _backend.python_backend.control_inner(mean, mean - half, problem.ctl(x))
    return ControlSolution(
        float(u), float(sigma), float(slack), bool(slack <= problem.slack_tol), time.perf_counter() - t0, float(cost), mean - half
    )


def nearest_subset(data: ProblemData, x: float, k: int) -> ProblemData:
    """The k training points closest to x; budgets are kept as they are."""
    if data.n <= k:
        return data
    d = np.abs(data.inputs[:, 0] - x)
    return data.subset(np.sort(np.argsort(d, kind="stable")[:k]))


def solve_safe_control(
    problem: ControlProblem,
    data: ProblemData,
    x_now: float,
    method,
    opt_cfg: Optional[SigmaOptimizerConfig] = None,
) -> ControlSolution:
    """Best admissible input at ``x_now``; every call factorises its data from scratch."""
    method = ControlMethod(method)
    t0 = time.perf_counter()
    x = float(x_now)
    if method is ControlMethod.PROB:
        params = ProbBoundParams(problem.eps, problem.p, problem.eps)
        mean, var = _Regularized(data, params.sigma).mean_var([x])
        half = prob_beta(data, params) * math.sqrt(float(var[0]))
        return _finish(problem, x, float(mean[0]), half, params.sigma, t0)
    if method is ControlMethod.SUBSET:
        data = nearest_subset(data, x, problem.subset_k)
    solver = BoundSolver(data, opt_cfg)
    a, v0, _ = solver.model.project([x])
    _, sigma, _, _ = solver.search_side("lower", a[0], float(v0[0]), mode=_backend.python_backend.MODE_CONTROL, ctl=problem.ctl(x))
    mean, half = solver.relaxed_at(a[0], float(v0[0]), sigma)
    return _finish(problem, x, mean, half, sigma, t0)


@dataclass(frozen=True)
class ControlConfig:
    n_schedule: tuple = (10, 30, 100, 300)
    repetitions: int = 20
    states: int = 500
    domain: tuple = (-2.0, 2.0)
    methods: tuple = tuple(m.value for m in ControlMethod)
    master_seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "ControlConfig":
        return dataclass_from_dict(cls, d, tuples=("n_schedule", "domain", "methods"))

    def to_dict(self) -> dict:
        return dataclass_to_dict(self)


@dataclass(frozen=True)
class ControlTrialReport:
    method: str
    N: int
    repetition: int
    success_rate: float
    solve_time_stats: tuple  # (median, p5, p95) seconds
    safety_violations: int
    failures: int = 0

    def to_row(self) -> dict:
        med, p5, p95 = self.solve_time_stats
        return {
            "method": self.method,
            "N": self.N,
            "repetition": self.repetition,
            "success_rate": self.success_rate,
            "time_median": med,
            "time_p5": p5,
            "time_p95": p95,
            "safety_violations": self.safety_violations,
            "failures": self.failures,
        }


def control_dataset(problem: ControlProblem, n: int, seed, repetition: int) -> ProblemData:
    x = sample_inputs((-2.0, 2.0), n, rng_for(seed, n, repetition, 1))
    noise = NoiseModel("truncated_gaussian", problem.eps)
    return noisy_dataset(
        residual, x, SquaredExponential(problem.lengthscale), noise, problem.gamma_f_sq, rng_for(seed, n, repetition, 2)
    )


def control_trial(problem, cfg: ControlConfig, n: int, rep: int, method, opt_cfg=None) -> ControlTrialReport:
    data = control_dataset(problem, n, cfg.master_seed, rep)
    states = np.linspace(cfg.domain[0], cfg.domain[1], cfg.states)
    feasible, times, violations, failures = 0, [], 0, 0
    for x in states:
        try:
            sol = solve_safe_control(problem, data, float(x), method, opt_cfg)
        except BoundError:
            failures += 1  # counted as infeasible
            continue
        times.append(sol.time)
        if sol.feasible:
            feasible += 1
            if problem.true_next(float(x), sol.u) < (1.0 - problem.gamma) * float(x):
                violations += 1
    t = np.array(times) if times else np.array([math.nan])
    stats = (float(np.median(t)), float(np.percentile(t, 5)), float(np.percentile(t, 95)))
    return ControlTrialReport(ControlMethod(method).value, n, rep, feasible / len(states), stats, violations, failures)


def run_control_study(
    cfg: ControlConfig,
    problem: Optional[ControlProblem] = None,
    opt_cfg: Optional[SigmaOptimizerConfig] = None,
    threads: int = 1,
    failures: Optional[list] = None,
) -> list:
    """One report per (N, repetition, method)."""
    from ..errors import RunDegraded

    problem = problem or ControlProblem()
    for m in cfg.methods:
        try:
            ControlMethod(m)
        except ValueError as exc:
            raise InvalidInput("unknown control method", method=m) from exc
    items = [(n, r, m) for n in cfg.n_schedule for r in range(cfg.repetitions) for m in cfg.methods]
    out = parallel_map(lambda it: guarded(lambda i: control_trial(problem, cfg, *i, opt_cfg), it), items, threads)
    reports, failed = [], []
    for (n, r, m), res in zip(items, out):
        if isinstance(res, ControlTrialReport):
            reports.append(res)
        else:
            failed.append({"N": n, "repetition": r, "method": m, **res.to_dict()})
    if failures is not None:
        failures.extend(failed)
    if items and len(failed) > MAX_FAILURE_RATE * len(items):
        raise RunDegraded("too many failed trials", failed=len(failed), total=len(items), first=failed[0])
    return reports


def summarize_control(reports) -> dict:
    """Mean success rate and pooled time percentiles per N and method."""
    out = {}
    for n in sorted({r.N for r in reports}):
        entry = {}
        for m in sorted({r.method for r in reports if r.N == n}):
            rs = [r for r in reports if r.N == n and r.method == m]
            med = np.array([r.solve_time_stats[0] for r in rs])
            entry[m] = {
                "success_rate": float(np.mean([r.success_rate for r in rs])),
                "time_median": float(np.median(med)),
                "time_p5": float(np.percentile([r.solve_time_stats[1] for r in rs], 50)),
                "time_p95": float(np.percentile([r.solve_time_stats[2] for r in rs], 50)),
                "safety_violations": int(sum(r.safety_violations for r in rs)),
                "repetitions": len(rs),
            }
        out[str(n)] = entry
    return out
