"""Area of the uncertainty region versus the number of data points.

Per trial: draw an RKHS function of norm^2 Gf^2, draw inputs and truncated
Gaussian noise, then integrate the width of three envelopes (optimal,
relaxed at sigma = eps, sub-Gaussian high-probability) over a query grid and
check whether each envelope contains the true function.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from ..baselines import ProbBoundParams, prob_envelope
from ..bounds import BoundSolver, SigmaOptimizerConfig, envelope_arrays, relaxed_envelope
from ..errors import RunDegraded
from ..kernels import SquaredExponential
from ..synth import NoiseModel, make_dataset, rng_for, sample_inputs, sample_rkhs_function
from ._runner import dataclass_from_dict, dataclass_to_dict, guarded, parallel_map

METHODS = ("optimal", "relaxed_eps", "prob")

#: Fraction of failed trials above which a study is reported as degraded.
MAX_FAILURE_RATE = 0.05


@dataclass(frozen=True)
class AreaConfig:
    n_schedule: tuple = (1, 2, 5, 10, 20, 50, 100, 200)
    trials: int = 100
    domain: tuple = (0.0, 4.0)
    lengthscale: float = 1.0
    eps: float = 0.01
    p: float = 0.99
    gamma_f_sq: float = 1.0
    grid_points: int = 200
    centers: int = 50
    master_seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "AreaConfig":
        return dataclass_from_dict(cls, d, tuples=("n_schedule", "domain"))

    def to_dict(self) -> dict:
        return dataclass_to_dict(self)


@dataclass(frozen=True)
class AreaTrialReport:
    N: int
    trial: int
    area_optimal: float
    area_relaxed_eps: float
    area_prob: float
    contained: dict = field(default_factory=dict)
    wall_time: dict = field(default_factory=dict)

    def area(self, method: str) -> float:
        return getattr(self, "area_" + method)

    def to_row(self) -> dict:
        row = {"N": self.N, "trial": self.trial}
        for m in METHODS:
            row["area_" + m] = self.area(m)
        for m in METHODS:
            row["contained_" + m] = self.contained[m]
        for m in METHODS:
            row["time_" + m] = self.wall_time[m]
        return row


def area_trial(cfg: AreaConfig, n: int, trial: int, opt_cfg: Optional[SigmaOptimizerConfig] = None) -> AreaTrialReport:
    kf = SquaredExponential(cfg.lengthscale)
    # The function depends on the trial only, so trials are nested across N.
    f = sample_rkhs_function(kf, cfg.domain, cfg.centers, cfg.gamma_f_sq, rng_for(cfg.master_seed, trial, 0))
    x = sample_inputs(cfg.domain, n, rng_for(cfg.master_seed, trial, n, 1))
    data = make_dataset(f, NoiseModel("truncated_gaussian", cfg.eps), x, cfg.gamma_f_sq, rng=rng_for(cfg.master_seed, trial, n, 2))
    grid = np.linspace(cfg.domain[0], cfg.domain[1], cfg.grid_points)
    truth = f(grid)

    envs, times = {}, {}
    t0 = time.perf_counter()
    envs["optimal"] = envelope_arrays(BoundSolver(data, opt_cfg).solve(grid))
    times["optimal"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    envs["relaxed_eps"] = relaxed_envelope(data, cfg.eps, grid)
    times["relaxed_eps"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    envs["prob"] = prob_envelope(data, ProbBoundParams(cfg.eps, cfg.p, cfg.eps), grid)
    times["prob"] = time.perf_counter() - t0

    areas = {m: float(integrate.trapezoid(hi - lo, grid)) for m, (lo, hi) in envs.items()}
    contained = {m: bool(np.all((lo <= truth) & (truth <= hi))) for m, (lo, hi) in envs.items()}
    return AreaTrialReport(n, trial, areas["optimal"], areas["relaxed_eps"], areas["prob"], contained, times)


def run_area_comparison(
    cfg: AreaConfig,
    opt_cfg: Optional[SigmaOptimizerConfig] = None,
    threads: int = 1,
    failures: Optional[list] = None,
) -> list:
    """All (N, trial) pairs; failed trials go to ``failures`` (dicts) and are skipped.

    Raises :class:`RunDegraded` if more than 5% of the trials fail.
    """
    items = [(n, t) for n in cfg.n_schedule for t in range(cfg.trials)]
    out = parallel_map(lambda it: guarded(lambda i: area_trial(cfg, i[0], i[1], opt_cfg), it), items, threads)
    reports, failed = [], []
    for (n, t), r in zip(items, out):
        if isinstance(r, AreaTrialReport):
            reports.append(r)
        else:
            failed.append({"N": n, "trial": t, **r.to_dict()})
    if failures is not None:
        failures.extend(failed)
    if items and len(failed) > MAX_FAILURE_RATE * len(items):
        raise RunDegraded("too many failed trials", failed=len(failed), total=len(items), first=failed[0])
    return reports


def summarize_area(reports) -> dict:
    """Median and 5/95 percentiles of each method's area per N, plus containment rates."""
    out = {}
    for n in sorted({r.N for r in reports}):
        rs = [r for r in reports if r.N == n]
        entry = {"trials": len(rs)}
        for m in METHODS:
            a = np.array([r.area(m) for r in rs])
            entry[m] = {
                "median": float(np.median(a)),
                "p5": float(np.percentile(a, 5)),
                "p95": float(np.percentile(a, 95)),
                "contained_rate": float(np.mean([r.contained[m] for r in rs])),
            }
        out[str(n)] = entry
    return out


def binomial_floor(p: float, trials: int, k: float = 3.0) -> float:
    """p minus k binomial standard errors."""
    return p - k * math.sqrt(p * (1.0 - p) / max(trials, 1))
