"""Randomised comparison of the sigma-search bounds against the QCQP oracle."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..bounds import SIDES, BoundSolver, SigmaOptimizerConfig
from ..errors import BoundError, OptimizerFailed
from ..gp_core import ProblemData
from ..kernels import Dirac, LinearFeatures, Scaled, SquaredExponential, gram_matrix
from ..oracle import OracleConfig, QcqpInstance, oracle_lower, oracle_upper
from ..synth import rng_for
from ._runner import dataclass_from_dict, dataclass_to_dict, parallel_map


@dataclass(frozen=True)
class OracleCheckConfig:
    instances: int = 200
    n_min: int = 1
    n_max: int = 10
    domain: tuple = (0.0, 4.0)
    min_spacing: float = 0.2
    budget_range: tuple = (0.1, 10.0)
    tol: float = 1e-6
    master_seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "OracleCheckConfig":
        return dataclass_from_dict(cls, d, tuples=("domain", "budget_range"))

    def to_dict(self) -> dict:
        return dataclass_to_dict(self)


def random_instance(rng: np.random.Generator, cfg: OracleCheckConfig = OracleCheckConfig()):
    """A consistent problem plus one query.

    The latent function has norm^2 ``u * Gf^2`` and the noise vector has
    ``|w|^2_{Kw^-1} = v * Gw^2`` with ``u, v`` in (0.05, 0.95), so both budgets
    hold strictly and the oracle has an interior feasible point.
    """
    n = int(rng.integers(cfg.n_min, cfg.n_max + 1))
    lo, hi = cfg.domain
    while True:
        x = np.sort(rng.uniform(lo, hi, n))
        if n < 2 or np.diff(x).min() > cfg.min_spacing:
            break
    if rng.uniform() < 0.5:
        kf = SquaredExponential(float(rng.uniform(0.5, 1.5)))
    else:
        kf = Scaled(LinearFeatures.poly(int(rng.integers(1, 4))), float(rng.uniform(0.2, 2.0)))
    kw = Dirac() if rng.uniform() < 0.5 else Scaled(SquaredExponential(0.1), 1.0)
    gf2, gw2 = (float(v) for v in rng.uniform(*cfg.budget_range, size=2))

    if kf.finite_rank is not None:
        theta = rng.standard_normal(kf.finite_rank)
        theta *= math.sqrt(rng.uniform(0.05, 0.95) * gf2 / float(theta @ theta))
        fx = kf.features(x.reshape(-1, 1)) @ theta
    else:
        c = rng.uniform(lo, hi, 8)
        a = rng.standard_normal(8)
        a *= math.sqrt(rng.uniform(0.05, 0.95) * gf2 / float(a @ gram_matrix(kf, c, c) @ a))
        fx = gram_matrix(kf, x, c) @ a
    kwm = gram_matrix(kw, x, x)
    w = rng.standard_normal(n)
    w *= math.sqrt(rng.uniform(0.05, 0.95) * gw2 / float(w @ np.linalg.solve(kwm, w)))
    data = ProblemData(x, fx + w, kf, kw, gf2, gw2)
    # A quarter of the queries sit on a training input, where the closed forms apply.
    q = float(x[rng.integers(n)]) if rng.uniform() < 0.25 else float(rng.uniform(lo, hi))
    return data, q


@dataclass
class OracleCheckReport:
    instances: int = 0
    max_discrepancy: float = 0.0
    max_gap: float = 0.0
    failures: list = field(default_factory=list)
    worst: Optional[dict] = None
    wall_time: float = 0.0
    tol: float = 1e-6

    @property
    def passed(self) -> bool:
        return not self.failures and self.max_discrepancy <= self.tol and self.max_gap <= self.tol

    def to_dict(self) -> dict:
        return {
            "instances": self.instances,
            "max_discrepancy": self.max_discrepancy,
            "max_gap": self.max_gap,
            "tol": self.tol,
            "passed": self.passed,
            "worst": self.worst,
            "errors": self.failures,
        }


def check_instance(data: ProblemData, query, opt_cfg=None, oracle_cfg=None) -> list:
    """Per side: (side, bound, oracle value, relative discrepancy, relative gap, case)."""
    res = BoundSolver(data, opt_cfg).solve([query])[0]
    if isinstance(res, OptimizerFailed):
        res = res.context["result"]
    elif isinstance(res, BoundError):
        raise res
    inst = QcqpInstance.from_problem(data, query)
    rows = []
    for side in SIDES:
        o = (oracle_upper if side == "upper" else oracle_lower)(inst, oracle_cfg)
        v, _, case = res.side(side)
        scale = 1.0 + abs(o.value)
        rows.append((side, v, o.value, abs(v - o.value) / scale, o.gap / scale, case.value))
    return rows


def run_oracle_check(
    cfg: OracleCheckConfig,
    opt_cfg: Optional[SigmaOptimizerConfig] = None,
    oracle_cfg: Optional[OracleConfig] = None,
    threads: int = 1,
) -> OracleCheckReport:
    t0 = time.perf_counter()

    def one(i):
        data, q = random_instance(rng_for(cfg.master_seed, i), cfg)
        try:
            return i, q, check_instance(data, q, opt_cfg, oracle_cfg)
        except BoundError as exc:
            return i, q, exc

    rep = OracleCheckReport(tol=cfg.tol)
    for i, q, rows in parallel_map(one, range(cfg.instances), threads):
        rep.instances += 1
        if isinstance(rows, BoundError):
            rep.failures.append({"instance": i, "query": q, **rows.to_dict()})
            continue
        for side, v, o, err, gap, case in rows:
            rep.max_gap = max(rep.max_gap, gap)
            if err >= rep.max_discrepancy:
                rep.max_discrepancy = err
                rep.worst = {"instance": i, "query": q, "side": side, "bound": v, "oracle": o, "case": case}
    rep.wall_time = time.perf_counter() - t0
    return rep
