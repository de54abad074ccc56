"""Posterior mean/variance, interpolant norm and the budget term beta^2.

Everything here goes through one Cholesky factorisation of
``Kf + sigma^2 Kw`` per (data, sigma) pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .decomp import RECON_RTOL, chol_solve_pd
from .errors import InvalidInput, NumericalBreakdown
from .kernels import (
    Dirac,
    KernelSpec,
    as_points,
    gram_matrix,
    kernel_diag,
    pairwise_distinct,
)


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Training set plus the two kernels and the two squared norm budgets."""

    inputs: np.ndarray
    outputs: np.ndarray
    kf: KernelSpec
    kw: KernelSpec = Dirac()
    gamma_f_sq: float = 1.0
    gamma_w_sq: float = 1.0

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        y = np.asarray(self.outputs, dtype=float).ravel()
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise InvalidInput("inputs/outputs length mismatch", inputs=x.shape, outputs=y.shape)
        if not (self.gamma_f_sq > 0 and self.gamma_w_sq > 0):
            raise InvalidInput("budgets must be positive", gamma_f_sq=self.gamma_f_sq, gamma_w_sq=self.gamma_w_sq)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidInput("non-finite data")
        if not pairwise_distinct(x):
            raise InvalidInput("training inputs must be pairwise distinct")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "outputs", y)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def with_budgets(self, gamma_f_sq=None, gamma_w_sq=None) -> "ProblemData":
        return ProblemData(
            self.inputs,
            self.outputs,
            self.kf,
            self.kw,
            self.gamma_f_sq if gamma_f_sq is None else gamma_f_sq,
            self.gamma_w_sq if gamma_w_sq is None else gamma_w_sq,
        )

    def subset(self, idx) -> "ProblemData":
        idx = np.asarray(idx, dtype=int)
        return ProblemData(self.inputs[idx], self.outputs[idx], self.kf, self.kw, self.gamma_f_sq, self.gamma_w_sq)

    def appended(self, x, y) -> "ProblemData":
        x = as_points(x, self.dim)
        return ProblemData(
            np.vstack([self.inputs, x]),
            np.concatenate([self.outputs, np.atleast_1d(np.asarray(y, dtype=float))]),
            self.kf,
            self.kw,
            self.gamma_f_sq,
            self.gamma_w_sq,
        )


@dataclass(frozen=True)
class PosteriorState:
    sigma: float
    mean_at_query: float
    var_at_query: float
    interpolant_norm_sq: float
    beta_sq: float


class _Regularized:
    """Cholesky of ``Kf + sigma^2 Kw`` shared by every quantity at one sigma."""

    def __init__(self, data: ProblemData, sigma: float):
        if not sigma > 0:
            raise InvalidInput("sigma must be positive", sigma=sigma)
        self.data = data
        self.sigma = float(sigma)
        if data.n:
            x = data.inputs
            k = gram_matrix(data.kf, x, x) + self.sigma**2 * gram_matrix(data.kw, x, x)
            self.cho, self.jitter = chol_solve_pd(k)
            self.alpha = linalg.cho_solve(self.cho, data.outputs, check_finite=False)
        else:
            self.cho, self.jitter = None, 0.0
            self.alpha = np.zeros(0)

    def norm_sq(self) -> float:
        return max(float(self.data.outputs @ self.alpha), 0.0)

    def mean_var(self, queries):
        q = as_points(queries, self.data.dim)
        kss = kernel_diag(self.data.kf, q)
        if not self.data.n:
            return np.zeros(q.shape[0]), kss
        kq = gram_matrix(self.data.kf, self.data.inputs, q)
        mean = kq.T @ self.alpha
        low = linalg.solve_triangular(self.cho[0], kq, lower=True, check_finite=False)
        var = kss - np.einsum("ij,ij->j", low, low)
        tol = RECON_RTOL * np.maximum(kss, 1.0)
        if np.any(var < -tol):
            raise NumericalBreakdown("posterior variance is negative", sigma=self.sigma, min_var=float(var.min()))
        return mean, np.clip(var, 0.0, None)


def posterior_state(data: ProblemData, sigma: float, query) -> PosteriorState:
    reg = _Regularized(data, sigma)
    mean, var = reg.mean_var(query)
    nrm = reg.norm_sq()
    return PosteriorState(
        sigma=float(sigma),
        mean_at_query=float(mean[0]),
        var_at_query=float(var[0]),
        interpolant_norm_sq=nrm,
        beta_sq=data.gamma_f_sq + data.gamma_w_sq / sigma**2 - nrm,
    )


def posterior_mean(data: ProblemData, sigma: float, query):
    """Kf_{*,X} (Kf + sigma^2 Kw)^{-1} y; scalar for one query, array for many."""
    mean, _ = _Regularized(data, sigma).mean_var(query)
    return _squeeze(mean, query)


def posterior_var(data: ProblemData, sigma: float, query):
    """Kf_{*,*} - Kf_{*,X} (Kf + sigma^2 Kw)^{-1} Kf_{X,*}, clamped at zero."""
    _, var = _Regularized(data, sigma).mean_var(query)
    return _squeeze(var, query)


def interpolant_norm_sq(data: ProblemData, sigma: float) -> float:
    """y^T (Kf + sigma^2 Kw)^{-1} y."""
    return _Regularized(data, sigma).norm_sq()


def beta_sq(data: ProblemData, sigma: float) -> float:
    """Gf^2 + Gw^2 / sigma^2 - interpolant norm. Negative means sigma is infeasible."""
    return data.gamma_f_sq + data.gamma_w_sq / sigma**2 - interpolant_norm_sq(data, sigma)


def _squeeze(values, query):
    q = np.asarray(query, dtype=float)
    if q.ndim == 0 or (q.ndim == 1 and values.shape[0] == 1):
        return float(values[0])
    return values
