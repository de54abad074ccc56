"""Comparison envelopes: sub-Gaussian high-probability bound, noise-free
power-function bound and the set-membership ellipsoid for linear features."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .decomp import RECON_RTOL, FeatureDecomposition, chol_solve_pd, noise_cholesky
from .errors import HypothesisFalsified, InvalidInput, NumericalBreakdown
from .gp_core import ProblemData, _Regularized
from .kernels import as_points, gram_matrix, kernel_diag


@dataclass(frozen=True)
class ProbBoundParams:
    """Sub-Gaussian constant ``R``, confidence ``p`` and regulariser ``sigma``."""

    sub_gaussian_R: float = 0.01
    p: float = 0.99
    sigma: float = 0.01

    def __post_init__(self):
        if not self.sub_gaussian_R > 0:
            raise InvalidInput("R must be positive", R=self.sub_gaussian_R)
        if not 0.0 < self.p < 1.0:
            raise InvalidInput("confidence must lie in (0, 1)", p=self.p)
        if not self.sigma > 0:
            raise InvalidInput("sigma must be positive", sigma=self.sigma)


def prob_beta(data: ProblemData, params: ProbBoundParams) -> float:
    """Gf + (R / sigma) sqrt(2 ln(1 / (1 - p)) + ln det(I + Kf / sigma^2))."""
    logdet = 0.0
    if data.n:
        k = gram_matrix(data.kf, data.inputs, data.inputs) / params.sigma**2
        k[np.diag_indices_from(k)] += 1.0
        cho, _ = chol_solve_pd(k)
        logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
    inner = 2.0 * math.log(1.0 / (1.0 - params.p)) + logdet
    return math.sqrt(data.gamma_f_sq) + params.sub_gaussian_R / params.sigma * math.sqrt(inner)


def prob_envelope(data: ProblemData, params: ProbBoundParams, queries, beta: Optional[float] = None):
    """(lower, upper) arrays of ``mu_sigma -+ beta_prob sqrt(Sigma_sigma)``."""
    beta = prob_beta(data, params) if beta is None else beta
    mean, var = _Regularized(data, params.sigma).mean_var(queries)
    half = beta * np.sqrt(var)
    return mean - half, mean + half


def prob_bound(data: ProblemData, params: ProbBoundParams, query):
    """High-probability (lower, upper) at one query point (i.i.d. noise assumed)."""
    lo, hi = prob_envelope(data, params, as_points(query, data.dim)[:1])
    return float(lo[0]), float(hi[0])


def golomb_envelope(data: ProblemData, queries):
    """Noise-free interpolation envelope ``mu_0 -+ sqrt(Gf^2 - |mu_0|^2) sqrt(Sigma_0)``."""
    q = as_points(queries, data.dim)
    kss = kernel_diag(data.kf, q)
    if data.n == 0:
        half = math.sqrt(data.gamma_f_sq) * np.sqrt(kss)
        return -half, half
    cho, _ = chol_solve_pd(gram_matrix(data.kf, data.inputs, data.inputs))
    alpha = linalg.cho_solve(cho, data.outputs, check_finite=False)
    nrm = float(data.outputs @ alpha)
    if data.gamma_f_sq < nrm:
        raise HypothesisFalsified("interpolant norm exceeds the function budget", norm_sq=nrm, gamma_f_sq=data.gamma_f_sq)
    kq = gram_matrix(data.kf, data.inputs, q)
    mean = kq.T @ alpha
    low = linalg.solve_triangular(cho[0], kq, lower=True, check_finite=False)
    var = np.clip(kss - np.einsum("ij,ij->j", low, low), 0.0, None)
    half = math.sqrt(data.gamma_f_sq - nrm) * np.sqrt(var)
    return mean - half, mean + half


def golomb_bound(data: ProblemData, query):
    """Power-function (lower, upper) at one query point; the noise budget is ignored."""
    lo, hi = golomb_envelope(data, as_points(query, data.dim)[:1])
    return float(lo[0]), float(hi[0])


@dataclass(frozen=True)
class FogelEllipsoid:
    """``{theta : |theta - center|^2_{P^-1} <= radius_sq}``."""

    center: np.ndarray
    shape: np.ndarray  # P
    radius_sq: float

    def support(self, v) -> float:
        """max over the ellipsoid of ``v . theta``."""
        v = np.asarray(v, dtype=float)
        return float(v @ self.center) + math.sqrt(max(float(v @ self.shape @ v), 0.0)) * math.sqrt(self.radius_sq)

    def interval(self, v):
        v = np.asarray(v, dtype=float)
        return -self.support(-v), self.support(v)

    def contains(self, theta, rtol: float = 0.0) -> np.ndarray:
        """Membership for one parameter vector or a stack of row vectors."""
        d = np.atleast_2d(np.asarray(theta, dtype=float)) - self.center
        m = np.einsum("ij,ij->i", d, linalg.solve(self.shape, d.T, assume_a="pos").T)
        return m <= self.radius_sq * (1.0 + rtol)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform samples from the solid ellipsoid."""
        r = self.center.shape[0]
        z = rng.standard_normal((count, r))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        z *= rng.uniform(size=(count, 1)) ** (1.0 / r)
        c = linalg.cholesky(self.shape, lower=True)
        return self.center + math.sqrt(self.radius_sq) * z @ c.T


def fogel_ellipsoid(data: ProblemData, decomp: Optional[FeatureDecomposition] = None) -> FogelEllipsoid:
    """Parameters consistent with the data and the noise budget (no function budget).

    ``P = (Phi^T Kw^-1 Phi)^-1``, ``center = P Phi^T Kw^-1 y`` and
    ``radius_sq = Gw^2 - y^T Kw^-1 y + |center|^2_{P^-1}``. Without ``decomp``
    the kernel's own feature map is used, so parameters live in feature space.
    """
    if decomp is None:
        if data.kf.finite_rank is None:
            raise InvalidInput("the ellipsoid needs a finite-rank latent kernel")
        phi = data.kf.features(data.inputs) if data.n else np.zeros((0, data.kf.finite_rank))
    else:
        phi = decomp.phi_train
    chol = noise_cholesky(gram_matrix(data.kw, data.inputs, data.inputs))
    wt = chol.whiten(phi)
    yt = chol.whiten(data.outputs)
    try:
        cho = linalg.cho_factor(wt.T @ wt, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericalBreakdown("training features lack full column rank", width=phi.shape[1]) from exc
    p = linalg.cho_solve(cho, np.eye(phi.shape[1]), check_finite=False)
    center = linalg.cho_solve(cho, wt.T @ yt, check_finite=False)
    res = yt - wt @ center
    radius_sq = data.gamma_w_sq - float(res @ res)
    if radius_sq < -RECON_RTOL * max(1.0, data.gamma_w_sq):
        raise HypothesisFalsified("noise budget cannot explain the data", radius_sq=radius_sq)
    return FogelEllipsoid(center, 0.5 * (p + p.T), max(radius_sq, 0.0))


__all__ = [
    "FogelEllipsoid",
    "ProbBoundParams",
    "fogel_ellipsoid",
    "golomb_bound",
    "golomb_envelope",
    "prob_beta",
    "prob_bound",
    "prob_envelope",
]
