"""Synthetic ground truth: RKHS functions of prescribed norm, bounded noise, datasets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidInput, NumericalBreakdown
from .gp_core import ProblemData
from .kernels import DIRAC_TOL, Dirac, KernelSpec, as_points, gram_matrix, pairwise_distinct

#: Raw draws whose quadratic form is this close to rounding level are rejected.
_NORM_RTOL = 1e-10
_MAX_RETRIES = 10


def rng_for(seed, *keys) -> np.random.Generator:
    """Generator seeded from ``(seed, *keys)``; independent streams per key tuple."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]))


def _box(domain, dim=None):
    lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in domain)
    if dim is not None:
        lo, hi = np.broadcast_to(lo, (dim,)), np.broadcast_to(hi, (dim,))
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise InvalidInput("domain must be (lo, hi) with lo < hi", domain=domain)
    return lo, hi


@dataclass(frozen=True, eq=False)
class RkhsSample:
    """``f(x) = sum_i alpha_i k(x, c_i)`` with RKHS norm^2 ``alpha^T K alpha``."""

    centers: np.ndarray
    coefficients: np.ndarray
    kernel: KernelSpec
    norm_sq: float

    def __call__(self, x) -> np.ndarray:
        return gram_matrix(self.kernel, as_points(x, self.centers.shape[1]), self.centers) @ self.coefficients


def sample_rkhs_function(
    kernel: KernelSpec, domain=(0.0, 4.0), M: int = 50, target_norm_sq: float = 1.0, seed=0
) -> RkhsSample:
    """Uniform centres in the box, Gaussian coefficients rescaled to the target norm."""
    if not target_norm_sq > 0:
        raise InvalidInput("target_norm_sq must be positive", target_norm_sq=target_norm_sq)
    if M < 1:
        raise InvalidInput("need at least one centre", M=M)
    rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed)
    lo, hi = _box(domain)
    for _ in range(_MAX_RETRIES):
        c = rng.uniform(lo, hi, size=(M, lo.shape[0]))
        a = rng.standard_normal(M)
        k = gram_matrix(kernel, c, c)
        raw = float(a @ k @ a)
        if pairwise_distinct(c) and raw > _NORM_RTOL * float(a @ a) * float(np.trace(k)) / M:
            a = a * math.sqrt(target_norm_sq / raw)
            return RkhsSample(c, a, kernel, float(a @ k @ a))
    raise NumericalBreakdown("could not draw a well-conditioned RKHS sample", M=M, retries=_MAX_RETRIES)


@dataclass(frozen=True)
class NoiseModel:
    """``kind`` is ``"truncated_gaussian"`` (std and cap both ``eps``) or ``"none"``."""

    kind: str = "truncated_gaussian"
    eps: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("truncated_gaussian", "none"):
            raise InvalidInput("unknown noise kind", kind=self.kind)
        if not self.eps > 0:
            raise InvalidInput("eps must be positive", eps=self.eps)


def truncated_gaussian(rng: np.random.Generator, count: int, eps: float) -> np.ndarray:
    """Rejection sampling of N(0, eps^2) restricted to [-eps, eps]."""
    out = np.empty(count)
    filled = 0
    while filled < count:
        draw = eps * rng.standard_normal(max(2 * (count - filled), 16))
        draw = draw[np.abs(draw) <= eps][: count - filled]
        out[filled : filled + draw.shape[0]] = draw
        filled += draw.shape[0]
    return out


def sample_noise(model: NoiseModel, count: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    if model.kind == "none":
        return np.zeros(count)
    return truncated_gaussian(rng if rng is not None else rng_for(model.seed), count, model.eps)


def sample_inputs(domain, count: int, rng: np.random.Generator, dim: int = 1) -> np.ndarray:
    """Uniform inputs, redrawn until pairwise distinct under the Dirac tolerance."""
    lo, hi = _box(domain, dim)
    for _ in range(_MAX_RETRIES):
        x = rng.uniform(lo, hi, size=(count, lo.shape[0]))
        if pairwise_distinct(x, DIRAC_TOL):
            return x
    raise NumericalBreakdown("could not draw distinct inputs", count=count)


def make_dataset(
    f: RkhsSample,
    noise: NoiseModel,
    inputs,
    gamma_f_sq: Optional[float] = None,
    kw: KernelSpec = Dirac(),
    rng: Optional[np.random.Generator] = None,
) -> ProblemData:
    """``y = f(x) + w`` with budgets ``Gf^2`` (default: the sample's norm) and ``N eps^2``."""
    x = as_points(inputs, f.centers.shape[1])
    if not pairwise_distinct(x):
        raise InvalidInput("training inputs must be pairwise distinct")
    y = f(x) + sample_noise(noise, x.shape[0], rng)
    gf2 = f.norm_sq if gamma_f_sq is None else gamma_f_sq
    return ProblemData(x, y, f.kernel, kw, gf2, max(x.shape[0], 1) * noise.eps**2)


def noisy_dataset(fun, inputs, kf: KernelSpec, noise: NoiseModel, gamma_f_sq: float, rng=None) -> ProblemData:
    """Dataset from an arbitrary callable ground truth (norm supplied by the caller)."""
    x = as_points(inputs)
    y = np.asarray(fun(x), dtype=float).ravel() + sample_noise(noise, x.shape[0], rng)
    return ProblemData(x, y, kf, Dirac(), gamma_f_sq, max(x.shape[0], 1) * noise.eps**2)


__all__: Sequence[str] = [
    "NoiseModel",
    "RkhsSample",
    "make_dataset",
    "noisy_dataset",
    "rng_for",
    "sample_inputs",
    "sample_noise",
    "sample_rkhs_function",
    "truncated_gaussian",
]
