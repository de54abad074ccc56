"""Whitened eigen-structure that makes every sigma probe O(N).

With ``R R^T = Kw`` and ``R^{-1} Kf R^{-T} = U diag(lam) U^T``::

    (Kf + s Kw)^{-1} = R^{-T} U (lam + s)^{-1} U^T R^{-1}

so the posterior mean, variance and interpolant norm at ``s = sigma^2`` are
weighted sums over the eigenvalues once ``a = U^T R^{-1} k_X*`` and
``b = U^T R^{-1} y`` are known.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .decomp import RANK_RTOL, NoiseCholesky, noise_cholesky, psd_eigh
from .gp_core import ProblemData
from .kernels import as_points, gram_matrix, kernel_diag

#: Probes never go below sigma^2 = SIGMA_SQ_FLOOR_RTOL * lam_max. Below that the
#: eigenvalue rounding error (about eps * lam_max) distorts 1/(lam + s).
SIGMA_SQ_FLOOR_RTOL = 1e-10

#: Without an exact feature map the variance k** - sum a^2/(lam + s) carries an
#: absolute rounding error of a few eps * N * k**; this much is added back so the
#: bound stays conservative when the true variance is tiny.
VAR_GUARD_EPS = 8.0 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class SpectralModel:
    data: ProblemData
    lam: np.ndarray
    basis: np.ndarray  # U^T R^{-1}
    b: np.ndarray
    chol: NoiseCholesky
    # finite-rank kernels: right singular vectors (full basis) and singular values
    vt: Optional[np.ndarray] = None
    sv: Optional[np.ndarray] = None
    n_res: int = 0

    @classmethod
    def build(cls, data: ProblemData) -> "SpectralModel":
        n = data.n
        if n == 0:
            return cls(data, np.zeros(0), np.zeros((0, 0)), np.zeros(0), NoiseCholesky(np.zeros((0, 0))))
        x = data.inputs
        chol = noise_cholesky(gram_matrix(data.kw, x, x))
        rinv = chol.whiten(np.eye(n))
        if data.kf.finite_rank is None:
            lam, u = psd_eigh(rinv @ gram_matrix(data.kf, x, x) @ rinv.T)
            basis = u.T @ rinv
            return cls(data, np.ascontiguousarray(lam), basis, np.ascontiguousarray(basis @ data.outputs), chol)
        # SVD of the whitened features: null-space eigenvalues come out exactly zero.
        u, sv, vt = linalg.svd(rinv @ data.kf.features(x), full_matrices=True)
        lam = np.zeros(n)
        lam[: sv.shape[0]] = sv**2
        n_res = int(np.count_nonzero(sv > RANK_RTOL * sv[0])) if sv.size and sv[0] > 0 else 0
        basis = u.T @ rinv
        return cls(
            data, np.ascontiguousarray(lam), basis, np.ascontiguousarray(basis @ data.outputs), chol, vt, sv, n_res
        )

    @property
    def n(self) -> int:
        return self.lam.shape[0]

    def log_sigma_floor(self, rtol: float = SIGMA_SQ_FLOOR_RTOL) -> float:
        if self.n == 0 or self.lam[0] <= 0:
            return -math.inf
        return 0.5 * math.log10(rtol * self.lam[0])

    def project(self, queries):
        """``(A, v0, kss)``: one C-contiguous row of ``A`` per query, see ``_search_py``."""
        q = as_points(queries, self.data.dim)
        kss = np.ascontiguousarray(kernel_diag(self.data.kf, q), dtype=float)
        if self.n == 0:
            return np.zeros((q.shape[0], 0)), kss.copy(), kss
        if self.vt is None:
            kq = gram_matrix(self.data.kf, self.data.inputs, q)
            v0 = kss * (1.0 + VAR_GUARD_EPS * self.n)
            return np.ascontiguousarray((self.basis @ kq).T), v0, kss
        c = self.data.kf.features(q) @ self.vt.T
        k = self.sv.shape[0]
        a = np.zeros((q.shape[0], self.n))
        a[:, :k] = c[:, :k] * self.sv
        # Feature energy outside the resolved directions; exact, no cancellation.
        v0 = np.einsum("ij,ij->i", c[:, self.n_res :], c[:, self.n_res :])
        return a, np.ascontiguousarray(v0), kss

    def beta_sq(self, s) -> np.ndarray:
        """Vectorised over an array of sigma^2 values."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        nrm = (self.b**2 / (self.lam[None, :] + s[:, None])).sum(axis=1) if self.n else np.zeros_like(s)
        return self.data.gamma_f_sq + self.data.gamma_w_sq / s - nrm

    def relaxed_parts(self, a, v0, s: float):
        """``(mean, var, beta_sq)`` at ``s = sigma^2`` for projected rows ``a``.

        The noise term is grouped as ``(Gw^2 - sum b^2 s/(lam + s)) / s`` over the
        unresolved directions, which keeps beta^2 accurate when s is tiny.
        """
        a = np.atleast_2d(np.asarray(a, dtype=float))
        v0 = np.atleast_1d(np.asarray(v0, dtype=float))
        gf2, gw2 = self.data.gamma_f_sq, self.data.gamma_w_sq
        if self.n == 0:
            return np.zeros(a.shape[0]), v0.copy(), gf2 + gw2 / s
        r = self.n_res
        lam, b = self.lam, self.b
        denom = lam + s
        mean = a @ (b / denom)
        lr = lam[:r]
        var = v0 + (a[:, :r] ** 2) @ (s / (lr * (lr + s))) - (a[:, r:] ** 2) @ (1.0 / denom[r:])
        b_sq = b**2
        beta = gf2 + (gw2 - float(b_sq[r:] @ (s / denom[r:]))) / s - float(b_sq[:r] @ (1.0 / denom[:r]))
        return mean, np.clip(var, 0.0, None), beta
