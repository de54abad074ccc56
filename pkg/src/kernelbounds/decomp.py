"""Feature decomposition of the latent kernel matrix and noise Cholesky factor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import InvalidInput, NotPD, NotPSD

RANK_RTOL = 1e-10
PSD_RTOL = 1e-10
RECON_RTOL = 1e-8
JITTER_RTOL = 1e-12


@dataclass(frozen=True)
class FeatureDecomposition:
    """``K_full = Phi Phi^T`` split into training rows and the query row."""

    phi_train: np.ndarray  # (N, r)
    phi_test: np.ndarray  # (r,)
    rank: int
    singular_values: np.ndarray  # descending, length N + 1

    @property
    def phi(self) -> np.ndarray:
        return np.vstack([self.phi_train, self.phi_test[None, :]])

    def reconstruct(self) -> np.ndarray:
        phi = self.phi
        return phi @ phi.T


@dataclass(frozen=True)
class NoiseCholesky:
    """Upper-triangular ``factor`` with ``factor @ factor.T == Kw``."""

    factor: np.ndarray
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.factor.shape[0]

    def whiten(self, v: np.ndarray) -> np.ndarray:
        """``factor^{-1} v`` for a vector or a matrix of columns."""
        if self.n == 0:
            return np.asarray(v, dtype=float)
        return linalg.solve_triangular(self.factor, v, lower=False, check_finite=False)

    def weighted_norm_sq(self, v: np.ndarray) -> float:
        """v^T Kw^{-1} v via a triangular solve."""
        z = self.whiten(np.asarray(v, dtype=float))
        return float(z @ z)


def _symmetrize(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise InvalidInput("expected a square matrix", shape=k.shape)
    return 0.5 * (k + k.T)


def psd_eigh(k: np.ndarray):
    """Eigen-decomposition of a symmetric PSD matrix, descending, negatives clamped.

    Raises NotPSD if an eigenvalue is below -1e-10 * trace / n.
    """
    k = _symmetrize(k)
    n = k.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    w, v = linalg.eigh(k, check_finite=False)
    w, v = w[::-1].copy(), np.ascontiguousarray(v[:, ::-1])
    tau = PSD_RTOL * max(np.trace(k), 0.0) / n
    if w[-1] < -tau:
        raise NotPSD("matrix has a negative eigenvalue", min_eig=float(w[-1]), tol=tau)
    return np.clip(w, 0.0, None), v


def feature_decompose(kf_full: np.ndarray, rtol: float = RANK_RTOL) -> FeatureDecomposition:
    """Rank-revealing factor ``Phi = V_r S_r^{1/2}`` of the (N+1)x(N+1) latent Gram matrix.

    The last row/column belongs to the query point. Eigenvalues below
    ``rtol * s_max`` are dropped.
    """
    w, v = psd_eigh(kf_full)
    n1 = w.shape[0]
    if n1 == 0:
        raise InvalidInput("need at least the query row")
    smax = w[0] if n1 else 0.0
    r = int(np.count_nonzero(w > rtol * smax)) if smax > 0 else 0
    phi = v[:, :r] * np.sqrt(w[:r])
    return FeatureDecomposition(phi[:-1], phi[-1], r, w)


def features_decomposition(phi_train: np.ndarray, phi_test: np.ndarray) -> FeatureDecomposition:
    """Wrap an explicit feature map evaluation (finite-rank kernels).

    Columns are not orthogonalised: any ``Phi`` with ``Phi Phi^T = K`` serves the
    closed forms. ``rank`` is the column rank of the stacked matrix.
    """
    phi_train = np.asarray(phi_train, dtype=float)
    phi_test = np.asarray(phi_test, dtype=float).ravel()
    full = np.vstack([phi_train, phi_test[None, :]])
    s = linalg.svdvals(full) if full.size else np.zeros(0)
    sv = np.zeros(full.shape[0])
    sv[: min(len(s), len(sv))] = (s**2)[: len(sv)]
    r = int(np.count_nonzero(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
    if r < full.shape[1]:
        # Drop redundant columns so that the stacked matrix has full column rank.
        _, _, vt = linalg.svd(full, full_matrices=False)
        basis = vt[:r].T
        phi_train, phi_test = phi_train @ basis, phi_test @ basis
    return FeatureDecomposition(phi_train, phi_test, r, sv)


def _upper_chol(k: np.ndarray) -> np.ndarray:
    # R R^T = K with R upper-triangular, via the reversal permutation J.
    j = k[::-1, ::-1]
    low = linalg.cholesky(j, lower=True, check_finite=False)
    return low[::-1, ::-1].copy()


def noise_cholesky(kw: np.ndarray) -> NoiseCholesky:
    """Upper-triangular factor of the noise Gram matrix, one jitter retry at most."""
    kw = _symmetrize(kw)
    n = kw.shape[0]
    if n == 0:
        return NoiseCholesky(np.zeros((0, 0)))
    try:
        return NoiseCholesky(_upper_chol(kw))
    except linalg.LinAlgError:
        pass
    jitter = JITTER_RTOL * np.trace(kw) / n
    try:
        return NoiseCholesky(_upper_chol(kw + jitter * np.eye(n)), jitter)
    except linalg.LinAlgError as exc:
        raise NotPD(
            "noise Gram matrix is not positive definite (distinct inputs and a PD noise kernel are required)",
            jitter=jitter,
            min_eig=float(np.linalg.eigvalsh(kw)[0]),
        ) from exc


def chol_solve_pd(k: np.ndarray):
    """Cholesky factor of a matrix that must be PD, with the same jitter policy."""
    k = _symmetrize(k)
    n = k.shape[0]
    try:
        return linalg.cho_factor(k, lower=True, check_finite=False), 0.0
    except linalg.LinAlgError:
        pass
    jitter = JITTER_RTOL * np.trace(k) / n
    try:
        return linalg.cho_factor(k + jitter * np.eye(n), lower=True, check_finite=False), jitter
    except linalg.LinAlgError as exc:
        raise NotPD("regularised Gram matrix is not positive definite", jitter=jitter) from exc
