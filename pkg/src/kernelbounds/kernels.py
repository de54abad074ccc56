"""Kernel functions for the latent function and the noise.

Inputs are handled as 2-D arrays of shape ``(n, d)``; a 1-D array is read as
``n`` scalar points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInput

#: Two points are the same input iff their max-norm distance is below this.
DIRAC_TOL = 1e-12


def as_points(x, dim: Optional[int] = None) -> np.ndarray:
    """Coerce ``x`` to a float array of shape (n, d)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        if dim is not None and dim > 1 and arr.shape[0] == dim:
            arr = arr.reshape(1, dim)
        else:
            arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise InvalidInput("points must be at most 2-D", shape=arr.shape)
    if dim is not None and arr.shape[0] and arr.shape[1] != dim:
        raise InvalidInput("dimension mismatch", expected=dim, got=arr.shape[1])
    return arr


def _pair(rows, cols):
    r = as_points(rows)
    c = as_points(cols)
    if r.shape[0] and c.shape[0] and r.shape[1] != c.shape[1]:
        raise InvalidInput("dimension mismatch", rows=r.shape[1], cols=c.shape[1])
    return r, c


def sq_dists(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    d = rows[:, None, :] - cols[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


class KernelSpec:
    """Base class; subclasses implement :meth:`gram` and :meth:`diag`."""

    def gram(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def diag(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.gram(p[None, :], p[None, :])[0, 0] for p in x])

    def __call__(self, rows, cols=None):
        if cols is None:
            cols = rows
        return gram_matrix(self, rows, cols)

    @property
    def finite_rank(self) -> Optional[int]:
        """Number of features if the kernel is degenerate, else ``None``."""
        return None

    def features(self, x: np.ndarray) -> np.ndarray:
        raise InvalidInput(f"{type(self).__name__} has no finite feature map")


@dataclass(frozen=True)
class SquaredExponential(KernelSpec):
    """k(x, x') = exp(-|x - x'|^2 / lengthscale^2)."""

    lengthscale: float = 1.0

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise InvalidInput("lengthscale must be positive", lengthscale=self.lengthscale)

    def gram(self, rows, cols):
        return np.exp(-sq_dists(rows, cols) / self.lengthscale**2)

    def diag(self, x):
        return np.ones(x.shape[0])


@dataclass(frozen=True)
class Dirac(KernelSpec):
    """k(x, x') = 1 if x == x' (up to :data:`DIRAC_TOL`) else 0."""

    def gram(self, rows, cols):
        d = np.abs(rows[:, None, :] - cols[None, :, :])
        if d.size == 0:
            return np.zeros((rows.shape[0], cols.shape[0]))
        return (d.max(axis=2) <= DIRAC_TOL).astype(float)

    def diag(self, x):
        return np.ones(x.shape[0])


def poly_features(degree: int) -> Callable[[np.ndarray], np.ndarray]:
    """Monomials 1, x, ..., x^degree of the first input coordinate."""

    def phi(x):
        return np.vander(x[:, 0], degree + 1, increasing=True)

    return phi


@dataclass(frozen=True)
class LinearFeatures(KernelSpec):
    """k(x, x') = phi(x) . phi(x') for an explicit feature map."""

    feature_map: Callable[[np.ndarray], np.ndarray]
    rank: int
    name: str = field(default="custom", compare=False)
    degree: Optional[int] = field(default=None, compare=False)

    @classmethod
    def poly(cls, degree: int) -> "LinearFeatures":
        if degree < 0:
            raise InvalidInput("degree must be >= 0", degree=degree)
        return cls(poly_features(degree), degree + 1, "poly", degree)

    def __eq__(self, other):
        if not isinstance(other, LinearFeatures):
            return NotImplemented
        if self.name == "poly" and other.name == "poly":
            return self.degree == other.degree
        return self.feature_map is other.feature_map

    def __hash__(self):
        return hash((self.name, self.degree, self.rank))

    def features(self, x):
        phi = np.asarray(self.feature_map(x), dtype=float).reshape(x.shape[0], -1)
        if phi.shape[1] != self.rank:
            raise InvalidInput("feature map returned wrong width", expected=self.rank, got=phi.shape[1])
        return phi

    def gram(self, rows, cols):
        return self.features(rows) @ self.features(cols).T

    def diag(self, x):
        phi = self.features(x)
        return np.einsum("ij,ij->i", phi, phi)

    @property
    def finite_rank(self):
        return self.rank


@dataclass(frozen=True)
class Scaled(KernelSpec):
    """scale * base(x, x')."""

    base: KernelSpec
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidInput("output scale must be positive", scale=self.scale)

    def gram(self, rows, cols):
        return self.scale * self.base.gram(rows, cols)

    def diag(self, x):
        return self.scale * self.base.diag(x)

    @property
    def finite_rank(self):
        return self.base.finite_rank

    def features(self, x):
        return np.sqrt(self.scale) * self.base.features(x)


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    r, c = _pair(x, x2)
    if r.shape[0] != 1 or c.shape[0] != 1:
        raise InvalidInput("kernel_eval takes single points", rows=r.shape[0], cols=c.shape[0])
    return float(spec.gram(r, c)[0, 0])


def gram_matrix(spec: KernelSpec, rows, cols) -> np.ndarray:
    r, c = _pair(rows, cols)
    if r.shape[0] == 0 or c.shape[0] == 0:
        return np.zeros((r.shape[0], c.shape[0]))
    return spec.gram(r, c)


def kernel_diag(spec: KernelSpec, x) -> np.ndarray:
    x = as_points(x)
    if x.shape[0] == 0:
        return np.zeros(0)
    return spec.diag(x)


def pairwise_distinct(x, tol: float = DIRAC_TOL) -> bool:
    x = as_points(x)
    n = x.shape[0]
    if n < 2:
        return True
    if x.shape[1] == 1:
        return bool(np.all(np.diff(np.sort(x[:, 0])) > tol))
    d = np.abs(x[:, None, :] - x[None, :, :]).max(axis=2)
    np.fill_diagonal(d, np.inf)
    return bool(d.min() > tol)


def match_index(x, point, tol: float = DIRAC_TOL) -> Optional[int]:
    """Index of the row of ``x`` equal to ``point`` under the Dirac tolerance."""
    x = as_points(x)
    if x.shape[0] == 0:
        return None
    p = np.asarray(point, dtype=float).reshape(1, -1)
    hit = np.flatnonzero(np.abs(x - p).max(axis=1) <= tol)
    return int(hit[0]) if hit.size else None


# -- config round-trip -------------------------------------------------------

def kernel_from_config(cfg: dict) -> KernelSpec:
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise InvalidInput("kernel config needs a 'kind'", config=cfg)
    kind = cfg["kind"]
    allowed = {
        "se": {"kind", "lengthscale"},
        "dirac": {"kind"},
        "linear": {"kind", "features", "degree"},
        "scaled": {"kind", "scale", "base"},
    }
    if kind not in allowed:
        raise InvalidInput("unknown kernel kind", kind=kind)
    extra = set(cfg) - allowed[kind]
    if extra:
        raise InvalidInput("unknown kernel keys", keys=sorted(extra))
    if kind == "se":
        return SquaredExponential(float(cfg.get("lengthscale", 1.0)))
    if kind == "dirac":
        return Dirac()
    if kind == "linear":
        if cfg.get("features", "poly") != "poly":
            raise InvalidInput("only 'poly' features can be declared in config", features=cfg.get("features"))
        return LinearFeatures.poly(int(cfg.get("degree", 1)))
    return Scaled(kernel_from_config(cfg["base"]), float(cfg["scale"]))


def kernel_to_config(spec: KernelSpec) -> dict:
    if isinstance(spec, SquaredExponential):
        return {"kind": "se", "lengthscale": spec.lengthscale}
    if isinstance(spec, Dirac):
        return {"kind": "dirac"}
    if isinstance(spec, LinearFeatures):
        if spec.name != "poly":
            raise InvalidInput("custom feature maps are not serialisable")
        return {"kind": "linear", "features": "poly", "degree": spec.degree}
    if isinstance(spec, Scaled):
        return {"kind": "scaled", "scale": spec.scale, "base": kernel_to_config(spec.base)}
    raise InvalidInput("unknown kernel type", type=type(spec).__name__)
