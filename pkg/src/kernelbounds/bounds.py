"""Relaxed and optimal worst-case bounds at query points.

For every sigma > 0 the relaxed bound ``mu_sigma +- beta_sigma * sqrt(Sigma_sigma)``
encloses all functions consistent with the data and both norm budgets. The
optimal bound is the infimum (upper side) or supremum (lower side) of the
relaxed bound over sigma. Closed forms are used when the optimum sits at
sigma -> infinity (function budget active only) or sigma -> 0 (noise budget
active only); otherwise a scalar search over ``t = log10(sigma)`` runs in the
compiled kernel.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, optimize

from . import _backend
from .decomp import (
    RANK_RTOL,
    RECON_RTOL,
    FeatureDecomposition,
    feature_decompose,
    features_decomposition,
    noise_cholesky,
)
from .errors import (
    BoundError,
    HypothesisFalsified,
    InvalidInput,
    NumericalBreakdown,
    OptimizerFailed,
    classify_falsification,
)
from .gp_core import ProblemData
from .kernels import as_points, gram_matrix, kernel_diag, match_index
from .spectral import SIGMA_SQ_FLOOR_RTOL, SpectralModel

SIDES = ("upper", "lower")

#: beta^2 below -FALSIFY_RTOL * (Gf^2 + Gw^2 / sigma^2) counts as a falsification.
FALSIFY_RTOL = 1e-10


def _sign(side: str) -> float:
    if side == "upper":
        return 1.0
    if side == "lower":
        return -1.0
    raise InvalidInput("side must be 'upper' or 'lower'", side=side)


class CaseLabel(str, Enum):
    """Which budget is active at the optimum."""

    CASE1 = "Case1_SigmaInf"
    CASE2 = "Case2_SigmaZero"
    CASE3 = "Case3_Interior"
    TIE = "Case1And2_Tie"
    DEGENERATE = "Degenerate_ZeroFeature"


@dataclass(frozen=True)
class SigmaOptimizerConfig:
    log_sigma_min: float = -8.0
    log_sigma_max: float = 8.0
    tol: float = 1e-10
    max_iters: int = 200
    seeds: tuple = (-2.0, 0.0, 2.0)
    grid_points: int = 33
    sigma_sq_floor_rtol: float = SIGMA_SQ_FLOOR_RTOL

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(float(s) for s in self.seeds))
        if not self.log_sigma_min < self.log_sigma_max:
            raise InvalidInput("need log_sigma_min < log_sigma_max", lo=self.log_sigma_min, hi=self.log_sigma_max)
        if not (self.tol > 0 and self.max_iters >= 1 and self.grid_points >= 2):
            raise InvalidInput("tol, max_iters and grid_points must be positive", tol=self.tol)
        if not self.sigma_sq_floor_rtol >= 0:
            raise InvalidInput("sigma_sq_floor_rtol must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SigmaOptimizerConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise InvalidInput("unknown optimizer keys", keys=sorted(extra))
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d


@dataclass(frozen=True)
class BoundResult:
    upper: float
    lower: float
    sigma_star_upper: float
    sigma_star_lower: float
    case_upper: CaseLabel
    case_lower: CaseLabel
    relaxed_probe_count: int = 0
    converged: bool = field(default=True, compare=False)

    def side(self, side: str):
        """(value, sigma*, case) for one side."""
        if _sign(side) > 0:
            return self.upper, self.sigma_star_upper, self.case_upper
        return self.lower, self.sigma_star_lower, self.case_lower

    def to_dict(self) -> dict:
        d = asdict(self)
        d["case_upper"] = self.case_upper.value
        d["case_lower"] = self.case_lower.value
        return d


# -- relaxed bound -----------------------------------------------------------

def relaxed_envelope(data: ProblemData, sigma: float, queries):
    """(lower, upper) arrays of the relaxed bound at one fixed sigma; raises if beta_sigma^2 < 0."""
    if not sigma > 0:
        raise InvalidInput("sigma must be positive", sigma=sigma)
    model = SpectralModel.build(data)
    a, v0, _ = model.project(queries)
    mean, var, b2 = model.relaxed_parts(a, v0, float(sigma) ** 2)
    if b2 < 0:
        raise HypothesisFalsified("budgets cannot explain the data at this sigma", sigma=float(sigma), beta_sq=b2)
    half = math.sqrt(b2) * np.sqrt(var)
    return mean - half, mean + half


def _relaxed(data, sigma, query, sign):
    lo, up = relaxed_envelope(data, sigma, _query_row(data, query))
    return float(up[0] if sign > 0 else lo[0])


def relaxed_upper(data: ProblemData, sigma: float, query) -> float:
    """mu_sigma(x) + beta_sigma * sqrt(Sigma_sigma(x)); raises if beta_sigma^2 < 0."""
    return _relaxed(data, sigma, query, 1.0)


def relaxed_lower(data: ProblemData, sigma: float, query) -> float:
    return _relaxed(data, sigma, query, -1.0)


# -- closed forms --------------------------------------------------------------

def _query_row(data, query):
    q = as_points(query, data.dim)
    if q.shape[0] != 1:
        raise InvalidInput("expected a single query point", count=q.shape[0])
    return q


def _is_degenerate(data, kss) -> bool:
    scale = 1.0
    if data.n:
        scale = max(scale, float(np.max(kernel_diag(data.kf, data.inputs))))
    return kss <= RANK_RTOL * scale


def _noise_chol(data):
    return noise_cholesky(gram_matrix(data.kw, data.inputs, data.inputs))


def case1_feasible(data: ProblemData, query, side: str = "upper", chol=None) -> bool:
    """Function budget alone is active: ``|y -+ k_X* Gf / sqrt(k**)|^2_{Kw^-1} <= Gw^2``."""
    sign = _sign(side)
    q = _query_row(data, query)
    kss = float(kernel_diag(data.kf, q)[0])
    if _is_degenerate(data, kss):
        return False
    if data.n == 0:
        return True
    chol = chol or _noise_chol(data)
    kx = gram_matrix(data.kf, data.inputs, q)[:, 0]
    v = data.outputs - sign * kx * math.sqrt(data.gamma_f_sq / kss)
    return chol.weighted_norm_sq(v) <= data.gamma_w_sq


def case1_bound(data: ProblemData, query, side: str = "upper") -> float:
    """+- sqrt(k**) Gf. Only a valid optimum when :func:`case1_feasible` holds."""
    q = _query_row(data, query)
    return _sign(side) * math.sqrt(float(kernel_diag(data.kf, q)[0]) * data.gamma_f_sq)


def decompose(data: ProblemData, query) -> FeatureDecomposition:
    """Feature matrix of training inputs plus the query (exact for finite-rank kernels)."""
    q = _query_row(data, query)
    if data.kf.finite_rank is not None:
        x = data.inputs if data.n else np.zeros((0, data.dim))
        phi_train = data.kf.features(x) if data.n else np.zeros((0, data.kf.finite_rank))
        return features_decomposition(phi_train, data.kf.features(q)[0])
    pts = np.vstack([data.inputs, q]) if data.n else q
    return feature_decompose(gram_matrix(data.kf, pts, pts))


def span_condition(decomp: FeatureDecomposition) -> bool:
    """Query features lie in the row space of the training features."""
    if decomp.rank == 0 or decomp.phi_train.shape[0] == 0:
        return False
    s = linalg.svdvals(decomp.phi_train)
    scale = math.sqrt(max(float(decomp.singular_values[0]), 0.0))
    return int(np.count_nonzero(s > RANK_RTOL * scale)) == decomp.rank


@dataclass(frozen=True)
class _Case2Terms:
    theta_mu: np.ndarray
    p_phi: np.ndarray  # P phi_*^T
    p_norm: float  # |phi_*^T|_P
    radicand: float


def _case2_terms(data, decomp, chol=None) -> _Case2Terms:
    chol = chol or _noise_chol(data)
    wt = chol.whiten(decomp.phi_train)
    yt = chol.whiten(data.outputs)
    try:
        cho = linalg.cho_factor(wt.T @ wt, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericalBreakdown("training features lack full column rank", rank=decomp.rank) from exc
    theta_mu = linalg.cho_solve(cho, wt.T @ yt, check_finite=False)
    res = yt - wt @ theta_mu
    p_phi = linalg.cho_solve(cho, decomp.phi_test, check_finite=False)
    return _Case2Terms(theta_mu, p_phi, math.sqrt(max(float(decomp.phi_test @ p_phi), 0.0)), data.gamma_w_sq - float(res @ res))


def _radicand_tol(data) -> float:
    return RECON_RTOL * max(1.0, data.gamma_w_sq)


def case2_theta(data: ProblemData, query, decomp: Optional[FeatureDecomposition] = None, side: str = "upper", chol=None):
    """Maximiser of the noise-budget-only problem, or ``None`` if the span condition fails."""
    sign = _sign(side)
    decomp = decomp if decomp is not None else decompose(data, query)
    if not span_condition(decomp):
        return None
    t = _case2_terms(data, decomp, chol)
    if t.radicand < -_radicand_tol(data) or t.p_norm == 0.0:
        return None
    return t.theta_mu + sign * t.p_phi / t.p_norm * math.sqrt(max(t.radicand, 0.0))


def case2_feasible(data: ProblemData, query, decomp: Optional[FeatureDecomposition] = None, side: str = "upper", chol=None) -> bool:
    """Noise budget alone is active: the least-squares extreme point has norm <= Gf."""
    theta = case2_theta(data, query, decomp, side, chol)
    return theta is not None and float(theta @ theta) <= data.gamma_f_sq


def case2_bound(data: ProblemData, query, decomp: Optional[FeatureDecomposition] = None, side: str = "upper", chol=None) -> float:
    """phi_* theta_mu +- |phi_*|_P sqrt(Gw^2 - |y - Phi theta_mu|^2_{Kw^-1})."""
    sign = _sign(side)
    decomp = decomp if decomp is not None else decompose(data, query)
    if not span_condition(decomp):
        raise InvalidInput("query features are not spanned by the training features")
    t = _case2_terms(data, decomp, chol)
    if t.radicand < -_radicand_tol(data):
        raise HypothesisFalsified("noise budget cannot explain the data", radicand=t.radicand)
    return float(decomp.phi_test @ t.theta_mu) + sign * t.p_norm * math.sqrt(max(t.radicand, 0.0))


def _kf_train_factor(data):
    """Cholesky of Kf on the training inputs, or None if it is numerically singular."""
    if data.n == 0:
        return None
    k = gram_matrix(data.kf, data.inputs, data.inputs)
    w = linalg.eigvalsh(k)
    if w[0] <= RANK_RTOL * max(w[-1], 0.0) or w[-1] <= 0:
        return None
    try:
        return linalg.cho_factor(k, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return None


def corollary_feasible(data: ProblemData, k: int, side: str = "upper", kf_factor=None) -> bool:
    """Query at training input k: ``|y +- Kw[:, k] Gw / sqrt(Kw_kk)|^2_{Kf^-1} <= Gf^2``."""
    sign = _sign(side)
    kf_factor = kf_factor if kf_factor is not None else _kf_train_factor(data)
    if kf_factor is None:
        return False
    kw = gram_matrix(data.kw, data.inputs, data.inputs[k : k + 1])[:, 0]
    v = data.outputs + sign * kw * math.sqrt(data.gamma_w_sq / kw[k])
    return float(v @ linalg.cho_solve(kf_factor, v, check_finite=False)) <= data.gamma_f_sq


def corollary_bound(data: ProblemData, k: int, side: str = "upper") -> float:
    """y_k +- sqrt(Kw_kk) Gw."""
    if not 0 <= k < data.n:
        raise InvalidInput("training index out of range", k=k, n=data.n)
    kwkk = float(kernel_diag(data.kw, data.inputs[k : k + 1])[0])
    return float(data.outputs[k]) + _sign(side) * math.sqrt(kwkk * data.gamma_w_sq)


# -- optimal bound -------------------------------------------------------------

class BoundSolver:
    """Per-dataset state shared by many queries: spectral model, factors, feasibility."""

    def __init__(self, data: ProblemData, cfg: Optional[SigmaOptimizerConfig] = None, backend=None):
        self.data = data
        self.cfg = cfg or SigmaOptimizerConfig()
        self.backend = backend or _backend.backend
        self.model = SpectralModel.build(data)
        self.chol = self.model.chol
        floor = self.model.log_sigma_floor(self.cfg.sigma_sq_floor_rtol)
        self.t_lo = max(self.cfg.log_sigma_min, floor)
        self.t_hi = self.cfg.log_sigma_max
        if not self.t_lo < self.t_hi:
            self.t_lo = self.t_hi - 1.0
        self._kf_factor = False  # lazily computed; None means singular
        self._beta_min = None

    # sigma search helpers
    def _search(self, mode, a, v0, t_lo=None, t_hi=None, seeds=None, ctl=None):
        c = self.cfg
        return self.backend.search(
            self.model.lam, a, self.model.b, float(v0), self.model.n_res, self.data.gamma_f_sq, self.data.gamma_w_sq, mode, ctl,
            self.t_lo if t_lo is None else t_lo, self.t_hi if t_hi is None else t_hi,
            list(c.seeds if seeds is None else seeds), c.grid_points, c.tol, c.max_iters,
        )

    def check_consistent(self) -> float:
        """Raise :class:`HypothesisFalsified` if beta^2 < 0 at any sigma; return min beta^2.

        Any (f, w) within both budgets satisfies the summed constraint at every
        sigma, so a single negative beta^2 already rules out every explanation.
        """
        if self._beta_min is None:
            t, bmin, _, _ = self._search(_backend.python_backend.MODE_BETA_SQ, np.zeros(self.model.n), 0.0)
            budget = self.data.gamma_f_sq + self.data.gamma_w_sq / 10.0 ** (2 * t)
            if bmin < -FALSIFY_RTOL * budget:
                ts = np.linspace(self.t_lo, self.t_hi, self.cfg.grid_points)
                probes = list(zip(10.0**ts, self.model.beta_sq(10.0 ** (2 * ts))))
                probes.append((10.0**t, bmin))
                probes.append(self._worst_ratio_probe(ts))
                diag = classify_falsification(self.data, probes)
                raise HypothesisFalsified(
                    "data are inconsistent with the norm budgets",
                    sigma=diag.sigma,
                    beta_sq=diag.beta_sq,
                    inflation=diag.inflation,
                    min_beta_sq=bmin,
                    probes_checked=diag.probes_checked,
                )
            self._beta_min = bmin
        return self._beta_min

    def _worst_ratio_probe(self, ts):
        """(sigma, beta^2) maximising interp / budget, refined around the best grid point."""
        gf2, gw2 = self.data.gamma_f_sq, self.data.gamma_w_sq

        def neg_ratio(t):
            s = 10.0 ** (2 * np.atleast_1d(t))
            budget = gf2 + gw2 / s
            return (self.model.beta_sq(s) - budget) / budget

        r = neg_ratio(ts)
        i = int(np.argmin(r))
        h = ts[1] - ts[0] if len(ts) > 1 else 1.0
        lo, hi = max(ts[0], ts[i] - h), min(ts[-1], ts[i] + h)
        res = optimize.minimize_scalar(lambda t: float(neg_ratio(t)[0]), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        t = float(res.x) if res.fun < r[i] else float(ts[i])
        return 10.0**t, float(self.model.beta_sq(np.array([10.0 ** (2 * t)]))[0])

    def search_side(self, side, a, v0, mode=None, ctl=None):
        """(value, sigma*, nfev, converged) for the relaxed bound on one side."""
        sign = _sign(side)
        if mode is None:
            mode = 0 if sign > 0 else 1
        self.check_consistent()
        t, v, nfev, conv = self._search(mode, a, v0, ctl=ctl)
        if not math.isfinite(v):
            raise NumericalBreakdown("no finite relaxed bound on the sigma range", log_sigma_min=self.t_lo)
        value = v if mode == 2 else sign * v
        return value, 10.0**t, nfev, conv

    def relaxed_at(self, a, v0, sigma):
        """(mean, beta * sqrt(var)) at one sigma from a projected query row."""
        m, var, b2 = self.model.relaxed_parts(a, v0, float(sigma) ** 2)
        if b2 < 0:
            raise HypothesisFalsified("budgets cannot explain the data at this sigma", sigma=float(sigma), beta_sq=b2)
        return float(m[0]), math.sqrt(b2) * math.sqrt(float(var[0]))

    @property
    def kf_factor(self):
        if self._kf_factor is False:
            self._kf_factor = _kf_train_factor(self.data)
        return self._kf_factor

    def _closed_form(self, q, kss, side, case1_ok):
        """(value, sigma*, label) from the closed forms, or None if the optimum is interior."""
        data = self.data
        sign = _sign(side)
        k = match_index(data.inputs, q[0]) if data.n else None
        c2_value = None
        if k is not None and self.kf_factor is not None and corollary_feasible(data, k, side, self.kf_factor):
            c2_value = corollary_bound(data, k, side)
        elif data.kf.finite_rank is not None and data.n:
            dec = decompose(data, q)
            if case2_feasible(data, q, dec, side, self.chol):
                c2_value = case2_bound(data, q, dec, side, self.chol)
        if case1_ok:
            label = CaseLabel.TIE if c2_value is not None else CaseLabel.CASE1
            return sign * math.sqrt(kss * data.gamma_f_sq), math.inf, label
        if c2_value is not None:
            return c2_value, 0.0, CaseLabel.CASE2
        return None

    def solve(self, queries) -> list:
        """One :class:`BoundResult` per query, or the :class:`BoundError` raised for it."""
        data = self.data
        self.check_consistent()
        q = as_points(queries, data.dim)
        a_rows, v0_all, kss_all = self.model.project(q)
        nq = q.shape[0]
        case1 = {s: np.zeros(nq, dtype=bool) for s in SIDES}
        if data.n:
            kx = self.chol.whiten(gram_matrix(data.kf, data.inputs, q))
            yt = self.chol.whiten(data.outputs)
            safe = np.where(kss_all > 0, kss_all, 1.0)
            for s in SIDES:
                v = yt[:, None] - _sign(s) * kx * np.sqrt(data.gamma_f_sq / safe)[None, :]
                case1[s] = np.einsum("ij,ij->j", v, v) <= data.gamma_w_sq
        else:
            for s in SIDES:
                case1[s][:] = True

        out = []
        for i in range(nq):
            try:
                c1 = {s: bool(case1[s][i]) for s in SIDES}
                out.append(self._solve_one(q[i : i + 1], a_rows[i], float(v0_all[i]), float(kss_all[i]), c1))
            except BoundError as exc:
                exc.context.setdefault("query_index", i)
                out.append(exc)
        return out

    def _solve_one(self, q, a, v0, kss, case1):
        if _is_degenerate(self.data, kss):
            return BoundResult(0.0, 0.0, math.inf, math.inf, CaseLabel.DEGENERATE, CaseLabel.DEGENERATE)
        vals, sig, cases, nfev, conv = {}, {}, {}, 0, True
        for s in SIDES:
            cf = self._closed_form(q, kss, s, case1[s])
            if cf is not None:
                vals[s], sig[s], cases[s] = cf
                continue
            vals[s], sig[s], n, ok = self.search_side(s, a, v0)
            cases[s] = CaseLabel.CASE3
            nfev += n
            conv = conv and ok
        res = BoundResult(
            vals["upper"], vals["lower"], sig["upper"], sig["lower"], cases["upper"], cases["lower"], nfev, conv
        )
        if res.lower > res.upper:
            # Only rounding can do this; both sides bound the same value.
            mid = 0.5 * (res.lower + res.upper)
            if res.lower - res.upper > 1e-9 * (1 + abs(mid)):
                raise NumericalBreakdown("lower bound exceeds upper bound", lower=res.lower, upper=res.upper)
        if not conv:
            raise OptimizerFailed("sigma search hit the iteration cap", result=res)
        return res


def optimal_bound(data: ProblemData, query, opt_cfg: Optional[SigmaOptimizerConfig] = None) -> BoundResult:
    """Tightest deterministic bounds at one query point."""
    res = BoundSolver(data, opt_cfg).solve(_query_row(data, query))[0]
    if isinstance(res, BoundError):
        res.context.pop("query_index", None)
        raise res
    return res


def envelope(data: ProblemData, queries, opt_cfg: Optional[SigmaOptimizerConfig] = None) -> list:
    """:func:`optimal_bound` over many queries; failures are returned in place, not raised.

    A dataset that falsifies the budgets fails every query, so that case raises.
    """
    solver = BoundSolver(data, opt_cfg)
    solver.check_consistent()
    return solver.solve(queries)


def envelope_arrays(results: Sequence) -> tuple:
    """(lower, upper) arrays from an :func:`envelope` list; raises the first error."""
    for r in results:
        if isinstance(r, OptimizerFailed):
            continue
        if isinstance(r, BoundError):
            raise r
    rows = [r.context["result"] if isinstance(r, OptimizerFailed) else r for r in results]
    return np.array([r.lower for r in rows]), np.array([r.upper for r in rows])
