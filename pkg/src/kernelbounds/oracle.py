"""Independent check of the optimal bound through the finite-dimensional QCQP.

    max  phi_* theta   s.t.  theta^T theta <= Gf^2,  (y - Phi theta)^T Kw^{-1} (y - Phi theta) <= Gw^2

The dual function of the two multipliers is minimised directly (grid, faces,
Newton in log coordinates); no noise parameter sigma appears anywhere. A primal
feasible point is recovered by a line search from a strictly feasible point
towards the dual maximiser, which certifies the duality gap.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, optimize

from .bounds import decompose
from .decomp import feature_decompose
from .errors import InvalidInput, OracleInconclusive
from .gp_core import ProblemData
from .kernels import as_points, gram_matrix


@dataclass(frozen=True, eq=False)
class QcqpInstance:
    phi_train: np.ndarray
    phi_test: np.ndarray
    kw: np.ndarray
    y: np.ndarray
    gamma_f_sq: float
    gamma_w_sq: float

    def __post_init__(self):
        pt = np.atleast_2d(np.asarray(self.phi_train, dtype=float))
        ps = np.asarray(self.phi_test, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        kw = np.atleast_2d(np.asarray(self.kw, dtype=float)) if y.size else np.zeros((0, 0))
        if y.size == 0:
            pt = pt.reshape(0, ps.shape[0])
        if pt.shape != (y.shape[0], ps.shape[0]) or kw.shape != (y.shape[0], y.shape[0]):
            raise InvalidInput("inconsistent QCQP shapes", phi_train=pt.shape, phi_test=ps.shape, kw=kw.shape)
        if not (self.gamma_f_sq > 0 and self.gamma_w_sq > 0):
            raise InvalidInput("budgets must be positive")
        for name, v in (("phi_train", pt), ("phi_test", ps), ("kw", kw), ("y", y)):
            object.__setattr__(self, name, v)

    @classmethod
    def from_problem(cls, data: ProblemData, query, rank_rtol: float = 1e-13) -> "QcqpInstance":
        """Feature factor of the latent Gram matrix with a small truncation tolerance."""
        if data.kf.finite_rank is not None:
            dec = decompose(data, query)
        else:
            q = as_points(query, data.dim)
            pts = np.vstack([data.inputs, q])
            dec = feature_decompose(gram_matrix(data.kf, pts, pts), rtol=rank_rtol)
        kw = gram_matrix(data.kw, data.inputs, data.inputs)
        return cls(dec.phi_train, dec.phi_test, kw, data.outputs, data.gamma_f_sq, data.gamma_w_sq)

    def negated(self) -> "QcqpInstance":
        return QcqpInstance(self.phi_train, -self.phi_test, self.kw, self.y, self.gamma_f_sq, self.gamma_w_sq)


@dataclass(frozen=True)
class OracleConfig:
    grid_points: int = 33
    log_lambda_min: float = -8.0
    log_lambda_max: float = 8.0
    gap_tol: float = 1e-6
    newton_iters: int = 50


@dataclass(frozen=True)
class OracleResult:
    value: float  # dual value (certified bound)
    primal: float  # value at a feasible point
    theta: np.ndarray
    lam_f: float
    lam_w: float
    gap: float

    @property
    def multipliers(self):
        return self.lam_f, self.lam_w

    @property
    def sigma(self) -> float:
        """sqrt(lam_f / lam_w); inf when the noise budget is inactive."""
        if self.lam_w <= 0:
            return math.inf
        return math.sqrt(self.lam_f / self.lam_w)


class _Dual:
    """Dual function in the eigenbasis of M = Phi^T Kw^{-1} Phi."""

    def __init__(self, inst: QcqpInstance):
        self.inst = inst
        n, r = inst.phi_train.shape
        if n:
            low = linalg.cholesky(inst.kw, lower=True)
            pw = linalg.solve_triangular(low, inst.phi_train, lower=True)
            yw = linalg.solve_triangular(low, inst.y, lower=True)
        else:
            pw, yw = np.zeros((0, r)), np.zeros(0)
        self.pw, self.yw = pw, yw
        self.d, self.q = linalg.eigh(pw.T @ pw) if r else (np.zeros(0), np.zeros((0, 0)))
        self.d = np.clip(self.d, 0.0, None)
        self.phi_t = self.q.T @ inst.phi_test
        self.c_t = self.q.T @ (pw.T @ yw)
        self.yy = float(yw @ yw)
        self.gf2, self.gw2 = inst.gamma_f_sq, inst.gamma_w_sq

    def misfit(self, theta):
        r = self.yw - self.pw @ theta
        return float(r @ r)

    def value(self, lf, lw):
        """Vectorised over broadcastable arrays of multipliers."""
        lf = np.asarray(lf, dtype=float)[..., None]
        lw = np.asarray(lw, dtype=float)[..., None]
        h = lf + lw * self.d
        g = self.phi_t + 2.0 * lw * self.c_t
        with np.errstate(divide="ignore", invalid="ignore"):
            quad = np.where(h > 0, g * g / h, np.where(g == 0, 0.0, np.inf))
        lf, lw = lf[..., 0], lw[..., 0]
        return 0.25 * quad.sum(axis=-1) - lw * self.yy + lf * self.gf2 + lw * self.gw2

    def theta(self, lf, lw):
        h = lf + lw * self.d
        g = self.phi_t + 2.0 * lw * self.c_t
        return self.q @ (0.5 * g / h)

    def grad_hess(self, lf, lw):
        """Gradient and Hessian with respect to (lam_f, lam_w)."""
        h = lf + lw * self.d
        g = self.phi_t + 2.0 * lw * self.c_t
        th = 0.5 * g / h  # eigen coordinates
        # Phi^T W r in eigen coordinates is c - D theta
        pr = self.c_t - self.d * th
        theta = self.q @ th
        grad = np.array([self.gf2 - th @ th, self.gw2 - self.misfit(theta)])
        hff = 2.0 * np.sum(th * th / h)
        hfw = -2.0 * np.sum(th * pr / h)
        hww = 2.0 * np.sum(pr * pr / h)
        return grad, np.array([[hff, hfw], [hfw, hww]])


def _argmin_log(fun, lo, hi):
    """Minimise a function that is convex in lam over lam = exp(u), u in [lo, hi]."""
    res = optimize.minimize_scalar(
        fun, bounds=(lo, hi), method="bounded", options={"xatol": 1e-11, "maxiter": 500}
    )
    return float(res.fun), float(res.x)


def _nested(dual: _Dual, lo, hi):
    """min over lam_w of (min over lam_f of g); both partial minima are convex."""

    def inner(lw):
        best = _argmin_log(lambda u: float(dual.value(math.exp(u), lw)), lo, hi)
        best = (best[0], math.exp(best[1]))
        at_zero = float(dual.value(0.0, lw))
        if at_zero < best[0]:
            best = (at_zero, 0.0)
        return best

    val, v = _argmin_log(lambda v: inner(math.exp(v))[0], lo, hi)
    f, lf = inner(math.exp(v))
    return f, lf, math.exp(v)


def _newton_polish(dual: _Dual, lf, lw, iters):
    """Projected Newton steps in (lam_f, lam_w); only decreasing steps are kept."""
    lam = np.array([lf, lw], dtype=float)
    f = float(dual.value(*lam))
    for _ in range(iters):
        if lam[0] <= 0 or lam[1] <= 0:
            break
        g, h = dual.grad_hess(*lam)
        try:
            # Ill-conditioning is harmless: a bad step is rejected below.
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", linalg.LinAlgWarning)
                step = -linalg.solve(h, g, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            break
        t = 1.0
        while np.any(lam + t * step <= 0):
            t *= 0.5
        improved = False
        while t > 1e-10:
            cand = lam + t * step
            fc = float(dual.value(*cand))
            if fc <= f:
                improved = fc < f
                lam, f = cand, fc
                break
            t *= 0.5
        if not improved or np.abs(t * step).max() <= 1e-15 * np.abs(lam).max():
            break
    return f, lam[0], lam[1]


def _slater_point(dual: _Dual):
    """Point minimising max(|theta|^2/Gf^2, misfit/Gw^2), by bisection on the weight."""
    inst = dual.inst

    def theta_at(a):
        h = a / dual.gf2 + (1.0 - a) / dual.gw2 * dual.d
        rhs = (1.0 - a) / dual.gw2 * dual.c_t
        with np.errstate(divide="ignore", invalid="ignore"):
            th = np.where(h > 0, rhs / h, 0.0)
        return dual.q @ th

    def excess(a):
        # Tiny weights blow up null-space components; inf just means "too big".
        with np.errstate(over="ignore", invalid="ignore"):
            th = theta_at(a)
            v = float(th @ th) / dual.gf2 - dual.misfit(th) / dual.gw2
        return v if v == v else math.inf

    if inst.y.size == 0:
        return np.zeros(inst.phi_test.shape[0])
    lo, hi = 0.0, 1.0
    if excess(1e-300) <= 0:
        th = theta_at(1e-300)
    else:
        lo = 1e-300
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if excess(mid) > 0:
                lo = mid
            else:
                hi = mid
        th = theta_at(hi)
    worst = max(float(th @ th) / dual.gf2, dual.misfit(th) / dual.gw2)
    if not worst < 1.0:
        raise OracleInconclusive("no strictly feasible point; the budgets are too tight", level=worst)
    return th


def _max_step(dual: _Dual, theta0, direction):
    """Largest a in [0, 1] keeping theta0 + a*direction feasible for both constraints."""
    a_max = 1.0
    # |theta0 + a d|^2 <= Gf^2
    quads = [(direction @ direction, 2 * theta0 @ direction, theta0 @ theta0 - dual.gf2)]
    pd = dual.pw @ direction
    r0 = dual.yw - dual.pw @ theta0
    quads.append((pd @ pd, -2 * r0 @ pd, r0 @ r0 - dual.gw2))
    for qa, qb, qc in quads:
        if qa + qb + qc <= 0:
            continue
        if qa <= 0:
            if qb > 0:
                a_max = min(a_max, -qc / qb)
            continue
        disc = max(qb * qb - 4 * qa * qc, 0.0)
        root = (-qb + math.sqrt(disc)) / (2 * qa)
        a_max = min(a_max, root)
    return max(a_max, 0.0)


def _solve(inst: QcqpInstance, cfg: OracleConfig) -> OracleResult:
    if not np.any(inst.phi_test):
        return OracleResult(0.0, 0.0, np.zeros_like(inst.phi_test), 0.0, 0.0, 0.0)
    dual = _Dual(inst)
    # Face lam_w = 0: closed-form minimum over lam_f.
    nphi = float(np.linalg.norm(inst.phi_test))
    cands = [(nphi * math.sqrt(dual.gf2), nphi / (2 * math.sqrt(dual.gf2)), 0.0)]
    # Face lam_f = 0: finite only if M is nonsingular.
    if dual.d.size and dual.d[0] > 1e-12 * max(dual.d[-1], 1e-300):
        res = optimize.minimize_scalar(
            lambda u: float(dual.value(0.0, math.exp(u))),
            bounds=(cfg.log_lambda_min * math.log(10), cfg.log_lambda_max * math.log(10)),
            method="bounded",
            options={"xatol": 1e-12, "maxiter": 500},
        )
        cands.append((float(res.fun), 0.0, math.exp(res.x)))
    # Interior: coarse grid, nested exact line minimisations, Newton polish.
    ls = np.logspace(cfg.log_lambda_min, cfg.log_lambda_max, cfg.grid_points)
    grid = dual.value(ls[:, None], ls[None, :])
    i, j = np.unravel_index(np.nanargmin(grid), grid.shape)
    cands.append((float(grid[i, j]), ls[i], ls[j]))
    lo, hi = (c * math.log(10) for c in (cfg.log_lambda_min - 4, cfg.log_lambda_max))
    nested = _nested(dual, lo, hi)
    cands.append(nested)
    if nested[1] > 0 and nested[2] > 0:
        cands.append(_newton_polish(dual, nested[1], nested[2], cfg.newton_iters))
    value, lf, lw = min(cands, key=lambda c: c[0])
    theta_d = dual.theta(lf, lw) if lf > 0 else dual.q @ (0.5 * (dual.phi_t + 2 * lw * dual.c_t) / (lw * dual.d))
    theta0 = _slater_point(dual)
    a = _max_step(dual, theta0, theta_d - theta0)
    theta = theta0 + a * (theta_d - theta0)
    primal = float(inst.phi_test @ theta)
    gap = value - primal
    if gap > cfg.gap_tol * (1.0 + abs(value)):
        raise OracleInconclusive("duality gap above tolerance", dual=value, primal=primal, gap=gap)
    return OracleResult(value, primal, theta, lf, lw, gap)


def oracle_upper(inst: QcqpInstance, cfg: Optional[OracleConfig] = None) -> OracleResult:
    """Largest value of phi_* theta over the two ellipsoids."""
    return _solve(inst, cfg or OracleConfig())


def oracle_lower(inst: QcqpInstance, cfg: Optional[OracleConfig] = None) -> OracleResult:
    """Smallest value; solved as the negated maximisation."""
    r = _solve(inst.negated(), cfg or OracleConfig())
    return OracleResult(-r.value, -r.primal, r.theta, r.lam_f, r.lam_w, r.gap)

