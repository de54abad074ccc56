"""Pure-Python sigma search. Mirrors ``_search_ext.pyx`` step for step.

The latent Gram matrix is pre-whitened by the noise factor and
eigendecomposed (eigenvalues ``lam``). For a query with projected cross
covariance ``a`` and projected data ``b``, every probe costs O(N)::

    mean = sum a_i b_i / (lam_i + s)
    var  = v0 + sum_{i < n_res} a_i^2 s / (lam_i (lam_i + s)) - sum_{i >= n_res} a_i^2 / (lam_i + s)
    norm = sum b_i^2 / (lam_i + s)          s = sigma^2 = 10 ** (2 t)

The first ``n_res`` ("resolved") components carry their s -> 0 limit inside
``v0``, which avoids cancellation when the variance is tiny; with ``n_res = 0``
``v0`` is simply k(x*, x*).

Modes: 0 minimises the relaxed upper bound, 1 minimises minus the relaxed
lower bound, 2 minimises the one-step safe-control cost (inner control input
solved in closed form), 3 minimises beta^2 (falsification scan).
"""

from __future__ import annotations

import math

import numpy as np

NAME = "python"

MODE_UPPER = 0
MODE_LOWER = 1
MODE_CONTROL = 2
MODE_BETA_SQ = 3

_SQRT_EPS = math.sqrt(2.220446049250313e-16)
_GOLDEN = 0.5 * (3.0 - math.sqrt(5.0))


def terms(lam, a, b, s, n_res=0):
    """(mean, variance change relative to v0, interpolant norm)."""
    w = 1.0 / (lam + s)
    aw = a * w
    dv = float(s * (aw[:n_res] @ (a[:n_res] / lam[:n_res])) - aw[n_res:] @ a[n_res:])
    return float(aw @ b), dv, float((b * w) @ b)


def control_inner(m, low, ctl):
    """Best control input for a fixed sigma.

    ``ctl = [x, kx, ku, k0, gamma, omega, umin, umax]`` describes the known
    dynamics ``kx*x + ku*u + k0`` and the barrier ``x+ >= (1-gamma) x``. The
    cost ``(fk + m)^2 + u^2 + omega*slack`` is convex piecewise quadratic in u,
    so the minimum sits at one of a handful of candidate points.
    Returns ``(cost, u, slack)``.
    """
    x, kx, ku, k0, gamma, omega, umin, umax = (float(v) for v in ctl)
    c = kx * x + k0 + m
    d = (1.0 - gamma) * x - low - kx * x - k0
    cands = [umin, umax, -ku * c / (ku * ku + 1.0), (0.5 * omega * ku - ku * c) / (ku * ku + 1.0)]
    if ku != 0.0:
        cands.append(d / ku)
    best = (math.inf, umin, 0.0)
    for u in cands:
        u = min(max(u, umin), umax)
        slack = d - ku * u
        if slack < 0.0:
            slack = 0.0
        j = (c + ku * u) ** 2 + u * u + omega * slack
        if j < best[0]:
            best = (j, u, slack)
    return best


def objective(lam, a, b, v0, n_res, gf2, gw2, mode, ctl, t):
    s = 10.0 ** (2.0 * t)
    if lam.shape[0]:
        m, dv, nrm = terms(lam, a, b, s, n_res)
    else:
        m = dv = nrm = 0.0
    beta2 = gf2 + gw2 / s - nrm
    if mode == MODE_BETA_SQ:
        return beta2 if beta2 == beta2 else math.inf
    if not beta2 >= 0.0:
        return math.inf
    var = v0 + dv
    if var < 0.0:
        var = 0.0
    half = math.sqrt(beta2) * math.sqrt(var)
    if mode == MODE_UPPER:
        v = m + half
    elif mode == MODE_LOWER:
        v = -m + half
    else:
        v = control_inner(m, m - half, ctl)[0]
    if v != v:
        return math.inf
    return v


def _brent(f, a, b, xatol, max_iter):
    """Bounded Brent minimisation on [a, b]; returns (x, fx, converged)."""
    fulc = a + _GOLDEN * (b - a)
    nfc, xf = fulc, fulc
    rat = e = 0.0
    fx = f(xf)
    ffulc = fnfc = fx
    xm = 0.5 * (a + b)
    tol1 = _SQRT_EPS * abs(xf) + xatol / 3.0
    tol2 = 2.0 * tol1
    it = 0
    while abs(xf - xm) > (tol2 - 0.5 * (b - a)):
        if it >= max_iter:
            return xf, fx, False
        golden = True
        if abs(e) > tol1 and math.isfinite(fx) and math.isfinite(fnfc) and math.isfinite(ffulc):
            golden = False
            r = (xf - nfc) * (fx - ffulc)
            q = (xf - fulc) * (fx - fnfc)
            p = (xf - fulc) * q - (xf - nfc) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            r = e
            e = rat
            if abs(p) < abs(0.5 * q * r) and p > q * (a - xf) and p < q * (b - xf):
                rat = p / q
                x = xf + rat
                if (x - a) < tol2 or (b - x) < tol2:
                    rat = tol1 if xm - xf >= 0.0 else -tol1
            else:
                golden = True
        if golden:
            e = (a - xf) if xf >= xm else (b - xf)
            rat = _GOLDEN * e
        si = 1.0 if rat >= 0.0 else -1.0
        x = xf + si * max(abs(rat), tol1)
        fu = f(x)
        it += 1
        if fu <= fx:
            if x >= xf:
                a = xf
            else:
                b = xf
            fulc, ffulc = nfc, fnfc
            nfc, fnfc = xf, fx
            xf, fx = x, fu
        else:
            if x < xf:
                a = x
            else:
                b = x
            if fu <= fnfc or nfc == xf:
                fulc, ffulc = nfc, fnfc
                nfc, fnfc = x, fu
            elif fu <= ffulc or fulc == xf or fulc == nfc:
                fulc, ffulc = x, fu
        xm = 0.5 * (a + b)
        tol1 = _SQRT_EPS * abs(xf) + xatol / 3.0
        tol2 = 2.0 * tol1
    return xf, fx, True


def _descend(gv, k):
    n = len(gv)
    while True:
        if k > 0 and gv[k - 1] < gv[k]:
            k -= 1
        elif k < n - 1 and gv[k + 1] < gv[k]:
            k += 1
        else:
            return k


def search(lam, a, b, v0, n_res, gf2, gw2, mode, ctl, t_lo, t_hi, seeds, n_grid, xtol, max_iter):
    """Grid scan, discrete descent from each seed and the grid argmin, then Brent.

    Returns ``(t_best, f_best, nfev, converged)``; ``f_best`` is the smallest
    value over *all* probes, so it never exceeds the value at any seed.
    """
    best = [math.nan, math.inf]
    count = [0]

    def f(t):
        v = objective(lam, a, b, v0, n_res, gf2, gw2, mode, ctl, t)
        count[0] += 1
        if v < best[1]:
            best[0], best[1] = t, v
        return v

    if not t_hi > t_lo or n_grid < 2:
        f(t_lo)
        return best[0], best[1], count[0], True
    h = (t_hi - t_lo) / (n_grid - 1)
    grid = [t_lo + i * h for i in range(n_grid)]
    gv = [f(t) for t in grid]
    ks = []
    for s0 in seeds:
        s0 = min(max(s0, t_lo), t_hi)
        f(s0)
        k = _descend(gv, int(math.floor((s0 - t_lo) / h + 0.5)))
        if k not in ks:
            ks.append(k)
    kg = min(range(n_grid), key=lambda i: (gv[i], i))
    if kg not in ks:
        ks.append(kg)
    converged = True
    for k in ks:
        if not math.isfinite(gv[k]):
            continue
        lo = grid[max(k - 1, 0)]
        hi = grid[min(k + 1, n_grid - 1)]
        _, _, ok = _brent(f, lo, hi, xtol, max_iter)
        converged = converged and ok
    return best[0], best[1], count[0], converged


def search_batch(lam, A, b, v0, n_res, gf2, gw2, mode, ctl, t_lo, t_hi, seeds, n_grid, xtol, max_iter):
    q = A.shape[0]
    t = np.empty(q)
    v = np.empty(q)
    nfev = np.empty(q, dtype=np.int64)
    conv = np.empty(q, dtype=bool)
    for i in range(q):
        t[i], v[i], nfev[i], conv[i] = search(
            lam, A[i], b, float(v0[i]), n_res, gf2, gw2, mode, ctl, t_lo, t_hi, seeds, n_grid, xtol, max_iter
        )
    return t, v, nfev, conv
