# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sigma search. Same algorithm as ``_search_py``; see that module."""

import numpy as np

from libc.math cimport sqrt, pow, fabs, floor, INFINITY, NAN, isfinite

NAME = "cython"

cdef enum:
    C_UPPER = 0
    C_LOWER = 1
    C_CONTROL = 2
    C_BETA_SQ = 3

MODE_UPPER = C_UPPER
MODE_LOWER = C_LOWER
MODE_CONTROL = C_CONTROL
MODE_BETA_SQ = C_BETA_SQ

cdef double _SQRT_EPS = 1.4901161193847656e-08
cdef double _GOLDEN = 0.3819660112501051


cdef struct Problem:
    const double* lam
    const double* a
    const double* b
    Py_ssize_t n
    Py_ssize_t n_res
    double v0
    double gf2
    double gw2
    int mode
    const double* ctl
    int nfev
    double best_t
    double best_f


cdef void _terms(const Problem* p, double s, double* mean, double* dv, double* nrm) noexcept nogil:
    cdef Py_ssize_t i
    cdef double w, m = 0.0, res = 0.0, sub = 0.0, nn = 0.0
    for i in range(p.n):
        w = 1.0 / (p.lam[i] + s)
        m += p.a[i] * w * p.b[i]
        if i < p.n_res:
            res += p.a[i] * w * (p.a[i] / p.lam[i])
        else:
            sub += p.a[i] * w * p.a[i]
        nn += p.b[i] * w * p.b[i]
    mean[0] = m
    dv[0] = s * res - sub
    nrm[0] = nn


cdef double _control_inner(double m, double low, const double* ctl, double* u_out, double* slack_out) noexcept nogil:
    cdef double x = ctl[0], kx = ctl[1], ku = ctl[2], k0 = ctl[3]
    cdef double gamma = ctl[4], omega = ctl[5], umin = ctl[6], umax = ctl[7]
    cdef double c = kx * x + k0 + m
    cdef double d = (1.0 - gamma) * x - low - kx * x - k0
    cdef double cands[5]
    cdef int nc = 4, i
    cdef double u, slack, j, best = INFINITY, bu = umin, bs = 0.0
    cands[0] = umin
    cands[1] = umax
    cands[2] = -ku * c / (ku * ku + 1.0)
    cands[3] = (0.5 * omega * ku - ku * c) / (ku * ku + 1.0)
    if ku != 0.0:
        cands[4] = d / ku
        nc = 5
    for i in range(nc):
        u = cands[i]
        if u < umin:
            u = umin
        if u > umax:
            u = umax
        slack = d - ku * u
        if slack < 0.0:
            slack = 0.0
        j = (c + ku * u) * (c + ku * u) + u * u + omega * slack
        if j < best:
            best = j
            bu = u
            bs = slack
    if u_out != NULL:
        u_out[0] = bu
    if slack_out != NULL:
        slack_out[0] = bs
    return best


cdef double _objective(const Problem* p, double t) noexcept nogil:
    cdef double s = pow(10.0, 2.0 * t)
    cdef double m = 0.0, dv = 0.0, nrm = 0.0, beta2, var, half, v
    if p.n:
        _terms(p, s, &m, &dv, &nrm)
    beta2 = p.gf2 + p.gw2 / s - nrm
    if p.mode == C_BETA_SQ:
        if beta2 != beta2:
            return INFINITY
        return beta2
    if not beta2 >= 0.0:
        return INFINITY
    var = p.v0 + dv
    if var < 0.0:
        var = 0.0
    half = sqrt(beta2) * sqrt(var)
    if p.mode == C_UPPER:
        v = m + half
    elif p.mode == C_LOWER:
        v = -m + half
    else:
        v = _control_inner(m, m - half, p.ctl, NULL, NULL)
    if v != v:
        return INFINITY
    return v


cdef double _f(Problem* p, double t) noexcept nogil:
    cdef double v = _objective(p, t)
    p.nfev += 1
    if v < p.best_f:
        p.best_f = v
        p.best_t = t
    return v


cdef int _brent(Problem* p, double a, double b, double xatol, int max_iter) noexcept nogil:
    cdef double fulc = a + _GOLDEN * (b - a)
    cdef double nfc = fulc, xf = fulc
    cdef double rat = 0.0, e = 0.0, x, fu, r, q, pp, si
    cdef double fx = _f(p, xf)
    cdef double ffulc = fx, fnfc = fx
    cdef double xm = 0.5 * (a + b)
    cdef double tol1 = _SQRT_EPS * fabs(xf) + xatol / 3.0
    cdef double tol2 = 2.0 * tol1
    cdef int it = 0, golden
    while fabs(xf - xm) > (tol2 - 0.5 * (b - a)):
        if it >= max_iter:
            return 0
        golden = 1
        if fabs(e) > tol1 and isfinite(fx) and isfinite(fnfc) and isfinite(ffulc):
            golden = 0
            r = (xf - nfc) * (fx - ffulc)
            q = (xf - fulc) * (fx - fnfc)
            pp = (xf - fulc) * q - (xf - nfc) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                pp = -pp
            q = fabs(q)
            r = e
            e = rat
            if fabs(pp) < fabs(0.5 * q * r) and pp > q * (a - xf) and pp < q * (b - xf):
                rat = pp / q
                x = xf + rat
                if (x - a) < tol2 or (b - x) < tol2:
                    rat = tol1 if xm - xf >= 0.0 else -tol1
            else:
                golden = 1
        if golden:
            e = (a - xf) if xf >= xm else (b - xf)
            rat = _GOLDEN * e
        si = 1.0 if rat >= 0.0 else -1.0
        x = xf + si * (fabs(rat) if fabs(rat) > tol1 else tol1)
        fu = _f(p, x)
        it += 1
        if fu <= fx:
            if x >= xf:
                a = xf
            else:
                b = xf
            fulc = nfc
            ffulc = fnfc
            nfc = xf
            fnfc = fx
            xf = x
            fx = fu
        else:
            if x < xf:
                a = x
            else:
                b = x
            if fu <= fnfc or nfc == xf:
                fulc = nfc
                ffulc = fnfc
                nfc = x
                fnfc = fu
            elif fu <= ffulc or fulc == xf or fulc == nfc:
                fulc = x
                ffulc = fu
        xm = 0.5 * (a + b)
        tol1 = _SQRT_EPS * fabs(xf) + xatol / 3.0
        tol2 = 2.0 * tol1
    return 1


cdef int _descend(const double* gv, int n, int k) noexcept nogil:
    while True:
        if k > 0 and gv[k - 1] < gv[k]:
            k -= 1
        elif k < n - 1 and gv[k + 1] < gv[k]:
            k += 1
        else:
            return k


cdef int _search(Problem* p, double t_lo, double t_hi, const double* seeds, int nseeds,
                 int n_grid, double xtol, int max_iter, double* gv, int* ks) noexcept nogil:
    """Caller provides scratch ``gv`` (n_grid) and ``ks`` (nseeds + 1)."""
    cdef double h, s0, lo, hi
    cdef int i, j, k, nk = 0, dup, conv = 1, kg
    p.nfev = 0
    p.best_t = NAN
    p.best_f = INFINITY
    if not t_hi > t_lo or n_grid < 2:
        _f(p, t_lo)
        return 1
    h = (t_hi - t_lo) / (n_grid - 1)
    for i in range(n_grid):
        gv[i] = _f(p, t_lo + i * h)
    for j in range(nseeds):
        s0 = seeds[j]
        if s0 < t_lo:
            s0 = t_lo
        if s0 > t_hi:
            s0 = t_hi
        _f(p, s0)
        k = _descend(gv, n_grid, <int>floor((s0 - t_lo) / h + 0.5))
        dup = 0
        for i in range(nk):
            if ks[i] == k:
                dup = 1
        if not dup:
            ks[nk] = k
            nk += 1
    kg = 0
    for i in range(1, n_grid):
        if gv[i] < gv[kg]:
            kg = i
    dup = 0
    for i in range(nk):
        if ks[i] == kg:
            dup = 1
    if not dup:
        ks[nk] = kg
        nk += 1
    for i in range(nk):
        k = ks[i]
        if not isfinite(gv[k]):
            continue
        lo = t_lo + (k - 1 if k > 0 else 0) * h
        hi = t_lo + (k + 1 if k < n_grid - 1 else n_grid - 1) * h
        if not _brent(p, lo, hi, xtol, max_iter):
            conv = 0
    return conv


cdef double[::1] _ctl_view(ctl):
    arr = np.zeros(8) if ctl is None or len(ctl) == 0 else np.ascontiguousarray(ctl, dtype=np.float64)
    return arr


def terms(const double[::1] lam, const double[::1] a, const double[::1] b, double s, Py_ssize_t n_res=0):
    cdef Problem p
    cdef double m = 0.0, dv = 0.0, nrm = 0.0
    p.lam = &lam[0] if lam.shape[0] else NULL
    p.a = &a[0] if a.shape[0] else NULL
    p.b = &b[0] if b.shape[0] else NULL
    p.n = lam.shape[0]
    p.n_res = n_res
    _terms(&p, s, &m, &dv, &nrm)
    return m, dv, nrm


def control_inner(double m, double low, ctl):
    cdef double[::1] c = _ctl_view(ctl)
    cdef double u = 0.0, slack = 0.0
    cdef double j = _control_inner(m, low, &c[0], &u, &slack)
    return j, u, slack


def objective(const double[::1] lam, const double[::1] a, const double[::1] b, double v0, Py_ssize_t n_res,
              double gf2, double gw2, int mode, ctl, double t):
    cdef double[::1] c = _ctl_view(ctl)
    cdef Problem p
    p.lam = &lam[0] if lam.shape[0] else NULL
    p.a = &a[0] if a.shape[0] else NULL
    p.b = &b[0] if b.shape[0] else NULL
    p.n = lam.shape[0]
    p.n_res = n_res
    p.v0 = v0
    p.gf2 = gf2
    p.gw2 = gw2
    p.mode = mode
    p.ctl = &c[0]
    return _objective(&p, t)


def search(const double[::1] lam, const double[::1] a, const double[::1] b, double v0, Py_ssize_t n_res,
           double gf2, double gw2, int mode, ctl, double t_lo, double t_hi, seeds,
           int n_grid, double xtol, int max_iter):
    cdef double[::1] c = _ctl_view(ctl)
    cdef double[::1] sd = np.ascontiguousarray(seeds, dtype=np.float64)
    cdef double[::1] gv = np.empty(max(n_grid, 1))
    cdef int[::1] ks = np.empty(sd.shape[0] + 1, dtype=np.intc)
    cdef Problem p
    cdef int conv
    p.lam = &lam[0] if lam.shape[0] else NULL
    p.a = &a[0] if a.shape[0] else NULL
    p.b = &b[0] if b.shape[0] else NULL
    p.n = lam.shape[0]
    p.n_res = n_res
    p.v0 = v0
    p.gf2 = gf2
    p.gw2 = gw2
    p.mode = mode
    p.ctl = &c[0]
    with nogil:
        conv = _search(&p, t_lo, t_hi, &sd[0] if sd.shape[0] else NULL, <int>sd.shape[0],
                       n_grid, xtol, max_iter, &gv[0], &ks[0])
    return p.best_t, p.best_f, p.nfev, bool(conv)


def search_batch(const double[::1] lam, const double[:, ::1] A, const double[::1] b, const double[::1] v0,
                 Py_ssize_t n_res, double gf2, double gw2, int mode, ctl, double t_lo, double t_hi, seeds,
                 int n_grid, double xtol, int max_iter):
    cdef double[::1] c = _ctl_view(ctl)
    cdef double[::1] sd = np.ascontiguousarray(seeds, dtype=np.float64)
    cdef Py_ssize_t nq = A.shape[0], i
    cdef double[::1] gv = np.empty(max(n_grid, 1))
    cdef int[::1] ks = np.empty(sd.shape[0] + 1, dtype=np.intc)
    t_out = np.empty(nq)
    f_out = np.empty(nq)
    n_out = np.empty(nq, dtype=np.int64)
    c_out = np.empty(nq, dtype=np.uint8)
    cdef double[::1] tv = t_out
    cdef double[::1] fv = f_out
    cdef long long[::1] nv = n_out
    cdef unsigned char[::1] cv = c_out
    cdef Problem p
    p.lam = &lam[0] if lam.shape[0] else NULL
    p.b = &b[0] if b.shape[0] else NULL
    p.n = lam.shape[0]
    p.n_res = n_res
    p.gf2 = gf2
    p.gw2 = gw2
    p.mode = mode
    p.ctl = &c[0]
    with nogil:
        for i in range(nq):
            p.a = &A[i, 0] if p.n else NULL
            p.v0 = v0[i]
            cv[i] = <unsigned char>_search(&p, t_lo, t_hi, &sd[0] if sd.shape[0] else NULL, <int>sd.shape[0],
                                            n_grid, xtol, max_iter, &gv[0], &ks[0])
            tv[i] = p.best_t
            fv[i] = p.best_f
            nv[i] = p.nfev
    return t_out, f_out, n_out, c_out.astype(bool)
