"""Compiled inner loops for the sub-epidemic system.

Parameter vectors used by the fitting code live in an unconstrained space ``z``
laid out as ``[log r_1..r_n, logit p_1..p_n, log(K_1 - I0)..log(K_n - I0), log I0]``.
"""

import math

import numpy as np
from numba import njit

# statuses returned by levenberg_marquardt
CONVERGED = 0
MAX_ITER = 1
JACOBIAN_FAILURE = 2


@njit(cache=True)
def _rhs(c, active, r, p, K, out):
    for i in range(c.shape[0]):
        if active[i]:
            ci = c[i] if c[i] > 0.0 else 0.0
            out[i] = r[i] * ci ** p[i] * (1.0 - ci / K[i])
        else:
            out[i] = 0.0


@njit(cache=True)
def levels(r, p, K, i0, c_thr, n_weeks, spw, out):
    """RK4 integration; ``out[i, w]`` receives C_i at whole week ``w``.

    Sub-epidemic ``i >= 1`` switches on at the start of the first step where
    C_{i-1} exceeds ``c_thr``; it enters at level ``i0`` and stays on.
    Returns False as soon as the state stops being finite.
    """
    n = r.shape[0]
    c = np.zeros(n)
    active = np.zeros(n, np.bool_)
    c[0] = i0
    active[0] = True
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    h = 1.0 / spw
    for i in range(n):
        out[i, 0] = c[i]
    for w in range(n_weeks):
        for _ in range(spw):
            for i in range(1, n):
                if not active[i] and c[i - 1] > c_thr:
                    active[i] = True
                    c[i] = i0
            _rhs(c, active, r, p, K, k1)
            for i in range(n):
                tmp[i] = c[i] + 0.5 * h * k1[i]
            _rhs(tmp, active, r, p, K, k2)
            for i in range(n):
                tmp[i] = c[i] + 0.5 * h * k2[i]
            _rhs(tmp, active, r, p, K, k3)
            for i in range(n):
                tmp[i] = c[i] + h * k3[i]
            _rhs(tmp, active, r, p, K, k4)
            for i in range(n):
                c[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        for i in range(n):
            if not math.isfinite(c[i]):
                return False
            out[i, w + 1] = c[i]
    return True


@njit(cache=True)
def unpack(z, n, r, p, K):
    i0 = math.exp(z[3 * n])
    for i in range(n):
        r[i] = math.exp(z[i])
        p[i] = 1.0 / (1.0 + math.exp(-z[n + i]))
        K[i] = i0 + math.exp(z[2 * n + i])
    return i0


@njit(cache=True)
def _stage(c, dc, active, r, p, K, k, dk):
    # k = f(c); dk[i, s] = tangent of f_i along sensitivity s in (r_i, p_i, K_i, I0)
    for i in range(c.shape[0]):
        if not active[i]:
            k[i] = 0.0
            for s in range(4):
                dk[i, s] = 0.0
            continue
        ci = c[i] if c[i] > 1e-300 else 1e-300
        cp = ci ** p[i]
        sat = 1.0 - ci / K[i]
        g = cp * sat
        k[i] = r[i] * g
        fc = r[i] * (p[i] * cp / ci * sat - cp / K[i])
        dk[i, 0] = fc * dc[i, 0] + g
        dk[i, 1] = fc * dc[i, 1] + r[i] * cp * math.log(ci) * sat
        dk[i, 2] = fc * dc[i, 2] + r[i] * cp * ci / (K[i] * K[i])
        dk[i, 3] = fc * dc[i, 3]


@njit(cache=True)
def curve_and_jacobian(z, n, c_thr, n_obs, spw, out, jac):
    """Weekly C_tot for ``n_obs`` weeks plus its derivative with respect to ``z``.

    The derivative is the exact tangent of the discrete RK4 map; the activation
    step is treated as locally constant.
    """
    r = np.empty(n)
    p = np.empty(n)
    K = np.empty(n)
    i0 = unpack(z, n, r, p, K)
    c = np.zeros(n)
    dc = np.zeros((n, 4))
    active = np.zeros(n, np.bool_)
    c[0] = i0
    dc[0, 3] = 1.0
    active[0] = True
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    d1 = np.empty((n, 4))
    d2 = np.empty((n, 4))
    d3 = np.empty((n, 4))
    d4 = np.empty((n, 4))
    dtmp = np.empty((n, 4))
    h = 1.0 / spw
    for w in range(n_obs):
        if w > 0:
            for _ in range(spw):
                for i in range(1, n):
                    if not active[i] and c[i - 1] > c_thr:
                        active[i] = True
                        c[i] = i0
                        dc[i, 0] = 0.0
                        dc[i, 1] = 0.0
                        dc[i, 2] = 0.0
                        dc[i, 3] = 1.0
                _stage(c, dc, active, r, p, K, k1, d1)
                for i in range(n):
                    tmp[i] = c[i] + 0.5 * h * k1[i]
                    for s in range(4):
                        dtmp[i, s] = dc[i, s] + 0.5 * h * d1[i, s]
                _stage(tmp, dtmp, active, r, p, K, k2, d2)
                for i in range(n):
                    tmp[i] = c[i] + 0.5 * h * k2[i]
                    for s in range(4):
                        dtmp[i, s] = dc[i, s] + 0.5 * h * d2[i, s]
                _stage(tmp, dtmp, active, r, p, K, k3, d3)
                for i in range(n):
                    tmp[i] = c[i] + h * k3[i]
                    for s in range(4):
                        dtmp[i, s] = dc[i, s] + h * d3[i, s]
                _stage(tmp, dtmp, active, r, p, K, k4, d4)
                for i in range(n):
                    c[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                    for s in range(4):
                        dc[i, s] += h / 6.0 * (d1[i, s] + 2.0 * d2[i, s] + 2.0 * d3[i, s] + d4[i, s])
        tot = 0.0
        d_i0 = 0.0
        for i in range(n):
            tot += c[i]
            jac[w, i] = dc[i, 0] * r[i]
            jac[w, n + i] = dc[i, 1] * p[i] * (1.0 - p[i])
            jac[w, 2 * n + i] = dc[i, 2] * (K[i] - i0)
            d_i0 += dc[i, 3] + dc[i, 2]
        jac[w, 3 * n] = d_i0 * i0
        if not math.isfinite(tot):
            return False
        out[w] = tot
    for w in range(n_obs):
        for j in range(3 * n + 1):
            if not math.isfinite(jac[w, j]):
                return False
    return True


@njit(cache=True)
def sse_at(z, n, c_thr, y, spw):
    n_obs = y.shape[0]
    out = np.empty(n_obs)
    jac = np.empty((n_obs, 3 * n + 1))
    if not curve_and_jacobian(z, n, c_thr, n_obs, spw, out, jac):
        return np.inf
    s = 0.0
    for t in range(n_obs):
        d = out[t] - y[t]
        s += d * d
    return s


@njit(cache=True)
def _solve_spd(M, b, x):
    """Cholesky solve of M x = b in place of ``M``; False if M is not positive definite."""
    m = M.shape[0]
    for j in range(m):
        d = M[j, j]
        for k in range(j):
            d -= M[j, k] * M[j, k]
        if not d > 0.0 or not math.isfinite(d):
            return False
        d = math.sqrt(d)
        M[j, j] = d
        for i in range(j + 1, m):
            v = M[i, j]
            for k in range(j):
                v -= M[i, k] * M[j, k]
            M[i, j] = v / d
    for i in range(m):
        v = b[i]
        for k in range(i):
            v -= M[i, k] * x[k]
        x[i] = v / M[i, i]
    for i in range(m - 1, -1, -1):
        v = x[i]
        for k in range(i + 1, m):
            v -= M[k, i] * x[k]
        x[i] = v / M[i, i]
    return True


@njit(cache=True)
def levenberg_marquardt(z0, n, c_thr, y, spw, max_iter, lo, hi):
    """Box-constrained Levenberg-Marquardt on the sum of squared residuals.

    Variables sitting on a bound with the gradient pointing outward are frozen
    for that iteration. Returns ``(z, sse, status)``.
    """
    m = z0.shape[0]
    n_obs = y.shape[0]
    z = np.minimum(np.maximum(z0, lo), hi)
    f = np.empty(n_obs)
    ft = np.empty(n_obs)
    J = np.empty((n_obs, m))
    Jt = np.empty((n_obs, m))
    if not curve_and_jacobian(z, n, c_thr, n_obs, spw, f, J):
        return z, np.inf, JACOBIAN_FAILURE
    res = f - y
    sse = 0.0
    ysq = 0.0
    for t in range(n_obs):
        sse += res[t] * res[t]
        ysq += y[t] * y[t]
    lam = 1e-3
    zt = np.empty(m)
    dz = np.empty(m)
    status = MAX_ITER
    for _ in range(max_iter):
        A = J.T @ J
        g = -(J.T @ res)
        for j in range(m):
            if (z[j] <= lo[j] and g[j] < 0.0) or (z[j] >= hi[j] and g[j] > 0.0):
                g[j] = 0.0
                for l in range(m):
                    A[j, l] = 0.0
                    A[l, j] = 0.0
                A[j, j] = 1.0
        improved = False
        rel = 0.0
        step = 0.0
        for _ in range(24):
            M = A.copy()
            for j in range(m):
                M[j, j] += lam * max(A[j, j], 1e-10)
            if not _solve_spd(M, g, dz):
                lam *= 4.0
                continue
            step = 0.0
            for j in range(m):
                zt[j] = min(max(z[j] + dz[j], lo[j]), hi[j])
                step = max(step, abs(zt[j] - z[j]))
            if step == 0.0:
                break
            if curve_and_jacobian(zt, n, c_thr, n_obs, spw, ft, Jt):
                st = 0.0
                for t in range(n_obs):
                    d = ft[t] - y[t]
                    st += d * d
                if st < sse:
                    rel = (sse - st) / sse
                    z[:] = zt
                    J[:, :] = Jt
                    for t in range(n_obs):
                        res[t] = ft[t] - y[t]
                    sse = st
                    lam = max(lam / 3.0, 1e-12)
                    improved = True
                    break
            lam *= 4.0
        if not improved or rel < 1e-10 or step < 1e-9 or sse <= 1e-26 * ysq:
            status = CONVERGED
            break
    return z, sse, status
