"""Automatic ARIMA: KPSS differencing plus stepwise AICc order search."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import least_squares, minimize

from ..errors import ParameterError
from ..forecast import WIS_ALPHAS, ForecastDistribution, from_gaussian
from ..timeseries import CalibrationWindow, EpiWeek

KPSS_CRITICAL_5PCT = 0.463
START_ORDERS = ((0, 0), (1, 0), (0, 1), (1, 1), (2, 2))


@dataclass(frozen=True)
class ArimaSearch:
    max_p: int = 5
    max_q: int = 5
    max_d: int = 2
    alpha: float = 0.05  # KPSS level; only 5% has a tabulated critical value here
    order: tuple[int, int, int] | None = None  # skip the search and fit this order

    def __post_init__(self):
        if not (0 <= self.max_p <= 5 and 0 <= self.max_q <= 5 and 0 <= self.max_d <= 2):
            raise ParameterError("ARIMA caps are p, q <= 5 and d <= 2")
        if self.alpha != 0.05:
            raise ParameterError("only the 5% KPSS level is supported")


@dataclass(frozen=True)
class ArimaFit:
    order: tuple[int, int, int]
    phi: np.ndarray
    theta: np.ndarray
    c: float
    sigma: float
    aicc: float
    mu: float = 0.0  # mean of the differenced series; c = mu * (1 - sum(phi))
    fallback: bool = False
    y: np.ndarray | None = None
    origin: EpiWeek | None = None


# -- differencing -----------------------------------------------------------

def kpss_statistic(x) -> float:
    """Level-stationarity KPSS statistic with Bartlett weights and short lag truncation."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    e = x - x.mean()
    lags = int(4 * (n / 100.0) ** 0.25)
    s2 = float(e @ e) / n
    for s in range(1, min(lags, n - 1) + 1):
        s2 += 2.0 * (1.0 - s / (lags + 1.0)) * float(e[s:] @ e[:-s]) / n
    if not s2 > 1e-12 * max(float(x @ x) / n, 1e-300):
        return 0.0
    S = np.cumsum(e)
    return float(S @ S) / (n * n * s2)


def select_d(y, max_d: int = 2) -> int:
    d = 0
    x = np.asarray(y, dtype=float)
    while d < max_d and len(x) > 3 and kpss_statistic(x) > KPSS_CRITICAL_5PCT:
        x = np.diff(x)
        d += 1
    return d


# -- parameter transforms ---------------------------------------------------

def _stationary(u: np.ndarray) -> np.ndarray:
    """Map unconstrained values to a stationary AR polynomial via partial autocorrelations."""
    r = np.tanh(u)
    phi = np.zeros(len(u))
    for k in range(len(u)):
        prev = phi[:k].copy()
        phi[k] = r[k]
        phi[:k] = prev - r[k] * prev[::-1]
    return phi


def _unpack(x, p, q, const):
    phi = _stationary(x[:p])
    theta = -_stationary(-x[p:p + q])  # invertible MA
    mu = x[p + q] if const else 0.0
    return phi, theta, mu


# -- likelihood -------------------------------------------------------------

@njit(cache=True)
def _kalman(w, phi, theta):
    """Exact ARMA filter with unit innovation variance.

    Returns ``(sum v^2/F, sum log F, a, P)`` with ``a, P`` the one-step-ahead
    state mean and covariance after the last observation.
    """
    p = phi.shape[0]
    q = theta.shape[0]
    r = max(p, q + 1)
    T = np.zeros((r, r))
    for i in range(p):
        T[i, 0] = phi[i]
    for i in range(r - 1):
        T[i, i + 1] = 1.0
    R = np.zeros(r)
    R[0] = 1.0
    for j in range(q):
        R[j + 1] = theta[j]
    RR = np.outer(R, R)
    # stationary covariance: vec(P) = (I - T kron T)^-1 vec(RR')
    A = np.eye(r * r)
    for i in range(r):
        for j in range(r):
            for k in range(r):
                for l in range(r):
                    A[i * r + k, j * r + l] -= T[i, j] * T[k, l]
    vec = np.linalg.solve(A, RR.copy().reshape(r * r))
    P = vec.reshape((r, r)).copy()
    a = np.zeros(r)
    ssq = 0.0
    logdet = 0.0
    for t in range(w.shape[0]):
        F = P[0, 0]
        if not F > 0.0:
            return np.inf, np.inf, a, P
        v = w[t] - a[0]
        ssq += v * v / F
        logdet += math.log(F)
        Kg = P[:, 0] / F
        a_upd = a + Kg * v
        P_upd = P - np.outer(Kg, P[0, :])
        a = T @ a_upd
        P = T @ P_upd @ T.T + RR
    return ssq, logdet, a, P


def _loglik(w, phi, theta, mu) -> tuple[float, float]:
    """Concentrated Gaussian log-likelihood and the innovation variance estimate."""
    n = len(w)
    ssq, logdet, _, _ = _kalman(w - mu, phi, theta)
    if not math.isfinite(ssq):
        return -math.inf, math.nan
    s2 = ssq / n
    if s2 <= 0:
        return math.inf, 0.0
    return -0.5 * (n * math.log(2 * math.pi * s2) + n + logdet), s2


def _css_residuals(x, w, p, q, const):
    phi, theta, mu = _unpack(x, p, q, const)
    z = w - mu
    e = np.zeros(len(w))
    for t in range(p, len(w)):
        v = z[t]
        for i in range(p):
            v -= phi[i] * z[t - 1 - i]
        for j in range(min(q, t)):
            v -= theta[j] * e[t - 1 - j]
        e[t] = v
    return e[p:]


def _fit_arma(w, p, q, const):
    """CSS start then exact-likelihood refinement on the standardized series."""
    k = p + q + int(const)
    if k == 0:
        ll, s2 = _loglik(w, np.zeros(0), np.zeros(0), 0.0)
        return np.zeros(0), np.zeros(0), 0.0, ll, s2
    x0 = np.zeros(k)
    if const:
        x0[-1] = w.mean()
    if len(w) - p > k:
        try:
            x0 = least_squares(_css_residuals, x0, args=(w, p, q, const), method="lm", max_nfev=200 * (k + 1)).x
        except (ValueError, np.linalg.LinAlgError):
            pass
    x0 = np.clip(x0, -8.0, 8.0) if not const else np.concatenate([np.clip(x0[:-1], -8, 8), x0[-1:]])

    def nll(x):
        phi, theta, mu = _unpack(x, p, q, const)
        ll, _ = _loglik(w, phi, theta, mu)
        return -ll if math.isfinite(ll) else 1e10

    bounds = [(-8.0, 8.0)] * (p + q) + ([(None, None)] if const else [])
    res = minimize(nll, x0, method="L-BFGS-B", bounds=bounds)
    x = res.x if res.fun <= nll(x0) else x0
    phi, theta, mu = _unpack(x, p, q, const)
    ll, s2 = _loglik(w, phi, theta, mu)
    return phi, theta, mu, ll, s2


def _aicc(ll, k, n):
    if n - k - 1 <= 0 or not math.isfinite(ll):
        return math.inf
    return -2.0 * ll + 2.0 * k + 2.0 * k * (k + 1) / (n - k - 1)


# -- public API -------------------------------------------------------------

def fit_arima(window: CalibrationWindow, search: ArimaSearch = ArimaSearch()) -> ArimaFit:
    y = np.asarray(window.values, dtype=float)
    origin = getattr(window, "origin", None)
    if len(y) < 5:
        raise ParameterError("ARIMA needs at least 5 observations")
    d = search.order[1] if search.order else select_d(y, search.max_d)
    w = np.diff(y, n=d) if d else y.copy()
    const = d == 0
    n = len(w)

    loc = float(w.mean()) if const else 0.0
    scale = float(np.sqrt(np.mean((w - loc) ** 2)))
    if scale == 0.0:
        # deterministic after differencing: no innovations to model
        return ArimaFit((0, d, 0), np.zeros(0), np.zeros(0), loc, 0.0, -math.inf, loc, False, y, origin)
    ws = (w - loc) / scale

    tried: dict[tuple[int, int], tuple] = {}

    def score(p, q):
        if (p, q) not in tried:
            k = p + q + int(const) + 1
            if n - k - 1 <= 0:
                tried[(p, q)] = (math.inf, None)
            else:
                try:
                    phi, theta, mu, ll, s2 = _fit_arma(ws, p, q, const)
                    tried[(p, q)] = (_aicc(ll - n * math.log(scale), k, n), (phi, theta, mu, s2))
                except (ValueError, np.linalg.LinAlgError, FloatingPointError):
                    tried[(p, q)] = (math.inf, None)
        return tried[(p, q)][0]

    if search.order:
        best = (search.order[0], search.order[2])
        score(*best)
    else:
        feasible = [pq for pq in START_ORDERS if pq[0] <= search.max_p and pq[1] <= search.max_q]
        best = min(feasible, key=lambda pq: (score(*pq), pq))
        while True:
            p0, q0 = best
            moves = [(p0 + dp, q0 + dq) for dp in (-1, 0, 1) for dq in (-1, 0, 1) if dp or dq]
            moves = [(p, q) for p, q in moves if 0 <= p <= search.max_p and 0 <= q <= search.max_q]
            cand = min(moves, key=lambda pq: (score(*pq), pq))
            if score(*cand) < score(*best):
                best = cand
            else:
                break

    aicc, est = tried[best]
    if est is None or not math.isfinite(aicc):
        sigma = scale if const else float(np.sqrt(np.mean(w**2)))
        return ArimaFit((0, d, 0), np.zeros(0), np.zeros(0), loc, sigma, math.nan, loc, True, y, origin)
    phi, theta, mu_s, s2 = est
    mu = loc + scale * mu_s
    return ArimaFit(
        (best[0], d, best[1]), phi, theta, float(mu * (1 - phi.sum())), math.sqrt(s2) * scale, float(aicc),
        float(mu), False, y, origin,
    )


def psi_weights(phi, theta, d: int, H: int) -> np.ndarray:
    """MA(infinity) weights of the integrated process, psi_0 = 1."""
    ar = np.concatenate([[1.0], -np.asarray(phi, dtype=float)])
    for _ in range(d):
        ar = np.convolve(ar, [1.0, -1.0])
    ar_star = -ar[1:]
    psi = np.zeros(H)
    psi[0] = 1.0
    for j in range(1, H):
        v = theta[j - 1] if j - 1 < len(theta) else 0.0
        for i in range(1, min(j, len(ar_star)) + 1):
            v += ar_star[i - 1] * psi[j - i]
        psi[j] = v
    return psi


def forecast_arima(fit: ArimaFit, H: int, alphas=WIS_ALPHAS) -> ForecastDistribution:
    p, d, q = fit.order
    y = fit.y
    w = np.diff(y, n=d) if d else y
    if fit.sigma == 0.0:
        wf = np.full(H, fit.mu)
    else:
        _, _, a, _ = _kalman(w - fit.mu, np.asarray(fit.phi, float), np.asarray(fit.theta, float))
        r = len(a)
        T = np.zeros((r, r))
        T[:p, 0] = fit.phi
        T[np.arange(r - 1), np.arange(1, r)] = 1.0
        wf = np.empty(H)
        for h in range(H):
            wf[h] = fit.mu + a[0]
            a = T @ a
    # undo the differencing one level at a time
    for level in range(d - 1, -1, -1):
        last = np.diff(y, n=level)[-1] if level else y[-1]
        wf = last + np.cumsum(wf)
    psi = psi_weights(fit.phi, fit.theta, d, H)
    sd = fit.sigma * np.sqrt(np.cumsum(psi**2))
    return from_gaussian(fit.origin, wf, sd, alphas)
