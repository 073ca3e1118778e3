"""Penalized cubic regression spline in time with GCV smoothing selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BSpline

from ..errors import FitFailureError, ParameterError
from ..forecast import WIS_ALPHAS, ForecastDistribution, from_gaussian
from ..timeseries import CalibrationWindow, EpiWeek

# log10 offsets of lambda relative to the design scale
LADDER = np.linspace(-9.0, 10.0, 191)


def default_basis_count(n: int) -> int:
    return min(10, n - 3)


@dataclass(frozen=True)
class GamFit:
    beta0: float
    basis_coeffs: np.ndarray
    knots: np.ndarray
    lam: float
    edf: float
    sigma: float
    n: int
    origin: EpiWeek | None = None
    cov: np.ndarray = field(default=None, repr=False)  # Bayesian posterior covariance of basis_coeffs
    knot_vector: np.ndarray = field(default=None, repr=False)

    def design(self, t) -> np.ndarray:
        return _design(np.atleast_1d(np.asarray(t, dtype=float)), self.knot_vector, float(self.knots[-1]))

    def predict(self, t) -> np.ndarray:
        return self.design(t) @ self.basis_coeffs


def _knot_vector(n: int, K: int) -> np.ndarray:
    inner = np.linspace(0.0, n - 1.0, K - 2)
    return np.concatenate([[inner[0]] * 3, inner, [inner[-1]] * 3])


def _design(t: np.ndarray, kv: np.ndarray, t_max: float, deriv: int = 0) -> np.ndarray:
    """Basis rows at ``t``; beyond ``t_max`` each row continues linearly."""
    K = len(kv) - 4
    eye = np.eye(K)
    splines = [BSpline(kv, eye[j], 3, extrapolate=True) for j in range(K)]
    inside = np.minimum(t, t_max)
    X = np.column_stack([s.derivative(deriv)(inside) if deriv else s(inside) for s in splines])
    over = t > t_max
    if np.any(over) and deriv == 0:
        slope = np.array([s.derivative(1)(t_max) for s in splines])
        X[over] += np.outer(t[over] - t_max, slope)
    return X


def _penalty(kv: np.ndarray) -> np.ndarray:
    """Integrated squared second derivative, exact by 2-point Gauss quadrature per knot span."""
    K = len(kv) - 4
    nodes, weights = leggauss(2)
    edges = np.unique(kv)
    S = np.zeros((K, K))
    for a, b in zip(edges[:-1], edges[1:]):
        x = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        D2 = _design(x, kv, edges[-1], deriv=2)
        S += D2.T @ (D2 * (0.5 * (b - a) * weights)[:, None])
    return 0.5 * (S + S.T)


def _smoother(X: np.ndarray, S: np.ndarray):
    """Split the coefficients into the penalty null space (lines) and a ridge part."""
    evals, evecs = np.linalg.eigh(S / np.abs(S).max())
    null = evals < 1e-9 * evals.max()
    U0, Up = evecs[:, null], evecs[:, ~null]
    T = np.hstack([U0, Up / np.sqrt(evals[~null])])
    Z0, Zp = X @ U0, X @ Up / np.sqrt(evals[~null])
    Q0, _ = np.linalg.qr(Z0)
    MZ = Zp - Q0 @ (Q0.T @ Zp)
    U, sv, Vt = np.linalg.svd(MZ, full_matrices=False)
    return T, Z0, Zp, Q0, U, sv, Vt


def fit_gam(window: CalibrationWindow, basis_count: int | None = None, lam: float | None = None) -> GamFit:
    """Fit with GCV-chosen smoothing, or with a fixed relative ``lam`` when given.

    ``lam`` is expressed relative to the largest squared singular value of the
    penalized block, the same scale the GCV ladder uses.
    """
    y = np.asarray(window.values, dtype=float)
    n = len(y)
    K = default_basis_count(n) if basis_count is None else basis_count
    if K < 4 or n < K:
        raise ParameterError(f"need window length >= basis_count >= 4 (n={n}, K={K})")
    kv = _knot_vector(n, K)
    t = np.arange(n, dtype=float)
    X = _design(t, kv, n - 1.0)
    S = _penalty(kv)
    T, Z0, Zp, Q0, U, sv, Vt = _smoother(X, S)
    scale = float(sv.max() ** 2) if sv.size and sv.max() > 0 else 1.0
    Uy = U.T @ y
    base = Q0 @ (Q0.T @ y)

    def evaluate(l):
        shrink = sv**2 / (sv**2 + l)
        fitted = base + U @ (shrink * Uy)
        rss = float(((y - fitted) ** 2).sum())
        edf = Z0.shape[1] + float(shrink.sum())
        return rss, edf

    if lam is not None:
        chosen = lam * scale
    else:
        best = None
        for off in LADDER:
            l = scale * 10.0**off
            rss, edf = evaluate(l)
            gcv = n * rss / (n - edf) ** 2
            if not math.isfinite(gcv):
                continue
            if best is None or gcv < best[0] * (1 - 1e-12) - 1e-300:
                best = (gcv, l)
        if best is None:
            raise FitFailureError("GCV could not be evaluated on any smoothing level")
        chosen = best[1]

    c = Vt.T @ (sv / (sv**2 + chosen) * Uy)
    a, *_ = np.linalg.lstsq(Z0, y - Zp @ c, rcond=None)
    coef = T @ np.concatenate([a, c])
    rss, edf = evaluate(chosen)
    fitted = X @ coef
    sigma2 = rss / max(n - edf, 1e-9)
    Z = np.hstack([Z0, Zp])
    prec = Z.T @ Z
    prec[Z0.shape[1]:, Z0.shape[1]:] += chosen * np.eye(Zp.shape[1])
    cov = sigma2 * T @ np.linalg.pinv(prec) @ T.T
    return GamFit(
        float(fitted.mean()), coef, np.unique(kv), float(chosen), float(edf), math.sqrt(sigma2), n,
        getattr(window, "origin", None), cov, kv,
    )


def forecast_gam(fit: GamFit, H: int, alphas=WIS_ALPHAS) -> ForecastDistribution:
    """Linear continuation past the last knot; variance grows with squared distance."""
    h = np.arange(1, H + 1, dtype=float)
    Xf = fit.design(fit.n - 1 + h)
    mean = Xf @ fit.basis_coeffs
    var_f = np.einsum("ij,jk,ik->i", Xf, fit.cov, Xf)
    var = fit.sigma**2 * (1.0 + h**2 / fit.n) + np.maximum(var_f, 0.0)
    return from_gaussian(fit.origin, mean, np.sqrt(var), alphas)
