"""Prophet-style piecewise-linear trend with sparse changepoints ("TrendCast").

Only the trend term is modelled; seasonal and holiday terms cannot be
identified on ten weekly points. Time is scaled to [0, 1] over the window and
values by their maximum, as Prophet does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from ..forecast import WIS_ALPHAS, ForecastDistribution, from_samples
from ..timeseries import CalibrationWindow, EpiWeek


@dataclass(frozen=True)
class TrendCastConfig:
    changepoint_range: float = 0.8
    n_changepoints: int = 25
    prior_scale: float = 0.05
    n_paths: int = 1000
    sigma_floor: float = 1e-3  # on the scaled axis; keeps the MAP bounded on exact fits
    max_iter: int = 500

    def __post_init__(self):
        if not 0 < self.changepoint_range <= 1:
            raise ParameterError("changepoint_range must lie in (0, 1]")
        if self.prior_scale <= 0 or self.n_paths < 1000:
            raise ParameterError("prior_scale must be positive and n_paths at least 1000")


@dataclass(frozen=True)
class TrendCastFit:
    base_rate: float          # slope before the first changepoint (WVAL/week)
    changepoints: np.ndarray  # week offsets inside the window
    deltas: np.ndarray        # slope changes (WVAL/week) at each changepoint
    offset: float             # trend value at the window start
    sigma: float
    cp_scale: float           # Laplace scale of future deltas (WVAL/week)
    n: int
    origin: EpiWeek | None = None

    def trend(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        hinge = np.maximum(t[..., None] - self.changepoints, 0.0)
        return self.offset + self.base_rate * t + hinge @ self.deltas


def changepoint_grid(n: int, changepoint_range: float = 0.8, n_changepoints: int = 25) -> np.ndarray:
    """Uniform candidate positions over the first part of the history, Prophet's way."""
    hist = int(math.floor(changepoint_range * n))
    k = min(n_changepoints, hist - 1)
    if k <= 0:
        return np.zeros(0)
    idx = np.round(np.linspace(0, hist - 1, k + 1)).astype(int)
    return np.unique(idx[1:]).astype(float)


def fit_trendcast(window: CalibrationWindow, cfg: TrendCastConfig = TrendCastConfig()) -> TrendCastFit:
    """MAP trend under a Laplace prior on the slope changes.

    The objective ``(n/2) log(RSS/n + floor^2) + sum|delta| / tau`` is minimised
    by majorize-minimize: each pass sets the L1 weight from the current residual
    scale and takes one reweighted ridge step.
    """
    y = np.asarray(window.values, dtype=float)
    n = len(y)
    origin = getattr(window, "origin", None)
    if n < 5:
        raise ParameterError("TrendCast needs at least 5 observations")
    cps = changepoint_grid(n, cfg.changepoint_range, cfg.n_changepoints)
    y_scale = float(np.abs(y).max()) or 1.0
    span = n - 1.0
    ys = y / y_scale
    ts = np.arange(n) / span
    ss = cps / span

    if np.unique(y).size < 2:
        return TrendCastFit(0.0, cps, np.zeros(len(cps)), float(y[0]), 0.0, 0.0, n, origin)

    X = np.column_stack([np.ones(n), ts, np.maximum(ts[:, None] - ss, 0.0)])
    beta = np.linalg.lstsq(X, ys, rcond=None)[0]
    eps = 1e-12
    prev = math.inf
    for _ in range(cfg.max_iter):
        resid = ys - X @ beta
        s2 = float(resid @ resid) / n + cfg.sigma_floor**2
        obj = 0.5 * n * math.log(s2) + np.abs(beta[2:]).sum() / cfg.prior_scale
        if prev - obj <= 1e-12 * max(1.0, abs(obj)):
            break
        prev = obj
        lam = 2.0 * s2 / cfg.prior_scale
        pen = np.zeros(X.shape[1])
        pen[2:] = lam / (2.0 * np.maximum(np.abs(beta[2:]), eps))
        beta = np.linalg.solve(X.T @ X + np.diag(pen), X.T @ ys)
    deltas = beta[2:].copy()
    deltas[np.abs(deltas) < 1e-8] = 0.0
    resid = ys - X @ np.concatenate([beta[:2], deltas])
    sigma = math.sqrt(float(resid @ resid) / n) * y_scale
    to_week = y_scale / span
    d = deltas * to_week
    return TrendCastFit(
        float(beta[1] * to_week), cps, d, float(beta[0] * y_scale), sigma,
        float(np.abs(d).mean()) if d.size else 0.0, n, origin,
    )


def forecast_trendcast(fit: TrendCastFit, H: int, alphas=WIS_ALPHAS, seed=0, n_paths: int = 1000) -> ForecastDistribution:
    """Simulated trend paths with new changepoints, plus observation noise."""
    if n_paths < 1000:
        raise ParameterError("need at least 1000 simulated paths")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    last = fit.n - 1.0
    t = last + np.arange(1, H + 1, dtype=float)
    base = fit.trend(t)
    # future changepoints: same rate per week as the candidate grid inside the window
    rate = len(fit.changepoints) / last if last > 0 else 0.0
    counts = rng.poisson(rate * H, n_paths) if fit.cp_scale > 0 else np.zeros(n_paths, int)
    m = int(counts.max()) if n_paths else 0
    paths = np.tile(base, (n_paths, 1))
    if m:
        when = rng.uniform(last, last + H, (n_paths, m))
        size = rng.laplace(0.0, fit.cp_scale, (n_paths, m))
        size[np.arange(m)[None, :] >= counts[:, None]] = 0.0
        paths += np.einsum("sk,skh->sh", size, np.maximum(t[None, None, :] - when[..., None], 0.0))
    if fit.sigma > 0:
        paths += rng.normal(0.0, fit.sigma, paths.shape)
    return from_samples(fit.origin, paths, alphas, H)
