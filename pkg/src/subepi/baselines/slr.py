"""Ordinary least-squares line through the calibration window."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateDesignError, ParameterError
from ..forecast import WIS_ALPHAS, ForecastDistribution, from_gaussian
from ..timeseries import CalibrationWindow, EpiWeek


@dataclass(frozen=True)
class SlrFit:
    beta0: float
    beta1: float
    sigma: float
    n: int
    t_mean: float
    sxx: float
    origin: EpiWeek | None = None

    def predict(self, t) -> np.ndarray:
        return self.beta0 + self.beta1 * np.asarray(t, dtype=float)


def fit_slr(window: CalibrationWindow) -> SlrFit:
    """Time runs 0..n-1 across the window, so the origin sits at t = n - 1."""
    y = np.asarray(window.values, dtype=float)
    n = len(y)
    if n < 3:
        raise ParameterError("SLR needs at least 3 points")
    t = np.arange(n, dtype=float)
    t_mean = t.mean()
    sxx = float(((t - t_mean) ** 2).sum())
    if sxx == 0:
        raise DegenerateDesignError("constant time axis")
    beta1 = float(((t - t_mean) * (y - y.mean())).sum() / sxx)
    beta0 = float(y.mean() - beta1 * t_mean)
    resid = y - (beta0 + beta1 * t)
    sigma = math.sqrt(float(resid @ resid) / (n - 2))
    return SlrFit(beta0, beta1, sigma, n, float(t_mean), sxx, getattr(window, "origin", None))


def forecast_slr(fit: SlrFit, H: int, alphas=WIS_ALPHAS) -> ForecastDistribution:
    t = fit.n - 1 + np.arange(1, H + 1, dtype=float)
    mean = fit.predict(t)
    sd = fit.sigma * np.sqrt(1.0 + 1.0 / fit.n + (t - fit.t_mean) ** 2 / fit.sxx)
    return from_gaussian(fit.origin, mean, sd, alphas)
