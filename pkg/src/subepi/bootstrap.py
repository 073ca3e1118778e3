"""Parametric bootstrap around a fitted sub-epidemic model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BootstrapFailureError, DegreesOfFreedomError, FitFailureError, ParameterError
from .forecast import WIS_ALPHAS, ForecastDistribution, _horizons, from_samples
from .subepidemic import DEFAULT_STEPS_PER_WEEK, SubEpidemicFit, fit_nls, fit_signal, integrate
from .timeseries import CalibrationWindow


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 300
    refit_starts: int = 1
    seed: int = 0
    alphas: tuple[float, ...] = WIS_ALPHAS
    steps_per_week: int = DEFAULT_STEPS_PER_WEEK
    max_iter: int = 200

    def __post_init__(self):
        if self.B < 1 or self.refit_starts < 1:
            raise ParameterError("B and refit_starts must be at least 1")


def residual_sigma(fit: SubEpidemicFit, window: CalibrationWindow | None = None) -> float:
    """Residual standard deviation ``sqrt(SSE / (n_d - m))``."""
    n_d = fit.n_d if window is None else len(window)
    if n_d <= fit.m:
        raise DegreesOfFreedomError(f"n_d={n_d} leaves no residual degrees of freedom for m={fit.m}")
    return math.sqrt(fit.sse / (n_d - fit.m))


def simulate_dataset(fit: SubEpidemicFit, window: CalibrationWindow, sigma: float, seed=0,
                     steps_per_week: int = DEFAULT_STEPS_PER_WEEK) -> CalibrationWindow:
    """Fitted curve plus i.i.d. Normal(0, sigma^2) noise, clamped at zero."""
    if sigma < 0:
        raise ParameterError("sigma must be non-negative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    curve = fit_signal(integrate(fit.params, len(window) - 1, steps_per_week))
    noisy = np.maximum(curve + rng.normal(0.0, sigma, len(curve)), 0.0) if sigma > 0 else curve
    return CalibrationWindow(window.origin, noisy)


def bootstrap_forecast(fit: SubEpidemicFit, window: CalibrationWindow, horizons, cfg: BootstrapConfig = BootstrapConfig()
                       ) -> ForecastDistribution:
    """Forecast distribution from B refits of the same model structure.

    Each realization draws its own generator from ``(cfg.seed, b)``, refits on
    a synthetic dataset (warm-started at the original estimate), projects
    forward and adds one observation-noise draw per horizon. Failed refits are
    dropped; more than half failing is an error.
    """
    hz = _horizons(horizons)
    H = max(hz)
    n_d = len(window)
    sigma = residual_sigma(fit, window)
    steps = cfg.steps_per_week
    idx = np.array([n_d - 1 + h for h in hz])

    rows = []
    failures = 0
    for b in range(cfg.B):
        rng = np.random.default_rng([cfg.seed, b])
        if sigma == 0.0:
            params = fit.params
        else:
            synthetic = simulate_dataset(fit, window, sigma, rng, steps)
            try:
                params = fit_nls(
                    synthetic.values, fit.n, fit.params.c_thr, cfg.refit_starts, rng,
                    steps_per_week=steps, max_iter=cfg.max_iter, warm_start=fit.params,
                ).params
            except FitFailureError:
                failures += 1
                continue
        path = fit_signal(integrate(params, n_d - 1 + H, steps))[idx]
        if sigma > 0:
            path = path + rng.normal(0.0, sigma, len(hz))
        rows.append(path)
    if failures > cfg.B / 2:
        raise BootstrapFailureError(f"{failures} of {cfg.B} bootstrap refits failed")
    return from_samples(window.origin, np.array(rows), cfg.alphas, hz)
