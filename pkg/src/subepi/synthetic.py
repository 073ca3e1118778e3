"""Synthetic WVAL data built from overlapping sub-epidemic waves."""

from __future__ import annotations

import datetime as dt

import numpy as np

from .subepidemic import SubEpidemicParams, fit_signal, integrate
from .timeseries import REGION_NAMES, WvalSeries, epiweek_range


def noisy_curve(params: SubEpidemicParams, n_weeks: int, sigma: float, seed=0, steps_per_week: int = 8) -> np.ndarray:
    """Model signal at weeks ``0..n_weeks - 1`` plus Normal(0, sigma^2) noise, clamped at zero."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    y = fit_signal(integrate(params, n_weeks - 1, steps_per_week))
    return np.maximum(y + rng.normal(0.0, sigma, n_weeks), 0.0) if sigma > 0 else y


def wave_series(n_weeks: int, rng: np.random.Generator, baseline: float = 1.0, noise: float = 0.08) -> np.ndarray:
    """Weekly level made of successive generalized-logistic waves.

    Each wave contributes its weekly incidence (the increment of its cumulative
    curve); waves start every 18 to 34 weeks. Noise is multiplicative lognormal.
    """
    level = np.full(n_weeks, baseline)
    start = int(rng.integers(-10, 6))
    while start < n_weeks:
        r = rng.uniform(0.5, 1.2)
        p = rng.uniform(0.75, 1.0)
        K = rng.uniform(25.0, 90.0)
        span = n_weeks - max(start, 0) + 1
        offset = max(-start, 0)
        cum = fit_signal(integrate(SubEpidemicParams((r,), (p,), (K,), 1.0), offset + span, 8))
        inc = np.diff(cum)[offset:]
        lo = max(start, 0)
        level[lo:] += inc[: n_weeks - lo]
        start += int(rng.integers(18, 35))
    return level * np.exp(rng.normal(0.0, noise, n_weeks))


def simulate_regions(start: dt.date, end: dt.date, seed: int = 0, regions=REGION_NAMES) -> dict[str, WvalSeries]:
    weeks = epiweek_range(start, end)
    out = {}
    for k, region in enumerate(regions):
        rng = np.random.default_rng([seed, k])
        out[region] = WvalSeries(region, tuple(weeks), wave_series(len(weeks), rng))
    return out

