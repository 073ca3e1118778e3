"""Probabilistic forecast container shared by every model."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .timeseries import EpiWeek

# Central-interval alphas used for WIS; alpha=0.05 doubles as the 95% PI.
WIS_ALPHAS: tuple[float, ...] = (0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass(frozen=True)
class ForecastDistribution:
    """Per-horizon median and central prediction intervals.

    ``intervals`` maps each alpha to ``(lower, upper)`` arrays of the
    ``(1 - alpha)`` central interval, one entry per horizon. ``samples`` (shape
    ``(S, H)``) is kept for sample-based forecasts so ensembles can mix them.
    """

    origin: EpiWeek
    horizons: tuple[int, ...]
    median: np.ndarray
    intervals: dict[float, tuple[np.ndarray, np.ndarray]]
    samples: np.ndarray | None = field(default=None, repr=False)
    n_effective: int | None = None

    @property
    def alphas(self) -> tuple[float, ...]:
        return tuple(sorted(self.intervals))

    def interval(self, alpha: float) -> tuple[np.ndarray, np.ndarray]:
        return self.intervals[_key(alpha)]

    def target(self, h: int) -> EpiWeek:
        return self.origin.shift(h)

    def at(self, h: int) -> tuple[float, dict[float, tuple[float, float]]]:
        """Median and ``{alpha: (lower, upper)}`` for horizon ``h``."""
        k = self.horizons.index(h)
        return float(self.median[k]), {a: (float(lo[k]), float(hi[k])) for a, (lo, hi) in self.intervals.items()}

    def without_samples(self) -> "ForecastDistribution":
        return ForecastDistribution(self.origin, self.horizons, self.median, self.intervals, None, self.n_effective)


def _key(alpha: float) -> float:
    return round(float(alpha), 10)


def _horizons(horizons) -> tuple[int, ...]:
    if isinstance(horizons, int):
        return tuple(range(1, horizons + 1))
    return tuple(int(h) for h in horizons)


def from_samples(origin: EpiWeek, samples: np.ndarray, alphas: Sequence[float] = WIS_ALPHAS, horizons=None) -> ForecastDistribution:
    """Empirical quantiles (linear interpolation between order statistics) of clamped samples."""
    samples = np.maximum(np.asarray(samples, dtype=float), 0.0)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("samples must be a non-empty (S, H) array")
    hz = _horizons(samples.shape[1] if horizons is None else horizons)
    median = np.quantile(samples, 0.5, axis=0)
    intervals = {}
    for a in alphas:
        lo, hi = np.quantile(samples, [a / 2, 1 - a / 2], axis=0)
        intervals[_key(a)] = (lo, hi)
    return ForecastDistribution(origin, hz, median, intervals, samples, samples.shape[0])


def from_gaussian(origin: EpiWeek, mean, sd, alphas: Sequence[float] = WIS_ALPHAS) -> ForecastDistribution:
    """Normal predictive distribution per horizon, clamped at zero after the intervals are built."""
    mean = np.asarray(mean, dtype=float)
    sd = np.maximum(np.asarray(sd, dtype=float), 0.0)
    intervals = {}
    for a in alphas:
        z = norm.ppf(1 - a / 2)
        intervals[_key(a)] = (np.maximum(mean - z * sd, 0.0), np.maximum(mean + z * sd, 0.0))
    return ForecastDistribution(origin, _horizons(len(mean)), np.maximum(mean, 0.0), intervals)
