"""Weighted and unweighted ensembles of the top-ranked sub-epidemic fits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AlignmentError, ParameterError
from .forecast import ForecastDistribution, from_samples
from .subepidemic import SubEpidemicFit


@dataclass(frozen=True)
class EnsembleSpec:
    k: int
    weighting: str = "akaike"  # or "uniform"

    def __post_init__(self):
        if self.k < 2:
            raise ParameterError("an ensemble needs k >= 2")
        if self.weighting not in ("akaike", "uniform"):
            raise ParameterError(f"unknown weighting {self.weighting!r}")

    @property
    def name(self) -> str:
        return f"EM{self.k}{'W' if self.weighting == 'akaike' else 'UW'}"


def akaike_weights(aiccs: Sequence[float]) -> np.ndarray:
    a = np.asarray(aiccs, dtype=float)
    if a.size == 0 or not np.all(np.isfinite(a)):
        raise ParameterError("Akaike weights need finite AICc values")
    rel = np.exp(-(a - a.min()) / 2.0)
    return rel / rel.sum()


def ensemble_weights(spec: EnsembleSpec, fits: Sequence[SubEpidemicFit]) -> np.ndarray:
    """Weights over the first ``min(spec.k, len(fits))`` ranked fits."""
    members = list(fits)[: spec.k]
    if not members:
        raise ParameterError("no fits to combine")
    if spec.weighting == "uniform":
        return np.full(len(members), 1.0 / len(members))
    return akaike_weights([f.aicc for f in members])


def _allocate(weights: np.ndarray, total: int) -> np.ndarray:
    # largest-remainder rounding of weights * total
    raw = weights * total
    counts = np.floor(raw).astype(int)
    short = total - counts.sum()
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def combine(forecasts: Sequence[ForecastDistribution], weights: Sequence[float], seed=0,
            n_mix: int | None = None) -> ForecastDistribution:
    """Sample-level mixture of member forecasts.

    Member ``i`` contributes ``round(w_i * n_mix)`` whole sample paths, taken
    systematically from its sample set with a random offset, so the mixture's
    empirical CDF tracks ``sum_i w_i F_i`` without multinomial noise. Rows are
    shuffled afterwards.
    """
    forecasts = list(forecasts)
    w = np.asarray(weights, dtype=float)
    if not forecasts or len(forecasts) != len(w):
        raise AlignmentError("need one weight per member forecast")
    if np.any(w < 0) or not np.isclose(w.sum(), 1.0, rtol=0, atol=1e-9):
        raise ParameterError("weights must be non-negative and sum to 1")
    first = forecasts[0]
    for f in forecasts[1:]:
        if f.origin != first.origin or f.horizons != first.horizons:
            raise AlignmentError("ensemble members disagree on origin or horizons")
    if any(f.samples is None for f in forecasts):
        raise AlignmentError("ensemble members must carry samples")
    if n_mix is None:
        n_mix = 10 * max(len(f.samples) for f in forecasts)

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    counts = _allocate(w / w.sum(), n_mix)
    parts = []
    for f, c in zip(forecasts, counts):
        if c == 0:
            continue
        size = len(f.samples)
        offset = rng.uniform()
        rows = np.floor((np.arange(c) + offset) * size / c).astype(int)
        parts.append(f.samples[rows])
    mixed = np.concatenate(parts, axis=0)
    mixed = mixed[rng.permutation(len(mixed))]
    return from_samples(first.origin, mixed, first.alphas, first.horizons)
