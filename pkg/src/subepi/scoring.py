"""Point and interval forecast scores, plus skill relative to the SLR baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import AlignmentError, CoverageSetError, EmptyInputError, IntervalError, ParameterError, UndefinedSkillError
from .forecast import WIS_ALPHAS, ForecastDistribution, _key
from .timeseries import EpiWeek


@dataclass(frozen=True)
class QuantileForecast:
    """Median plus ``(alpha, lower, upper)`` central intervals for a single target."""

    median: float
    intervals: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "intervals", tuple(sorted((_key(a), float(l), float(u)) for a, l, u in self.intervals)))
        tol = 1e-9 * max(1.0, abs(self.median))
        prev = None
        for a, l, u in self.intervals:
            if l > u:
                raise IntervalError(f"lower bound {l} above upper bound {u} at alpha={a}")
            if l > self.median + tol or u < self.median - tol:
                raise IntervalError(f"median {self.median} outside the alpha={a} interval")
            if prev is not None and (l < prev[0] - tol or u > prev[1] + tol):
                raise IntervalError("intervals are not nested across alpha")
            prev = (l, u)

    def bounds(self, alpha: float) -> tuple[float, float]:
        k = _key(alpha)
        for a, l, u in self.intervals:
            if a == k:
                return l, u
        raise CoverageSetError(f"no interval for alpha={alpha}")

    @classmethod
    def from_distribution(cls, fd: ForecastDistribution, h: int) -> "QuantileForecast":
        m, iv = fd.at(h)
        return cls(m, tuple((a, l, u) for a, (l, u) in iv.items()))


@dataclass(frozen=True)
class ScoreRecord:
    model: str
    region: str
    origin: EpiWeek
    horizon: int
    mae: float
    mse: float
    wis: float
    covered95: int


def _pair(observed, predicted) -> tuple[np.ndarray, np.ndarray]:
    y = np.atleast_1d(np.asarray(observed, dtype=float))
    yh = np.atleast_1d(np.asarray(predicted, dtype=float))
    if y.shape != yh.shape:
        raise AlignmentError(f"length mismatch: {y.shape} vs {yh.shape}")
    if y.size == 0:
        raise EmptyInputError("need at least one observation")
    return y, yh


def mae(observed, predicted) -> float:
    y, yh = _pair(observed, predicted)
    return float(np.mean(np.abs(y - yh)))


def mse(observed, predicted) -> float:
    y, yh = _pair(observed, predicted)
    return float(np.mean((y - yh) ** 2))


def interval_score(l: float, u: float, alpha: float, y: float) -> float:
    if not 0 < alpha < 1:
        raise ParameterError("alpha must lie in (0, 1)")
    if l > u:
        raise IntervalError(f"lower bound {l} above upper bound {u}")
    s = u - l
    if y < l:
        s += 2.0 / alpha * (l - y)
    elif y > u:
        s += 2.0 / alpha * (y - u)
    return float(s)


def wis(forecast: QuantileForecast, y: float, alphas: Sequence[float] = WIS_ALPHAS) -> float:
    """Weighted interval score, weights 1/2 on the median and alpha/2 on each interval."""
    total = 0.5 * abs(y - forecast.median)
    for a in alphas:
        l, u = forecast.bounds(a)
        total += a / 2.0 * interval_score(l, u, a, y)
    return float(total / (len(alphas) + 0.5))


def coverage95(records: Iterable[tuple[float, float, float]]) -> float:
    """Share of ``(l, u, y)`` triples with ``l < y < u`` strictly."""
    arr = np.asarray(list(records), dtype=float)
    if arr.size == 0:
        raise EmptyInputError("coverage of an empty record set")
    arr = arr.reshape(-1, 3)
    return float(np.mean((arr[:, 0] < arr[:, 2]) & (arr[:, 2] < arr[:, 1])))


def skill_score(metric_mean_model: float, metric_mean_slr: float) -> float:
    if not metric_mean_slr > 0:
        raise UndefinedSkillError(f"baseline mean {metric_mean_slr} must be positive")
    return float(1.0 - metric_mean_model / metric_mean_slr)


def score_forecast(fd: ForecastDistribution, observed: dict[int, float], model: str, region: str,
                   alphas: Sequence[float] = WIS_ALPHAS) -> list[ScoreRecord]:
    """One record per horizon present in ``observed`` (horizon -> value)."""
    out = []
    for h in fd.horizons:
        if h not in observed:
            continue
        y = float(observed[h])
        q = QuantileForecast.from_distribution(fd, h)
        l95, u95 = q.bounds(0.05)
        e = y - q.median
        out.append(ScoreRecord(model, region, fd.origin, h, abs(e), e * e, wis(q, y, alphas), int(l95 < y < u95)))
    return out
