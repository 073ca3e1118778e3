"""Epiweek calendar, weekly WVAL series and calibration windows."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, EpiweekRangeError, InsufficientDataError, ParameterError, ValidationError

WEEK = dt.timedelta(days=7)
# date.weekday(): Monday=0 ... Saturday=5
WEEK_END_WEEKDAY = 5


@dataclass(frozen=True, order=True)
class EpiWeek:
    """A seven-day reporting week identified by the date of its last day.

    Weeks end on Saturday. ``week`` follows the MMWR numbering rule: week 1 of
    a year is the first week holding at least four days of that year, so the
    (year, week) label is the calendar year of the week's Wednesday.
    """

    year: int
    week: int
    end_date: dt.date = field(compare=False)

    @classmethod
    def ending(cls, end_date: dt.date) -> "EpiWeek":
        if end_date.weekday() != WEEK_END_WEEKDAY:
            raise DomainError(f"{end_date.isoformat()} is not a week-ending Saturday")
        wednesday = end_date - dt.timedelta(days=3)
        week = (wednesday.timetuple().tm_yday - 1) // 7 + 1
        return cls(wednesday.year, week, end_date)

    @classmethod
    def containing(cls, day: dt.date) -> "EpiWeek":
        offset = (WEEK_END_WEEKDAY - day.weekday()) % 7
        return cls.ending(day + dt.timedelta(days=offset))

    @property
    def start_date(self) -> dt.date:
        return self.end_date - dt.timedelta(days=6)

    def shift(self, weeks: int) -> "EpiWeek":
        return EpiWeek.ending(self.end_date + weeks * WEEK)

    def weeks_since(self, other: "EpiWeek") -> int:
        return (self.end_date - other.end_date).days // 7

    def __str__(self):
        return f"{self.year}-W{self.week:02d}"


def epiweek_range(start: dt.date, end: dt.date) -> list[EpiWeek]:
    """All epiweeks whose end date falls in ``[start, end]``, in order."""
    if start > end:
        raise EpiweekRangeError(f"start {start} is after end {end}")
    first = EpiWeek.containing(start)
    out = []
    current = first
    while current.end_date <= end:
        out.append(current)
        current = current.shift(1)
    return out


def wval_from_sd(x: float) -> float:
    """Wastewater viral activity level from standard deviations above baseline."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"standard-deviation value must be finite, got {x}")
    return math.exp(x)


@dataclass(frozen=True)
class Region:
    name: str
    member_states: tuple[str, ...]


_MEMBERS = {
    "West": ("AK", "AZ", "CA", "CO", "GU", "HI", "ID", "MT", "NV", "NM", "OR", "UT", "WA", "WY"),
    "Midwest": ("IL", "IN", "IA", "KS", "MI", "MN", "MO", "NE", "ND", "OH", "SD", "WI"),
    "Northeast": ("CT", "ME", "MA", "NH", "NJ", "NY", "PA", "PR", "RI", "VT"),
    "South": (
        "AR", "AL", "DE", "DC", "FL", "GA", "KY", "LA", "MD",
        "MS", "NC", "OK", "SC", "TN", "TX", "VA", "WV",
    ),
}
_MEMBERS["National"] = tuple(sorted(s for members in _MEMBERS.values() for s in members))

REGIONS: dict[str, Region] = {
    name: Region(name, _MEMBERS[name]) for name in ("National", "Midwest", "Northeast", "South", "West")
}
REGION_NAMES = tuple(REGIONS)


def canonical_region(name: str) -> str:
    for known in REGION_NAMES:
        if known.lower() == name.strip().lower():
            return known
    raise ValidationError(f"unknown region {name!r}; expected one of {', '.join(REGION_NAMES)}")


@dataclass(frozen=True)
class WvalSeries:
    """Contiguous weekly WVAL observations for a single region."""

    region: str
    weeks: tuple[EpiWeek, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        weeks = tuple(self.weeks)
        if len(weeks) != len(values):
            raise ValidationError("weeks and values differ in length")
        if len(weeks) == 0:
            raise ValidationError(f"series for {self.region} is empty")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValidationError(f"series for {self.region} has negative or non-finite values")
        for a, b in zip(weeks, weeks[1:]):
            if b.weeks_since(a) != 1:
                raise ValidationError(f"series for {self.region} is not contiguous between {a.end_date} and {b.end_date}")
        values.setflags(write=False)
        object.__setattr__(self, "weeks", weeks)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, region: str, first: EpiWeek, values: Iterable[float]) -> "WvalSeries":
        values = list(values)
        return cls(region, tuple(first.shift(k) for k in range(len(values))), np.asarray(values, dtype=float))

    def __len__(self):
        return len(self.weeks)

    @property
    def points(self) -> list[tuple[EpiWeek, float]]:
        return list(zip(self.weeks, self.values.tolist()))

    @property
    def start(self) -> EpiWeek:
        return self.weeks[0]

    @property
    def end(self) -> EpiWeek:
        return self.weeks[-1]

    def index_of(self, week: EpiWeek) -> int:
        k = week.weeks_since(self.start)
        if not 0 <= k < len(self):
            raise KeyError(f"{week.end_date} outside series for {self.region}")
        return k

    def value_at(self, week: EpiWeek) -> float | None:
        k = week.weeks_since(self.start)
        if 0 <= k < len(self):
            return float(self.values[k])
        return None

    def truncate(self, through: EpiWeek) -> "WvalSeries":
        k = self.index_of(through)
        return WvalSeries(self.region, self.weeks[: k + 1], self.values[: k + 1])


@dataclass(frozen=True)
class CalibrationWindow:
    origin: EpiWeek
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def w(self) -> int:
        return len(self.values)

    @property
    def weeks(self) -> list[EpiWeek]:
        return [self.origin.shift(k - self.w + 1) for k in range(self.w)]

    def __len__(self):
        return len(self.values)


def centered_mean(values: Sequence[float], width: int) -> np.ndarray:
    """Centered moving average whose window shrinks at both ends."""
    y = np.asarray(values, dtype=float)
    n = len(y)
    if width < 1 or width > n:
        raise ParameterError(f"window {width} must lie in [1, {n}]")
    left = (width - 1) // 2
    right = width // 2
    csum = np.concatenate(([0.0], np.cumsum(y)))
    idx = np.arange(n)
    lo = np.maximum(idx - left, 0)
    hi = np.minimum(idx + right, n - 1) + 1
    out = (csum[hi] - csum[lo]) / (hi - lo)
    # cumulative sums can drift by an ulp; keep the result inside the input range
    return np.clip(out, y.min(), y.max())


def moving_average(series: WvalSeries, window: int) -> WvalSeries:
    return WvalSeries(series.region, series.weeks, centered_mean(series.values, window))


def slice_window(series: WvalSeries, origin: EpiWeek, w: int) -> CalibrationWindow:
    """The ``w`` observations ending at ``origin``."""
    if w < 1:
        raise ParameterError("window length must be positive")
    k = origin.weeks_since(series.start)
    if k >= len(series) or k < 0:
        raise InsufficientDataError(f"origin {origin.end_date} is outside the series for {series.region}", deficit=w)
    if k + 1 < w:
        deficit = w - (k + 1)
        raise InsufficientDataError(
            f"{series.region}: {k + 1} weeks available up to {origin.end_date}, need {w}", deficit=deficit
        )
    return CalibrationWindow(origin, series.values[k + 1 - w : k + 1])
