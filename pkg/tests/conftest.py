import datetime as dt

import numpy as np
import pytest

from subepi.timeseries import CalibrationWindow, EpiWeek, WvalSeries

ORIGIN = EpiWeek.ending(dt.date(2024, 9, 7))


def window(values, origin=ORIGIN):
    return CalibrationWindow(origin, np.asarray(values, dtype=float))


def series(values, region="National", first=dt.date(2022, 1, 1)):
    return WvalSeries.from_values(region, EpiWeek.ending(first), values)


@pytest.fixture
def origin():
    return ORIGIN


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
