"""The n-sub-epidemic model: integration, threshold candidates, fitting and ranking."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .errors import AICcUndefinedError, FitFailureError, NumericalBlowupError, ParameterError
from .timeseries import CalibrationWindow, centered_mean

DEFAULT_STEPS_PER_WEEK = 8


@dataclass(frozen=True)
class SubEpidemicParams:
    """Parameters of an n-sub-epidemic trajectory.

    ``r``, ``p`` and ``K0`` hold one entry per sub-epidemic. ``c_thr`` is the
    level of sub-epidemic i-1 that switches sub-epidemic i on; it is ignored
    (and may be None) when n == 1.
    """

    r: tuple[float, ...]
    p: tuple[float, ...]
    K0: tuple[float, ...]
    I0: float
    c_thr: float | None = None

    def __post_init__(self):
        r, p, K0 = (tuple(float(v) for v in x) for x in (self.r, self.p, self.K0))
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "K0", K0)
        if not (len(r) == len(p) == len(K0)) or len(r) < 1:
            raise ParameterError("r, p and K0 must have the same non-zero length")
        if any(v <= 0 for v in r) or any(not 0 <= v <= 1 for v in p) or any(v <= 0 for v in K0):
            raise ParameterError(f"parameters out of range: r={r} p={p} K0={K0}")
        if self.I0 < 0:
            raise ParameterError("I0 must be non-negative")
        if len(r) >= 2 and (self.c_thr is None or self.c_thr <= 0):
            raise ParameterError("c_thr must be positive when n >= 2")

    @property
    def n(self) -> int:
        return len(self.r)

    @property
    def m(self) -> int:
        return 3 * self.n + 1

    @property
    def threshold(self) -> float:
        return self.c_thr if self.c_thr is not None else math.inf


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray  # whole weeks 0..T
    C: np.ndarray  # shape (n, T + 1)
    C_tot: np.ndarray
    y_fit: np.ndarray


@dataclass(frozen=True)
class SubEpidemicFit:
    params: SubEpidemicParams
    sse: float
    aicc: float
    m: int
    n_d: int
    rank: int | None = None
    candidate: int = 0  # 0 for n=1, k for the n=2 fit on the k-th threshold

    @property
    def n(self) -> int:
        return self.params.n


@dataclass(frozen=True)
class FitConfig:
    starts: int = 30
    steps_per_week: int = DEFAULT_STEPS_PER_WEEK
    smoother_width: int = 3
    n_max: int = 2
    top: int = 3
    max_iter: int = 200


def integrate(params: SubEpidemicParams, horizon: int, steps_per_week: int = DEFAULT_STEPS_PER_WEEK) -> Trajectory:
    """Fixed-step RK4 solution sampled at whole weeks ``0..horizon``."""
    if horizon < 0:
        raise ParameterError("horizon must be non-negative")
    if steps_per_week < 4:
        raise ParameterError("steps_per_week must be at least 4")
    C = np.empty((params.n, horizon + 1))
    ok = _kernels.levels(
        np.asarray(params.r), np.asarray(params.p), np.asarray(params.K0),
        float(params.I0), float(params.threshold), int(horizon), int(steps_per_week), C,
    )
    if not ok:
        raise NumericalBlowupError(f"non-finite state while integrating {params}")
    C_tot = C.sum(axis=0)
    return Trajectory(np.arange(horizon + 1), C, C_tot, C_tot.copy())


def fit_signal(trajectory: Trajectory) -> np.ndarray:
    """Modelled weekly WVAL: the total level at each whole week."""
    return np.array(trajectory.C_tot, dtype=float)


def aicc(sse: float, m: int, n_d: int) -> float:
    """Corrected AIC with a natural-log goodness-of-fit term."""
    if n_d - m - 1 <= 0:
        raise AICcUndefinedError(f"AICc needs n_d > m + 1 (n_d={n_d}, m={m})")
    return n_d * math.log(sse) + 2 * m + 2 * m * (m + 1) / (n_d - m - 1)


def candidate_thresholds(window: CalibrationWindow | Sequence[float], smoother_width: int = 3) -> list[float]:
    """Activation thresholds from a uniform partition of the smoothed cumulative signal."""
    y = np.asarray(getattr(window, "values", window), dtype=float)
    n_d = len(y)
    if n_d < 3:
        raise ParameterError("threshold generation needs at least 3 points")
    smooth = centered_mean(y, min(smoother_width, n_d))
    s_max = float(np.cumsum(smooth)[-1])
    if s_max <= 0:
        return []
    levels = []
    for k in range(1, n_d + 1):
        level = s_max * k / n_d
        if not levels or level != levels[-1]:
            levels.append(level)
    return levels


# -- fitting ------------------------------------------------------------------


def _bounds(n: int, y: np.ndarray, spw: int) -> tuple[np.ndarray, np.ndarray]:
    ymax = float(y.max())
    r_hi = math.log(min(10.0, 2.0 * spw))
    lo = np.concatenate([
        np.full(n, math.log(1e-4)), np.full(n, -12.0), np.full(n, math.log(1e-6 * ymax)), [math.log(1e-8 * ymax)],
    ])
    hi = np.concatenate([
        np.full(n, r_hi), np.full(n, 12.0), np.full(n, math.log(1e4 * ymax)), [math.log(10.0 * ymax)],
    ])
    return lo, hi


def _to_z(params: SubEpidemicParams, floor: float) -> np.ndarray:
    p = np.clip(np.asarray(params.p), 1e-6, 1 - 1e-6)
    i0 = max(params.I0, floor)
    gap = np.maximum(np.asarray(params.K0) - i0, floor)
    return np.concatenate([np.log(params.r), np.log(p / (1 - p)), np.log(gap), [math.log(i0)]])


def _from_z(z: np.ndarray, n: int, c_thr: float | None) -> SubEpidemicParams:
    r, p, K = np.empty(n), np.empty(n), np.empty(n)
    i0 = _kernels.unpack(np.asarray(z, dtype=float), n, r, p, K)
    return SubEpidemicParams(tuple(r), tuple(p), tuple(K), i0, c_thr if n >= 2 else None)


def _draw_start(rng: np.random.Generator, n: int, y: np.ndarray, lo, hi) -> np.ndarray:
    ymax = float(y.max())
    r = np.exp(rng.uniform(math.log(1e-3), math.log(10.0), n))
    p = np.clip(rng.uniform(0.0, 1.0, n), 1e-4, 1 - 1e-4)
    K = np.exp(rng.uniform(math.log(ymax), math.log(1e4 * ymax), n))
    i0 = max(rng.uniform(0.0, y[0] + 0.01 * ymax), 1e-6 * ymax)
    z = np.concatenate([np.log(r), np.log(p / (1 - p)), np.log(np.maximum(K - i0, 1e-6 * ymax)), [math.log(i0)]])
    return np.clip(z, lo, hi)


def _local_fit(z0, n, c_thr, y, spw, max_iter, lo, hi) -> tuple[np.ndarray, float]:
    thr = math.inf if c_thr is None else float(c_thr)
    z, sse, status = _kernels.levenberg_marquardt(z0, n, thr, y, spw, max_iter, lo, hi)
    if status == _kernels.JACOBIAN_FAILURE:
        res = minimize(
            lambda v: _kernels.sse_at(np.clip(v, lo, hi), n, thr, y, spw),
            np.clip(z0, lo, hi), method="Nelder-Mead", options={"maxiter": 400 * len(z0), "xatol": 1e-8, "fatol": 1e-12},
        )
        z, sse = np.clip(res.x, lo, hi), float(res.fun)
    return z, float(sse)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _check_window(y: np.ndarray, n: int) -> None:
    m = 3 * n + 1
    if len(y) - m - 1 <= 0:
        raise AICcUndefinedError(f"{len(y)} points cannot support a {n}-sub-epidemic fit (m={m})")
    if not np.any(y > 0):
        raise FitFailureError("all-zero window has no growth to fit")


def fit_nls(
    window: CalibrationWindow | Sequence[float],
    n: int = 1,
    c_thr: float | None = None,
    starts: int = 30,
    seed=0,
    *,
    steps_per_week: int = DEFAULT_STEPS_PER_WEEK,
    max_iter: int = 200,
    warm_start: SubEpidemicParams | None = None,
    candidate: int = 0,
) -> SubEpidemicFit:
    """Multistart least-squares fit of an n-sub-epidemic model with fixed ``c_thr``.

    When ``warm_start`` is given it is used as the first start and only
    ``starts - 1`` random starts follow.
    """
    y = np.asarray(getattr(window, "values", window), dtype=float)
    if starts < 1:
        raise ParameterError("starts must be at least 1")
    if n >= 2 and (c_thr is None or c_thr <= 0):
        raise ParameterError("n >= 2 needs a positive threshold")
    _check_window(y, n)
    lo, hi = _bounds(n, y, steps_per_week)
    rng = _rng(seed)

    inits = []
    if warm_start is not None:
        inits.append(np.clip(_to_z(warm_start, 1e-8 * float(y.max())), lo, hi))
    while len(inits) < starts:
        inits.append(_draw_start(rng, n, y, lo, hi))

    best_z, best_sse = None, math.inf
    for z0 in inits:
        z, sse = _local_fit(z0, n, c_thr, y, steps_per_week, max_iter, lo, hi)
        if math.isfinite(sse) and sse < best_sse:
            best_z, best_sse = z, sse
    if best_z is None:
        raise FitFailureError(f"no start converged for n={n}, c_thr={c_thr}")
    m = 3 * n + 1
    score = aicc(max(best_sse, np.finfo(float).tiny), m, len(y))
    return SubEpidemicFit(_from_z(best_z, n, c_thr), best_sse, score, m, len(y), candidate=candidate)


def rank_candidates(window: CalibrationWindow, config: FitConfig = FitConfig(), seed: int = 0) -> list[SubEpidemicFit]:
    """Fit n=1 plus one n>=2 model per threshold and return the best ``config.top`` by AICc."""
    y = np.asarray(window.values, dtype=float)
    jobs: list[tuple[int, float | None]] = [(1, None)]
    if len(y) >= 3:
        for n in range(2, config.n_max + 1):
            jobs.extend((n, thr) for thr in candidate_thresholds(y, config.smoother_width))

    fits = []
    for idx, (n, thr) in enumerate(jobs):
        try:
            fit = fit_nls(
                y, n, thr, config.starts, np.random.default_rng([seed, idx]),
                steps_per_week=config.steps_per_week, max_iter=config.max_iter, candidate=idx,
            )
        except (FitFailureError, AICcUndefinedError):
            continue
        fits.append(fit)
    if not fits:
        raise FitFailureError(f"no candidate model could be fitted at origin {getattr(window, 'origin', '?')}")
    fits.sort(key=lambda f: (f.aicc, f.candidate))
    return [replace(f, rank=i + 1) for i, f in enumerate(fits[: config.top])]


def fitted_curve(fit: SubEpidemicFit, n_weeks: int, steps_per_week: int = DEFAULT_STEPS_PER_WEEK) -> np.ndarray:
    """Modelled weekly signal at weeks ``0..n_weeks - 1``."""
    return fit_signal(integrate(fit.params, n_weeks - 1, steps_per_week))
