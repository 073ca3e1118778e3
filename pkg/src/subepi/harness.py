"""Rolling-origin backtest: slice, fit every model, forecast, score, aggregate."""

from __future__ import annotations

import math
import os
import zlib
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .baselines import (
    TrendCastConfig, fit_arima, fit_gam, fit_slr, fit_trendcast,
    forecast_arima, forecast_gam, forecast_slr, forecast_trendcast,
)
from .bootstrap import BootstrapConfig, bootstrap_forecast
from .ensembles import EnsembleSpec, combine, ensemble_weights
from .errors import BaselineMissingError, EmptyInputError, ParameterError, SubepiError
from .forecast import ForecastDistribution
from .scoring import ScoreRecord, score_forecast, skill_score
from .subepidemic import FitConfig, rank_candidates
from .timeseries import EpiWeek, WvalSeries, slice_window

RANKED = ("Rank1", "Rank2", "Rank3")
ENSEMBLES = {
    "EM2W": EnsembleSpec(2, "akaike"), "EM2UW": EnsembleSpec(2, "uniform"),
    "EM3W": EnsembleSpec(3, "akaike"), "EM3UW": EnsembleSpec(3, "uniform"),
}
BASELINES = ("ARIMA", "GAM", "SLR", "TrendCast")
ALL_MODELS = RANKED + tuple(ENSEMBLES) + BASELINES
ALIASES = {"prophet": "TrendCast"}
METRICS = ("mae", "mse", "wis")


def canonical_model(name: str) -> str:
    key = name.strip()
    if key.lower() in ALIASES:
        return ALIASES[key.lower()]
    for m in ALL_MODELS:
        if m.lower() == key.lower():
            return m
    raise ParameterError(f"unknown model {name!r}; expected one of {', '.join(ALL_MODELS)}")


@dataclass(frozen=True)
class HarnessConfig:
    origin_start: EpiWeek
    origin_end: EpiWeek
    window_len: int = 10
    horizons: tuple[int, ...] = (1, 2, 3, 4)
    bootstrap: BootstrapConfig = BootstrapConfig()
    multistarts: int = 30
    models: tuple[str, ...] = ALL_MODELS
    master_seed: int = 0
    steps_per_week: int = 8
    workers: int | None = None  # None: SUBEPI_THREADS or the CPU count

    def __post_init__(self):
        if self.window_len < 5:
            raise ParameterError("window_len must be at least 5")
        hz = tuple(int(h) for h in self.horizons)
        if not hz or hz != tuple(range(1, len(hz) + 1)):
            raise ParameterError("horizons must be 1..H")
        if self.origin_start > self.origin_end:
            raise ParameterError("origin_start is after origin_end")
        if self.multistarts < 1:
            raise ParameterError("multistarts must be at least 1")
        models = tuple(dict.fromkeys(canonical_model(m) for m in self.models))
        if not models:
            raise ParameterError("no models enabled")
        object.__setattr__(self, "horizons", hz)
        object.__setattr__(self, "models", models)

    @property
    def origins(self) -> list[EpiWeek]:
        return [self.origin_start.shift(k) for k in range(self.origin_end.weeks_since(self.origin_start) + 1)]


@dataclass(frozen=True)
class Failure:
    model: str
    region: str
    origin: EpiWeek
    reason: str


@dataclass(frozen=True)
class SummaryRow:
    model: str
    region: str
    horizon: int
    count: int
    mae: float
    mse: float
    wis: float
    coverage: float  # percent

    def metric(self, name: str) -> float:
        return getattr(self, name)


@dataclass
class RunArtifact:
    config: HarnessConfig
    regions: tuple[str, ...]
    forecasts: dict[tuple[str, str, EpiWeek], ForecastDistribution]
    scores: list[ScoreRecord]
    failures: list[Failure] = field(default_factory=list)
    summary: list[SummaryRow] = field(default_factory=list)
    skill: list[dict] = field(default_factory=list)

    @property
    def models(self) -> tuple[str, ...]:
        return self.config.models

    @property
    def distributions(self) -> dict[tuple[str, str, int], list[ScoreRecord]]:
        cells = defaultdict(list)
        for s in self.scores:
            cells[(s.model, s.region, s.horizon)].append(s)
        return dict(cells)

    def origins(self, region: str) -> list[EpiWeek]:
        return sorted({o for (_, r, o) in self.forecasts if r == region} |
                      {f.origin for f in self.failures if f.region == region})


# -- seeds ------------------------------------------------------------------

def task_seed(master_seed: int, region: str, tag: str, origin: EpiWeek) -> int:
    """Seed keyed by names and the origin date, so model or origin sets can change freely."""
    ss = np.random.SeedSequence([master_seed, zlib.crc32(region.encode()), zlib.crc32(tag.encode()),
                                 origin.end_date.toordinal()])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


# -- one origin ---------------------------------------------------------------

def forecast_origin(series: WvalSeries, origin: EpiWeek, cfg: HarnessConfig
                    ) -> tuple[dict[str, ForecastDistribution], dict[str, str]]:
    """All enabled models at one origin, using only observations up to ``origin``."""
    region = series.region
    H = len(cfg.horizons)
    models = cfg.models
    out: dict[str, ForecastDistribution] = {}
    errs: dict[str, str] = {}
    try:
        window = slice_window(series.truncate(origin), origin, cfg.window_len)
    except (SubepiError, KeyError) as exc:
        return {}, {m: f"{type(exc).__name__}: {exc}" for m in models}

    def seed(tag):
        return task_seed(cfg.master_seed, region, tag, origin)

    need_ranks = sorted({int(m[-1]) for m in models if m in RANKED} |
                        {ENSEMBLES[m].k for m in models if m in ENSEMBLES})
    if need_ranks:
        fcfg = FitConfig(starts=cfg.multistarts, steps_per_week=cfg.steps_per_week)
        ranked_fc: dict[int, ForecastDistribution] = {}
        fits = []
        try:
            fits = rank_candidates(window, fcfg, seed=seed("rank"))
        except SubepiError as exc:
            reason = f"{type(exc).__name__}: {exc}"
            for m in models:
                if m in RANKED or m in ENSEMBLES:
                    errs[m] = reason
        for k, fit in enumerate(fits[: max(need_ranks)], start=1):
            bcfg = replace(cfg.bootstrap, seed=seed(f"Rank{k}"), steps_per_week=cfg.steps_per_week)
            try:
                ranked_fc[k] = bootstrap_forecast(fit, window, H, bcfg)
            except SubepiError as exc:
                errs[f"Rank{k}"] = f"{type(exc).__name__}: {exc}"
        for m in models:
            if m in RANKED and m not in errs:
                k = int(m[-1])
                if k in ranked_fc:
                    out[m] = ranked_fc[k]
                elif fits:
                    errs[m] = f"only {len(fits)} candidate fit(s) available"
        for m in models:
            if m not in ENSEMBLES or m in errs:
                continue
            spec = ENSEMBLES[m]
            members = fits[: spec.k]
            if len(members) < 2 or any(k not in ranked_fc for k in range(1, len(members) + 1)):
                errs[m] = "fewer than two usable ensemble members"
                continue
            w = ensemble_weights(spec, members)
            out[m] = combine([ranked_fc[k] for k in range(1, len(members) + 1)], w, seed=seed(m))

    for m in models:
        if m not in BASELINES:
            continue
        try:
            if m == "SLR":
                out[m] = forecast_slr(fit_slr(window), H, cfg.bootstrap.alphas)
            elif m == "GAM":
                out[m] = forecast_gam(fit_gam(window), H, cfg.bootstrap.alphas)
            elif m == "ARIMA":
                out[m] = forecast_arima(fit_arima(window), H, cfg.bootstrap.alphas)
            else:
                out[m] = forecast_trendcast(fit_trendcast(window, TrendCastConfig()), H, cfg.bootstrap.alphas, seed=seed(m))
        except (SubepiError, np.linalg.LinAlgError, FloatingPointError) as exc:
            errs[m] = f"{type(exc).__name__}: {exc}"
    return {m: f.without_samples() for m, f in out.items()}, errs


def _run_region_origin(args):
    series, origin, cfg = args
    return forecast_origin(series, origin, cfg)


def _workers(cfg: HarnessConfig, tasks: int) -> int:
    if cfg.workers is not None:
        n = cfg.workers
    else:
        env = os.environ.get("SUBEPI_THREADS")
        n = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(n, tasks))


# -- protocol ---------------------------------------------------------------

def run_protocol(series: Mapping[str, WvalSeries], cfg: HarnessConfig) -> RunArtifact:
    regions = tuple(series)
    if not regions:
        raise EmptyInputError("no region series supplied")
    origins = cfg.origins
    tasks = [(series[r], o, cfg) for r in regions for o in origins]
    n_workers = _workers(cfg, len(tasks))
    if n_workers == 1:
        results = [_run_region_origin(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_run_region_origin, tasks, chunksize=max(1, len(tasks) // (8 * n_workers))))

    forecasts: dict[tuple[str, str, EpiWeek], ForecastDistribution] = {}
    scores: list[ScoreRecord] = []
    failures: list[Failure] = []
    for (s, origin, _), (fcs, errs) in zip(tasks, results):
        for m in cfg.models:
            if m in errs:
                failures.append(Failure(m, s.region, origin, errs[m]))
                continue
            fd = fcs[m]
            forecasts[(m, s.region, origin)] = fd
            observed = {h: s.value_at(origin.shift(h)) for h in fd.horizons}
            observed = {h: v for h, v in observed.items() if v is not None}
            scores.extend(score_forecast(fd, observed, m, s.region, cfg.bootstrap.alphas))

    summary = aggregate(scores, cfg.models, regions, cfg.horizons)
    skill = skill_table(summary) if "SLR" in cfg.models else []
    return RunArtifact(cfg, regions, forecasts, scores, failures, summary, skill)


# -- aggregation --------------------------------------------------------------

def aggregate(scores: Sequence[ScoreRecord], models: Sequence[str] | None = None,
              regions: Sequence[str] | None = None, horizons: Sequence[int] | None = None) -> list[SummaryRow]:
    """Per-cell means; cells with no scores appear with count 0 and NaN metrics."""
    cells = defaultdict(list)
    for s in scores:
        cells[(s.model, s.region, s.horizon)].append(s)
    models = list(models) if models is not None else sorted({s.model for s in scores})
    regions = list(regions) if regions is not None else sorted({s.region for s in scores})
    horizons = list(horizons) if horizons is not None else sorted({s.horizon for s in scores})
    rows = []
    for r in regions:
        for m in models:
            for h in horizons:
                recs = cells.get((m, r, h), [])
                if recs:
                    rows.append(SummaryRow(
                        m, r, h, len(recs),
                        float(np.mean([x.mae for x in recs])), float(np.mean([x.mse for x in recs])),
                        float(np.mean([x.wis for x in recs])), 100.0 * float(np.mean([x.covered95 for x in recs])),
                    ))
                else:
                    rows.append(SummaryRow(m, r, h, 0, math.nan, math.nan, math.nan, math.nan))
    return rows


def skill_table(summary: Sequence[SummaryRow]) -> list[dict]:
    """Percent skill versus SLR per (model, region, horizon) and metric."""
    base = {(s.region, s.horizon): s for s in summary if s.model == "SLR"}
    if not base:
        raise BaselineMissingError("skill scores need SLR in the summary")
    out = []
    for s in summary:
        row = {"model": s.model, "region": s.region, "horizon": s.horizon}
        b = base.get((s.region, s.horizon))
        for k in METRICS:
            mine = s.metric(k)
            ref = b.metric(k) if b is not None else math.nan
            if s.model == "SLR" and b is not None and b.count > 0:
                row[k] = 0.0
            elif math.isfinite(mine) and math.isfinite(ref) and ref > 0:
                row[k] = 100.0 * skill_score(mine, ref)
            else:
                row[k] = math.nan
        out.append(row)
    return out


def best_cells(summary: Sequence[SummaryRow], tol: float = 1e-9) -> dict[tuple[str, int, str], set[str]]:
    """Best model(s) per (region, horizon, metric); coverage ranks by distance to 95%."""
    groups = defaultdict(list)
    for s in summary:
        groups[(s.region, s.horizon)].append(s)
    best = {}
    for (r, h), rows in groups.items():
        for k in METRICS + ("coverage",):
            vals = [(s.model, abs(s.coverage - 95.0) if k == "coverage" else s.metric(k))
                    for s in rows if s.count > 0 and math.isfinite(s.metric(k))]
            if not vals:
                best[(r, h, k)] = set()
                continue
            low = min(v for _, v in vals)
            best[(r, h, k)] = {m for m, v in vals if v <= low + tol}
    return best
