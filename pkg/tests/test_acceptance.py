"""Acceptance criteria, one test each, run at the stated tolerances.

Each test prints a single ``CRITERION k: PASS|FAIL`` line with the measured
quantities. Criteria 10 and 11 run two full backtests (133 origins x 5 regions,
B=50) and take several minutes each.
"""

import datetime as dt
import math
import time

import numpy as np
import pytest

from subepi.bootstrap import BootstrapConfig, bootstrap_forecast
from subepi.cli import main
from subepi.ensembles import akaike_weights, combine
from subepi.forecast import from_samples
from subepi.baselines import fit_arima, fit_gam, fit_slr, forecast_arima, forecast_gam, forecast_slr
from subepi.baselines.arima import ArimaSearch
from subepi.harness import forecast_origin
from subepi.io import config_from_dict, ingest, read_forecasts
from subepi.scoring import QuantileForecast, wis
from subepi.subepidemic import (
    FitConfig, SubEpidemicParams, aicc, candidate_thresholds, fit_nls, fit_signal, integrate, rank_candidates,
)
from subepi.timeseries import CalibrationWindow, EpiWeek

ORIGIN = EpiWeek.ending(dt.date(2024, 9, 7))


@pytest.fixture
def report(request):
    tr = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(k, ok, detail, t0):
        line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} ({time.perf_counter() - t0:.1f} s) {detail}"
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        else:
            print(line)
        assert ok, line

    return emit


def _logistic(t, r, K, i0):
    return K / (1.0 + (K - i0) / i0 * np.exp(-r * t))


def test_criterion_01_ode_oracle(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst, ratios = 0.0, []
    t = np.arange(21.0)
    for _ in range(50):
        # draws around the documented r=0.5, K0=100, I0=1 anchor case
        r, K, i0 = rng.uniform(0.1, 0.5), rng.uniform(50.0, 200.0), rng.uniform(0.5, 2.0)
        exact = _logistic(t, r, K, i0)
        p = SubEpidemicParams((r,), (1.0,), (K,), i0)
        err = {s: np.max(np.abs(integrate(p, 20, s).C_tot - exact) / exact) for s in (4, 8, 16, 32)}
        worst = max(worst, err[8])
        ratios += [err[4] / err[8], err[8] / err[16], err[16] / err[32]]
    ok = worst < 1e-6 and 12 <= min(ratios) and max(ratios) <= 20 and time.perf_counter() - t0 < 10
    report(1, ok, f"max rel err {worst:.2e} at 8 steps/week; halving ratios in [{min(ratios):.2f}, {max(ratios):.2f}]", t0)


def test_criterion_02_aicc(report):
    t0 = time.perf_counter()
    hand = aicc(1.0, 4, 10)
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        m = int(rng.integers(1, 9))
        n = int(rng.integers(m + 2, 60))
        sse = float(np.exp(rng.uniform(-10, 10)))
        direct = n * math.log(sse) + 2 * m + 2 * m * (m + 1) / (n - m - 1)
        worst = max(worst, abs(aicc(sse, m, n) - direct) / max(1.0, abs(direct)))
    ok = abs(hand - 16.0) <= 1e-12 and worst <= 1e-12 and time.perf_counter() - t0 < 1
    report(2, ok, f"aicc(1, 4, 10) = {hand!r}; max deviation over 1000 draws {worst:.1e}", t0)


@pytest.mark.slow
def test_criterion_03_parameter_recovery(report):
    t0 = time.perf_counter()
    truth = SubEpidemicParams((0.8,), (0.9,), (50.0,), 1.0)
    y0 = fit_signal(integrate(truth, 9))
    err_r, err_k = [], []
    for rep in range(100):
        rng = np.random.default_rng([3, rep])
        y = np.maximum(y0 + rng.normal(0.0, 0.05 * y0.max(), 10), 0.0)
        fit = fit_nls(CalibrationWindow(ORIGIN, y), 1, None, 30, rep)
        err_r.append(abs(fit.params.r[0] - 0.8) / 0.8)
        err_k.append(abs(fit.params.K0[0] - 50.0) / 50.0)
    mr, mk = float(np.median(err_r)), float(np.median(err_k))
    ok = mr < 0.15 and mk < 0.15 and time.perf_counter() - t0 < 300
    report(3, ok, f"median relative error r {100 * mr:.1f}%, K0 {100 * mk:.1f}% (limit 15%)", t0)


def _two_wave_window(rng):
    """Noiseless two-wave window whose threshold equals its own first candidate level.

    The threshold is found by fixed-point iteration; draws where it does not
    settle are rejected.
    """
    while True:
        r1, p1, K1 = rng.uniform(1.8, 2.2), rng.uniform(0.25, 0.35), rng.uniform(55, 65)
        r2, K2 = rng.uniform(2.2, 2.8), rng.uniform(13, 17)
        thr = 20.0
        for _ in range(100):
            y0 = fit_signal(integrate(SubEpidemicParams((r1, r2), (p1, 1.0), (K1, K2), 2.0, thr), 9))
            new = candidate_thresholds(y0)[0]
            if abs(new - thr) < 1e-9 * new:
                return y0
            thr = new


@pytest.mark.slow
def test_criterion_04_order_selection(report):
    t0 = time.perf_counter()
    wins = 0
    for rep in range(100):
        rng = np.random.default_rng([7, rep])
        y0 = _two_wave_window(rng)
        y = np.maximum(y0 + rng.normal(0.0, 0.001 * y0.max(), 10), 0.0)
        fits = rank_candidates(CalibrationWindow(ORIGIN, y), FitConfig(starts=30), seed=rep)
        wins += fits[0].n == 2
    ok = wins >= 80 and time.perf_counter() - t0 < 600
    report(4, ok, f"n=2 ranked first in {wins}/100 windows (need 80)", t0)


@pytest.mark.slow
def test_criterion_05_bootstrap_calibration(report):
    t0 = time.perf_counter()
    truth = SubEpidemicParams((0.8,), (0.9,), (50.0,), 1.0)
    curve = fit_signal(integrate(truth, 10))
    sigma = 0.05 * curve[:10].max()
    hits = 0
    for rep in range(200):
        rng = np.random.default_rng([5, rep])
        y = np.maximum(curve + rng.normal(0.0, sigma, 11), 0.0)
        w = CalibrationWindow(ORIGIN, y[:10])
        fit = fit_nls(w, 1, None, 30, rep)
        fd = bootstrap_forecast(fit, w, 1, BootstrapConfig(B=300, seed=rep))
        lo, hi = fd.interval(0.05)
        hits += lo[0] < y[10] < hi[0]
    cov = 100.0 * hits / 200
    ok = 88.0 <= cov <= 99.0 and time.perf_counter() - t0 < 900
    report(5, ok, f"95% PI coverage of the 1-week-ahead observation {cov:.1f}% (target [88, 99])", t0)


def test_criterion_06_wis(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    k0 = all(wis(QuantileForecast(m), y, alphas=()) == abs(y - m) for m, y in rng.normal(0, 10, (50, 2)))
    hand = wis(QuantileForecast(1.0, ((0.5, 0.0, 2.0),)), 1.0, alphas=(0.5,))
    alphas = (0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    point = wis(QuantileForecast(3.0, tuple((a, 3.0, 3.0) for a in alphas)), 3.0, alphas)
    grows = 0
    for _ in range(1000):
        m, half = rng.uniform(0, 10), rng.uniform(0.01, 5)
        ivs = [(a, m - half * (2 - a), m + half * (2 - a)) for a in alphas]
        y = m + half * rng.uniform(-1, 1)
        a_star = alphas[rng.integers(len(alphas))]
        extra = rng.uniform(0.01, 1) * 0.02 * half  # keeps nesting intact
        side = rng.integers(2)
        wider = [(a, l - extra * (side == 0), u + extra * (side == 1)) if a == a_star else (a, l, u)
                 for a, l, u in ivs]
        grows += wis(QuantileForecast(m, tuple(wider)), y, alphas) > wis(QuantileForecast(m, tuple(ivs)), y, alphas)
    ok = k0 and abs(hand - 1 / 3) <= 1e-12 and point == 0.0 and grows == 1000 and time.perf_counter() - t0 < 1
    report(6, ok, f"K=0 reduction {k0}; K=1 case {hand!r}; point mass {point}; widening increased WIS {grows}/1000", t0)


def test_criterion_07_akaike(report):
    t0 = time.perf_counter()
    eq = akaike_weights([7.0, 7.0, 7.0])
    pair = akaike_weights([10.0, 12.0])
    rng = np.random.default_rng(8)
    worst = max(abs(akaike_weights(rng.normal(0, 50, rng.integers(1, 8))).sum() - 1.0) for _ in range(1000))
    ok = (np.max(np.abs(eq - 1 / 3)) <= 1e-12 and np.allclose(pair, [0.7311, 0.2689], rtol=0, atol=1e-4)
          and worst <= 1e-12 and time.perf_counter() - t0 < 1)
    report(7, ok, f"equal -> {eq.tolist()}; dAICc=2 -> ({pair[0]:.4f}, {pair[1]:.4f}); max |sum-1| {worst:.1e}", t0)


def test_criterion_08_mixture(report):
    t0 = time.perf_counter()
    n_mix = 100_000

    def member(v):
        return from_samples(ORIGIN, np.asarray(v, dtype=float).reshape(-1, 1))

    mix = combine([member(np.zeros(1000)), member(np.full(1000, 10.0))], [0.5, 0.5], seed=8, n_mix=n_mix)
    p10 = float(np.mean(mix.samples == 10.0))
    s1 = np.random.default_rng(9).gamma(2.0, 3.0, 1000)
    solo = combine([member(s1), member(np.random.default_rng(10).gamma(5.0, 1.0, 1000))], [1.0, 0.0],
                   seed=8, n_mix=n_mix)
    inside = True
    for q in (0.01, 0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975, 0.99):
        got = np.quantile(solo.samples[:, 0], q)
        lo, hi = np.quantile(s1, [max(q - 2 / n_mix, 0), min(q + 2 / n_mix, 1)])
        inside &= bool(lo - 1e-12 <= got <= hi + 1e-12)
    ok = abs(p10 - 0.5) <= 0.01 and inside and time.perf_counter() - t0 < 10
    report(8, ok, f"P(10) = {p10:.4f}; weight (1,0) quantiles within 2/N_mix of member 1: {inside}", t0)


def test_criterion_09_baselines(report):
    t0 = time.perf_counter()
    t = np.arange(10.0)
    line = 2.0 + 3.0 * t
    slr = forecast_slr(fit_slr(CalibrationWindow(ORIGIN, line)), 4)
    slr_err = float(np.max(np.abs(slr.median - (2.0 + 3.0 * np.arange(10, 14)))))

    rng = np.random.default_rng(9)
    gam_gap = 0.0
    for _ in range(20):
        w = CalibrationWindow(ORIGIN, rng.uniform(0, 10, 10))
        a = forecast_slr(fit_slr(w), 4).median
        b = forecast_gam(fit_gam(w, lam=1e12), 4).median
        gam_gap = max(gam_gap, float(np.max(np.abs(a - b)[a > 0], initial=0.0)))

    rw_gap = 0.0
    for _ in range(20):
        y = 20 + np.cumsum(rng.normal(0, 1, 10))
        fd = forecast_arima(fit_arima(CalibrationWindow(ORIGIN, y), ArimaSearch(order=(0, 1, 0))), 4)
        rw_gap = max(rw_gap, float(np.max(np.abs(fd.median - y[-1]))))

    white = sum(fit_arima(CalibrationWindow(ORIGIN, rng.normal(10.0, 1.0, 60))).order == (0, 0, 0)
                for _ in range(200))
    ok = slr_err < 1e-9 and gam_gap <= 1e-6 and rw_gap < 1e-9 and white > 100 and time.perf_counter() - t0 < 300
    report(9, ok, f"SLR line err {slr_err:.1e}; GAM-SLR gap {gam_gap:.1e}; ARIMA(0,1,0) gap {rw_gap:.1e}; "
                  f"white noise -> (0,0,0) in {white}/200", t0)


# -- protocol-level criteria --------------------------------------------------

BACKTEST = ["--window", "10", "--horizons", "4", "--bootstrap", "50", "--starts", "30", "--seed", "42"]


@pytest.fixture(scope="module")
def backtests(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    data = root / "sim.csv"
    assert main(["simulate", "--out", str(data), "--start", "2022-01-01", "--end", "2024-09-14", "--seed", "2024"]) == 0
    runs, times = [], []
    for name in ("run1", "run2"):
        t0 = time.perf_counter()
        code = main(["backtest", "--data", str(data), "--out", str(root / name), *BACKTEST])
        times.append(time.perf_counter() - t0)
        runs.append((code, root / name))
    return data, runs, times


@pytest.mark.slow
def test_criterion_10_protocol(report, backtests):
    import csv
    import json

    t0 = time.perf_counter()
    data, runs, times = backtests
    code, out = runs[0]
    with (out / "summary.csv").open() as fh:
        summary = list(csv.DictReader(fh))
    cells = {(r["model"], r["region"], r["horizon"]) for r in summary}
    doc = json.loads((out / "artifact.json").read_text())
    per_region = {}
    for f in doc["forecasts"]:
        per_region.setdefault(f["region"], set()).add(f["origin"])
    for m, r, o, _ in doc["failures"]:
        per_region.setdefault(r, set()).add(o)
    origins = {r: len(v) for r, v in per_region.items()}
    slr_zero = True
    for r in per_region:
        with (out / f"skill_{r}.csv").open() as fh:
            for row in csv.DictReader(fh):
                if row["model"] == "SLR":
                    slr_zero &= all(float(row[k]) == 0.0 for k in ("mae_skill_pct", "mse_skill_pct", "wis_skill_pct"))

    cfg = config_from_dict(doc["config"])
    stored = read_forecasts(out / "forecasts.csv")
    series = ingest(data)
    leak_ok = True
    for region, idx in (("National", 0), ("South", 66), ("West", 132)):
        origin = cfg.origins[idx]
        fresh, _ = forecast_origin(series[region].truncate(origin), origin, cfg)
        for m, fd in fresh.items():
            old = stored[(m, region, origin)]
            leak_ok &= np.array_equal(old.median, fd.median)
            leak_ok &= all(np.array_equal(old.interval(a)[i], fd.interval(a)[i]) for a in fd.alphas for i in (0, 1))
    ok = (code == 0 and set(origins.values()) == {133} and len(origins) == 5 and len(summary) == 220
          and len(cells) == 220 and slr_zero and leak_ok and times[0] < 1800)
    report(10, ok, f"origins per region {sorted(set(origins.values()))}; summary rows {len(summary)} (11x5x4 = 220); "
                   f"SLR skill all zero {slr_zero}; leakage identity at 3 origins {leak_ok}; backtest {times[0]:.0f} s", t0)


@pytest.mark.slow
def test_criterion_11_determinism(report, backtests):
    t0 = time.perf_counter()
    _, runs, times = backtests
    (c1, a), (c2, b) = runs
    same = {name: (a / name).read_bytes() == (b / name).read_bytes() for name in ("summary.csv", "forecasts.csv")}
    ok = c1 == c2 == 0 and all(same.values())
    report(11, ok, f"byte-identical {same}; run times {times[0]:.0f} s and {times[1]:.0f} s", t0)
