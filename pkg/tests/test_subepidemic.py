import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subepi.errors import AICcUndefinedError, FitFailureError, NumericalBlowupError, ParameterError
from subepi.subepidemic import (
    FitConfig, SubEpidemicParams, aicc, candidate_thresholds, fit_nls, fit_signal,
    integrate, rank_candidates,
)

from conftest import window


def logistic(t, r, K, i0):
    return K / (1.0 + (K - i0) / i0 * np.exp(-r * t))


def one(r, p, K, i0):
    return SubEpidemicParams((r,), (p,), (K,), i0)


def test_logistic_closed_form():
    tr = integrate(one(0.5, 1.0, 100.0, 1.0), 20)
    exact = logistic(np.arange(21.0), 0.5, 100.0, 1.0)
    assert np.max(np.abs(tr.C[0] - exact) / exact) < 1e-6
    assert np.array_equal(fit_signal(tr), tr.C_tot)


def test_p_zero_grows_linearly():
    tr = integrate(one(2.0, 0.0, 1e6, 0.5), 3)
    assert np.allclose(tr.C_tot, 0.5 + 2.0 * np.arange(4.0), rtol=1e-5)


def test_unreachable_threshold_leaves_second_wave_off():
    two = SubEpidemicParams((0.6, 1.0), (1.0, 1.0), (50.0, 30.0), 1.0, 80.0)
    tr = integrate(two, 15)
    assert np.all(tr.C[1] == 0.0)
    assert np.allclose(tr.C_tot, integrate(one(0.6, 1.0, 50.0, 1.0), 15).C_tot, rtol=0, atol=0)


def test_second_wave_activates_after_threshold():
    two = SubEpidemicParams((0.8, 1.2), (1.0, 1.0), (50.0, 30.0), 1.0, 10.0)
    tr = integrate(two, 15)
    c1 = tr.C[0]
    first_on = int(np.argmax(tr.C[1] > 0))
    assert first_on >= 2
    # C1 is monotone, so it crossed the threshold during the week before first_on
    assert c1[first_on] > 10.0 and c1[first_on - 2] <= 10.0
    assert np.all(tr.C[1][:first_on] == 0.0)
    assert np.allclose(tr.C_tot, tr.C.sum(axis=0), rtol=0, atol=0)


def test_horizon_zero_is_initial_level():
    assert np.array_equal(fit_signal(integrate(one(0.5, 0.9, 20.0, 1.5), 0)), [1.5])


def test_constant_trajectory():
    tr = integrate(one(1e-9, 1.0, 1e9, 2.0), 5)
    assert np.allclose(fit_signal(tr), 2.0, rtol=1e-7)


def test_integrate_rejects_coarse_steps_and_flags_blowup():
    with pytest.raises(ParameterError):
        integrate(one(0.5, 1.0, 100.0, 1.0), 5, steps_per_week=2)
    with pytest.raises(NumericalBlowupError):
        integrate(one(1e200, 1.0, 1e300, 1e100), 5)


def test_fourth_order_convergence():
    p = one(1.1, 1.0, 80.0, 0.5)
    exact = logistic(np.arange(21.0), 1.1, 80.0, 0.5)
    errs = [np.max(np.abs(integrate(p, 20, s).C_tot - exact)) for s in (4, 8, 16)]
    for a, b in zip(errs, errs[1:]):
        assert 12 <= a / b <= 20


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.0, 1.0), st.floats(5.0, 500.0), st.floats(0.01, 4.0))
def test_monotone_and_bounded(r, p, K, i0):
    tr = integrate(one(r, p, K, i0), 15)
    c = tr.C[0]
    tol = 1e-9 * K
    assert np.all(np.diff(c) >= -tol) and np.all(c <= K + tol)


def test_aicc_hand_value():
    assert aicc(1.0, 4, 10) == pytest.approx(16.0, abs=1e-12)
    with pytest.raises(AICcUndefinedError):
        aicc(1.0, 4, 5)


@settings(max_examples=200)
@given(st.floats(1e-6, 1e6), st.integers(1, 10), st.integers(3, 60))
def test_aicc_formula(sse, m, n_d):
    if n_d - m - 1 <= 0:
        return
    assert aicc(sse, m, n_d) == n_d * math.log(sse) + 2 * m + 2 * m * (m + 1) / (n_d - m - 1)


def test_candidate_thresholds_examples():
    assert np.allclose(candidate_thresholds([3.0] * 10), [3.0 * k for k in range(1, 11)])
    assert candidate_thresholds([0.0] * 10) == []
    levels = candidate_thresholds([1.0] + [0.0] * 9)
    assert len(levels) == 10 and levels[0] > 0 and levels[-1] <= 1.0 + 1e-12
    assert np.allclose(np.diff(levels), levels[0])


def test_noiseless_recovery():
    truth = one(0.8, 0.9, 50.0, 1.0)
    y = fit_signal(integrate(truth, 9))
    fit = fit_nls(window(y), 1, None, 30, seed=1)
    assert fit.sse < 1e-8
    assert fit.params.r[0] == pytest.approx(0.8, rel=0.01)
    assert fit.params.p[0] == pytest.approx(0.9, rel=0.01)
    assert fit.params.K0[0] == pytest.approx(50.0, rel=0.01)
    assert fit.m == 4 and fit.n_d == 10


def test_fit_rejects_degenerate_windows():
    with pytest.raises(FitFailureError):
        fit_nls(window([0.0] * 10), 1)
    with pytest.raises(AICcUndefinedError):
        fit_nls(window([1.0, 2.0, 3.0, 4.0, 5.0]), 1)


def test_fit_is_deterministic():
    y = fit_signal(integrate(one(0.7, 0.8, 30.0, 1.0), 9)) * np.linspace(1.0, 1.05, 10)
    a = fit_nls(window(y), 1, None, 5, seed=3)
    b = fit_nls(window(y), 1, None, 5, seed=3)
    assert a == b


def test_single_wave_ranks_n1_first():
    y = fit_signal(integrate(one(0.8, 0.9, 50.0, 1.0), 9))
    y = y + np.random.default_rng(4).normal(0, 0.01, 10)
    fits = rank_candidates(window(y), FitConfig(starts=10), seed=2)
    assert fits[0].n == 1
    assert all(f.aicc > fits[0].aicc for f in fits[1:])
    assert [f.rank for f in fits] == list(range(1, len(fits) + 1))
    assert all(a.aicc <= b.aicc for a, b in zip(fits, fits[1:]))


def test_two_wave_ranks_n2_first():
    thr = 20.0
    for _ in range(100):
        truth = SubEpidemicParams((2.0, 2.5), (0.3, 1.0), (60.0, 15.0), 2.0, thr)
        y = fit_signal(integrate(truth, 9))
        new = candidate_thresholds(y)[0]
        if abs(new - thr) < 1e-9 * new:
            break
        thr = new
    y = y + np.random.default_rng(0).normal(0, 0.001 * y.max(), 10)
    fits = rank_candidates(window(y), FitConfig(starts=30), seed=0)
    assert fits[0].n == 2


def test_rank_with_too_few_points_for_n2():
    # 7 points: n=2 (m=7) is AICc-undefined, so only the n=1 fit survives
    y = fit_signal(integrate(one(0.8, 0.9, 50.0, 1.0), 6))
    fits = rank_candidates(window(y), FitConfig(starts=5))
    assert len(fits) == 1 and fits[0].n == 1
