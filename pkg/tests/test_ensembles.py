import numpy as np
import pytest
from hypothesis import given, strategies as st

from subepi.ensembles import EnsembleSpec, akaike_weights, combine, ensemble_weights
from subepi.errors import AlignmentError, ParameterError
from subepi.forecast import from_samples
from subepi.subepidemic import SubEpidemicFit, SubEpidemicParams

from conftest import ORIGIN

P = SubEpidemicParams((0.5,), (1.0,), (10.0,), 1.0)


def member(values, origin=ORIGIN):
    return from_samples(origin, np.asarray(values, dtype=float).reshape(-1, 1))


def test_akaike_examples():
    assert np.allclose(akaike_weights([5.0, 5.0, 5.0]), 1 / 3, rtol=0, atol=1e-12)
    assert np.allclose(akaike_weights([100.0, 102.0]), [0.7311, 0.2689], atol=1e-4)
    w = akaike_weights([0.0, 1000.0])
    assert np.all(np.isfinite(w)) and w[0] == pytest.approx(1.0) and w[1] < 1e-200


@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=6))
def test_akaike_normalized(aiccs):
    w = akaike_weights(aiccs)
    assert abs(w.sum() - 1.0) < 1e-12
    assert w[int(np.argmin(aiccs))] == w.max()


def test_spec_names_and_uniform_weights():
    assert EnsembleSpec(3, "uniform").name == "EM3UW" and EnsembleSpec(2).name == "EM2W"
    fits = [SubEpidemicFit(P, 1.0, a, 4, 10) for a in (1.0, 2.0, 9.0)]
    assert np.array_equal(ensemble_weights(EnsembleSpec(3, "uniform"), fits), [1 / 3] * 3)
    # availability clamp: only two fits for a 3-member ensemble
    w = ensemble_weights(EnsembleSpec(3), fits[:2])
    assert len(w) == 2 and w.sum() == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        EnsembleSpec(1)


def test_degenerate_weights_reproduce_member():
    rng = np.random.default_rng(0)
    a, b = member(rng.gamma(2.0, 3.0, 300)), member(rng.gamma(5.0, 1.0, 300))
    mix = combine([a, b], [1.0, 0.0], seed=1)
    n_mix = len(mix.samples)
    for q in (0.025, 0.25, 0.5, 0.75, 0.975):
        cdf_at = np.mean(a.samples[:, 0] <= np.quantile(mix.samples[:, 0], q))
        assert abs(cdf_at - q) <= 2.0 / n_mix + 1.0 / len(a.samples)


def test_identical_members():
    s = np.linspace(0, 5, 200)
    mix = combine([member(s), member(s)], [0.3, 0.7], seed=2)
    assert mix.median[0] == pytest.approx(np.median(s), abs=1e-9)
    lo, hi = mix.interval(0.05)
    assert lo[0] == pytest.approx(np.quantile(s, 0.025), abs=0.03)
    assert hi[0] == pytest.approx(np.quantile(s, 0.975), abs=0.03)


def test_two_point_mixture():
    mix = combine([member(np.zeros(1000)), member(np.full(1000, 10.0))], [0.5, 0.5], seed=3, n_mix=100_000)
    assert abs(np.mean(mix.samples == 10.0) - 0.5) <= 0.01
    assert 0.0 <= mix.median[0] <= 10.0
    lo, hi = mix.interval(0.05)
    assert lo[0] == 0.0 and hi[0] == 10.0


@given(st.floats(0.05, 0.95), st.floats(0.5, 9.5))
def test_mixture_cdf(w1, x):
    rng = np.random.default_rng(5)
    a, b = rng.uniform(0, 10, 500), rng.uniform(2, 6, 500)
    mix = combine([member(a), member(b)], [w1, 1 - w1], seed=9)
    n_mix = len(mix.samples)
    target = w1 * np.mean(a <= x) + (1 - w1) * np.mean(b <= x)
    assert abs(np.mean(mix.samples[:, 0] <= x) - target) <= 3 * np.sqrt(0.25 / n_mix)


def test_alignment_checked():
    other = ORIGIN.shift(1)
    with pytest.raises(AlignmentError):
        combine([member([1.0]), member([2.0], origin=other)], [0.5, 0.5])
    with pytest.raises(AlignmentError):
        combine([member([1.0])], [0.5, 0.5])
