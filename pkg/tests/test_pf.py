import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crackfusion.errors import NumericalError, ValidationError
from crackfusion.fracture import GeometrySpec, ParisParams, advance_many
from crackfusion.loading import constant_amplitude
from crackfusion.pf import (
    Observation,
    ParticleEnsemble,
    PFConfig,
    TuningCase,
    effective_sample_size,
    estimate,
    init_particles,
    open_loop_forecast,
    propagate,
    run_filter,
    systematic_resample,
    tune_noise,
    update,
)

CA = constant_amplitude()
GEOM = GeometrySpec(39.0)
P = ParisParams(8e-12, 3.0)


def ens(states, weights=None, **kw):
    x = np.asarray(states, float)
    w = np.full(x.size, 1 / x.size) if weights is None else weights
    return ParticleEnsemble(0.0, x, w, **kw)


def test_ensemble_validation():
    with pytest.raises(ValidationError):
        ens([1.0, 2.0], [0.5, 0.6])
    with pytest.raises(ValidationError):
        ens([-1.0, 2.0])
    with pytest.raises(ValidationError):
        ParticleEnsemble(0.0, [], [])
    with pytest.raises(ValidationError):
        Observation(0.0, -1.0)
    with pytest.raises(ValidationError):
        PFConfig(n_particles=5)
    with pytest.raises(ValidationError):
        PFConfig(resample_threshold=0.0)


def test_effective_sample_size_oracle():
    assert effective_sample_size(ens([1, 2, 3, 4])) == pytest.approx(4.0)
    assert effective_sample_size(ens([1, 2], [1.0, 0.0])) == pytest.approx(1.0)
    assert effective_sample_size(ens([1, 2], [0.75, 0.25])) == pytest.approx(1.6)


class FixedU:
    def __init__(self, u):
        self.u = u

    def random(self):
        return self.u


def test_systematic_resample_oracle():
    w = np.array([0.1, 0.2, 0.3, 0.4])
    # pointers at 0.125, 0.375, 0.625, 0.875 against cum 0.1, 0.3, 0.6, 1.0
    np.testing.assert_array_equal(systematic_resample(w, FixedU(0.5)), [1, 2, 3, 3])
    np.testing.assert_array_equal(systematic_resample(np.array([0, 1.0, 0]), FixedU(0.99)), [1, 1, 1])


@given(st.integers(0, 10_000), st.integers(10, 300))
def test_systematic_resample_counts(seed, n):
    rng = np.random.default_rng(seed)
    w = rng.random(n)
    w /= w.sum()
    idx = systematic_resample(w, rng)
    counts = np.bincount(idx, minlength=n)
    # systematic resampling keeps every count within one of n w
    assert counts.sum() == n
    assert np.all(np.abs(counts - n * w) < 1.0 + 1e-9)


def test_update_weights_oracle():
    e = ens([1.0, 2.0])
    cfg = PFConfig(obs_noise_std=1.0, resample_threshold=0.1)
    out = update(e, Observation(0.0, 1.0), cfg)
    w1 = 1 / (1 + math.exp(-0.5))
    np.testing.assert_allclose(out.weights, [w1, 1 - w1])
    with pytest.raises(ValidationError):
        update(e, Observation(5.0, 1.0), cfg)


def test_update_resamples_when_degenerate():
    e = ens(np.linspace(0, 10, 100))
    out = update(e, Observation(0.0, 5.0), PFConfig(obs_noise_std=0.05))
    assert out.generation == 1
    np.testing.assert_allclose(out.weights, 1 / 100)
    assert np.all(np.abs(out.states - 5.0) < 0.3)


def test_update_incompatible_observation():
    with pytest.raises(NumericalError, match="incompatible"):
        update(ens([1.0, 1.1]), Observation(0.0, 50.0), PFConfig(obs_noise_std=0.1))


def test_propagate_without_noise_is_the_paris_move():
    e = ens([1.0, 2.0, 3.0])
    out = propagate(e, P, CA, GEOM, 5000.0, PFConfig(process_noise_std=0.0))
    ref, _ = advance_many(e.states, P, CA, GEOM, 0.0, 5000.0)
    np.testing.assert_array_equal(out.states, ref)
    assert out.cycle == 5000.0 and out.generation == 1
    with pytest.raises(ValidationError):
        propagate(out, P, CA, GEOM, 5000.0)


@given(st.integers(0, 1000), st.floats(0.0, 2.0))
def test_propagate_never_shrinks(seed, noise):
    e = ens(np.random.default_rng(seed).uniform(0.5, 30, 50))
    out = propagate(e, P, CA, GEOM, 1000.0, PFConfig(process_noise_std=noise, seed=seed))
    assert np.all(out.states >= e.states)
    assert np.all(out.states <= 0.99 * 39.0)


def test_propagate_flags_cap():
    out = propagate(ens([38.5, 1.0]), P, CA, GEOM, 1000.0, PFConfig(process_noise_std=0.0))
    assert out.clamped.tolist() == [True, False]
    assert out.states[0] == pytest.approx(0.99 * 39.0)


def test_estimate_oracle():
    x = np.arange(1.0, 21.0)
    m, lo, hi = estimate(ens(x))
    assert m == pytest.approx(10.5)
    assert (lo, hi) == (1.0, 19.0)


def test_init_particles(growth_dist):
    e = init_particles(growth_dist, 5000.0, PFConfig(seed=3))
    again = init_particles(growth_dist, 5000.0, PFConfig(seed=3))
    np.testing.assert_array_equal(e.states, again.states)
    mean = growth_dist.crack_at("mean", [5000.0])[0]
    assert np.mean(e.states) == pytest.approx(mean, abs=0.05)
    with pytest.raises(ValidationError, match="outside"):
        init_particles(growth_dist, 1e7)


def test_run_filter_is_reproducible_and_ordered(growth_dist):
    d = growth_dist
    cyc = [0.0, 2500.0, 5000.0, 7500.0]
    obs = [Observation(c, float(a)) for c, a in zip(cyc, d.crack_at("mean", cyc))]
    preds = [10_000.0, 12_500.0]
    r1 = run_filter(d, obs, preds, CA, d.geometry, PFConfig(seed=5), refit=True)
    r2 = run_filter(d, obs, preds, CA, d.geometry, PFConfig(seed=5), refit=True)
    assert r1 == r2
    assert [r.cycle for r in r1.rows] == cyc + preds
    assert len(r1.filtered) == 4 and len(r1.predicted) == 2
    assert r1.refit and r1.selection.name == "mean"
    for r in r1.rows:
        assert r.lower_90 <= r.mean <= r.upper_90


def test_run_filter_input_checks(growth_dist):
    d = growth_dist
    o = [Observation(2500.0, 1.2), Observation(0.0, 1.0)]
    with pytest.raises(ValidationError, match="increasing"):
        run_filter(d, o, [], CA, d.geometry)
    with pytest.raises(ValidationError, match="after"):
        run_filter(d, o[::-1], [1000.0], CA, d.geometry)
    with pytest.raises(ValidationError):
        run_filter(d, [], [2000.0, 1000.0], CA, d.geometry)


def test_run_filter_without_observations_follows_mean(growth_dist):
    d = growth_dist
    res = run_filter(d, [], [5000.0, 10_000.0], CA, d.geometry,
                     PFConfig(process_noise_std=0.0, seed=1))
    assert not res.refit and res.selection.name == "mean"
    np.testing.assert_allclose([r.mean for r in res.rows],
                               open_loop_forecast(d, [5000.0, 10_000.0]), atol=0.02)


def test_tune_noise(growth_dist):
    d = growth_dist
    cyc = np.arange(0, 25_001, 2500.0)
    truth = d.crack_at("mean", cyc)
    case = TuningCase(cyc, truth, truth + 0.01)
    assert tune_noise(d, [case], [(0.1, 0.2)]) == (0.1, 0.2)
    w, v = tune_noise(d, [case], [(0.01, 0.05), (0.3, 0.8)], PFConfig(n_particles=200))
    assert (w, v) in [(0.01, 0.05), (0.3, 0.8)]
    with pytest.raises(ValidationError, match="no training test"):
        tune_noise(d, [case], [(0.01, 0.05), (0.3, 0.8)], n_observed=20)
    with pytest.raises(ValidationError):
        TuningCase(cyc, truth[:-1], truth)
