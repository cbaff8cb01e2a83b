"""Seeded physics-level experiments shared by the test suite and scripts/."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import SignalModel, _SignalFactory
from .dsp import bandpass_filter, pearson, select_global_band
from .fracture import (
    CrackGrowthCurve,
    CurveSelection,
    GeometrySpec,
    GrowthPathDistribution,
    ParisParams,
    crack_at_cycles,
    fit_growth_distribution,
    select_growth_curve,
)
from .loading import LoadingSpec, constant_amplitude, variable_amplitude
from .pf import Observation, PFConfig, run_filter


@dataclass(frozen=True)
class Population:
    """Nominal Paris law, its test-to-test scatter and the measurement schedule."""

    C: float = 8e-12
    m: float = 3.0
    b_mm: float = 39.0
    c_scatter: float = 0.2
    a0_mm: float = 1.0
    a_stop_mm: float = 25.0
    interval: int = 2500
    n_training: int = 6


def training_set(pop: Population, rng: np.random.Generator,
                 loading: LoadingSpec | None = None):
    """Per-test C values and measured growth curves, as the simulator records them."""
    loading = loading or constant_amplitude()
    geom = GeometrySpec(pop.b_mm)
    Cs = pop.C * np.exp(pop.c_scatter * rng.standard_normal(pop.n_training))
    curves = []
    for C in Cs:
        p = ParisParams(float(C), pop.m)
        cycles, a = [0.0], [pop.a0_mm]
        while True:
            n = cycles[-1] + pop.interval
            val, hit = crack_at_cycles(pop.a0_mm, p, loading, geom, 0, [n])
            if hit or val[0] > pop.a_stop_mm:
                break
            cycles.append(n)
            a.append(float(val[0]))
        curves.append(CrackGrowthCurve(np.array(cycles), np.array(a)))
    return Cs, curves


def training_distribution(pop: Population, rng: np.random.Generator):
    loading = constant_amplitude()
    Cs, curves = training_set(pop, rng, loading)
    return Cs, fit_growth_distribution(curves, loading, GeometrySpec(pop.b_mm))


def denoise_trial(seed: int, n_pairs: int = 6, model: SignalModel = SignalModel(),
                  energy_fraction: float = 0.95) -> tuple[float, float]:
    """Mean pairwise correlation of zero-crack received signals, raw and bandpassed.

    The band comes from the mean actuation spectrum, as in the pipeline.
    """
    factory = _SignalFactory(model, seed)
    rng = np.random.default_rng(seed)
    pairs = [factory.pair(0.0, rng) for _ in range(n_pairs)]
    band = select_global_band([act for act, _ in pairs], energy_fraction)
    raw = [rec for _, rec in pairs]
    filt = [bandpass_filter(r, band) for r in raw]

    def mean_corr(sigs):
        return float(np.mean([pearson(sigs[i].samples, sigs[j].samples)
                              for i in range(len(sigs)) for j in range(i + 1, len(sigs))]))

    return mean_corr(raw), mean_corr(filt)


@dataclass(frozen=True)
class FusionTrial:
    seed: int
    rmse_filter: float
    rmse_open_loop: float
    selected: str
    truth_C: float
    final_C: float

    @property
    def filter_wins(self) -> bool:
        return self.rmse_filter < self.rmse_open_loop


def fusion_trial(seed: int, obs_noise_mm: float = 0.02, c_factor: float = 1.2,
                 n_obs: int = 4, n_pred: int = 8, refit: bool = True,
                 pop: Population = Population(), config: PFConfig | None = None) -> FusionTrial:
    """Filter vs open-loop forecast on one validation test with a shifted C.

    Truth uses ``c_factor`` times the training-mean C. The filter sees noisy
    crack lengths at the first ``n_obs`` measurement cycles (cycle 0 included)
    and is scored on the next ``n_pred``.
    """
    rng = np.random.default_rng(seed)
    Cs, dist = training_distribution(pop, rng)
    truth = ParisParams(float(c_factor * Cs.mean()), pop.m)
    geom = GeometrySpec(pop.b_mm)
    loading = constant_amplitude()
    cycles = np.arange(n_obs + n_pred, dtype=float) * pop.interval
    a_true, _ = crack_at_cycles(pop.a0_mm, truth, loading, geom, 0, cycles)
    z = a_true[:n_obs] + obs_noise_mm * rng.standard_normal(n_obs)
    obs = [Observation(float(c), max(float(v), 0.0)) for c, v in zip(cycles[:n_obs], z)]
    cfg = config or PFConfig(seed=seed, obs_noise_std=max(obs_noise_mm, 1e-3))
    res = run_filter(dist, obs, cycles[n_obs:], loading, geom, cfg, refit=refit)
    later = a_true[n_obs:]
    pf = np.array([r.mean for r in res.predicted])
    ol = dist.crack_at("mean", cycles[n_obs:])
    return FusionTrial(seed, float(np.sqrt(np.mean((pf - later) ** 2))),
                       float(np.sqrt(np.mean((ol - later) ** 2))), res.selection.name,
                       truth.C, res.move_params.C)


def equivalent_variable_amplitude_C(C_constant: float, m: float, constant: LoadingSpec,
                                    variable: LoadingSpec) -> float:
    """C under ``variable`` giving the same mean growth rate as ``C_constant`` under ``constant``."""
    ds_c = constant.blocks[0].delta_sigma
    w = np.array([b.cycles for b in variable.blocks], float)
    mean_pow = float(np.dot(w, [b.delta_sigma ** m for b in variable.blocks]) / w.sum())
    return C_constant * ds_c ** m / mean_pow


@dataclass(frozen=True)
class SelectionTrial:
    seed: int
    selected: str
    residuals: dict


def variable_amplitude_selection_trial(seed: int, obs_noise_mm: float = 0.1, n_obs: int = 5,
                                       pop: Population = Population()) -> SelectionTrial:
    """Variable-amplitude test growing like the fast (5%) curve: which curve is picked?"""
    rng = np.random.default_rng(seed)
    _, dist = training_distribution(pop, rng)
    fast = dist.params("lower5")
    va = variable_amplitude()
    C_va = equivalent_variable_amplitude_C(fast.C, fast.m, dist.loading, va)
    n0, a0 = dist.anchor("lower5")
    cycles = np.arange(n_obs, dtype=float) * pop.interval
    a_true, _ = crack_at_cycles(a0, ParisParams(C_va, fast.m), va, dist.geometry, n0, cycles)
    z = np.maximum(a_true + obs_noise_mm * rng.standard_normal(n_obs), 0.0)
    sel = select_growth_curve(dist, list(zip(cycles, z)))
    return SelectionTrial(seed, sel.name, sel.mean_abs_residual)


def noiseless_collapse(seed: int = 0, n_obs: int = 8, pop: Population = Population(),
                       which: str = "mean") -> tuple[np.ndarray, np.ndarray]:
    """Filter observations lying exactly on a quantile curve with sigma_w=0, sigma_v=1e-4.

    Returns (posterior means, curve values) at the observation cycles.
    """
    rng = np.random.default_rng(seed)
    _, dist = training_distribution(pop, rng)
    cycles = np.arange(n_obs, dtype=float) * pop.interval
    curve = dist.crack_at(which, cycles)
    obs = [Observation(float(c), float(a)) for c, a in zip(cycles, curve)]
    cfg = PFConfig(process_noise_std=0.0, obs_noise_std=1e-4, seed=seed)
    res = run_filter(dist, obs, [], dist.loading, dist.geometry, cfg,
                     params_selector=lambda d, e: _fixed_selection(d, which))
    return np.array([r.mean for r in res.filtered]), curve


def _fixed_selection(dist: GrowthPathDistribution, which: str) -> CurveSelection:
    return CurveSelection(which, dist.params(which), {}, {})
