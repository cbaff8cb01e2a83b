"""Particle filter over crack length with a Paris-law move function."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError, ValidationError
from .fracture import (
    A_MIN,
    CrackGrowthCurve,
    CurveSelection,
    GeometrySpec,
    GrowthPathDistribution,
    ParisParams,
    _cap,
    advance_many,
    fit_paris,
    select_growth_curve,
)
from .loading import LoadingSpec

Z95 = 1.6448536269514722  # standard normal 95% point
NOISE_REFERENCE_CYCLES = 1000.0


@dataclass(frozen=True)
class PFConfig:
    n_particles: int = 1000
    process_noise_std: float = 0.05  # mm per 1000 cycles
    obs_noise_std: float = 0.2  # mm
    resample_threshold: float = 0.5
    seed: int = 0
    a_min: float = A_MIN
    step: float = 25.0  # RK4 step in cycles

    def __post_init__(self):
        if self.n_particles < 10:
            raise ValidationError("n_particles must be >= 10")
        if self.process_noise_std < 0 or self.obs_noise_std < 0:
            raise ValidationError("noise stds must be non-negative")
        if not 0 < self.resample_threshold <= 1:
            raise ValidationError("resample_threshold must lie in (0, 1]")
        if not self.step > 0:
            raise ValidationError("step must be positive")


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Weighted crack-length particles at one cycle.

    ``generation`` counts propagate/resample events and keys the noise streams,
    so a run is reproducible from the seed alone.
    """

    cycle: float
    states: np.ndarray
    weights: np.ndarray
    generation: int = 0
    clamped: np.ndarray | None = None

    def __post_init__(self):
        x = np.array(self.states, dtype=float).reshape(-1)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if x.shape != w.shape or x.size == 0:
            raise ValidationError("states and weights must be equal-length and non-empty")
        if np.any(x < 0) or not np.all(np.isfinite(x)):
            raise ValidationError("particle states must be finite and non-negative")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValidationError("weights must be non-negative and sum to 1")
        c = np.zeros(x.size, bool) if self.clamped is None else np.array(self.clamped, bool)
        for arr in (x, w, c):
            arr.flags.writeable = False
        object.__setattr__(self, "states", x)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "clamped", c)
        object.__setattr__(self, "cycle", float(self.cycle))

    def __len__(self) -> int:
        return self.states.size


@dataclass(frozen=True)
class Observation:
    cycle: float
    crack_estimate_mm: float

    def __post_init__(self):
        if not (math.isfinite(self.crack_estimate_mm) and self.crack_estimate_mm >= 0):
            raise ValidationError("observation must be a finite non-negative crack length")
        if not (math.isfinite(self.cycle) and self.cycle >= 0):
            raise ValidationError("observation cycle must be finite and non-negative")


@dataclass(frozen=True)
class FilterRow:
    cycle: float
    mean: float
    lower_90: float
    upper_90: float
    observed: bool


@dataclass(frozen=True)
class FilterResult:
    rows: tuple[FilterRow, ...]
    selection: CurveSelection
    move_params: ParisParams  # move function used for the forecast
    refit: bool

    @property
    def filtered(self) -> tuple[FilterRow, ...]:
        return tuple(r for r in self.rows if r.observed)

    @property
    def predicted(self) -> tuple[FilterRow, ...]:
        return tuple(r for r in self.rows if not r.observed)


def _rng(config: PFConfig, generation: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([config.seed, generation, purpose]))


def _check_cycle_range(dist: GrowthPathDistribution, at_cycle: float) -> None:
    hi = float(min(dist.quantile_cycles[k][-1] for k in ("mean", "lower5", "upper95")))
    if not 0 <= at_cycle <= hi:
        raise ValidationError(f"cycle {at_cycle} outside the growth-path range [0, {hi:.6g}]")


def init_particles(dist: GrowthPathDistribution, at_cycle: float,
                   config: PFConfig = PFConfig()) -> ParticleEnsemble:
    """Gaussian particles centred on the mean curve, spread from the 5%/95% curves."""
    _check_cycle_range(dist, at_cycle)
    mean = float(dist.crack_at("mean", [at_cycle])[0])
    lo = float(dist.crack_at("lower5", [at_cycle])[0])
    hi = float(dist.crack_at("upper95", [at_cycle])[0])
    std = abs(lo - hi) / (2 * Z95)
    n = config.n_particles
    x = mean + std * _rng(config, 0, 0).standard_normal(n)
    x = np.clip(x, config.a_min, _cap(dist.geometry.half_width_b_mm))
    return ParticleEnsemble(at_cycle, x, np.full(n, 1.0 / n), generation=0)


def propagate(ens: ParticleEnsemble, params: ParisParams, loading: LoadingSpec,
              geom: GeometrySpec, to_cycle: float, config: PFConfig = PFConfig()) -> ParticleEnsemble:
    """Move every particle through the Paris law, then add non-shrinking process noise."""
    if not to_cycle > ens.cycle:
        raise ValidationError(f"to_cycle {to_cycle} must exceed ensemble cycle {ens.cycle}")
    a, hit = advance_many(ens.states, params, loading, geom, ens.cycle, to_cycle,
                          step=config.step)
    gen = ens.generation + 1
    if config.process_noise_std > 0:
        sd = config.process_noise_std * math.sqrt((to_cycle - ens.cycle) / NOISE_REFERENCE_CYCLES)
        a = a + sd * _rng(config, gen, 1).standard_normal(a.size)
    cap = _cap(geom.half_width_b_mm)
    hit = hit | (a >= cap) | ens.clamped
    a = np.where(hit, cap, np.maximum(a, ens.states))
    return ParticleEnsemble(to_cycle, a, ens.weights, gen, hit)


def effective_sample_size(ens: ParticleEnsemble) -> float:
    return float(1.0 / np.sum(ens.weights**2))


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn with one uniform offset and evenly spaced pointers."""
    n = weights.size
    positions = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, positions, side="right")


def update(ens: ParticleEnsemble, obs: Observation, config: PFConfig = PFConfig()) -> ParticleEnsemble:
    """Bayes reweighting with a Gaussian likelihood, then resample if ESS is low."""
    if not math.isclose(obs.cycle, ens.cycle, rel_tol=0, abs_tol=1e-9):
        raise ValidationError(f"observation at cycle {obs.cycle} but ensemble at {ens.cycle}")
    x = ens.states
    r = x - obs.crack_estimate_mm
    if config.obs_noise_std > 0:
        loglik = -0.5 * (r / config.obs_noise_std) ** 2
    else:
        loglik = np.where(r == 0, 0.0, -np.inf)
    # exp() of anything below about -745 is 0 in double precision
    if not loglik.max() > -745.0:
        raise NumericalError("observation incompatible with ensemble")
    with np.errstate(divide="ignore"):
        logw = np.log(ens.weights) + loglik
    top = logw.max()
    if not np.isfinite(top):
        raise NumericalError("observation incompatible with ensemble")
    w = np.exp(logw - top)
    w /= w.sum()
    out = ParticleEnsemble(ens.cycle, x, w, ens.generation, ens.clamped)
    if effective_sample_size(out) < config.resample_threshold * len(out):
        gen = ens.generation + 1
        idx = systematic_resample(w, _rng(config, gen, 2))
        n = len(out)
        out = ParticleEnsemble(ens.cycle, x[idx], np.full(n, 1.0 / n), gen, ens.clamped[idx])
    return out


def estimate(ens: ParticleEnsemble) -> tuple[float, float, float]:
    """Weighted mean and weighted 5%/95% empirical quantiles."""
    x, w = ens.states, ens.weights
    order = np.argsort(x, kind="stable")
    xs, cw = x[order], np.cumsum(w[order])
    cw[-1] = 1.0

    def q(p):
        return float(xs[min(int(np.searchsorted(cw, p - 1e-12, side="left")), xs.size - 1)])

    return float(np.dot(w, x)), q(0.05), q(0.95)


def _pseudo_curve(rows: Sequence[FilterRow]) -> CrackGrowthCurve:
    return CrackGrowthCurve(np.array([r.cycle for r in rows]), np.array([r.mean for r in rows]))


def run_filter(dist: GrowthPathDistribution, observations: Sequence[Observation],
               prediction_cycles: Sequence[float], loading: LoadingSpec, geom: GeometrySpec,
               config: PFConfig = PFConfig(), refit: bool = False,
               params_selector: Callable = select_growth_curve,
               start_cycle: float = 0.0, refit_fixed_m: bool = True) -> FilterResult:
    """Filter through the observations, then forecast open-loop.

    The move function is the quantile curve chosen by ``params_selector`` from
    the observations. With ``refit`` it is replaced before the forecast by a
    Paris fit to the filtered means (needs at least three observations),
    anchored at the last filtered point; ``refit_fixed_m`` keeps the chosen
    curve's exponent and refits ``C`` only.
    Without observations the ensemble starts at ``start_cycle`` on the mean
    curve and is only propagated.
    """
    obs = list(observations)
    preds = [float(c) for c in prediction_cycles]
    if any(b.cycle <= a.cycle for a, b in zip(obs[:-1], obs[1:])):
        raise ValidationError("observations must be strictly increasing in cycle")
    if any(b <= a for a, b in zip(preds[:-1], preds[1:])):
        raise ValidationError("prediction cycles must be strictly increasing")
    t0 = obs[-1].cycle if obs else start_cycle
    if preds and preds[0] <= t0:
        raise ValidationError("prediction cycles must come after the last observation")

    if obs:
        selection = params_selector(dist, [(o.cycle, o.crack_estimate_mm) for o in obs])
    else:
        p = dist.params("mean")
        selection = CurveSelection("mean", p, {}, {})
    move = selection.params

    rows: list[FilterRow] = []
    ens = init_particles(dist, obs[0].cycle if obs else start_cycle, config)
    for i, o in enumerate(obs):
        if i:
            ens = propagate(ens, move, loading, geom, o.cycle, config)
        ens = update(ens, o, config)
        rows.append(FilterRow(o.cycle, *estimate(ens), observed=True))

    did_refit = False
    if refit and len(rows) >= 3:
        move = fit_paris(_pseudo_curve(rows), loading, geom, initial=move,
                         fixed_m=move.m if refit_fixed_m else None,
                         anchor="last")
        did_refit = True
    for c in preds:
        ens = propagate(ens, move, loading, geom, c, config)
        rows.append(FilterRow(c, *estimate(ens), observed=False))
    return FilterResult(tuple(rows), selection, move, did_refit)


def open_loop_forecast(dist: GrowthPathDistribution, cycles: Sequence[float],
                       which: str = "mean") -> np.ndarray:
    """Physics-only prediction: a quantile curve of the growth-path distribution."""
    return dist.crack_at(which, cycles)


@dataclass(frozen=True)
class TuningCase:
    """A training test seen through the network: estimates vs known lengths."""

    cycles: np.ndarray
    truth_mm: np.ndarray
    estimates_mm: np.ndarray
    loading: LoadingSpec | None = None

    def __post_init__(self):
        c = np.asarray(self.cycles, float)
        if not (c.shape == np.shape(self.truth_mm) == np.shape(self.estimates_mm)):
            raise ValidationError("tuning case arrays must have equal length")


DEFAULT_NOISE_GRID = tuple(
    (w, v) for w in (0.01, 0.03, 0.1, 0.3) for v in (0.05, 0.1, 0.2, 0.4, 0.8)
)


def tune_noise(dist: GrowthPathDistribution, training_tests: Sequence[TuningCase],
               grid: Sequence[tuple[float, float]] = DEFAULT_NOISE_GRID,
               config: PFConfig = PFConfig(), n_observed: int = 4,
               geom: GeometrySpec | None = None) -> tuple[float, float]:
    """Grid point with the lowest forecast RMSE over the training tests.

    Each test is filtered (with refit) on its first ``n_observed`` estimates and
    scored on its remaining known crack lengths. Ties go to the smaller
    process noise, then the smaller observation noise.
    """
    grid = [(float(w), float(v)) for w, v in grid]
    if not grid:
        raise ValidationError("empty noise grid")
    geom = dist.geometry if geom is None else geom
    usable = [t for t in training_tests if len(t.cycles) > n_observed]
    if len(grid) == 1:
        return grid[0]
    if not usable:
        raise ValidationError(f"no training test has more than {n_observed} measurements")
    scores = []
    for w, v in grid:
        cfg = PFConfig(config.n_particles, w, v, config.resample_threshold, config.seed,
                       config.a_min, config.step)
        sq, cnt = 0.0, 0
        for t in usable:
            obs = [Observation(float(c), max(float(e), 0.0))
                   for c, e in zip(t.cycles[:n_observed], t.estimates_mm[:n_observed])]
            later = np.asarray(t.cycles[n_observed:], float)
            try:
                res = run_filter(dist, obs, later, t.loading or dist.loading, geom, cfg, refit=True)
            except NumericalError:
                sq, cnt = math.inf, 1
                break
            pred = np.array([r.mean for r in res.predicted])
            sq += float(np.sum((pred - np.asarray(t.truth_mm[n_observed:], float)) ** 2))
            cnt += later.size
        scores.append((math.sqrt(sq / cnt), w, v))
    return min(scores)[1:]
