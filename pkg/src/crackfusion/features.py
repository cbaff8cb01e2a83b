"""Damage features of the second received window relative to a zero-crack baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dsp import (
    FrequencyBand,
    Signal,
    bandpass_filter,
    burst_template,
    extract_window,
    locate_windows,
    pearson,
)
from .errors import ValidationError

DEFAULT_BINS = 64
FEATURE_NAMES = ("rho", "delta_phase", "energy_ratio", "entropy")


@dataclass(frozen=True, eq=False)
class Baseline:
    reference_window: Signal
    actuation_energy: float
    reference_phase: float
    carrier_bin: int

    def __post_init__(self):
        if not self.actuation_energy > 0:
            raise ValidationError("baseline actuation energy must be positive")


@dataclass(frozen=True)
class FeatureVector:
    rho: float
    delta_phase: float
    energy_ratio: float
    entropy: float

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise ValidationError("non-finite feature")
        if self.entropy < 0 or self.energy_ratio < 0:
            raise ValidationError("entropy and energy ratio must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.rho, self.delta_phase, self.energy_ratio, self.entropy])


def energy(s: Signal) -> float:
    """Discrete signal energy, sum of x^2 dt, in V^2 s."""
    x = s.samples
    return float(np.dot(x, x) * s.dt)


def wrap_phase(phi: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    return math.pi - (math.pi - phi) % (2 * math.pi)


def carrier_bin_of(s: Signal) -> int:
    mag = np.abs(np.fft.rfft(s.samples))
    return int(np.argmax(mag[1:])) + 1


def dft_phase(s: Signal, k: int) -> float:
    """Phase of the ``k``-th DFT coefficient (delay gives negative phase)."""
    n = len(s)
    if not 0 <= k <= n // 2:
        raise ValidationError(f"carrier bin {k} outside spectrum of a {n}-sample window")
    coeff = np.fft.rfft(s.samples)[k]
    if abs(coeff) <= 1e-12 * max(1.0, float(np.sum(np.abs(s.samples)))):
        raise ValidationError("no carrier content")
    return float(np.angle(coeff))


def energy_ratio(received_window: Signal, baseline: Baseline) -> float:
    return energy(received_window) / baseline.actuation_energy


def phase_change(window: Signal, baseline: Baseline) -> float:
    return wrap_phase(dft_phase(window, baseline.carrier_bin) - baseline.reference_phase)


def information_entropy(s: Signal, bins: int = DEFAULT_BINS) -> float:
    """Shannon entropy (nats) of the voltage histogram over ``[min, max]``.

    Uses the non-negative convention sum P ln(1/P); a constant trace gives 0.
    """
    if bins < 2:
        raise ValidationError("bins must be >= 2")
    x = s.samples
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return 0.0
    idx = np.floor((x - lo) / (hi - lo) * bins).astype(np.int64)
    np.clip(idx, 0, bins - 1, out=idx)
    counts = np.bincount(idx, minlength=bins)
    p = counts[counts > 0] / x.size
    h = float(-np.sum(p * np.log(p)))
    return min(max(h, 0.0), math.log(bins))


def build_baseline(
    actuation: Signal, received: Signal, band: FrequencyBand, template_energy: float = 0.98
) -> Baseline:
    """Baseline from a zero-crack signal pair (both raw; denoised here)."""
    act = bandpass_filter(actuation, band)
    rec = bandpass_filter(received, band)
    template = burst_template(act, energy_fraction=template_energy)
    wp = locate_windows(template, rec)
    ref = extract_window(rec, wp.second_start, wp.length)
    k = carrier_bin_of(template)
    return Baseline(
        reference_window=ref,
        actuation_energy=energy(template),
        reference_phase=dft_phase(ref, k),
        carrier_bin=k,
    )


def second_window(
    actuation: Signal, received: Signal, band: FrequencyBand, length: int,
    template_energy: float = 0.98,
) -> Signal:
    """Denoise a pair and return the later of the two correlated windows."""
    act = bandpass_filter(actuation, band)
    rec = bandpass_filter(received, band)
    template = burst_template(act, length=length, energy_fraction=template_energy)
    wp = locate_windows(template, rec)
    return extract_window(rec, wp.second_start, wp.length)


def features_of_window(window: Signal, baseline: Baseline, bins: int = DEFAULT_BINS) -> FeatureVector:
    return FeatureVector(
        rho=pearson(baseline.reference_window.samples, window.samples),
        delta_phase=phase_change(window, baseline),
        energy_ratio=energy_ratio(window, baseline),
        entropy=information_entropy(window, bins),
    )


def extract_features(
    pair: tuple[Signal, Signal],
    baseline: Baseline,
    band: FrequencyBand,
    bins: int = DEFAULT_BINS,
) -> FeatureVector:
    """Feature vector (rho, delta_phase, energy_ratio, entropy) of one measurement."""
    actuation, received = pair
    window = second_window(actuation, received, band, len(baseline.reference_window))
    return features_of_window(window, baseline, bins)
