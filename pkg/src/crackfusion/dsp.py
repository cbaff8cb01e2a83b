"""Signal containers, power-spectrum bandpass denoising and window location."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NumericalError, ValidationError

MIN_SIGNAL_LENGTH = 16


@dataclass(frozen=True, eq=False)
class Signal:
    """Uniformly sampled voltage trace."""

    samples: np.ndarray
    sampling_rate_hz: float

    def __post_init__(self):
        x = np.array(self.samples, dtype=float)
        if x.ndim != 1:
            raise ValidationError("signal must be one-dimensional")
        if x.size < MIN_SIGNAL_LENGTH:
            raise ValidationError(
                f"signal too short ({x.size} samples, minimum {MIN_SIGNAL_LENGTH})"
            )
        if not np.all(np.isfinite(x)):
            raise ValidationError("signal contains non-finite samples")
        if not (self.sampling_rate_hz > 0 and np.isfinite(self.sampling_rate_hz)):
            raise ValidationError("sampling rate must be positive")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sampling_rate_hz", float(self.sampling_rate_hz))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def dt(self) -> float:
        return 1.0 / self.sampling_rate_hz


@dataclass(frozen=True)
class FrequencyBand:
    low_hz: float
    high_hz: float

    def __post_init__(self):
        if not (0.0 <= self.low_hz < self.high_hz):
            raise ValidationError(f"invalid band [{self.low_hz}, {self.high_hz}]")

    def check_rate(self, sampling_rate_hz: float) -> None:
        if self.high_hz > sampling_rate_hz / 2 * (1 + 1e-12):
            raise ValidationError("band exceeds the Nyquist frequency")


@dataclass(frozen=True)
class WindowPair:
    first_start: int
    second_start: int
    length: int
    first_corr: float
    second_corr: float


def power_spectrum(s: Signal) -> tuple[np.ndarray, np.ndarray]:
    """One-sided periodogram ``(freqs, power)``.

    Normalised so that ``power.sum()`` equals the mean square of the samples.
    """
    n = len(s)
    spec = np.fft.rfft(s.samples)
    power = np.abs(spec) ** 2 / n**2
    # fold the negative-frequency half onto the positive bins
    if n % 2 == 0:
        power[1:-1] *= 2.0
    else:
        power[1:] *= 2.0
    freqs = np.fft.rfftfreq(n, d=s.dt)
    return freqs, power


def band_from_spectrum(
    freqs: np.ndarray, power: np.ndarray, energy_fraction: float = 0.95
) -> FrequencyBand:
    """Smallest contiguous run of bins around the peak holding ``energy_fraction``.

    Among runs of equal width the one holding more power wins, then the lower one.
    Band edges sit half a bin outside the first/last kept bin centre.
    """
    if not 0.0 < energy_fraction < 1.0:
        raise ValidationError("energy_fraction must lie in (0, 1)")
    total = float(power.sum())
    if total <= 0.0:
        raise ValidationError("no dominant band")
    peak = int(np.argmax(power))  # first maximum -> lower frequency on ties
    target = energy_fraction * total
    csum = np.concatenate(([0.0], np.cumsum(power)))
    nbins = power.size
    best = None
    for lo in range(peak, -1, -1):
        # smallest hi >= peak with csum[hi + 1] - csum[lo] >= target
        need = csum[lo] + target
        hi = int(np.searchsorted(csum, need - 1e-12 * total, side="left")) - 1
        hi = max(hi, peak)
        if hi >= nbins:
            continue
        width = hi - lo + 1
        held = csum[hi + 1] - csum[lo]
        key = (width, -held, lo)
        if best is None or key < best[0]:
            best = (key, lo, hi)
    if best is None:
        raise NumericalError("no dominant band")
    _, lo, hi = best
    df = freqs[1] - freqs[0]
    low = max(0.0, freqs[lo] - df / 2)
    high = min(freqs[-1], freqs[hi] + df / 2)
    if high <= low:
        high = low + df / 2
    return FrequencyBand(float(low), float(high))


def select_band(s: Signal, energy_fraction: float = 0.95) -> FrequencyBand:
    freqs, power = power_spectrum(s)
    return band_from_spectrum(freqs, power, energy_fraction)


def select_global_band(signals: Sequence[Signal], energy_fraction: float = 0.95) -> FrequencyBand:
    """Band chosen from the average power spectrum of several equal-length signals."""
    if not signals:
        raise ValidationError("no signals to derive a band from")
    n, fs = len(signals[0]), signals[0].sampling_rate_hz
    if any(len(s) != n or s.sampling_rate_hz != fs for s in signals):
        raise ValidationError("signals must share length and sampling rate")
    spectra = [power_spectrum(s) for s in signals]
    mean_power = np.mean([p for _, p in spectra], axis=0)
    return band_from_spectrum(spectra[0][0], mean_power, energy_fraction)


def bandpass_filter(s: Signal, band: FrequencyBand) -> Signal:
    """Hard spectral mask: keep bins whose centre lies inside ``band``."""
    band.check_rate(s.sampling_rate_hz)
    n = len(s)
    spec = np.fft.rfft(s.samples)
    freqs = np.fft.rfftfreq(n, d=s.dt)
    keep = (freqs >= band.low_hz) & (freqs <= band.high_hz)
    spec[~keep] = 0.0
    return Signal(np.fft.irfft(spec, n=n), s.sampling_rate_hz)


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValidationError("pearson needs two equal-length sequences of length >= 2")
    da = a - a.mean()
    db = b - b.mean()
    sa = np.sqrt(np.dot(da, da))
    sb = np.sqrt(np.dot(db, db))
    if sa == 0.0 or sb == 0.0:
        raise ValidationError("degenerate correlation")
    r = float(np.dot(da, db) / (sa * sb))
    return min(1.0, max(-1.0, r))


def sliding_abs_correlation(template: np.ndarray, x: np.ndarray) -> np.ndarray:
    """|Pearson| of ``template`` against every length-matched window of ``x``."""
    L = template.size
    win = sliding_window_view(x, L)
    t = template - template.mean()
    tn = np.sqrt(np.dot(t, t))
    if tn == 0.0:
        raise ValidationError("degenerate correlation")
    wc = win - win.mean(axis=1, keepdims=True)
    wn = np.sqrt(np.einsum("ij,ij->i", wc, wc))
    num = wc @ t
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.abs(num) / (wn * tn)
    r[wn == 0.0] = 0.0
    return np.minimum(r, 1.0)


def locate_windows(actuation: Signal, received: Signal) -> WindowPair:
    """Two most actuation-correlated, non-overlapping windows of ``received``.

    ``actuation`` is the burst template; its length sets the window length.
    Returned windows are ordered in time.
    """
    L = len(actuation)
    if len(received) < 2 * L:
        raise ValidationError("received signal shorter than twice the actuation")
    score = sliding_abs_correlation(actuation.samples, received.samples)
    first = int(np.argmax(score))
    lags = np.arange(score.size)
    admissible = np.abs(lags - first) >= L
    if not admissible.any():
        raise ValidationError("fewer than two admissible lags")
    masked = np.where(admissible, score, -np.inf)
    second = int(np.argmax(masked))
    i, j = sorted((first, second))
    return WindowPair(i, j, L, float(score[i]), float(score[j]))


def extract_window(s: Signal, start: int, length: int) -> Signal:
    if start < 0 or length < 1 or start + length > len(s):
        raise ValidationError(
            f"window [{start}, {start + length}) outside signal of length {len(s)}"
        )
    return Signal(s.samples[start:start + length], s.sampling_rate_hz)


def burst_template(actuation: Signal, length: int | None = None,
                   energy_fraction: float = 0.98) -> Signal:
    """Cut the tone burst out of a full-length actuation trace.

    Without ``length`` the burst is the shortest contiguous run of samples
    holding ``energy_fraction`` of the trace energy; with ``length`` it is the
    length-``length`` window holding the most energy. Earlier windows win ties.
    """
    x2 = actuation.samples**2
    total = float(x2.sum())
    if total == 0.0:
        raise ValidationError("actuation signal is all zero")
    csum = np.concatenate(([0.0], np.cumsum(x2)))
    n = x2.size
    if length is None:
        need = csum[:-1] + energy_fraction * total
        ends = np.searchsorted(csum, need - 1e-12 * total, side="left")
        ok = ends <= n
        starts = np.flatnonzero(ok)
        widths = ends[ok] - starts
        best = starts[widths == widths.min()]
        held = csum[ends[best]] - csum[best]
        start = int(best[np.argmax(held)])
        length = int(ends[start] - start)
    length = min(max(length, MIN_SIGNAL_LENGTH), n)
    held = csum[length:] - csum[:-length]
    start = int(np.argmax(held))
    return extract_window(actuation, start, length)
