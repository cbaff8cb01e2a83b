"""Dataset schema, on-disk formats and the synthetic fatigue-test generator.

On disk a dataset is a directory holding ``manifest.json``, one two-column
signal CSV per signal-bearing measurement under ``signals/``, and an
optional ``truth.csv`` with hidden crack lengths of validation tests.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dsp import MIN_SIGNAL_LENGTH, Signal
from .errors import ValidationError
from .fracture import GeometrySpec, ParisParams, crack_at_cycles
from .loading import LoadBlock, LoadingSpec, constant_amplitude, variable_amplitude

ROLES = ("training", "validation")


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    cycle: int
    crack_length_mm: float | None = None
    actuation: Signal | None = None
    received: Signal | None = None
    signal_file: str | None = None  # set when read from disk

    def __post_init__(self):
        if self.cycle < 0:
            raise ValidationError("cycle must be non-negative")
        if self.crack_length_mm is not None and not self.crack_length_mm >= 0:
            raise ValidationError("negative crack length")
        if (self.actuation is None) != (self.received is None):
            raise ValidationError("actuation and received must be present together")

    @property
    def has_signals(self) -> bool:
        return self.actuation is not None

    @property
    def signal_bearing(self) -> bool:
        """Whether a signal pair exists, loaded or not."""
        return self.actuation is not None or self.signal_file is not None


@dataclass(frozen=True, eq=False)
class FatigueTest:
    id: str
    loading: LoadingSpec
    measurements: tuple[MeasurementRecord, ...]
    role: str = "training"

    def __post_init__(self):
        object.__setattr__(self, "measurements", tuple(self.measurements))
        if self.role not in ROLES:
            raise ValidationError(f"test {self.id}: unknown role {self.role!r}")
        cycles = [r.cycle for r in self.measurements]
        for i in range(1, len(cycles)):
            if cycles[i] <= cycles[i - 1]:
                raise ValidationError(f"test {self.id}: non-monotone cycles at record {i}")
        if self.role == "training":
            for i, r in enumerate(self.measurements):
                if r.crack_length_mm is None:
                    raise ValidationError(f"test {self.id}: record {i} lacks a crack length")

    @property
    def cycles(self) -> np.ndarray:
        return np.array([r.cycle for r in self.measurements], dtype=float)

    @property
    def crack_lengths(self) -> np.ndarray:
        return np.array([np.nan if r.crack_length_mm is None else r.crack_length_mm
                         for r in self.measurements])


@dataclass(frozen=True, eq=False)
class Dataset:
    tests: tuple[FatigueTest, ...]
    sensor_spacing_mm: float = 161.0
    sampling_rate_hz: float = 10e6
    truth: Mapping[str, tuple[tuple[int, float], ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "tests", tuple(self.tests))
        if not any(t.role == "training" for t in self.tests):
            raise ValidationError("no training tests")
        if not self.sensor_spacing_mm > 0:
            raise ValidationError("sensor_spacing_mm must be positive")
        ids = [t.id for t in self.tests]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate test ids")

    def test(self, test_id: str) -> FatigueTest:
        for t in self.tests:
            if t.id == test_id:
                return t
        raise ValidationError(f"unknown test {test_id!r}")

    @property
    def training(self) -> list[FatigueTest]:
        return [t for t in self.tests if t.role == "training"]

    @property
    def validation(self) -> list[FatigueTest]:
        return [t for t in self.tests if t.role == "validation"]


# ------------------------------------------------------------------ files

def _loading_to_json(ld: LoadingSpec) -> dict:
    return {
        "blocks": [{"sigma_max": b.sigma_max, "sigma_min": b.sigma_min,
                    "cycles": "repeat-forever" if b.cycles is None else b.cycles}
                   for b in ld.blocks],
        "frequency_hz": ld.frequency_hz,
    }


def _loading_from_json(d: dict) -> LoadingSpec:
    blocks = []
    for b in d["blocks"]:
        c = b["cycles"]
        blocks.append(LoadBlock(float(b["sigma_max"]), float(b["sigma_min"]),
                                None if c in (None, "repeat-forever") else int(c)))
    return LoadingSpec(tuple(blocks), float(d.get("frequency_hz", 5.0)))


def _signal_name(test_id: str, cycle: int) -> str:
    return f"signals/{test_id}_{cycle:08d}.csv"


def write_signal_csv(path: Path, actuation: Signal, received: Signal) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("actuation,received\n")
        for x, y in zip(actuation.samples.tolist(), received.samples.tolist()):
            fh.write(f"{x!r},{y!r}\n")


def read_signal_csv(path: Path, rate: float, where: str) -> tuple[Signal, Signal]:
    if not path.is_file():
        raise ValidationError(f"{where}: missing signal file {path.name}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["actuation", "received"]:
            raise ValidationError(f"{where}: bad signal header in {path.name}")
        act, rec = [], []
        for line_no, row in enumerate(reader, start=2):
            try:
                x, y = row
                act.append(float(x))
                rec.append(float(y))
            except ValueError:
                raise ValidationError(f"{where}: malformed row {line_no} in {path.name}") from None
    if len(act) < MIN_SIGNAL_LENGTH:
        raise ValidationError(f"{where}: signal too short ({len(act)} samples)")
    return Signal(np.array(act), rate), Signal(np.array(rec), rate)


def save_dataset(ds: Dataset, root) -> Path:
    root = Path(root)
    (root / "signals").mkdir(parents=True, exist_ok=True)
    tests = []
    for t in ds.tests:
        recs = []
        for r in t.measurements:
            entry = {"cycle": int(r.cycle), "crack_length_mm": r.crack_length_mm,
                     "signal_file": None}
            if r.has_signals:
                name = _signal_name(t.id, r.cycle)
                write_signal_csv(root / name, r.actuation, r.received)
                entry["signal_file"] = name
            recs.append(entry)
        tests.append({"id": t.id, "role": t.role, "loading": _loading_to_json(t.loading),
                      "measurements": recs})
    manifest = {"format_version": 1, "sensor_spacing_mm": ds.sensor_spacing_mm,
                "sampling_rate_hz": ds.sampling_rate_hz, "tests": tests}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    truth_path = root / "truth.csv"
    if ds.truth:
        with open(truth_path, "w", newline="") as fh:
            fh.write("test,cycle,crack_length_mm\n")
            for tid in sorted(ds.truth):
                for cyc, a in ds.truth[tid]:
                    fh.write(f"{tid},{int(cyc)},{float(a)!r}\n")
    elif truth_path.exists():
        truth_path.unlink()
    return root


def load_truth(path) -> dict[str, tuple[tuple[int, float], ...]]:
    out: dict[str, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["test", "cycle", "crack_length_mm"]:
            raise ValidationError(f"bad truth header in {path}")
        for i, row in enumerate(reader):
            try:
                out.setdefault(row["test"], []).append(
                    (int(row["cycle"]), float(row["crack_length_mm"])))
            except (TypeError, ValueError):
                raise ValidationError(f"malformed truth row {i}") from None
    return {k: tuple(v) for k, v in out.items()}


def load_dataset(root_path, with_signals: bool = True) -> Dataset:
    """Read and validate a dataset directory.

    ``with_signals=False`` reads only the manifest (records keep no signals).
    """
    root = Path(root_path)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise ValidationError(f"missing manifest {mpath}")
    try:
        man = json.loads(mpath.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"malformed manifest: {e}") from None
    try:
        rate = float(man["sampling_rate_hz"])
        spacing = float(man["sensor_spacing_mm"])
        raw_tests = man["tests"]
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"malformed manifest: missing {e}") from None
    tests = []
    for t in raw_tests:
        tid = str(t.get("id"))
        try:
            loading = _loading_from_json(t["loading"])
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"test {tid}: malformed loading ({e})") from None
        recs = []
        for i, m in enumerate(t.get("measurements", [])):
            where = f"test {tid} record {i}"
            try:
                cycle = int(m["cycle"])
                a = m.get("crack_length_mm")
                a = None if a is None else float(a)
                sig = m["signal_file"]
            except (KeyError, TypeError, ValueError):
                raise ValidationError(f"{where}: malformed row") from None
            if a is not None and a < 0:
                raise ValidationError(f"{where}: negative crack length")
            if cycle < 0:
                raise ValidationError(f"{where}: negative cycle")
            act = rec = None
            if sig is not None and with_signals:
                act, rec = read_signal_csv(root / sig, rate, where)
            recs.append(MeasurementRecord(cycle, a, act, rec, sig))
        for i in range(1, len(recs)):
            if recs[i].cycle <= recs[i - 1].cycle:
                raise ValidationError(f"test {tid} record {i}: non-monotone cycles")
        tests.append(FatigueTest(tid, loading, tuple(recs), str(t.get("role"))))
    truth = {}
    if (root / "truth.csv").is_file():
        truth = load_truth(root / "truth.csv")
    return Dataset(tuple(tests), spacing, rate, truth)


PREDICTION_HEADER = ("cycle", "crack_length_mm", "lower_90", "upper_90")


def save_predictions(predictions: Sequence[tuple[float, float, float, float]], path) -> None:
    """Prediction CSV with 6-decimal fixed-point values."""
    rows = list(predictions)
    for i in range(1, len(rows)):
        if rows[i][0] <= rows[i - 1][0]:
            raise ValidationError("prediction cycles must be increasing")
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(PREDICTION_HEADER) + "\n")
            for cyc, a, lo, hi in rows:
                fh.write(f"{cyc:.6f},{a:.6f},{lo:.6f},{hi:.6f}\n")
    except OSError as e:
        raise ValidationError(f"cannot write predictions to {path}: {e}") from None


def load_predictions(path) -> list[tuple[float, float, float, float]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader, ())) != PREDICTION_HEADER:
            raise ValidationError(f"bad prediction header in {path}")
        return [tuple(float(v) for v in row) for row in reader]


# -------------------------------------------------------------- synthesis

@dataclass
class SignalModel:
    """Tone-burst propagation model used to fabricate ultrasonic pairs.

    The received trace holds a direct arrival and a later echo, both copies of
    the actuation burst. With crack length ``a`` the echo is scaled by
    ``exp(-attenuation_per_mm a)``, its carrier phase is retarded by
    ``phase_per_mm a`` and a fraction ``spread_per_mm a`` of it is split into
    two copies advanced and delayed by ``spread_delay_periods`` carrier
    periods (symmetric multipath, so the correlation peak does not move);
    the direct arrival sees
    ``direct_sensitivity`` times those effects.
    """

    sampling_rate_hz: float = 10e6
    n_samples: int = 4096
    carrier_hz: float = 200e3
    burst_cycles: int = 5
    amplitude_v: float = 1.0
    actuation_delay_s: float = 5e-6
    direct_delay_s: float = 60e-6
    echo_delay_s: float = 170e-6
    echo_amplitude: float = 0.6
    attenuation_per_mm: float = 0.03
    phase_per_mm: float = 0.002
    spread_per_mm: float = 0.03
    spread_delay_periods: float = 1.0
    direct_sensitivity: float = 0.2
    actuation_noise: float = 0.2  # std relative to the clean actuation RMS
    received_noise: float = 0.5  # std relative to the clean zero-crack received RMS


@dataclass
class SynthConfig:
    C: float = 8e-12
    m: float = 3.0
    b_mm: float = 39.0
    c_scatter: float = 0.2  # std of log C across tests
    a0_mm: float = 1.0
    n_training: int = 6
    n_validation: int = 2
    variable_amplitude_validation: bool = True
    loading: LoadingSpec = field(default_factory=constant_amplitude)
    measure_interval: int = 2500
    a_stop_mm: float = 25.0
    validation_signal_counts: tuple[int, ...] = (4, 5)
    validation_prediction_counts: tuple[int, ...] = (8, 10)
    validation_c_factors: tuple[float, ...] | None = None  # fixed C multipliers
    retardation: float = 1.0
    sensor_spacing_mm: float = 161.0
    step: float = 25.0
    signals: SignalModel = field(default_factory=SignalModel)

    def __post_init__(self):
        for name in ("a0_mm", "C", "m", "b_mm"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")


def _hann_burst(t: np.ndarray, f: float, ncyc: int, phase: float = 0.0) -> np.ndarray:
    dur = ncyc / f
    inside = (t >= 0) & (t < dur)
    env = np.where(inside, 0.5 * (1 - np.cos(2 * np.pi * t / dur)), 0.0)
    return env * np.sin(2 * np.pi * f * t - phase)


class _SignalFactory:
    def __init__(self, model: SignalModel, seed: int):
        self.m = model
        fs = model.sampling_rate_hz
        self.t = np.arange(model.n_samples) / fs
        self.act_clean = model.amplitude_v * _hann_burst(
            self.t - model.actuation_delay_s, model.carrier_hz, model.burst_cycles)
        self.act_rms = float(np.sqrt(np.mean(self.act_clean**2)))
        self.rec_rms0 = float(np.sqrt(np.mean(self.received_clean(0.0) ** 2)))

    def arrival(self, delay: float, a: float, gain: float) -> np.ndarray:
        m = self.m
        att = math.exp(-m.attenuation_per_mm * a * gain)
        ph = m.phase_per_mm * a * gain
        w = min(m.spread_per_mm * a * gain, 0.9)
        s = m.spread_delay_periods / m.carrier_hz
        f, nc = m.carrier_hz, m.burst_cycles
        x = (1 - w) * _hann_burst(self.t - delay, f, nc, ph)
        if w:
            x = x + 0.5 * w * (_hann_burst(self.t - delay - s, f, nc, ph)
                               + _hann_burst(self.t - delay + s, f, nc, ph))
        return att * x

    def received_clean(self, a: float) -> np.ndarray:
        m = self.m
        direct = self.arrival(m.direct_delay_s, a, m.direct_sensitivity)
        echo = m.echo_amplitude * self.arrival(m.echo_delay_s, a, 1.0)
        return m.amplitude_v * (direct + echo)

    def pair(self, a: float, rng: np.random.Generator) -> tuple[Signal, Signal]:
        m = self.m
        act = self.act_clean + rng.normal(0.0, m.actuation_noise * self.act_rms, self.t.size)
        rec = self.received_clean(a) + rng.normal(0.0, m.received_noise * self.rec_rms0,
                                                  self.t.size)
        return Signal(act, m.sampling_rate_hz), Signal(rec, m.sampling_rate_hz)


def _growth_schedule(cfg: SynthConfig, C: float, loading: LoadingSpec, n_points: int | None):
    """Measurement cycles and crack lengths for one test."""
    geom = GeometrySpec(cfg.b_mm)
    p = ParisParams(C, cfg.m)
    if n_points is None:
        cycles, a = [0], [cfg.a0_mm]
        n = 0
        while True:
            n += cfg.measure_interval
            val, lim = crack_at_cycles(cfg.a0_mm, p, loading, geom, 0, [n], step=cfg.step,
                                       retardation=cfg.retardation)
            if lim or val[0] > cfg.a_stop_mm:
                break
            cycles.append(n)
            a.append(float(val[0]))
        return np.array(cycles), np.array(a)
    # fast tests get a shorter interval so every point stays below a_stop
    interval = cfg.measure_interval
    while True:
        cycles = np.arange(n_points) * interval
        vals, lim = crack_at_cycles(cfg.a0_mm, p, loading, geom, 0, cycles, step=cfg.step,
                                    retardation=cfg.retardation)
        if not lim and vals[-1] <= cfg.a_stop_mm:
            return cycles, vals
        interval = int(interval * 0.9 // 100 * 100)
        if interval < 100:
            raise ValidationError("synthetic validation test reaches the geometry limit; "
                                  "lower C or the number of points")


def synthesize_dataset(config: SynthConfig | None = None, seed: int = 0) -> Dataset:
    """Fabricate a fatigue-test dataset with exact Paris-law crack histories.

    Per-test C is lognormal around the nominal value; every signal is drawn
    from :class:`SignalModel`. Deterministic for a fixed seed.
    """
    cfg = config or SynthConfig()
    if cfg.n_training + cfg.n_validation < 1:
        raise ValidationError("no tests requested")
    if cfg.n_training < 1:
        raise ValidationError("no training tests")
    factory = _SignalFactory(cfg.signals, seed)
    root = np.random.SeedSequence([seed, 0xC7AC])
    test_seqs = root.spawn(cfg.n_training + cfg.n_validation)
    tests, truth = [], {}
    for i in range(cfg.n_training + cfg.n_validation):
        rng = np.random.default_rng(test_seqs[i])
        training = i < cfg.n_training
        j = i - cfg.n_training
        z = rng.standard_normal()
        if not training and cfg.validation_c_factors is not None:
            C = cfg.C * cfg.validation_c_factors[j % len(cfg.validation_c_factors)]
        else:
            C = cfg.C * math.exp(cfg.c_scatter * z)
        variable = (not training and cfg.variable_amplitude_validation
                    and j == cfg.n_validation - 1)
        loading = variable_amplitude(cfg.loading.frequency_hz) if variable else cfg.loading
        if training:
            tid = f"T{i + 1}"
            cycles, a = _growth_schedule(cfg, C, loading, None)
            n_sig = len(cycles)
        else:
            tid = f"T{i + 1}"
            k = j % len(cfg.validation_signal_counts)
            n_sig = cfg.validation_signal_counts[k]
            n_pts = n_sig + cfg.validation_prediction_counts[k]
            cycles, a = _growth_schedule(cfg, C, loading, n_pts)
        recs = []
        for idx, (n, ai) in enumerate(zip(cycles, a)):
            act = rec = None
            if idx < n_sig:
                act, rec = factory.pair(float(ai), rng)
            recs.append(MeasurementRecord(int(n), float(ai) if training else None, act, rec))
        tests.append(FatigueTest(tid, loading, tuple(recs),
                                 "training" if training else "validation"))
        if not training:
            truth[tid] = tuple((int(n), float(ai)) for n, ai in zip(cycles, a))
    return Dataset(tuple(tests), cfg.sensor_spacing_mm, cfg.signals.sampling_rate_hz, truth)
