import json

import numpy as np
import pytest

from crackfusion.dataio import (
    FatigueTest,
    MeasurementRecord,
    SynthConfig,
    load_dataset,
    load_predictions,
    save_dataset,
    save_predictions,
    synthesize_dataset,
)
from crackfusion.dsp import Signal
from crackfusion.errors import ValidationError
from crackfusion.loading import constant_amplitude

SMALL = SynthConfig(n_training=3, n_validation=2)


@pytest.fixture(scope="module")
def small():
    return synthesize_dataset(SMALL, seed=7)


def test_synthesis_shape(small):
    assert [t.id for t in small.tests] == ["T1", "T2", "T3", "T4", "T5"]
    assert [t.role for t in small.tests] == ["training"] * 3 + ["validation"] * 2
    t4, t5 = small.validation
    assert t4.loading.is_constant_amplitude and not t5.loading.is_constant_amplitude
    assert sum(r.has_signals for r in t4.measurements) == 4 and len(t4.measurements) == 12
    assert sum(r.has_signals for r in t5.measurements) == 5 and len(t5.measurements) == 15
    # validation crack lengths are hidden in the truth table
    assert all(r.crack_length_mm is None for r in t4.measurements)
    assert len(small.truth["T4"]) == 12
    for t in small.training:
        assert t.measurements[0].cycle == 0 and t.crack_lengths[0] == 1.0
        assert np.all(np.diff(t.crack_lengths) > 0) and t.crack_lengths[-1] <= 25.0


def test_synthesis_is_deterministic(small):
    again = synthesize_dataset(SMALL, seed=7)
    for a, b in zip(small.tests, again.tests):
        for r, s in zip(a.measurements, b.measurements):
            assert r.cycle == s.cycle and r.crack_length_mm == s.crack_length_mm
            if r.has_signals:
                np.testing.assert_array_equal(r.received.samples, s.received.samples)
    other = synthesize_dataset(SMALL, seed=8)
    assert not np.array_equal(other.tests[0].measurements[0].received.samples,
                              small.tests[0].measurements[0].received.samples)


def test_save_load_round_trip(small, tmp_path):
    save_dataset(small, tmp_path)
    back = load_dataset(tmp_path)
    assert back.truth == small.truth
    for a, b in zip(small.tests, back.tests):
        assert (a.id, a.role, a.loading) == (b.id, b.role, b.loading)
        for r, s in zip(a.measurements, b.measurements):
            assert (r.cycle, r.crack_length_mm) == (s.cycle, s.crack_length_mm)
            if r.has_signals:
                np.testing.assert_array_equal(r.actuation.samples, s.actuation.samples)
                np.testing.assert_array_equal(r.received.samples, s.received.samples)
            assert s.signal_bearing == r.has_signals
    light = load_dataset(tmp_path, with_signals=False)
    assert not any(r.has_signals for t in light.tests for r in t.measurements)
    assert light.tests[0].measurements[0].signal_bearing


def test_load_errors(small, tmp_path):
    with pytest.raises(ValidationError, match="missing manifest"):
        load_dataset(tmp_path)
    save_dataset(small, tmp_path)
    man = json.loads((tmp_path / "manifest.json").read_text())
    sig = man["tests"][0]["measurements"][0]["signal_file"]
    (tmp_path / sig).write_text("actuation,received\n1.0,oops\n")
    with pytest.raises(ValidationError, match="malformed row 2"):
        load_dataset(tmp_path)
    (tmp_path / sig).unlink()
    with pytest.raises(ValidationError, match="missing signal file"):
        load_dataset(tmp_path)
    man["tests"][0]["measurements"][1]["cycle"] = 0
    (tmp_path / "manifest.json").write_text(json.dumps(man))
    with pytest.raises(ValidationError, match="non-monotone"):
        load_dataset(tmp_path, with_signals=False)
    (tmp_path / "manifest.json").write_text("{")
    with pytest.raises(ValidationError, match="malformed manifest"):
        load_dataset(tmp_path)


def test_record_and_test_validation():
    s = Signal(np.ones(32), 1.0)
    with pytest.raises(ValidationError):
        MeasurementRecord(-1)
    with pytest.raises(ValidationError):
        MeasurementRecord(0, -0.5)
    with pytest.raises(ValidationError):
        MeasurementRecord(0, 1.0, s, None)
    with pytest.raises(ValidationError, match="lacks a crack length"):
        FatigueTest("X", constant_amplitude(), (MeasurementRecord(0),))
    with pytest.raises(ValidationError, match="unknown role"):
        FatigueTest("X", constant_amplitude(), (), role="test")


def test_predictions_round_trip(tmp_path):
    rows = [(1000.0, 1.5, 1.2, 1.8), (2000.0, 2.123456789, 1.9, 2.4)]
    p = tmp_path / "p.csv"
    save_predictions(rows, p)
    assert p.read_text().splitlines()[2] == "2000.000000,2.123457,1.900000,2.400000"
    assert load_predictions(p)[0] == rows[0]
    with pytest.raises(ValidationError):
        save_predictions(rows[::-1], p)


def test_fast_validation_test_gets_shorter_interval():
    cfg = SynthConfig(n_training=3, n_validation=1, variable_amplitude_validation=False,
                      validation_c_factors=(3.0,))
    ds = synthesize_dataset(cfg, seed=0)
    cyc = [c for c, _ in ds.truth["T4"]]
    assert len(cyc) == 12 and cyc[1] < 2500
    assert ds.truth["T4"][-1][1] <= 25.0
