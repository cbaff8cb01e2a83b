import csv
import json

import numpy as np
import pytest

from crackfusion import pipeline
from crackfusion.cli import main
from crackfusion.config import config_from_dict
from crackfusion.errors import ValidationError
from crackfusion.features import FeatureVector

SMALL_TOML = """
[simulate]
n_training = 4
[train]
max_epochs = 2000
[pf]
n_particles = 200
[tune]
grid = [[0.03, 0.2], [0.1, 0.4]]
n_particles = 100
"""

STAGES = ["simulate", "denoise", "windows", "features", "fit-paris", "train", "predict",
          "evaluate", "plot-data"]


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.toml"
    cfg.write_text(SMALL_TOML)
    out = root / "run"
    for stage in STAGES:
        assert main(["--config", str(cfg), "--seed", "3", "--out", str(out), stage]) == 0, stage
    return cfg, out


def test_stage_outputs(run):
    _, out = run
    for name in ("dataset/manifest.json", "dataset/truth.csv", "band.json", "denoise.csv",
                 "windows.csv", "features.csv", "paris.json", "model.json", "loss_history.csv",
                 "predictions/T5.csv", "predictions/T5.json", "predictions/T6.csv",
                 "evaluation.json", "plot_data.csv"):
        assert (out / name).is_file(), name
    den = dict(csv.reader(open(out / "denoise.csv")))
    assert float(den["bandpass"]) > float(den["raw"])
    ev = json.loads((out / "evaluation.json").read_text())
    assert set(ev["tests"]) == {"T5", "T6"}
    side = json.loads((out / "predictions/T6.json").read_text())
    assert side["refit"] is False  # variable amplitude keeps the selected curve
    assert len(side["observations"]) == 5
    paris = json.loads((out / "paris.json").read_text())
    assert set(paris["width_fit"]["weakly_identified"]) == {"T1", "T2", "T3", "T4"}


def test_features_never_leak_validation_labels(run):
    _, out = run
    rows = pipeline.read_features(out / "features.csv")
    assert {r.test for r in rows} == {"T1", "T2", "T3", "T4", "T5", "T6"}
    assert all(r.crack_length_mm is None for r in rows if r.test in ("T5", "T6"))


def test_predict_single_test_is_repeatable(run, tmp_path):
    cfg, out = run
    before = (out / "predictions/T5.csv").read_bytes()
    assert main(["--config", str(cfg), "--seed", "3", "--out", str(out), "predict",
                 "--test", "T5"]) == 0
    assert (out / "predictions/T5.csv").read_bytes() == before


def test_exit_code_missing_inputs(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "features"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "validation" and "manifest" in err["message"]


def test_exit_code_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[train]\nlr = 1\n")
    assert main(["--config", str(bad), "--out", str(tmp_path), "simulate"]) == 2
    assert "unknown keys" in json.loads(capsys.readouterr().err)["message"]


def test_exit_code_usage(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "no-such-stage"]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "usage"


def test_exit_code_numerical(run, tmp_path, capsys, monkeypatch):
    from crackfusion.errors import NumericalError

    def boom(*a, **k):
        raise NumericalError("observation incompatible with ensemble")

    cfg, out = run
    monkeypatch.setattr(pipeline, "run_filter", boom)
    assert main(["--config", str(cfg), "--out", str(out), "predict", "--test", "T5"]) == 3
    assert json.loads(capsys.readouterr().err)["error"] == "numerical"


def test_training_table_leak_guard():
    fv = FeatureVector(1.0, 0.0, 0.3, 3.9)
    rows = [pipeline.FeatureRow("T1", 0, fv, 1.0), pipeline.FeatureRow("T1", 2500, fv, 1.2),
            pipeline.FeatureRow("V", 0, fv, 1.0)]
    with pytest.raises(ValidationError, match="leaked"):
        pipeline.training_table(rows, {"T1": "training", "V": "validation"})
    X, y = pipeline.training_table(rows[:2], {"T1": "training"})
    assert X.shape == (2, 4) and y.tolist() == [1.0, 1.2]
    with pytest.raises(ValidationError, match="unknown test"):
        pipeline.training_table(rows, {"T1": "training"})


def test_score_predictions_oracle():
    s = pipeline.score_predictions([(1000, 2.0), (2000, 4.0)], [(1000, 1.0), (2000, 4.0)])
    assert s.rmse == pytest.approx(np.sqrt(0.5))
    assert s.penalized_score == pytest.approx(12.0 / 2)
    with pytest.raises(ValidationError, match="cycle mismatch"):
        pipeline.score_predictions([(1500, 2.0)], [(1000, 1.0)])


def test_distribution_json_round_trip(growth_dist):
    back = pipeline.distribution_from_json(
        json.loads(json.dumps(pipeline.distribution_to_json(growth_dist))))
    cyc = [0.0, 10_000.0, 20_000.0]
    for k in ("mean", "lower5", "upper95"):
        np.testing.assert_array_equal(back.crack_at(k, cyc), growth_dist.crack_at(k, cyc))
    with pytest.raises(ValidationError):
        pipeline.distribution_from_json({})


def test_layout_paths(tmp_path):
    lay = pipeline.Layout(tmp_path, config_from_dict({"paths": {"model": "m.json"}}))
    assert lay.model == tmp_path / "m.json" and lay.dataset == tmp_path / "dataset"
