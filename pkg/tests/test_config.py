import pytest

from crackfusion.config import PipelineConfig, config_from_dict, load_config
from crackfusion.errors import ValidationError


def test_defaults():
    cfg = load_config(None)
    assert cfg == PipelineConfig()
    assert cfg.train.learning_rate == 1e-3 and cfg.train.layer_sizes == (4, 10, 10, 1)
    assert cfg.pf.n_particles == 1000 and cfg.dsp.entropy_bins == 64


def test_toml_sections(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(
        "[simulate]\nn_training = 4\n[simulate.signals]\nreceived_noise = 0.3\n"
        "[train]\nmax_epochs = 10\nlayer_sizes = [4, 5, 1]\n"
        "[tune]\ngrid = [[0.1, 0.2], [0.3, 0.4]]\n"
    )
    cfg = load_config(p)
    assert cfg.simulate.n_training == 4
    assert cfg.simulate.signals.received_noise == 0.3
    assert cfg.simulate.signals.actuation_noise == 0.2
    assert cfg.train.layer_sizes == (4, 5, 1)
    assert cfg.tune.grid == ((0.1, 0.2), (0.3, 0.4))


@pytest.mark.parametrize("doc, msg", [
    ({"bogus": {}}, "unknown config sections"),
    ({"train": {"lr": 1}}, "unknown keys: lr"),
    ({"simulate": {"signals": {"nope": 1}}}, "unknown keys: nope"),
    ({"train": {"learning_rate": -1.0}}, "learning_rate"),
    ({"dsp": {"entropy_bins": 1}}, "entropy_bins"),
    ({"tune": {"grid": []}}, "empty noise grid"),
    ({"pf": 3}, "must be a table"),
])
def test_invalid(doc, msg):
    with pytest.raises(ValidationError, match=msg):
        config_from_dict(doc)


def test_file_errors(tmp_path):
    with pytest.raises(ValidationError, match="not found"):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[train\n")
    with pytest.raises(ValidationError, match="TOML"):
        load_config(bad)
