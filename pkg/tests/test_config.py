import pytest

from glossnmt.config import (SCHEMA, load_config_file, resolve, train_config)
from glossnmt.errors import ConfigError
from glossnmt.training import TrainConfig


def test_defaults_agree_with_train_config():
    cfg = train_config(resolve())
    assert cfg == TrainConfig()
    assert set(SCHEMA) >= {"lr", "instruction", "alpha_strategy", "theta"}


def test_file_then_flags(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("lr: 0.01\nbatch_size: 4\ninstruction: true\nalpha_strategy: constant\n"
                 "alpha_value: 0.3\nseed: 7\ntheta: [1, 2, 3, 4]\n")
    s = resolve(load_config_file(p), {"batch_size": "16", "lr": None})
    cfg = train_config(s)
    assert (cfg.lr, cfg.batch_size, cfg.seed, cfg.theta) == (0.01, 16, 7, (1.0, 2.0, 3.0, 4.0))
    assert cfg.instruction.alpha.variant == "constant" and cfg.instruction.alpha.value == 0.3


def test_json_accepted(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"dropout": 0.1, "per_layer_alpha": "yes"}')
    assert load_config_file(p) == {"dropout": 0.1, "per_layer_alpha": True}


@pytest.mark.parametrize("body, needle", [
    ("lr: 0.1\nlearning_rate: 3\n", "learning_rate"),
    ("alpha_strategy: wobbly\n", "alpha_strategy"),
    ("batch_size: many\n", "batch_size"),
    ("- 1\n- 2\n", "mapping"),
    ("lr: [\n", "YAML"),
])
def test_bad_files_name_the_problem(tmp_path, body, needle):
    p = tmp_path / "bad.yaml"
    p.write_text(body)
    with pytest.raises(ConfigError, match=needle):
        load_config_file(p)


def test_empty_file_is_defaults(tmp_path):
    p = tmp_path / "e.yaml"
    p.write_text("")
    assert resolve(load_config_file(p)) == resolve()


def test_embedding_flags_reach_the_model(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("share_embeddings: true\ntie_output: true\n")
    mc = train_config(resolve(load_config_file(p))).model_config(30)
    assert mc.share_embeddings and mc.tie_output
