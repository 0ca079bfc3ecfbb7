from __future__ import annotations

import pytest

from chainvqa.config import PRESETS, RunConfig, load_config, read_config_file
from chainvqa.errors import ConfigError


def test_desk_defaults():
    config = load_config(env={})
    assert config.preset == "desk"
    assert (config.gvr.d_q, config.gvr.heads, config.gvr.k) == (64, 4, 5)
    assert config.encoder.max_len == 14
    assert config.train.patience == 3
    assert config.sqs.overlap_threshold == 0.5
    assert config.questioner.session_dim == config.questioner.hidden + config.questioner.embed_dim


def test_paper_preset_dimensions():
    config = load_config("paper", env={})
    assert (config.gvr.d_q, config.gvr.heads, config.gvr.k) == (768, 8, 15)
    assert config.gvr.d_h == 96
    assert config.encoder.fixed_lr == 5e-5
    assert config.questioner.embed_dim == 300
    assert config.synthetic.feature_width == 2048


def test_unknown_preset():
    with pytest.raises(ConfigError):
        load_config("huge", env={})
    assert set(PRESETS) == {"desk", "paper"}


def test_file_env_and_override_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# tiny run\n"
        "train.epochs = 3\n"
        "train.batch_size = 4  # small batches\n"
        "synthetic.labels = dog, cat, cup\n"
    )
    env = {"CHAINVQA_TRAIN_EPOCHS": "5", "CHAINVQA_ANSWERER_USE_SUB_LOSS": "false"}

    config = load_config(path=path, env=env, overrides=["train.epochs=7"])
    assert config.train.epochs == 7
    assert config.train.batch_size == 4
    assert config.synthetic.labels == ["dog", "cat", "cup"]
    assert config.answerer.use_sub_loss is False

    from_env = load_config(path=path, env=env)
    assert from_env.train.epochs == 5


def test_env_is_read_from_process_environment(monkeypatch):
    monkeypatch.setenv("CHAINVQA_TRAIN_SEED", "11")
    assert load_config().train.seed == 11


def test_optional_value_is_cast():
    config = load_config(env={}, overrides=["encoder.fixed_lr=1e-4"])
    assert config.encoder.fixed_lr == 1e-4
    assert load_config(env={}, overrides=["encoder.fixed_lr=none"]).encoder.fixed_lr is None


@pytest.mark.parametrize(
    "override",
    ["train.nope=1", "nosection.key=1", "epochs=3", "train.epochs=three", "train.epochs"],
)
def test_bad_keys_and_values(override):
    with pytest.raises(ConfigError):
        load_config(env={}, overrides=[override])


@pytest.mark.parametrize(
    "override",
    [
        "gvr.heads=3",          # 64 not divisible by 3
        "gvr.d_v=32",           # residual chain needs d_q == d_v
        "train.sqs_source=oracle",
        "train.epochs=30",      # past the schedule
        "synthetic.train_scenes=600",
    ],
)
def test_cross_field_validation(override):
    with pytest.raises(ConfigError):
        load_config(env={}, overrides=[override])


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "missing.cfg")
    bad = tmp_path / "bad.cfg"
    bad.write_text("train.epochs 3\n")
    with pytest.raises(ConfigError):
        read_config_file(bad)


def test_config_hash_is_stable_and_sensitive():
    a = load_config(env={})
    b = RunConfig()
    assert a.config_hash() == b.config_hash()
    assert len(a.config_hash()) == 64
    assert load_config(env={}, overrides=["train.seed=1"]).config_hash() != a.config_hash()
