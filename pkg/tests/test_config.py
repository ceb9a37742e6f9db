"""Config parsing, validation, canonical echo, and overrides."""

import dataclasses

import pytest

from dictseg.config import (
    RunConfig,
    load_config,
    parse_config_text,
    save_config,
    serialize_config,
    with_overrides,
)
from dictseg.errors import ConfigError


def test_defaults_round_trip_through_text():
    cfg = RunConfig()
    parsed = parse_config_text(serialize_config(cfg))
    assert parsed == cfg


def test_round_trip_preserves_full_float_precision(tmp_path):
    cfg = RunConfig(lr=1.0 / 3.0, heterogeneity=0.1 + 0.2)
    path = str(tmp_path / "c.txt")
    save_config(cfg, path)
    loaded = load_config(path)
    assert loaded.lr == cfg.lr
    assert loaded.heterogeneity == cfg.heterogeneity


def test_parse_comments_blanks_and_spacing():
    cfg = parse_config_text(
        """
        # a comment
        lr = 0.002   # trailing comment

        batch_size=2
        modulator = false
        """
    )
    assert cfg.lr == 0.002
    assert cfg.batch_size == 2
    assert cfg.modulator is False


def test_unknown_key_rejected_with_line():
    with pytest.raises(ConfigError, match="line 2.*learning_rate"):
        parse_config_text("lr = 0.1\nlearning_rate = 0.2\n")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("lr = 0.1\nlr = 0.2\n")


def test_missing_equals_rejected():
    with pytest.raises(ConfigError, match="key = value"):
        parse_config_text("just words\n")


def test_bad_values_name_key_and_line():
    with pytest.raises(ConfigError, match="line 1.*lr"):
        parse_config_text("lr = fast\n")
    with pytest.raises(ConfigError, match="epochs"):
        parse_config_text("epochs = 2.5\n")
    with pytest.raises(ConfigError, match="modulator"):
        parse_config_text("modulator = yes\n")


def test_validation_catches_bad_combinations():
    with pytest.raises(ConfigError):
        RunConfig(batch_size=0)
    with pytest.raises(ConfigError):
        RunConfig(lr=0.0)
    with pytest.raises(ConfigError):
        RunConfig(image_size=20)
    with pytest.raises(ConfigError):
        RunConfig(n_classes=1)
    with pytest.raises(ConfigError):
        RunConfig(heterogeneity=2.0)
    with pytest.raises(ConfigError):
        RunConfig(stages=0)
    with pytest.raises(ConfigError):
        RunConfig(lambda_static=-1.0)
    with pytest.raises(ConfigError):
        RunConfig(epochs=0)


def test_serialize_covers_every_field_once():
    text = serialize_config(RunConfig())
    keys = [line.split(" = ")[0] for line in text.strip().splitlines()]
    assert keys == [f.name for f in dataclasses.fields(RunConfig)]


def test_serialize_is_canonical():
    a = serialize_config(RunConfig(lr=2e-4))
    b = serialize_config(parse_config_text(a))
    assert a == b


def test_with_overrides_validates():
    cfg = RunConfig()
    other = with_overrides(cfg, {"lr": 1e-3, "stages": 2})
    assert other.lr == 1e-3 and other.stages == 2
    assert cfg.lr == 1e-4  # original untouched
    with pytest.raises(ConfigError):
        with_overrides(cfg, {"nope": 1})
    with pytest.raises(ConfigError):
        with_overrides(cfg, {"batch_size": 0})


def test_load_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "absent.txt"))


def test_subconfig_extraction():
    cfg = RunConfig(base_channels=4, embed_channels=16, stages=2, residual=True)
    enc = cfg.encoder_config()
    assert enc.base_channels == 4 and enc.embed_channels == 16
    dec = cfg.decoder_config()
    assert dec.stages == 2 and dec.residual is True
    weights = cfg.loss_weights()
    assert weights.lambda_static == cfg.lambda_static
    synth = cfg.synthetic_config()
    assert synth.image_size == cfg.image_size and synth.seed == cfg.seed
