import logging
from pathlib import Path

import pytest

from config.settings import LoggingConfig, load_config
from utils.exceptions import ConfigurationError
from utils.logger import setup_logger


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for key in ("EPOCHS", "TOKEN_BLOCKS", "HORIZONS", "USE_PARETO", "LOG_LEVEL", "OUT", "SEED"):
        monkeypatch.delenv(key, raising=False)


def test_defaults():
    config = load_config()
    assert config.model.token_dim == 32
    assert config.training.lr == pytest.approx(0.002)
    assert config.pareto.preference_count == 10
    assert config.data.horizons == (3, 7, 15, 30)
    assert config.trading.tau == 3


def test_overrides_beat_file_and_environment(tmp_path, monkeypatch):
    settings_file = tmp_path / "run.env"
    settings_file.write_text("EPOCHS=3\n", encoding="utf-8")
    monkeypatch.setenv("EPOCHS", "5")
    assert load_config().training.epochs == 5
    assert load_config(settings_file).training.epochs == 3
    assert load_config(settings_file, {"EPOCHS": 2}).training.epochs == 2


def test_values_are_cast_to_field_types(tmp_path):
    settings_file = tmp_path / "run.env"
    settings_file.write_text("USE_PARETO=false\nHORIZONS=3,7\nTRAIN_HORIZON=7\nLR=0.01\n", encoding="utf-8")
    config = load_config(settings_file)
    assert config.training.use_pareto is False
    assert config.data.horizons == (3, 7)
    assert config.training.lr == pytest.approx(0.01)


def test_unparseable_value():
    with pytest.raises(ConfigurationError):
        load_config(overrides={"EPOCHS": "many"})


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "absent.env")


@pytest.mark.parametrize("overrides", [
    {"TOKEN_BLOCKS": 1},
    {"HEADS": 3},
    {"PREFERENCE_COUNT": 1},
    {"HORIZONS": "3,5"},
    {"TRAIN_HORIZON": 15, "HORIZONS": "3,7"},
    {"LR_DECAY": 1.5},
    {"TAU": 4},
    {"TEXT_EFFECT": -1.0},
])
def test_invalid_settings(overrides):
    with pytest.raises(ConfigurationError):
        load_config(overrides=overrides)


def test_validation_can_be_skipped():
    config = load_config(overrides={"TOKEN_BLOCKS": 1}, validate=False)
    assert config.model.token_blocks == 1


def test_config_hash_tracks_values():
    a = load_config(overrides={"SEED": 1})
    b = load_config(overrides={"SEED": 1})
    c = load_config(overrides={"SEED": 2})
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert len(a.config_hash()) == 64


def test_unknown_keys_are_ignored_with_a_warning(caplog):
    with caplog.at_level(logging.WARNING):
        config = load_config(overrides={"NOT_A_SETTING": 1})
    assert "NOT_A_SETTING" in caplog.text
    assert config.model.token_dim == 32


def test_output_dir(tmp_path):
    assert load_config(overrides={"OUT": str(tmp_path)}).output_dir == Path(tmp_path)


def test_log_level_from_environment(monkeypatch):
    monkeypatch.setenv("LOG_LEVEL", "debug")
    assert LoggingConfig().level == "DEBUG"


def test_setup_logger_adds_handlers_once(tmp_path):
    log_file = tmp_path / "logs" / "run.log"
    logger = setup_logger("numhtml.test", level="debug", log_file=log_file)
    again = setup_logger("numhtml.test", level="WARNING", log_file=log_file)
    assert again is logger
    assert len(logger.handlers) == 2
    assert logger.level == logging.WARNING
    assert all(h.level == logging.WARNING for h in logger.handlers)
    logger.warning("written to the run log")
    for handler in logger.handlers:
        handler.flush()
    assert "written to the run log" in log_file.read_text(encoding="utf-8")
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)
