"""
Tests for configuration layering.
"""

import json

import pytest

from src.errors import UsageError
from src.settings_manager import RunConfig, SettingsManager


@pytest.fixture
def manager(tmp_path):
    return SettingsManager(str(tmp_path / "config"))


def test_defaults(manager):
    config = manager.resolve(environ={})
    assert config == RunConfig()
    assert config.cache_path.name == "works.jsonl"
    assert config.coverage_threshold == 0.8


def test_layering_file_env_flags(manager):
    manager.save_settings(RunConfig(parallelism=2, rate_limit_rps=3.0, output_format="json"))
    config = manager.resolve(
        overrides={"rate_limit_rps": 9.0, "output_format": None},
        environ={"KE_PARALLELISM": "6", "KE_RPS": "4", "KE_MAILTO": "a@b.org"},
    )
    assert config.parallelism == 6
    assert config.rate_limit_rps == 9.0
    assert config.output_format == "json"
    assert config.contact_email == "a@b.org"


@pytest.mark.parametrize("value,expected", [("1", True), ("true", True), ("0", False), ("no", False)])
def test_boolean_environment(manager, value, expected):
    assert manager.resolve(environ={"KE_OFFLINE": value}).offline is expected


def test_log_level_is_normalized(manager):
    assert manager.resolve(environ={"KE_LOG_LEVEL": "debug"}).log_level == "DEBUG"


@pytest.mark.parametrize("environ", [
    {"KE_PARALLELISM": "many"},
    {"KE_PARALLELISM": "0"},
    {"KE_RPS": "-1"},
    {"KE_COVERAGE_THRESHOLD": "1.5"},
    {"KE_FORMAT": "xml"},
    {"KE_LOG_LEVEL": "LOUD"},
])
def test_invalid_values(manager, environ):
    with pytest.raises(UsageError):
        manager.resolve(environ=environ)


def test_unknown_file_keys_are_ignored(manager, caplog):
    manager.config_dir.mkdir(parents=True)
    manager.config_file.write_text(json.dumps({"timeout": 5, "theme": "dark"}), encoding="utf-8")
    config = manager.resolve(environ={})
    assert config.timeout == 5
    assert "theme" in caplog.text


def test_unreadable_file(manager):
    manager.config_dir.mkdir(parents=True)
    manager.config_file.write_text("{not json", encoding="utf-8")
    with pytest.raises(UsageError):
        manager.resolve(environ={})


def test_config_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("KE_CONFIG_DIR", str(tmp_path / "elsewhere"))
    assert SettingsManager().config_file == tmp_path / "elsewhere" / "settings.json"


def test_contact_email_required_online():
    with pytest.raises(UsageError):
        RunConfig().require_contact_email()
    RunConfig(offline=True).require_contact_email()
    RunConfig(contact_email="a@b.org").require_contact_email()


def test_client_config():
    client = RunConfig(contact_email="a@b.org", rate_limit_rps=2.0, offline=True).client_config()
    assert client.mailto == "a@b.org"
    assert client.requests_per_second == 2.0
    assert client.offline
