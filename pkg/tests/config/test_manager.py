"""Tests for the per-user settings file."""

import tomllib
from pathlib import Path
import pytest

from splinelens.config import OUTPUT_ROOT_ENV, Config, ConfigError, get_config


class TestConfig:
    """Test cases for the Config class."""

    def test_default_config_creation(self, tmp_path):
        """Test that a missing file is created with every section."""
        config = Config(tmp_path / "config")

        assert config.config_file_path.exists()
        with open(config.config_file_path, "rb") as f:
            data = tomllib.load(f)
        assert data == {
            "logging": {"level": "INFO"},
            "output": {"root": ""},
            "compute": {"threads": 1, "eps_bn": 0.0, "region_budget": 1_000_000},
        }

    def test_default_config_dir(self, tmp_path, mocker):
        """Test that the platform config directory is used by default."""
        user_dir = mocker.patch("appdirs.user_config_dir", return_value=str(tmp_path))
        config = get_config()
        user_dir.assert_called_once_with("splinelens")
        assert config.config_dir == tmp_path

    def test_properties(self, tmp_path):
        config = Config(tmp_path)
        assert config.log_level == "INFO"
        assert config.threads == 1
        assert config.eps_bn == 0.0
        assert config.region_budget == 1_000_000
        assert config.output_root == Path("splinelens-out")

    def test_partial_file_is_merged_with_defaults(self, tmp_path):
        """Test that keys missing from an existing file fall back to defaults."""
        (tmp_path / "config.toml").write_text("[compute]\nthreads = 4\n")
        config = Config(tmp_path)
        assert config.threads == 4
        assert config.eps_bn == 0.0
        assert config.log_level == "INFO"

    def test_set_persists(self, tmp_path):
        config = Config(tmp_path)
        config.set("compute", "threads", 8)
        assert Config(tmp_path).threads == 8

    def test_reset_to_defaults(self, tmp_path):
        config = Config(tmp_path)
        config.set("logging", "level", "DEBUG")
        config.reset_to_defaults()
        assert Config(tmp_path).log_level == "INFO"

    def test_output_root_environment_wins(self, tmp_path, monkeypatch):
        config = Config(tmp_path)
        config.set("output", "root", str(tmp_path / "configured"))
        assert config.output_root == tmp_path / "configured"
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "env"))
        assert config.output_root == tmp_path / "env"

    def test_get_with_default(self, tmp_path):
        config = Config(tmp_path)
        assert config.get("compute", "threads") == 1
        assert config.get("compute", "missing", "fallback") == "fallback"
        assert config.get("missing", "key") is None

    def test_reload(self, tmp_path):
        config = Config(tmp_path)
        (tmp_path / "config.toml").write_text('[logging]\nlevel = "DEBUG"\n')
        config.reload()
        assert config.log_level == "DEBUG"

    def test_invalid_toml(self, tmp_path):
        """Test that a malformed file raises ConfigError."""
        (tmp_path / "config.toml").write_text("[logging\nlevel = ")
        with pytest.raises(ConfigError, match="Failed to load config"):
            Config(tmp_path)

    def test_get_all_sections_is_a_copy(self, tmp_path):
        config = Config(tmp_path)
        sections = config.get_all_sections()
        sections["compute"]["threads"] = 99
        assert config.threads == 1


class TestValidation:
    """Test that set() and loading reject settings splinelens cannot use."""

    @pytest.mark.parametrize(
        ("section", "key", "value", "message"),
        [
            ("compute", "threads", 0, "must be >= 1"),
            ("compute", "threads", "4", "must be an integer"),
            ("compute", "threads", True, "must be an integer"),
            ("compute", "eps_bn", -1e-3, "must be >= 0"),
            ("compute", "eps_bn", "small", "must be a number"),
            ("compute", "region_budget", 0, "must be >= 1"),
            ("logging", "level", "LOUD", "must be one of"),
            ("output", "root", 3, "must be a string"),
            ("compute", "gpus", 1, "Unknown setting compute.gpus"),
            ("plots", "dpi", 300, "Unknown setting plots.dpi"),
        ],
    )
    def test_rejected(self, tmp_path, section, key, value, message):
        config = Config(tmp_path)
        with pytest.raises(ConfigError, match=message):
            config.set(section, key, value)
        assert Config(tmp_path).get_all_sections() == config.get_all_sections()

    def test_integer_eps_is_stored_as_float(self, tmp_path):
        config = Config(tmp_path)
        config.set("compute", "eps_bn", 0)
        assert isinstance(Config(tmp_path).get("compute", "eps_bn"), float)

    def test_level_is_case_insensitive(self, tmp_path):
        config = Config(tmp_path)
        config.set("logging", "level", "debug")
        assert Config(tmp_path).log_level == "DEBUG"

    @pytest.mark.parametrize(
        ("text", "message"),
        [
            ('[compute]\nthreads = "x"\n', "compute.threads must be an integer"),
            ("[compute]\neps_bn = -1.0\n", "must be >= 0"),
            ('[logging]\nlevel = "LOUD"\n', "must be one of"),
            ("[plots]\ndpi = 300\n", "Unknown setting plots.dpi"),
            ("threads = 4\n", r"\[threads\] must be a table"),
        ],
    )
    def test_hand_edited_file_is_validated(self, tmp_path, text, message):
        (tmp_path / "config.toml").write_text(text)
        with pytest.raises(ConfigError, match=message):
            Config(tmp_path)
