"""Tests for resolving the configuration of a command run."""

import pytest

from splinelens.config import (
    COMMANDS,
    Config,
    ConfigError,
    ExperimentConfig,
    defaults_for,
    parse_override,
)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestDefaults:
    """Test the per-command defaults."""

    @pytest.mark.parametrize("command", COMMANDS)
    def test_every_command_has_its_own_section(self, command):
        values = defaults_for(command)
        assert values["run"]["seed"] == 0
        assert values["geometry"]["box"] == [-3.0, 3.0, -3.0, 3.0]
        assert command in values

    def test_command_sections_override_common_ones(self):
        assert defaults_for("concentration")["network"]["width"] == 64
        assert defaults_for("partition")["network"]["width"] == 6
        assert defaults_for("stats")["dataset"]["kind"] == "gaussian"
        assert defaults_for("verify")["verify"]["variance_batch_sizes"] == [16, 64, 256]

    def test_compute_settings_come_from_the_user_config(self, tmp_path):
        settings = Config(tmp_path)
        settings.set("compute", "threads", 3)
        assert defaults_for("partition", settings)["run"]["threads"] == 3

    def test_unknown_command(self):
        with pytest.raises(ConfigError, match="Unknown command"):
            defaults_for("plot")

    def test_defaults_are_not_shared(self):
        defaults_for("partition")["run"]["seed"] = 5
        assert defaults_for("partition")["run"]["seed"] == 0


class TestOverrides:
    """Test --set parsing."""

    @pytest.mark.parametrize(
        ("text", "expected"),
        [
            ("run.seed=4", ("run", "seed", 4)),
            ("network.alpha = 0.2", ("network", "alpha", 0.2)),
            ("partition.layers=[1, 2]", ("partition", "layers", [1, 2])),
            ("dataset.kind=rings", ("dataset", "kind", "rings")),
            ('dataset.kind="xor"', ("dataset", "kind", "xor")),
            ("train.bn_frozen=false", ("train", "bn_frozen", False)),
        ],
    )
    def test_values_are_read_as_toml(self, text, expected):
        assert parse_override(text) == expected

    @pytest.mark.parametrize("text", ["seed=4", "run.seed", ".seed=1", "run.=1"])
    def test_malformed(self, text):
        with pytest.raises(ConfigError, match="section.key=value"):
            parse_override(text)


class TestResolve:
    """Test layering of defaults, files, overrides and flags."""

    def test_layers_apply_in_order(self, tmp_path):
        path = _write(tmp_path / "run.toml", "[run]\nseed = 1\nthreads = 2\n")
        config = ExperimentConfig.resolve(
            "partition",
            config_file=path,
            overrides=["run.seed=2"],
            flags={"run.threads": 4, "run.out": None},
        )
        assert config.seed == 2
        assert config.threads == 4
        assert config.get("run", "out") == ""

    def test_includes_are_applied_first(self, tmp_path):
        _write(tmp_path / "base.toml", "[network]\nwidth = 3\ndepth = 2\n")
        path = _write(
            tmp_path / "run.toml", 'include = ["base.toml"]\n[network]\nwidth = 5\n'
        )
        network = ExperimentConfig.resolve("partition", config_file=path).section(
            "network"
        )
        assert network["width"] == 5
        assert network["depth"] == 2

    def test_include_cycle(self, tmp_path):
        _write(tmp_path / "a.toml", 'include = "b.toml"\n')
        _write(tmp_path / "b.toml", 'include = "a.toml"\n')
        with pytest.raises(ConfigError, match="Include cycle"):
            ExperimentConfig.resolve("partition", config_file=tmp_path / "a.toml")

    def test_unknown_section(self, tmp_path):
        path = _write(tmp_path / "run.toml", "[plots]\ndpi = 300\n")
        with pytest.raises(ConfigError, match=r"Unknown section \[plots\]"):
            ExperimentConfig.resolve("partition", config_file=path)

    def test_section_of_another_command(self):
        with pytest.raises(ConfigError, match=r"Unknown section \[jitter\]"):
            ExperimentConfig.resolve("partition", overrides=["jitter.draws=3"])

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="Unknown key run.sede"):
            ExperimentConfig.resolve("partition", overrides=["run.sede=3"])

    @pytest.mark.parametrize(
        ("override", "message"),
        [
            ("run.seed=1.5", "must be an integer"),
            ("run.seed=true", "must be an integer"),
            ("network.alpha=fast", "must be a number"),
            ("partition.csv=1", "must be true or false"),
            ("partition.layers=2", "must be a list"),
            ("dataset.kind=3", "must be a string"),
        ],
    )
    def test_wrong_types(self, override, message):
        with pytest.raises(ConfigError, match=message):
            ExperimentConfig.resolve("partition", overrides=[override])

    def test_integers_are_accepted_for_floats(self):
        config = ExperimentConfig.resolve("partition", overrides=["network.alpha=1"])
        alpha = config.get("network", "alpha")
        assert alpha == 1.0
        assert isinstance(alpha, float)

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError, match="Failed to load"):
            ExperimentConfig.resolve("partition", config_file=tmp_path / "none.toml")

    def test_missing_setting(self):
        config = ExperimentConfig.resolve("partition")
        with pytest.raises(ConfigError, match="No setting"):
            config.get("run", "nothing")


class TestResolvedFile:
    """Test that config.resolved reproduces a run."""

    def test_round_trip(self, tmp_path):
        first = ExperimentConfig.resolve(
            "jitter", overrides=["run.seed=7", "jitter.batch_sizes=[8]"]
        )
        path = first.write_resolved(tmp_path)
        assert path.name == "config.resolved"
        second = ExperimentConfig.resolve("jitter", config_file=path)
        assert second.values == first.values
        assert second.to_toml() == first.to_toml()

    def test_command_mismatch(self, tmp_path):
        path = ExperimentConfig.resolve("jitter").write_resolved(tmp_path)
        with pytest.raises(ConfigError, match="was resolved for 'jitter'"):
            ExperimentConfig.resolve("train", config_file=path)


class TestOutputDir:
    """Test where a run writes."""

    def test_explicit_out(self, tmp_path):
        config = ExperimentConfig.resolve(
            "stats", flags={"run.out": str(tmp_path / "here")}
        )
        assert config.output_dir() == tmp_path / "here"

    def test_output_root_from_settings(self, tmp_path):
        settings = Config(tmp_path / "cfg")
        settings.set("output", "root", str(tmp_path / "root"))
        config = ExperimentConfig.resolve("stats", settings=settings)
        assert config.output_dir() == tmp_path / "root" / "stats"

    def test_fallback_root(self):
        config = ExperimentConfig.resolve("verify")
        assert str(config.output_dir()).replace("\\", "/") == "splinelens-out/verify"
