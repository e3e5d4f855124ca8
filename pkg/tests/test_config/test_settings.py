"""
Tests for run configuration and logging setup

Key Test Areas:
- Defaults and validation of RunConfig
- Config files (JSON and YAML) and CLI override precedence
- Config hashing
- Environment variables and structlog output
"""

import orjson
import pytest
import yaml

from k2gof.config.logging_config import get_logger, setup_logging
from k2gof.config.settings import STUDY_GRID, RunConfig, get_variable, load_run_config
from k2gof.errors import InputError


class TestRunConfigDefaults:
    """Test the builtin defaults"""

    def test_reference_study_defaults(self):
        config = load_run_config()
        assert config.reference == "Q"
        assert config.candidates == ["F1", "F2", "F3"]
        assert config.truth == "P"
        assert (config.grid.n1, config.grid.n2) == STUDY_GRID
        assert config.support.lower == [1.0, 1.0]
        assert config.support.upper == [20.0, 25.0]
        assert config.n == 100
        assert config.alpha == [0.001, 0.05, 0.1]
        assert config.method == "projected"
        assert config.fit.restarts == 4
        assert config.fit.max_evaluations == 2000

    def test_threads_from_environment(self, monkeypatch):
        monkeypatch.setenv("K2GOF_THREADS", "3")
        assert load_run_config().threads == 3


class TestRunConfigValidation:
    """Test field validation"""

    @pytest.mark.parametrize(
        "overrides",
        [
            {"n": 5},
            {"replicates": 99},
            {"alpha": [0.0]},
            {"alpha": [1.5]},
            {"seed": -1},
            {"seed": 2**64},
            {"threads": 0},
            {"method": "jackknife"},
            {"grid": {"n1": 1}},
            {"support": {"lower": [5.0, 1.0], "upper": [2.0, 25.0]}},
            {"fit": {"max_evaluations": 10}},
            {"unknown_key": 1},
        ],
    )
    def test_invalid_values(self, overrides):
        with pytest.raises(InputError) as exc_info:
            load_run_config(overrides=overrides)
        assert exc_info.value.exit_code == 2

    def test_alpha_sorted_and_deduplicated(self):
        assert load_run_config(overrides={"alpha": [0.1, 0.05, 0.1]}).alpha == [0.05, 0.1]

    def test_frozen(self):
        config = load_run_config()
        with pytest.raises(Exception):
            config.n = 200


class TestConfigFiles:
    """Test JSON and YAML config files and override precedence"""

    def test_yaml_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({"n": 200, "grid": {"n1": 20}}))
        config = load_run_config(path)
        assert config.n == 200
        assert config.grid.n1 == 20
        assert config.grid.n2 == STUDY_GRID[1]

    def test_json_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_bytes(orjson.dumps({"candidates": ["F2"], "seed": 7}))
        config = load_run_config(path)
        assert config.candidates == ["F2"]
        assert config.seed == 7

    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({"n": 200, "seed": 7, "fit": {"restarts": 2}}))
        config = load_run_config(path, overrides={"seed": 9, "n": None, "fit": {"max_evaluations": 500}})
        assert config.seed == 9
        assert config.n == 200
        assert config.fit.restarts == 2
        assert config.fit.max_evaluations == 500

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="not found"):
            load_run_config(tmp_path / "absent.yaml")

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{not json")
        with pytest.raises(InputError, match="not valid"):
            load_run_config(path)

    def test_top_level_must_be_mapping(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(InputError, match="mapping"):
            load_run_config(path)


class TestConfigHash:
    """Test the result-determining hash"""

    def test_stable_and_short(self):
        a = load_run_config(overrides={"seed": 5}).config_hash()
        assert a == load_run_config(overrides={"seed": 5}).config_hash()
        assert len(a) == 16
        int(a, 16)

    def test_execution_fields_excluded(self):
        base = RunConfig(threads=1, out="a", progress=True)
        other = RunConfig(threads=8, out="b", progress=False, log_level="DEBUG")
        assert base.config_hash() == other.config_hash()

    def test_result_fields_included(self):
        assert RunConfig(seed=1).config_hash() != RunConfig(seed=2).config_hash()
        assert RunConfig(method="refit").config_hash() != RunConfig().config_hash()


class TestGetVariable:
    """Test environment lookups"""

    def test_set_variable(self, monkeypatch):
        monkeypatch.setenv("K2GOF_TEST_VALUE", "abc")
        assert get_variable("K2GOF_TEST_VALUE") == "abc"

    def test_unset_and_empty_fall_back(self, monkeypatch):
        monkeypatch.delenv("K2GOF_TEST_VALUE", raising=False)
        assert get_variable("K2GOF_TEST_VALUE", "fallback") == "fallback"
        monkeypatch.setenv("K2GOF_TEST_VALUE", "")
        assert get_variable("K2GOF_TEST_VALUE", "fallback") == "fallback"


class TestSetupLogging:
    """Test structlog rendering"""

    def test_json_lines(self, capsys):
        setup_logging("INFO", "json")
        get_logger("k2gof.tests").info("fit_finished", model="Q", loglik=-1.5)
        line = capsys.readouterr().err.strip().splitlines()[-1]
        record = orjson.loads(line)
        assert record["event"] == "fit_finished"
        assert record["model"] == "Q"
        assert record["level"] == "info"

    def test_level_filter(self, capsys):
        setup_logging("WARNING", "console")
        logger = get_logger("k2gof.tests")
        logger.info("hidden_event")
        logger.warning("shown_event")
        err = capsys.readouterr().err
        assert "shown_event" in err
        assert "hidden_event" not in err

    def test_environment_defaults(self, monkeypatch, capsys):
        monkeypatch.setenv("K2GOF_LOG_FORMAT", "json")
        monkeypatch.setenv("K2GOF_LOG_LEVEL", "ERROR")
        setup_logging()
        logger = get_logger("k2gof.tests")
        logger.warning("dropped")
        logger.error("kept", code=2)
        lines = capsys.readouterr().err.strip().splitlines()
        assert [orjson.loads(line)["event"] for line in lines] == ["kept"]

    def test_later_call_replaces_earlier(self, capsys):
        setup_logging("ERROR", "console")
        setup_logging("INFO", "json")
        get_logger("k2gof.tests").info("reconfigured", step=2)
        record = orjson.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert record["event"] == "reconfigured"
        assert record["step"] == 2
