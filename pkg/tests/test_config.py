"""
Tests for the JSON run configuration and setup construction.
"""

import json
from pathlib import Path

import pytest

from multistream_detect.config import (
    DetectorConfig,
    build_setup,
    default_log_level,
    default_output_dir,
)
from multistream_detect.errors import ConfigurationError
from multistream_detect.models import AutoregressiveModel, IIDGaussianModel


class TestDetectorConfig:
    """Test loading and validation."""

    def test_load_alpha_config(self, config_file, gaussian_config):
        """Test a valid alpha configuration."""
        config = DetectorConfig.load(config_file(gaussian_config))
        assert config.n_streams == 2
        assert config.rho == 0.1
        assert config.streams[0].model.kind == "iid_gaussian"

    def test_missing_file(self, tmp_path):
        """Test that unreadable files are configuration errors."""
        with pytest.raises(ConfigurationError):
            DetectorConfig.load(tmp_path / "absent.json")

    def test_malformed_json(self):
        """Test that malformed JSON is a configuration error."""
        with pytest.raises(ConfigurationError):
            DetectorConfig.from_json("{not json")

    def test_both_matrices_rejected(self, gaussian_config):
        """Test that alpha and beta are exclusive."""
        data = {**gaussian_config, "beta_matrix": [[0.05, 0.05], [0.05, 0.05]]}
        with pytest.raises(ConfigurationError) as exc_info:
            DetectorConfig.from_json(json.dumps(data))
        assert "exactly one of beta_matrix or alpha_matrix" in str(exc_info.value)

    def test_rho_and_auto_rho_exclusive(self, ar_beta_config):
        """Test that rho and auto_rho cannot both be set."""
        data = {**ar_beta_config, "rho": 0.1}
        with pytest.raises(ConfigurationError):
            DetectorConfig.from_json(json.dumps(data))

    def test_auto_rho_needs_beta(self, gaussian_config):
        """Test that the optimal prior needs a beta matrix."""
        data = {**gaussian_config, "rho": None, "auto_rho": True}
        with pytest.raises(ConfigurationError):
            DetectorConfig.from_json(json.dumps(data))

    def test_matrix_shape(self, gaussian_config):
        """Test the N x N requirement."""
        data = {**gaussian_config, "alpha_matrix": [[0.05, 0.05]]}
        with pytest.raises(ConfigurationError):
            DetectorConfig.from_json(json.dumps(data))

    def test_stream_count(self, gaussian_config):
        """Test one stream block per stream."""
        data = {**gaussian_config, "streams": gaussian_config["streams"][:1]}
        with pytest.raises(ConfigurationError):
            DetectorConfig.from_json(json.dumps(data))

    def test_unknown_model_kind(self, gaussian_config):
        """Test the discriminated model union."""
        data = json.loads(json.dumps(gaussian_config))
        data["streams"][0]["model"] = {"kind": "garch"}
        with pytest.raises(ConfigurationError):
            DetectorConfig.from_json(json.dumps(data))

    def test_unknown_field(self, gaussian_config):
        """Test that unknown keys are refused."""
        data = {**gaussian_config, "threshold": 3}
        with pytest.raises(ConfigurationError):
            DetectorConfig.from_json(json.dumps(data))

    def test_grid_needs_one_form(self, gaussian_config):
        """Test points and linspace exclusivity."""
        data = json.loads(json.dumps(gaussian_config))
        data["streams"][0]["grid"] = {"points": [1.0], "linspace": [{"lo": 0.5, "hi": 1.0, "count": 2}]}
        with pytest.raises(ConfigurationError):
            DetectorConfig.from_json(json.dumps(data))

    def test_dump_and_reload(self, tmp_path, gaussian_config):
        """Test that a dumped configuration loads back unchanged."""
        config = DetectorConfig.model_validate(gaussian_config)
        path = config.dump(tmp_path / "out.json")
        assert DetectorConfig.load(path) == config


class TestOverrides:
    """Test command-line overrides."""

    def test_rho_override_disables_auto(self, ar_beta_config):
        """Test that an explicit rho replaces auto_rho."""
        config = DetectorConfig.model_validate(ar_beta_config).with_overrides(rho=0.2)
        assert config.rho == 0.2
        assert not config.auto_rho

    def test_auto_rho_override_clears_rho(self, gaussian_config):
        """Test switching to the optimal prior on a beta configuration."""
        data = {
            **gaussian_config,
            "alpha_matrix": None,
            "beta_matrix": [[0.05, 0.05], [0.05, 0.05]],
        }
        config = DetectorConfig.model_validate(data).with_overrides(auto_rho=True)
        assert config.auto_rho
        assert config.rho is None

    def test_none_values_ignored(self, gaussian_config):
        """Test that unset flags leave the configuration alone."""
        config = DetectorConfig.model_validate(gaussian_config)
        assert config.with_overrides(rho=None, window=None) == config

    def test_invalid_override(self, gaussian_config):
        """Test revalidation of overrides."""
        config = DetectorConfig.model_validate(gaussian_config)
        with pytest.raises(ConfigurationError):
            config.with_overrides(window=0)


class TestBuildSetup:
    """Test setup construction."""

    def test_alpha_setup(self, gaussian_config):
        """Test thresholds and prior from an alpha configuration."""
        setup = build_setup(DetectorConfig.model_validate(gaussian_config))
        assert setup.thresholds.provenance == "from_alpha"
        assert setup.thresholds.entries[0][0] == pytest.approx(19.0)
        assert setup.thresholds.entries[0][1] == pytest.approx(20.0)
        assert setup.prior.rho == 0.1
        assert all(isinstance(m, IIDGaussianModel) for m in setup.models)
        assert setup.hyperparams is None

    def test_auto_rho_setup(self, ar_beta_config):
        """Test optimal thresholds from a beta configuration."""
        setup = build_setup(DetectorConfig.model_validate(ar_beta_config))
        assert setup.thresholds.provenance == "optimal"
        assert setup.prior.rho == pytest.approx(setup.hyperparams.rho_opt)
        assert isinstance(setup.models[0], AutoregressiveModel)
        assert setup.beta.n == 2

    def test_fixed_rho_beta_setup(self, ar_beta_config):
        """Test beta thresholds with a given rho."""
        data = {**ar_beta_config, "auto_rho": False, "rho": 0.05}
        setup = build_setup(DetectorConfig.model_validate(data))
        assert setup.thresholds.provenance == "from_beta"
        assert setup.prior.rho == 0.05

    def test_linspace_grid(self, gaussian_config):
        """Test grids built from linspace axes."""
        data = json.loads(json.dumps(gaussian_config))
        data["streams"][1]["grid"] = {"linspace": [{"lo": 0.5, "hi": 1.5, "count": 3}]}
        setup = build_setup(DetectorConfig.model_validate(data))
        assert setup.grids[1].points == [[0.5], [1.0], [1.5]]

    def test_invalid_beta_entries(self, ar_beta_config):
        """Test that out-of-range beta entries surface as configuration errors."""
        data = {**ar_beta_config, "beta_matrix": [[0.05, 1.5], [0.05, 0.05]]}
        with pytest.raises(ConfigurationError):
            build_setup(DetectorConfig.model_validate(data))

    def test_invalid_grid_weights(self, gaussian_config):
        """Test that bad grid weights surface as configuration errors."""
        data = json.loads(json.dumps(gaussian_config))
        data["streams"][0]["grid"] = {"points": [0.5, 1.0], "weights": [0.5, 0.6]}
        with pytest.raises(ConfigurationError):
            build_setup(DetectorConfig.model_validate(data))

    def test_non_stationary_model(self, ar_beta_config):
        """Test that model construction errors propagate."""
        data = json.loads(json.dumps(ar_beta_config))
        data["streams"][0]["model"]["theta_star"] = 1.5
        with pytest.raises(ConfigurationError):
            build_setup(DetectorConfig.model_validate(data))

    def test_new_detector(self, gaussian_config):
        """Test a fresh detector from the setup."""
        detector = build_setup(DetectorConfig.model_validate(gaussian_config)).new_detector()
        assert detector.n == 0
        assert detector.n_streams == 2


class TestEnvironment:
    """Test environment-driven defaults."""

    def test_output_dir_default(self, monkeypatch):
        """Test the fallback output directory."""
        monkeypatch.delenv("MULTISTREAM_DETECT_OUTPUT_DIR", raising=False)
        assert default_output_dir() == Path("results")

    def test_output_dir_from_environment(self, monkeypatch, tmp_path):
        """Test the environment override."""
        monkeypatch.setenv("MULTISTREAM_DETECT_OUTPUT_DIR", str(tmp_path))
        assert default_output_dir() == tmp_path

    def test_log_level_from_environment(self, monkeypatch):
        """Test the log level override."""
        monkeypatch.setenv("MULTISTREAM_DETECT_LOG_LEVEL", "debug")
        assert default_log_level() == "DEBUG"
