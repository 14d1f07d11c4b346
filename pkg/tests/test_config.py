"""
Tests for settings files and run-config validation.
"""
import json

import numpy as np
import pytest

from config import (
    DEFAULT_SETTINGS,
    MODELS,
    THREADS_ENV,
    RunConfig,
    apply_overrides,
    load_settings,
    merge_settings,
    save_settings,
    worker_count,
)
from durations import GeometricDur, NegBinDur
from errors import InvalidConfigError


class TestSettingsFiles:
    """Test loading and merging settings."""

    def test_defaults_validate(self):
        config = RunConfig.from_settings(load_settings())
        assert config.model == "hdp-hsmm-weak-limit"
        assert config.sampler.d_max is None

    def test_repository_settings_validate(self, settings):
        config = RunConfig.from_settings(merge_settings(DEFAULT_SETTINGS, settings))
        assert config.model in MODELS
        assert config.chains >= 1

    def test_partial_file_merges(self, temp_dir):
        path = temp_dir / "run.json"
        path.write_text(json.dumps({"sampler": {"L": 7}, "chains": 3}))
        settings = load_settings(path)
        assert settings["sampler"]["L"] == 7
        assert settings["sampler"]["gamma"] == DEFAULT_SETTINGS["sampler"]["gamma"]
        assert settings["chains"] == 3

    def test_merge_does_not_mutate(self):
        base = {"a": {"b": 1}}
        merge_settings(base, {"a": {"b": 2}})
        assert base == {"a": {"b": 1}}

    def test_missing_file(self, temp_dir):
        with pytest.raises(InvalidConfigError):
            load_settings(temp_dir / "nope.json")

    def test_bad_json(self, temp_dir):
        path = temp_dir / "bad.json"
        path.write_text("{not json")
        with pytest.raises(InvalidConfigError):
            load_settings(path)

    def test_save_round_trip(self, temp_dir):
        settings = load_settings()
        settings["seed"] = 17
        path = save_settings(settings, temp_dir / "out" / "config.json")
        assert load_settings(path) == settings

    def test_overrides(self):
        out = apply_overrides(load_settings(), {"sampler.L": 12, "duration.family": "negbin", "seed": None})
        assert out["sampler"]["L"] == 12
        assert out["duration"]["family"] == "negbin"
        assert out["seed"] == DEFAULT_SETTINGS["seed"]

    def test_overrides_keep_none(self):
        out = apply_overrides(load_settings(), {"sampler.d_max": None}, skip_none=False)
        assert "d_max" in out["sampler"] and out["sampler"]["d_max"] is None

    def test_override_below_scalar(self):
        with pytest.raises(InvalidConfigError):
            apply_overrides(load_settings(), {"chains.x": 1})


class TestRunConfig:
    """Test validation of run configs."""

    @pytest.mark.parametrize("patch", [
        {"model": "hdp-hmm-forward"},
        {"sampler": {"L": 1}},
        {"sampler": {"gamma": 0.0}},
        {"sampler": {"d_max": 0}},
        {"chains": 0},
        {"duration": {"family": "lognormal"}},
        {"used_state_threshold": 1.0},
        {"unknown_key": 1},
    ])
    def test_invalid(self, patch):
        with pytest.raises(InvalidConfigError):
            RunConfig.from_settings(merge_settings(DEFAULT_SETTINGS, patch))

    def test_direct_needs_gaussian(self):
        settings = merge_settings(DEFAULT_SETTINGS, {"model": "hdp-hsmm-direct",
                                                     "observation": {"emission": "mixture"}})
        with pytest.raises(InvalidConfigError):
            RunConfig.from_settings(settings)

    def test_error_names_field(self):
        with pytest.raises(InvalidConfigError, match="sampler.L"):
            RunConfig.from_settings(merge_settings(DEFAULT_SETTINGS, {"sampler": {"L": 1}}))

    def test_duration_template(self):
        settings = merge_settings(DEFAULT_SETTINGS, {"duration": {"family": "negbin", "r_support": [1, 2, 3]}})
        template = RunConfig.from_settings(settings).duration_template()
        assert isinstance(template, NegBinDur) and template.r_support == (1, 2, 3)

    def test_hmm_equivalent_forces_geometric(self):
        settings = merge_settings(DEFAULT_SETTINGS, {"model": "hdp-hmm-equivalent",
                                                     "duration": {"family": "poisson", "a": 2.0}})
        template = RunConfig.from_settings(settings).duration_template()
        assert isinstance(template, GeometricDur) and template.a == 2.0

    @pytest.mark.parametrize("niw", [
        {"dof": 1.0},
        {"mean": [0.0]},
        {"scatter": [[1.0, 0.0]]},
    ])
    def test_niw_overrides_checked_against_dim(self, niw):
        config = RunConfig.from_settings(merge_settings(DEFAULT_SETTINGS, {"observation": {"niw": niw}}))
        with pytest.raises(InvalidConfigError, match="observation.niw"):
            config.observation.niw.check_dim(2)
        with pytest.raises(InvalidConfigError):
            config.observation.build(np.zeros((5, 2)))

    def test_niw_overrides_fit_dim(self, rng):
        config = RunConfig.from_settings(merge_settings(DEFAULT_SETTINGS, {"observation": {"niw": {
            "dof": 1.5, "mean": [0.0, 1.0], "scatter": [[1.0, 0.0], [0.0, 1.0]]}}}))
        config.observation.niw.check_dim(2)
        assert config.observation.build(rng.normal(size=(5, 2))).dim == 2

    def test_to_settings_round_trip(self):
        config = RunConfig.from_settings(merge_settings(DEFAULT_SETTINGS, {"sampler": {"L": 6}}))
        assert RunConfig.from_settings(config.to_settings()) == config


class TestWorkers:
    """Test the worker-pool size setting."""

    def test_env_value(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "3")
        assert worker_count() == 3

    def test_default_is_positive(self, monkeypatch):
        monkeypatch.delenv(THREADS_ENV, raising=False)
        assert worker_count() >= 1

    @pytest.mark.parametrize("raw", ["zero", "0", "-2"])
    def test_rejects(self, monkeypatch, raw):
        monkeypatch.setenv(THREADS_ENV, raw)
        with pytest.raises(InvalidConfigError):
            worker_count()
