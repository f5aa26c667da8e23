#!/usr/bin/env python3
"""
Config Validator

YAML loading, unknown-key rejection and the override order.
"""

import pytest
import yaml

from config import OUT_ENV, ConfigError, ExperimentConfig
from structured_ops import EnsembleKind


def test_defaults_are_valid():
    config = ExperimentConfig()
    config.validate()
    assert config.constants.decoupling_C == 4.0
    assert config.alpha_shape().alpha == 2.0


def test_round_trip_through_yaml(tmp_path):
    config = ExperimentConfig.from_dict({'n': 32, 'm': 8, 'sampler': {'alpha': 1.5}})
    path = tmp_path / 'config.yml'
    config.save(path)
    loaded = ExperimentConfig.load(path)
    assert loaded.to_dict() == config.to_dict()
    assert loaded.sampler.alpha == 1.5


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError, match='unknown config keys'):
        ExperimentConfig.from_dict({'nn': 3})
    with pytest.raises(ConfigError, match="unknown keys in 'sampler'"):
        ExperimentConfig.from_dict({'sampler': {'shape': 1.0}})


def test_invalid_values_are_rejected():
    for bad in ({'sampler': {'alpha': 3.0}}, {'ensemble': 'toeplitz'}, {'target_prob': 1.0},
                {'omega': 'last'}, {'gamma_source': 'guess'}, {'threads': 0}):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(bad)


def test_non_mapping_file_is_rejected(tmp_path):
    path = tmp_path / 'list.yml'
    path.write_text(yaml.safe_dump([1, 2, 3]))
    with pytest.raises(ConfigError):
        ExperimentConfig.load(path)
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / 'missing.yml')


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / 'empty.yml'
    path.write_text('')
    assert ExperimentConfig.load(path).to_dict() == ExperimentConfig().to_dict()


def test_override_order(monkeypatch):
    monkeypatch.setenv(OUT_ENV, 'from_env')
    config = ExperimentConfig.from_dict({'out': 'from_file', 'master_seed': 1})
    assert config.with_overrides().out == 'from_env'
    overridden = config.with_overrides(seed=9, threads=3, out='from_flag')
    assert (overridden.master_seed, overridden.threads, overridden.out) == (9, 3, 'from_flag')


def test_gabor_ensemble_ties_n_to_m():
    config = ExperimentConfig.from_dict({'ensemble': 'gabor', 'm': 4, 'n': 7})
    spec = config.ensemble_spec()
    assert spec.kind is EnsembleKind.GABOR
    assert (spec.m, spec.n) == (4, 16)
    assert config.ensemble_spec(m=3).n == 9


def test_inconsistent_ensemble_is_a_config_error():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({'n': 4, 'm': 8}).ensemble_spec()


def test_root_streams_differ_by_subcommand():
    config = ExperimentConfig()
    assert config.root_stream('gamma').key() != config.root_stream('phase').key()
