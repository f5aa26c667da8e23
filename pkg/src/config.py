#!/usr/bin/env python3
"""
Experiment configuration.

One YAML file drives every subcommand. Precedence, lowest first: dataclass
defaults, the --config file, RIPLAB_OUT (output directory only), then the
--seed / --threads / --out flags. Unknown keys are rejected at every level.
"""

import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from samplers import AlphaShape, SamplerError, SamplerKind, SamplerSpec, derive_stream, RngStream
from structured_ops import DimensionError, EnsembleKind, EnsembleSpec

OUT_ENV = 'RIPLAB_OUT'


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration"""


@dataclass
class Constants:
    """Absolute constants the bounds leave unspecified"""
    C_alpha: float = 1.0
    C1_alpha: float = 1.0
    c_cov: float = 1.0
    c1: float = 1.0
    decoupling_C: float = 4.0
    closed_form_C: float = 1.0
    tail_C1: float = math.e
    tail_C2: float = 1.0


@dataclass
class SamplerConfig:
    kind: str = 'weibull_symmetric'
    alpha: float = 2.0
    standardized: bool = True


@dataclass
class ExperimentConfig:
    master_seed: int = 0
    threads: int = 1
    out: str = 'output'

    # ensembles
    ensemble: str = 'dense'
    omega: str = 'first'
    n: int = 64
    m: int = 16
    m_grid: List[int] = field(default_factory=list)

    # sparsity and R.I.P.
    s: int = 2
    s_grid: List[int] = field(default_factory=list)
    delta: float = 0.5
    target_prob: float = 0.9
    draws: int = 20
    mc_trials: int = 2000
    budget: int = 100000

    # chaos and bounds
    N: int = 100000
    p_values: List[float] = field(default_factory=lambda: [2.0, 4.0, 8.0])
    t_grid: List[float] = field(default_factory=list)
    matrix: str = 'identity'
    matrix_file: Optional[str] = None
    family_kind: str = 'circulant'
    family_size: int = 16
    gamma_source: str = 'dudley'
    calibrate_tails: bool = False
    restarts: int = 50

    # recovery
    trials: int = 100
    signal: str = 'gaussian'
    max_iter: int = 5000

    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    constants: Constants = field(default_factory=Constants)

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> 'ExperimentConfig':
        data = dict(data or {})
        nested = {'sampler': SamplerConfig, 'constants': Constants}
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for key, kind in nested.items():
            if key in data:
                block = data[key] or {}
                if not isinstance(block, dict):
                    raise ConfigError(f"'{key}' must be a mapping")
                extra = sorted(set(block) - {f.name for f in fields(kind)})
                if extra:
                    raise ConfigError(f"unknown keys in '{key}': {', '.join(extra)}")
                data[key] = kind(**block)
        config = cls(**data)
        config.validate()
        return config

    @classmethod
    def load(cls, path: Path) -> 'ExperimentConfig':
        try:
            with open(path, 'r') as f:
                data = yaml.safe_load(f)
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config {path}: {e}")
        if data is not None and not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), default_flow_style=False, sort_keys=False)

    def save(self, path: Path):
        with open(path, 'w') as f:
            f.write(self.dump())

    def validate(self):
        try:
            AlphaShape(self.sampler.alpha)
            SamplerKind(self.sampler.kind)
            EnsembleKind(self.ensemble)
        except (SamplerError, ValueError) as e:
            raise ConfigError(str(e))
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not 0.0 <= self.delta:
            raise ConfigError("delta must be >= 0")
        if not 0.0 < self.target_prob < 1.0:
            raise ConfigError("target_prob must lie in (0, 1)")
        if self.omega not in ('first', 'random'):
            raise ConfigError(f"omega must be 'first' or 'random', got '{self.omega}'")
        if self.gamma_source not in ('dudley', 'closed_form'):
            raise ConfigError(f"gamma_source must be 'dudley' or 'closed_form', got '{self.gamma_source}'")
        if min(self.n, self.m, self.N, self.trials, self.draws) < 1:
            raise ConfigError("n, m, N, trials and draws must be >= 1")

    def with_overrides(self, seed: Optional[int] = None, threads: Optional[int] = None,
                       out: Optional[str] = None) -> 'ExperimentConfig':
        """Apply RIPLAB_OUT, then explicit flags"""
        data = self.to_dict()
        if os.environ.get(OUT_ENV):
            data['out'] = os.environ[OUT_ENV]
        if seed is not None:
            data['master_seed'] = seed
        if threads is not None:
            data['threads'] = threads
        if out is not None:
            data['out'] = out
        return ExperimentConfig.from_dict(data)

    def alpha_shape(self) -> AlphaShape:
        return AlphaShape(self.sampler.alpha)

    def sampler_spec(self) -> SamplerSpec:
        return SamplerSpec(SamplerKind(self.sampler.kind), self.alpha_shape(), self.sampler.standardized)

    def ensemble_spec(self, m: Optional[int] = None) -> EnsembleSpec:
        m = self.m if m is None else m
        n = m * m if self.ensemble == EnsembleKind.GABOR.value else self.n
        try:
            return EnsembleSpec(EnsembleKind(self.ensemble), n, m, self.sampler_spec(), self.omega)
        except DimensionError as e:
            raise ConfigError(str(e))

    def root_stream(self, subcommand: str) -> RngStream:
        return derive_stream(self.master_seed, (subcommand,))
