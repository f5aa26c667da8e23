#!/usr/bin/env python3
"""
Random models for the chaos and R.I.P. experiments.

Exact generators for symmetric Weibull variables (P{|xi| > t} = exp(-t^alpha)),
the alpha-density c(alpha) exp(-|x|^alpha), Rademacher and Gaussian entries,
plus standardization and an empirical Psi_alpha (Orlicz) norm estimator.

All randomness flows through RngStream: a (master_seed, path) pair hashed
into the key of a counter-based Philox generator.
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, special

logger = logging.getLogger(__name__)

# exp() arguments above this are capped in the Psi_alpha estimator
EXP_CAP = 700.0

# draws behind a cached Psi_alpha estimate
PSI_SAMPLES = 100_000


class SamplerError(ValueError):
    """Raised for invalid shapes, sizes or sampler kinds"""


@dataclass(frozen=True)
class AlphaShape:
    """Tail parameter alpha in [1, 2] and its conjugate alpha* = alpha/(alpha-1)"""
    alpha: float
    alpha_star: float = field(init=False)

    def __post_init__(self):
        alpha = float(self.alpha)
        if not math.isfinite(alpha) or alpha < 1.0 or alpha > 2.0:
            raise SamplerError(f"alpha must lie in [1, 2], got {self.alpha}")
        object.__setattr__(self, 'alpha', alpha)
        # alpha = 1 is tagged with an infinite conjugate; l_inf norms dispatch on it
        star = math.inf if alpha == 1.0 else alpha / (alpha - 1.0)
        object.__setattr__(self, 'alpha_star', star)

    @property
    def star_is_infinite(self) -> bool:
        return math.isinf(self.alpha_star)


class SamplerKind(str, Enum):
    WEIBULL_SYMMETRIC = 'weibull_symmetric'
    ALPHA_DENSITY = 'alpha_density'
    RADEMACHER = 'rademacher'
    GAUSSIAN = 'gaussian'


@dataclass(frozen=True)
class RngStream:
    """Value-like handle on an independent random stream.

    The same (master_seed, path) always yields the same generator state, no
    matter which thread asks for it.
    """
    master_seed: int
    path: Tuple[str, ...] = ()

    def child(self, *labels) -> 'RngStream':
        return RngStream(self.master_seed, self.path + tuple(str(label) for label in labels))

    def key(self) -> int:
        material = f"{self.master_seed}|" + "/".join(self.path)
        digest = hashlib.sha256(material.encode('utf-8')).digest()
        return int.from_bytes(digest[:16], 'little')

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream"""
        return np.random.Generator(np.random.Philox(key=self.key()))


RandomSource = Union[RngStream, np.random.Generator]


def derive_stream(master_seed: int, labels: Sequence = ()) -> RngStream:
    """Map a master seed and a label path to a stream"""
    seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
    return RngStream(seed, tuple(str(label) for label in labels))


def as_generator(source: RandomSource) -> np.random.Generator:
    if isinstance(source, RngStream):
        return source.generator()
    if isinstance(source, np.random.Generator):
        return source
    raise SamplerError(f"expected RngStream or numpy Generator, got {type(source).__name__}")


def _check_count(n) -> None:
    size = int(np.prod(n)) if isinstance(n, tuple) else int(n)
    if size < 1:
        raise SamplerError(f"sample size must be >= 1, got {n}")


def _random_signs(rng: np.random.Generator, size) -> np.ndarray:
    return rng.integers(0, 2, size=size) * 2.0 - 1.0


def weibull_from_uniforms(u: np.ndarray, signs: np.ndarray, shape: AlphaShape) -> np.ndarray:
    """Inverse-CDF map: |xi| = (-ln U)^(1/alpha) with the given signs"""
    return signs * np.power(-np.log(u), 1.0 / shape.alpha)


def sample_symmetric_weibull(shape: AlphaShape, n, stream: RandomSource) -> np.ndarray:
    _check_count(n)
    rng = as_generator(stream)
    # 1 - U lies in (0, 1], so the log is always finite
    u = 1.0 - rng.random(size=n)
    signs = _random_signs(rng, n)
    return weibull_from_uniforms(u, signs, shape)


def sample_alpha_density(shape: AlphaShape, n, stream: RandomSource) -> np.ndarray:
    _check_count(n)
    rng = as_generator(stream)
    g = rng.gamma(shape=1.0 / shape.alpha, scale=1.0, size=n)
    signs = _random_signs(rng, n)
    return signs * np.power(g, 1.0 / shape.alpha)


def sample_rademacher(n, stream: RandomSource) -> np.ndarray:
    _check_count(n)
    return _random_signs(as_generator(stream), n)


def sample_gaussian(n, stream: RandomSource) -> np.ndarray:
    _check_count(n)
    return as_generator(stream).standard_normal(size=n)


def population_abs_moment(kind: SamplerKind, alpha: float, p: float) -> float:
    """E|xi|^p of the raw (unstandardized) law"""
    kind = SamplerKind(kind)
    if kind is SamplerKind.WEIBULL_SYMMETRIC:
        return float(special.gamma(1.0 + p / alpha))
    if kind is SamplerKind.ALPHA_DENSITY:
        return float(special.gamma((p + 1.0) / alpha) / special.gamma(1.0 / alpha))
    if kind is SamplerKind.GAUSSIAN:
        return float(2.0 ** (p / 2.0) * special.gamma((p + 1.0) / 2.0) / math.sqrt(math.pi))
    return 1.0


def population_std(kind: SamplerKind, shape: AlphaShape) -> float:
    kind = SamplerKind(kind)
    if kind is SamplerKind.WEIBULL_SYMMETRIC:
        return math.sqrt(special.gamma(1.0 + 2.0 / shape.alpha))
    if kind is SamplerKind.ALPHA_DENSITY:
        return math.sqrt(special.gamma(3.0 / shape.alpha) / special.gamma(1.0 / shape.alpha))
    raise SamplerError(f"no closed-form standardization for sampler kind '{kind.value}'")


@dataclass
class SamplerSpec:
    """Which random model to draw and whether to rescale it to unit variance"""
    kind: SamplerKind = SamplerKind.WEIBULL_SYMMETRIC
    shape: AlphaShape = field(default_factory=lambda: AlphaShape(2.0))
    standardized: bool = True
    psi_alpha_norm_L: Optional[float] = None

    def __post_init__(self):
        self.kind = SamplerKind(self.kind)
        if not isinstance(self.shape, AlphaShape):
            self.shape = AlphaShape(float(self.shape))
        if self.psi_alpha_norm_L is not None and self.psi_alpha_norm_L <= 0:
            raise SamplerError("psi_alpha_norm_L must be positive")

    @property
    def has_unit_variance(self) -> bool:
        return self.standardized or self.kind in (SamplerKind.RADEMACHER, SamplerKind.GAUSSIAN)

    def variance(self) -> float:
        if self.has_unit_variance:
            return 1.0
        return population_std(self.kind, self.shape) ** 2

    def abs_moment(self, p: float) -> float:
        raw = population_abs_moment(self.kind, self.shape.alpha, p)
        if self.standardized and self.kind in (SamplerKind.WEIBULL_SYMMETRIC, SamplerKind.ALPHA_DENSITY):
            return raw / population_std(self.kind, self.shape) ** p
        return raw

    def draw(self, n, stream: RandomSource) -> np.ndarray:
        """Draw an array of the given size (int or shape tuple)"""
        if self.kind is SamplerKind.WEIBULL_SYMMETRIC:
            values = sample_symmetric_weibull(self.shape, n, stream)
        elif self.kind is SamplerKind.ALPHA_DENSITY:
            values = sample_alpha_density(self.shape, n, stream)
        elif self.kind is SamplerKind.RADEMACHER:
            return sample_rademacher(n, stream)
        else:
            return sample_gaussian(n, stream)

        if self.standardized:
            values = standardize(self, values)
        return values

    def psi_alpha_norm(self, samples: Optional[np.ndarray] = None, N: int = PSI_SAMPLES,
                       stream: Optional[RandomSource] = None) -> float:
        """The parameter L, estimated on first use and cached on the spec"""
        if self.psi_alpha_norm_L is None:
            if samples is None:
                stream = stream or derive_stream(0, ('psi_alpha', self.kind.value, self.shape.alpha,
                                                     int(self.standardized)))
                samples = self.draw(N, stream)
            self.psi_alpha_norm_L = estimate_psi_alpha_norm(samples, self.shape)
            logger.info("estimated Psi_alpha norm %.6g for %s", self.psi_alpha_norm_L, self.kind.value)
        return self.psi_alpha_norm_L


def standardize(spec: SamplerSpec, v: np.ndarray) -> np.ndarray:
    """Divide by the population standard deviation of the raw law"""
    if spec.kind not in (SamplerKind.WEIBULL_SYMMETRIC, SamplerKind.ALPHA_DENSITY):
        raise SamplerError(f"standardize is defined for Weibull and alpha-density samplers, "
                           f"not '{spec.kind.value}'")
    return np.asarray(v) / population_std(spec.kind, spec.shape)


def estimate_psi_alpha_norm(samples: np.ndarray, shape: AlphaShape, rtol: float = 1e-6) -> float:
    """Smallest t with mean(exp(|x|^alpha / t^alpha)) <= 2, by bisection.

    Returns math.inf if no t below 1e6 * max|x| qualifies.
    """
    a = np.abs(np.asarray(samples, dtype=float)).ravel()
    if a.size == 0:
        raise SamplerError("Psi_alpha estimation needs at least one sample")
    a_max = float(a.max())
    if not math.isfinite(a_max):
        raise SamplerError("samples must be finite")
    if a_max == 0.0:
        return 0.0

    alpha = shape.alpha
    powered = (a / a_max) ** alpha

    def excess(t: float) -> float:
        scaled = np.minimum(powered / (t / a_max) ** alpha, EXP_CAP)
        return float(np.mean(np.exp(scaled))) - 2.0

    # every term is <= 2 at hi; the largest term alone reaches 2N at lo
    hi = a_max / math.log(2.0) ** (1.0 / alpha)
    lo = a_max / math.log(2.0 * a.size) ** (1.0 / alpha)
    if excess(hi) > 0.0:
        if excess(1e6 * a_max) > 0.0:
            return math.inf
        hi = 1e6 * a_max
    if lo >= hi or excess(lo) <= 0.0:
        return hi
    return float(optimize.bisect(excess, lo, hi, rtol=rtol, xtol=1e-300))
