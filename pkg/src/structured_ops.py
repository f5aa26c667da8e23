#!/usr/bin/env python3
"""
Structured measurement operators.

Partial random circulant matrices (1/sqrt(m)) R_Omega H_z applied through the
FFT, time-frequency (Gabor) systems Psi_h whose columns are all shifts
pi(k, l) h, dense i.i.d. ensembles, and the V_x matrices that turn
||Phi x||_2^2 into a quadratic form ||V_x eta||_2^2 in the random vector.

Index convention: 0-based, j (-) k = (j - k) mod n. Gabor columns are
enumerated k-major: lambda = (k, l) sits at column k * m + l.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sfft

from samplers import RandomSource, SamplerKind, SamplerSpec, as_generator, derive_stream

logger = logging.getLogger(__name__)

# imaginary residue allowed after an inverse FFT, relative to ||z|| ||x||
IMAG_RESIDUE_TOL = 1e-9


class DimensionError(ValueError):
    """Raised when vector or matrix sizes do not fit the operator"""


class Backing(str, Enum):
    PARTIAL_CIRCULANT = 'partial_circulant'
    GABOR = 'gabor'
    DENSE = 'dense'
    EXPLICIT = 'explicit'


def circular_convolve(z: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(z * x)_j = sum_k z_{(j - k) mod n} x_k via a length-n FFT"""
    z = np.asarray(z)
    x = np.asarray(x)
    if z.ndim != 1 or x.ndim != 1:
        raise DimensionError("circular_convolve expects 1-d vectors")
    if z.shape[0] != x.shape[0]:
        raise DimensionError(f"length mismatch: {z.shape[0]} vs {x.shape[0]}")
    if z.shape[0] < 1:
        raise DimensionError("vectors must be nonempty")

    out = sfft.ifft(sfft.fft(z) * sfft.fft(x))
    if np.iscomplexobj(z) or np.iscomplexobj(x):
        return out

    residue = float(np.max(np.abs(out.imag)))
    scale = float(np.linalg.norm(z) * np.linalg.norm(x))
    if residue > IMAG_RESIDUE_TOL * max(scale, np.finfo(float).tiny):
        raise ArithmeticError(f"FFT imaginary residue {residue:.3e} exceeds tolerance")
    return out.real


def naive_circular_convolve(z: np.ndarray, x: np.ndarray) -> np.ndarray:
    """O(n^2) double loop, kept as the reference for the FFT path"""
    n = len(z)
    out = np.zeros(n, dtype=np.result_type(z, x))
    for j in range(n):
        for k in range(n):
            out[j] += z[(j - k) % n] * x[k]
    return out


def circulant_matrix(z: np.ndarray) -> np.ndarray:
    """Dense H_z with H[j, k] = z[(j - k) mod n]"""
    z = np.asarray(z)
    n = z.shape[0]
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return z[idx]


def _check_omega(omega: Sequence[int], n: int) -> np.ndarray:
    omega = np.asarray(omega, dtype=np.int64).ravel()
    if omega.size < 1 or omega.size > n:
        raise DimensionError(f"|omega| = {omega.size} must lie in [1, {n}]")
    if np.any(omega < 0) or np.any(omega >= n):
        raise DimensionError("omega indices out of range")
    if np.unique(omega).size != omega.size:
        raise DimensionError("omega indices must be distinct")
    return np.sort(omega)


def choose_omega(n: int, m: int, mode: str, stream: Optional[RandomSource] = None) -> np.ndarray:
    """Row index set: the first m rows, or a uniform random m-subset"""
    if m < 1 or m > n:
        raise DimensionError(f"m = {m} must lie in [1, {n}]")
    if mode == 'first':
        return np.arange(m, dtype=np.int64)
    if mode == 'random':
        if stream is None:
            raise DimensionError("random omega needs a stream")
        rng = as_generator(stream)
        return np.sort(rng.choice(n, size=m, replace=False)).astype(np.int64)
    raise DimensionError(f"unknown omega mode '{mode}'")


@dataclass(frozen=True)
class PartialCirculantSpec:
    z: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).ravel()
        if z.size < 1:
            raise DimensionError("generating vector must be nonempty")
        object.__setattr__(self, 'z', z)
        object.__setattr__(self, 'omega', _check_omega(self.omega, z.size))

    @property
    def n(self) -> int:
        return self.z.size

    @property
    def m(self) -> int:
        return self.omega.size


@dataclass(frozen=True)
class GaborSpec:
    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex).ravel()
        if h.size < 1 or not np.any(h != 0):
            raise DimensionError("Gabor window must be a nonzero vector")
        object.__setattr__(self, 'h', h)

    @property
    def m(self) -> int:
        return self.h.size

    @property
    def n(self) -> int:
        return self.h.size ** 2


class MeasurementOperator(ABC):
    """An m x n linear map with apply, adjoint and dense materialization"""

    backing: Backing
    is_complex: bool = False

    @property
    @abstractmethod
    def shape(self) -> Tuple[int, int]:
        ...

    @property
    def field(self) -> str:
        return 'complex' if self.is_complex else 'real'

    @abstractmethod
    def apply(self, x: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def adjoint(self, y: np.ndarray) -> np.ndarray:
        ...

    def _check_input(self, x: np.ndarray, length: int, what: str) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim != 1 or x.shape[0] != length:
            raise DimensionError(f"{what} must have length {length}, got shape {x.shape}")
        return x

    def column(self, j: int) -> np.ndarray:
        e = np.zeros(self.shape[1])
        e[j] = 1.0
        return self.apply(e)

    def columns(self, support: Sequence[int]) -> np.ndarray:
        """Materialize only the requested columns as an m x |support| matrix"""
        cols = [self.column(j) for j in support]
        if not cols:
            return np.zeros((self.shape[0], 0))
        return np.stack(cols, axis=1)

    def to_dense(self) -> np.ndarray:
        return self.columns(range(self.shape[1]))


class PartialCirculantOperator(MeasurementOperator):
    """Phi = (1/sqrt(m)) R_Omega H_z"""

    backing = Backing.PARTIAL_CIRCULANT

    def __init__(self, spec: PartialCirculantSpec):
        self.spec = spec
        self._z_hat = sfft.fft(spec.z)
        self._scale = 1.0 / math.sqrt(spec.m)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.spec.m, self.spec.n)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x, self.spec.n, 'x')
        if np.iscomplexobj(x):
            full = sfft.ifft(self._z_hat * sfft.fft(x))
        else:
            full = circular_convolve(self.spec.z, x)
        return self._scale * full[self.spec.omega]

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = self._check_input(y, self.spec.m, 'y')
        scattered = np.zeros(self.spec.n, dtype=np.result_type(y, float))
        scattered[self.spec.omega] = y
        # H_z^T is cross-correlation with z
        out = sfft.ifft(np.conj(self._z_hat) * sfft.fft(scattered))
        if not np.iscomplexobj(y):
            out = out.real
        return self._scale * out

    def to_dense(self) -> np.ndarray:
        return self._scale * circulant_matrix(self.spec.z)[self.spec.omega]


def _shift_index(m: int) -> np.ndarray:
    # idx[k, j] = (j - k) mod m
    return (np.arange(m)[None, :] - np.arange(m)[:, None]) % m


class GaborOperator(MeasurementOperator):
    """Psi_h: C^{m^2} -> C^m, x -> sum_lambda x_lambda pi(lambda) h"""

    backing = Backing.GABOR
    is_complex = True

    def __init__(self, spec: GaborSpec):
        self.spec = spec
        m = spec.m
        # shifted_h[k, j] = h[(j - k) mod m]
        self._shifted_h = spec.h[_shift_index(m)]

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.spec.m, self.spec.n)

    def apply(self, x: np.ndarray) -> np.ndarray:
        m = self.spec.m
        x = self._check_input(x, m * m, 'x').reshape(m, m)
        modulated = m * sfft.ifft(x, axis=1)
        return np.sum(self._shifted_h * modulated, axis=0)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = self._check_input(y, self.spec.m, 'y')
        return sfft.fft(np.conj(self._shifted_h) * y[None, :], axis=1).ravel()

    def column(self, j: int) -> np.ndarray:
        k, l = divmod(j, self.spec.m)
        return time_frequency_shift(self.spec.m, k, l) @ self.spec.h


class DenseOperator(MeasurementOperator):
    """Explicit matrix, either drawn from an ensemble or loaded from disk"""

    def __init__(self, matrix: np.ndarray, backing: Backing = Backing.EXPLICIT):
        matrix = np.asarray(matrix)
        if matrix.ndim != 2 or min(matrix.shape) < 1:
            raise DimensionError(f"expected a nonempty 2-d matrix, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise DimensionError("matrix entries must be finite")
        self.matrix = matrix
        self.backing = Backing(backing)
        self.is_complex = bool(np.iscomplexobj(matrix))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ self._check_input(x, self.shape[1], 'x')

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return self.matrix.conj().T @ self._check_input(y, self.shape[0], 'y')

    def columns(self, support: Sequence[int]) -> np.ndarray:
        return self.matrix[:, list(support)]

    def to_dense(self) -> np.ndarray:
        return self.matrix


def apply_partial_circulant(spec: PartialCirculantSpec, x: np.ndarray) -> np.ndarray:
    return PartialCirculantOperator(spec).apply(x)


def gabor_apply(spec: GaborSpec, x: np.ndarray) -> np.ndarray:
    return GaborOperator(spec).apply(x)


def time_frequency_shift(m: int, k: int, l: int) -> np.ndarray:
    """Dense pi(k, l) = M^l T^k, (pi(k, l) h)_j = exp(2 pi i l j / m) h_{(j - k) mod m}"""
    j = np.arange(m)
    shift = np.zeros((m, m), dtype=complex)
    shift[j, (j - k) % m] = 1.0
    return np.exp(2j * np.pi * l * j / m)[:, None] * shift


@dataclass
class VxOperator:
    """V_x with ||Phi x||_2^2 = ||V_x eta||_2^2 where eta generates Phi"""
    matrix: np.ndarray
    x: np.ndarray
    kind: str
    omega: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.matrix))

    def apply(self, eta: np.ndarray) -> np.ndarray:
        """V_x eta; the circulant case runs through the FFT"""
        if self.kind == 'circulant':
            return PartialCirculantOperator(PartialCirculantSpec(eta, self.omega)).apply(self.x)
        return self.matrix @ eta

    def quadratic(self, eta: np.ndarray) -> float:
        return float(np.sum(np.abs(self.apply(eta)) ** 2))


def build_vx_circulant(x: np.ndarray, omega: Sequence[int]) -> VxOperator:
    """(V_x)[r, k] = x[(omega_r - k) mod n] / sqrt(m)"""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    omega = _check_omega(omega, n)
    idx = (omega[:, None] - np.arange(n)[None, :]) % n
    return VxOperator(x[idx] / math.sqrt(omega.size), x, 'circulant', omega)


def build_vx_gabor(x: np.ndarray) -> VxOperator:
    """V_x = (1/sqrt(m)) sum_lambda x_lambda pi(lambda), an m x m matrix"""
    x = np.asarray(x, dtype=complex).ravel()
    m = int(round(math.sqrt(x.size)))
    if m * m != x.size or m < 1:
        raise DimensionError(f"Gabor coefficient vector must have square length, got {x.size}")
    modulated = m * sfft.ifft(x.reshape(m, m), axis=1)
    j = np.arange(m)
    # row j, column i picks the translate k = (j - i) mod m
    rows = (j[:, None] - j[None, :]) % m
    matrix = modulated[rows, j[:, None]] / math.sqrt(m)
    return VxOperator(matrix, x, 'gabor')


def build_vx_dense(x: np.ndarray, m: int) -> VxOperator:
    """Block-diagonal V_x for i.i.d. matrices: Phi x = V_x xi, xi row-major"""
    x = np.asarray(x).ravel()
    if m < 1:
        raise DimensionError("m must be >= 1")
    matrix = np.kron(np.eye(m), x[None, :]) / math.sqrt(m)
    return VxOperator(matrix, x, 'dense')


def dense_ensemble(m: int, n: int, spec: SamplerSpec, stream: RandomSource) -> DenseOperator:
    """Phi = (1/sqrt(m)) (xi_ij) with unit-variance i.i.d. entries"""
    if m < 1 or n < 1:
        raise DimensionError(f"dense ensemble needs m, n >= 1, got {m} x {n}")
    entries = spec.draw((m, n), stream)
    if not spec.has_unit_variance:
        entries = entries / math.sqrt(spec.variance())
    return DenseOperator(entries / math.sqrt(m), Backing.DENSE)


class EnsembleKind(str, Enum):
    DENSE = 'dense'
    CIRCULANT = 'circulant'
    GABOR = 'gabor'
    IDENTITY = 'identity'
    ORTHONORMAL = 'orthonormal'


@dataclass
class EnsembleSpec:
    """A drawable family of measurement matrices"""
    kind: EnsembleKind = EnsembleKind.DENSE
    n: int = 64
    m: int = 16
    sampler: SamplerSpec = field(default_factory=lambda: SamplerSpec(SamplerKind.GAUSSIAN))
    omega: str = 'first'

    def __post_init__(self):
        self.kind = EnsembleKind(self.kind)
        if self.kind is EnsembleKind.GABOR and self.n != self.m * self.m:
            raise DimensionError(f"Gabor ensembles have n = m^2, got n={self.n}, m={self.m}")
        if self.m < 1 or self.m > self.n:
            raise DimensionError(f"need 1 <= m <= n, got m={self.m}, n={self.n}")

    def with_m(self, m: int) -> 'EnsembleSpec':
        n = m * m if self.kind is EnsembleKind.GABOR else self.n
        return EnsembleSpec(self.kind, n, m, self.sampler, self.omega)

    @property
    def is_complex(self) -> bool:
        return self.kind is EnsembleKind.GABOR

    def draw(self, stream) -> MeasurementOperator:
        """One operator; child streams keep the generator and Omega independent"""
        if self.kind is EnsembleKind.DENSE:
            return dense_ensemble(self.m, self.n, self.sampler, stream.child('entries'))
        if self.kind is EnsembleKind.CIRCULANT:
            z = self.sampler.draw(self.n, stream.child('generator'))
            omega = choose_omega(self.n, self.m, self.omega, stream.child('omega'))
            return PartialCirculantOperator(PartialCirculantSpec(z, omega))
        if self.kind is EnsembleKind.GABOR:
            eta = self.sampler.draw(self.m, stream.child('window'))
            if not np.any(eta != 0):
                eta[0] = 1.0
            return GaborOperator(GaborSpec(eta / math.sqrt(self.m)))

        omega = choose_omega(self.n, self.m, self.omega, stream.child('omega'))
        if self.kind is EnsembleKind.IDENTITY:
            return DenseOperator(np.eye(self.n)[omega], Backing.EXPLICIT)
        rng = stream.child('haar').generator()
        q, r = np.linalg.qr(rng.standard_normal((self.n, self.n)))
        q = q * np.sign(np.diag(r))[None, :]
        return DenseOperator(q[omega], Backing.EXPLICIT)


@dataclass
class MatrixFamily:
    """Finite family of matrices standing in for a (possibly infinite) set"""
    matrices: List[np.ndarray]
    labels: List[str] = field(default_factory=list)
    kind: str = 'explicit'
    s: int = 0
    n: int = 0
    m: int = 0

    def __post_init__(self):
        if not self.matrices:
            raise DimensionError("matrix family must be nonempty")
        self.matrices = [np.asarray(a) for a in self.matrices]
        shape = self.matrices[0].shape
        if any(a.shape != shape for a in self.matrices):
            raise DimensionError("all family members must share one shape")
        if not self.labels:
            self.labels = [f"A{i}" for i in range(len(self.matrices))]

    def __len__(self) -> int:
        return len(self.matrices)

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.matrices)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrices[0].shape

    def stack(self) -> np.ndarray:
        return np.stack(self.matrices, axis=0)


def fft_self_test(sizes: Sequence[int] = (1, 2, 7, 64, 1000, 1024), tol: float = 1e-9,
                  seed: int = 0) -> float:
    """Worst relative round-trip error of the FFT backend; raises above tol"""
    worst = 0.0
    for n in sizes:
        rng = derive_stream(seed, ('fft_self_test', n)).generator()
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        back = sfft.ifft(sfft.fft(v))
        worst = max(worst, float(np.linalg.norm(back - v) / np.linalg.norm(v)))
    if worst > tol:
        raise ArithmeticError(f"FFT round-trip error {worst:.3e} exceeds {tol:.0e}")
    logger.info("FFT self-test passed, worst relative error %.3e", worst)
    return worst


def dense_csv_rows(op) -> Tuple[List[str], List[list]]:
    """Column-major export rows (column, row, real, imag) of a dense materialization"""
    dense = op.matrix if isinstance(op, VxOperator) else op.to_dense()
    dense = np.asarray(dense)
    rows = []
    for col in range(dense.shape[1]):
        for row in range(dense.shape[0]):
            value = complex(dense[row, col])
            rows.append([col, row, value.real, value.imag])
    return ['column', 'row', 'real', 'imag'], rows
