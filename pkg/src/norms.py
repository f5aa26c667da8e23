#!/usr/bin/env python3
"""
Matrix norms for the chaos bounds.

Frobenius, max-entry, l_p(l_2), spectral, l_2 -> l_q and l_alpha -> l_alpha*.
The last two are hard in general, so they come back as certified intervals:
the lower end is the value of an explicit witness found by restarted
alternating ascent, the upper end comes from interpolation between the
spectral norm and the largest row norm. Above FULL_SVD_LIMIT the spectral
norm comes from power iteration; such intervals carry the power_iteration
label because their upper end rests on a converged estimate, not a proof.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

import numpy as np
from scipy import linalg

from samplers import AlphaShape, RngStream, derive_stream
from workers import map_ordered

logger = logging.getLogger(__name__)

FULL_SVD_LIMIT = 512
# relative slack on a power-iteration sigma used as an upper end
POWER_MARGIN = 1e-6


class NormMethod(str, Enum):
    EXACT = 'exact'
    POWER_ITERATION = 'power_iteration'
    RESTART_ASCENT = 'restart_ascent_plus_interpolation'


@dataclass
class NormInterval:
    lo: float
    hi: float
    method: NormMethod = NormMethod.EXACT

    def __post_init__(self):
        self.lo = max(float(self.lo), 0.0)
        # lo is a witness value, hi a bound; rounding may cross them
        self.hi = max(float(self.hi), self.lo)
        self.method = NormMethod(self.method)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def scaled(self, c: float) -> 'NormInterval':
        return NormInterval(abs(c) * self.lo, abs(c) * self.hi, self.method)

    def to_dict(self) -> dict:
        return {'lo': self.lo, 'hi': self.hi, 'method': self.method.value}


def lq_norm(v: np.ndarray, q: float) -> float:
    """||v||_q, with q = inf giving the max norm"""
    a = np.abs(np.asarray(v)).ravel()
    if a.size == 0:
        return 0.0
    top = float(a.max())
    if math.isinf(q) or top == 0.0:
        return top
    return top * float(np.sum((a / top) ** q)) ** (1.0 / q)


@dataclass
class ExactNorms:
    frobenius: float
    max_entry: float
    l2_to_inf: float
    row_norms: np.ndarray

    def lp_l2(self, p: float) -> float:
        """(sum_i ||row_i||_2^p)^(1/p); p = inf is the largest row norm"""
        return lq_norm(self.row_norms, p)

    @property
    def l1_to_inf(self) -> float:
        return self.max_entry

    def to_dict(self, p_values=(2.0,)) -> dict:
        out = {
            'frobenius': self.frobenius,
            'max_entry': self.max_entry,
            'l2_to_inf': self.l2_to_inf,
        }
        for p in p_values:
            out[f"lp_l2_{p:g}"] = self.lp_l2(p)
        return out


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    return A if np.iscomplexobj(A) else A.astype(float)


def exact_norms(A) -> ExactNorms:
    A = _as_matrix(A)
    row_norms = np.linalg.norm(A, axis=1) if A.size else np.zeros(A.shape[0])
    return ExactNorms(
        frobenius=float(np.linalg.norm(A)),
        max_entry=float(np.max(np.abs(A))) if A.size else 0.0,
        l2_to_inf=float(row_norms.max()) if row_norms.size else 0.0,
        row_norms=row_norms,
    )


@dataclass
class PowerIterationResult:
    value: float
    vector: np.ndarray
    iterations: int
    converged: bool


def power_iteration(A, tol: float = 1e-10, max_iter: int = 10000,
                    stream: Optional[RngStream] = None) -> PowerIterationResult:
    """Largest singular value from power iteration on A^H A"""
    A = _as_matrix(A)
    n = A.shape[1]
    stream = stream or derive_stream(0, ('power_iteration', A.shape[0], n))
    rng = stream.generator()
    v = rng.standard_normal(n)
    if np.iscomplexobj(A):
        v = v + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)

    value = 0.0
    for it in range(1, max_iter + 1):
        w = A.conj().T @ (A @ v)
        w_norm = float(np.linalg.norm(w))
        if w_norm == 0.0:
            return PowerIterationResult(0.0, v, it, True)
        v = w / w_norm
        new_value = float(np.linalg.norm(A @ v))
        if abs(new_value - value) <= tol * new_value:
            return PowerIterationResult(new_value, v, it, True)
        value = new_value

    logger.warning("power iteration did not converge in %d iterations (value %.6g)", max_iter, value)
    return PowerIterationResult(value, v, max_iter, False)


def _top_singular(A: np.ndarray):
    if min(A.shape) <= FULL_SVD_LIMIT:
        _, s, vh = linalg.svd(A, full_matrices=False)
        return float(s[0]), vh[0].conj(), NormMethod.EXACT
    result = power_iteration(A)
    return result.value, result.vector, NormMethod.POWER_ITERATION


def spectral_norm(A) -> float:
    A = _as_matrix(A)
    if A.size == 0:
        return 0.0
    if min(A.shape) <= FULL_SVD_LIMIT:
        return float(linalg.svdvals(A)[0])
    return power_iteration(A).value


def _dual_direction(v: np.ndarray, q: float) -> Optional[np.ndarray]:
    """Unit l_{q'} vector y maximizing Re<y, v>, i.e. phase(v)|v|^(q-1) normalized"""
    a = np.abs(v)
    top = float(a.max()) if a.size else 0.0
    if top == 0.0:
        return None
    phase = np.where(a > 0, v / np.where(a > 0, a, 1.0), 0.0)
    if math.isinf(q):
        y = np.zeros_like(v)
        i = int(np.argmax(a))
        y[i] = phase[i]
        return y
    if q == 1.0:
        return phase
    y = phase * (a / top) ** (q - 1.0)
    return y / lq_norm(y, q / (q - 1.0))


def _ascend(A: np.ndarray, x: np.ndarray, out_q: float, in_p: float,
            tol: float, max_iter: int) -> float:
    """Alternating ascent for sup ||Ax||_{out_q} over the unit l_{in_p} ball"""
    value = lq_norm(A @ x, out_q)
    in_dual = in_p / (in_p - 1.0) if in_p > 1.0 else math.inf
    for _ in range(max_iter):
        y = _dual_direction(A @ x, out_q)
        if y is None:
            break
        new_x = _dual_direction(A.conj().T @ y, in_dual)
        if new_x is None:
            # zero back-projection: keep the previous iterate
            break
        new_value = lq_norm(A @ new_x, out_q)
        x = new_x
        if new_value <= value * (1.0 + tol):
            value = max(value, new_value)
            break
        value = new_value
    return value


def _random_starts(A: np.ndarray, count: int, p: float, stream: RngStream) -> List[np.ndarray]:
    starts = []
    for r in range(count):
        rng = stream.child('restart', r).generator()
        x = rng.standard_normal(A.shape[1])
        if np.iscomplexobj(A):
            x = x + 1j * rng.standard_normal(A.shape[1])
        starts.append(x / lq_norm(x, p))
    return starts


def mixed_norm_interval(A, q: float, restarts: int = 50, tol: float = 1e-8, max_iter: int = 500,
                        stream: Optional[RngStream] = None, threads: int = 1) -> NormInterval:
    """||A||_{l2 -> lq} for q >= 2"""
    A = _as_matrix(A)
    if q < 2.0:
        raise ValueError(f"q must be >= 2, got {q}")
    norms = exact_norms(A)
    if math.isinf(q):
        return NormInterval(norms.l2_to_inf, norms.l2_to_inf, NormMethod.EXACT)

    sigma, top_vector, method = _top_singular(A)
    # a power-iteration sigma is a witness value, so the upper end gets a margin
    sigma_hi = sigma * (1.0 + POWER_MARGIN) if method is NormMethod.POWER_ITERATION else sigma
    if q == 2.0 or sigma == 0.0:
        return NormInterval(sigma, sigma_hi, method)

    hi = min(sigma_hi, sigma_hi ** (2.0 / q) * norms.l2_to_inf ** (1.0 - 2.0 / q))

    best_row = int(np.argmax(norms.row_norms))
    row_start = A[best_row].conj() / norms.row_norms[best_row]
    stream = stream or derive_stream(0, ('mixed_norm', A.shape[0], A.shape[1], q))
    starts = [top_vector, row_start] + _random_starts(A, max(restarts - 2, 0), 2.0, stream)

    values = map_ordered(lambda x0: _ascend(A, x0, q, 2.0, tol, max_iter), starts, threads)
    if method is not NormMethod.POWER_ITERATION:
        method = NormMethod.RESTART_ASCENT
    return NormInterval(max(values), hi, method)


def dual_pair_norm_interval(A, alpha: AlphaShape, restarts: int = 50, tol: float = 1e-8,
                            max_iter: int = 500, stream: Optional[RngStream] = None,
                            threads: int = 1) -> NormInterval:
    """||A||_{l_alpha -> l_alpha*}"""
    A = _as_matrix(A)
    if alpha.alpha == 2.0:
        return mixed_norm_interval(A, 2.0, restarts, tol, max_iter, stream, threads)
    if alpha.star_is_infinite:
        # extreme points of the l1 ball are signed coordinates
        value = exact_norms(A).max_entry
        return NormInterval(value, value, NormMethod.EXACT)

    q = alpha.alpha_star
    upper = mixed_norm_interval(A, q, restarts, tol, max_iter, stream, threads)
    hi = upper.hi
    if hi == 0.0:
        return NormInterval(0.0, 0.0, NormMethod.EXACT)

    col_norms = [lq_norm(A[:, j], q) for j in range(A.shape[1])]
    coordinate = np.zeros(A.shape[1], dtype=A.dtype)
    coordinate[int(np.argmax(col_norms))] = 1.0
    _, top_vector, _ = _top_singular(A)
    stream = stream or derive_stream(0, ('dual_pair_norm', A.shape[0], A.shape[1], alpha.alpha))
    starts = [coordinate, top_vector / lq_norm(top_vector, alpha.alpha)]
    starts += _random_starts(A, max(restarts - 2, 0), alpha.alpha, stream.child('dual'))

    values = map_ordered(lambda x0: _ascend(A, x0, q, alpha.alpha, tol, max_iter), starts, threads)
    method = NormMethod.POWER_ITERATION if upper.method is NormMethod.POWER_ITERATION else NormMethod.RESTART_ASCENT
    return NormInterval(max(values), hi, method)
