#!/usr/bin/env python3
"""
Restricted isometry experiments.

delta_s is the largest ||Phi_S^H Phi_S - I||_2->2 over size-s supports S.
The exact path enumerates supports in colexicographic order and runs one
batched Hermitian eigensolve per chunk; the Monte-Carlo path samples
supports and can only ever under-estimate delta_s.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from chaining import sample_complexity
from samplers import RngStream
from structured_ops import (EnsembleKind, EnsembleSpec, MeasurementOperator, build_vx_circulant)
from workers import map_ordered

logger = logging.getLogger(__name__)

SUPPORT_BUDGET = 100_000
EIGH_CHUNK = 4096


class BudgetExceededError(RuntimeError):
    """Raised when exact enumeration would exceed the support budget"""


class RipMethod(str, Enum):
    EXACT = 'exact'
    MC_LOWER = 'mc_lower'


@dataclass
class RipResult:
    s: int
    delta_estimate: float
    method: RipMethod
    supports_examined: int
    witness_support: List[int] = field(default_factory=list)
    witness_vector: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        vector = self.witness_vector
        return {
            's': self.s,
            'delta': self.delta_estimate,
            'method': self.method.value,
            'supports_examined': self.supports_examined,
            'witness_support': [int(i) for i in self.witness_support],
            'witness_real': [] if vector is None else [float(v) for v in np.real(vector)],
            'witness_imag': [] if vector is None else [float(v) for v in np.imag(vector)],
        }


def gram_matrix(op: MeasurementOperator) -> np.ndarray:
    dense = op.to_dense()
    return dense.conj().T @ dense


def per_support_deviation(gram: np.ndarray, support: Sequence[int]):
    """(max |lambda - 1| over eigenvalues of G_S, the eigenvector attaining it)"""
    support = list(support)
    block = gram[np.ix_(support, support)]
    values, vectors = np.linalg.eigh(block)
    deviations = np.abs(values - 1.0)
    k = int(np.argmax(deviations))
    return float(deviations[k]), vectors[:, k]


def colex_supports(n: int, s: int) -> np.ndarray:
    supports = sorted(itertools.combinations(range(n), s), key=lambda c: c[::-1])
    return np.array(supports, dtype=np.int64).reshape(len(supports), s)


def _chunk_extremes(gram: np.ndarray, supports: np.ndarray):
    blocks = gram[supports[:, :, None], supports[:, None, :]]
    values, vectors = np.linalg.eigh(blocks)
    deviations = np.abs(values - 1.0)
    per_support = deviations.max(axis=1)
    best = int(np.argmax(per_support))
    k = int(np.argmax(deviations[best]))
    return float(per_support[best]), supports[best], vectors[best][:, k]


def _scan(gram: np.ndarray, supports: np.ndarray, threads: int):
    chunks = [supports[i:i + EIGH_CHUNK] for i in range(0, len(supports), EIGH_CHUNK)]
    results = map_ordered(lambda chunk: _chunk_extremes(gram, chunk), chunks, threads)
    # first maximum in enumeration order wins
    best = max(range(len(results)), key=lambda i: (results[i][0], -i))
    return results[best]


def delta_s_exact(op: MeasurementOperator, s: int, budget: int = SUPPORT_BUDGET,
                  threads: int = 1) -> RipResult:
    n = op.shape[1]
    if s < 1 or s > n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    total = math.comb(n, s)
    if total > budget:
        raise BudgetExceededError(
            f"C({n}, {s}) = {total} supports exceeds the budget of {budget}; use delta_s_mc_lower")

    gram = gram_matrix(op)
    delta, support, vector = _scan(gram, colex_supports(n, s), threads)
    return RipResult(s, delta, RipMethod.EXACT, total, [int(i) for i in support], vector)


def delta_s_mc_lower(op: MeasurementOperator, s: int, trials: int, stream: RngStream,
                     threads: int = 1) -> RipResult:
    """Max deviation over random supports; a lower bound on delta_s"""
    n = op.shape[1]
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if s < 1 or s > n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")

    gram = gram_matrix(op)
    total = math.comb(n, s)
    if trials >= total:
        supports = colex_supports(n, s)
    else:
        rng = stream.generator()
        supports = np.array([np.sort(rng.choice(n, size=s, replace=False)) for _ in range(trials)],
                            dtype=np.int64).reshape(trials, s)
    delta, support, vector = _scan(gram, supports, threads)
    return RipResult(s, delta, RipMethod.MC_LOWER, len(supports), [int(i) for i in support], vector)


def estimate_delta(op: MeasurementOperator, s: int, stream: RngStream, budget: int = SUPPORT_BUDGET,
                   mc_trials: int = 2000) -> RipResult:
    """Exact when the budget allows, Monte-Carlo lower bound otherwise"""
    if math.comb(op.shape[1], s) <= budget:
        return delta_s_exact(op, s, budget)
    return delta_s_mc_lower(op, s, mc_trials, stream)


def wilson_interval(successes: int, trials: int, confidence: float = 0.95):
    ci = stats.binomtest(successes, trials).proportion_ci(confidence_level=confidence, method='wilson')
    return float(ci.low), float(ci.high)


@dataclass
class SuccessEstimate:
    successes: int
    draws: int
    fraction: float
    ci_lo: float
    ci_hi: float
    method: RipMethod
    deltas: List[float] = field(default_factory=list)

    @property
    def is_upper_estimate(self) -> bool:
        """mc_lower deltas under-estimate delta_s, so success is over-estimated"""
        return self.method is RipMethod.MC_LOWER


def rip_success_prob(ensemble: EnsembleSpec, s: int, delta: float, draws: int, stream: RngStream,
                     budget: int = SUPPORT_BUDGET, mc_trials: int = 2000,
                     threads: int = 1) -> SuccessEstimate:
    if draws < 1:
        raise ValueError("draws must be >= 1")

    def one(i: int) -> RipResult:
        draw_stream = stream.child('draw', i)
        op = ensemble.draw(draw_stream.child('operator'))
        return estimate_delta(op, s, draw_stream.child('supports'), budget, mc_trials)

    results = map_ordered(one, range(draws), threads)
    deltas = [r.delta_estimate for r in results]
    successes = sum(1 for d in deltas if d <= delta)
    method = RipMethod.MC_LOWER if any(r.method is RipMethod.MC_LOWER for r in results) else RipMethod.EXACT
    lo, hi = wilson_interval(successes, draws)
    return SuccessEstimate(successes, draws, successes / draws, lo, hi, method, deltas)


@dataclass
class ScanRow:
    s: int
    m_star: Optional[int]
    f1: float
    ratio: Optional[float]
    evaluations: int

    def to_dict(self) -> dict:
        return {'s': self.s, 'm_star': self.m_star, 'f1': self.f1, 'ratio': self.ratio,
                'evaluations': self.evaluations}


@dataclass
class ScanResult:
    rows: List[ScanRow]
    slope: float
    delta: float
    target_prob: float
    method: RipMethod
    diagnostics: List[Dict] = field(default_factory=list)

    def ratio_spread(self) -> float:
        ratios = [r.ratio for r in self.rows if r.ratio]
        return max(ratios) / min(ratios) if ratios else math.nan


def minimal_m_scan(ensemble: EnsembleSpec, s_list: Sequence[int], delta: float, target_prob: float,
                   draws: int, stream: RngStream, budget: int = SUPPORT_BUDGET,
                   mc_trials: int = 2000, c1: float = 1.0, threads: int = 1) -> ScanResult:
    """Smallest m reaching target_prob for each s, by bisection over m"""
    if not 0.0 < target_prob < 1.0:
        raise ValueError(f"target_prob must lie in (0, 1), got {target_prob}")
    if ensemble.kind is EnsembleKind.GABOR:
        raise ValueError("minimal-m scans need a fixed n; Gabor systems tie n to m")

    n = ensemble.n
    alpha = ensemble.sampler.shape.alpha
    rows: List[ScanRow] = []
    diagnostics: List[Dict] = []
    methods = set()

    for s in s_list:
        evaluations = 0

        def passes(m: int) -> bool:
            nonlocal evaluations
            votes = []
            for j in range(3):
                evaluations += 1
                est = rip_success_prob(ensemble.with_m(m), s, delta, draws,
                                       stream.child('s', s, 'm', m, 'evaluation', j), budget, mc_trials, threads)
                methods.add(est.method)
                votes.append(est.fraction >= target_prob)
            if len(set(votes)) > 1:
                diagnostics.append({'s': s, 'm': m, 'votes': votes})
            return sum(votes) >= 2

        m_star: Optional[int] = None
        if passes(n):
            lo, hi = s - 1, n
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if mid >= 1 and passes(mid):
                    hi = mid
                else:
                    lo = mid
            m_star = hi
        else:
            diagnostics.append({'s': s, 'm': n, 'note': 'target not reached at m = n'})

        f1 = sample_complexity(alpha, s, n, min(delta, 0.999), c1).f1
        rows.append(ScanRow(s, m_star, f1, m_star / f1 if m_star else None, evaluations))

    points = [(math.log(r.f1), math.log(r.m_star)) for r in rows if r.m_star]
    if len({x for x, _ in points}) >= 2:
        slope = float(np.polyfit([x for x, _ in points], [y for _, y in points], 1)[0])
    else:
        slope = math.nan
    method = RipMethod.MC_LOWER if RipMethod.MC_LOWER in methods else RipMethod.EXACT
    return ScanResult(rows, slope, delta, target_prob, method, diagnostics)


def chaos_form_deviation(eta: np.ndarray, omega: Sequence[int], support: Sequence[int]) -> float:
    """sup over unit x on the support of | ||V_x eta||^2 - ||x||^2 |, built from V_x columns"""
    eta = np.asarray(eta, dtype=float)
    n = eta.size
    columns = []
    for k in support:
        e = np.zeros(n)
        e[k] = 1.0
        columns.append(build_vx_circulant(e, omega).matrix @ eta)
    B = np.stack(columns, axis=1)
    values = np.linalg.eigvalsh(B.T @ B)
    return float(np.max(np.abs(values - 1.0)))
