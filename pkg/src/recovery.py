#!/usr/bin/env python3
"""
Basis pursuit and phase-transition experiments.

min ||z||_1 subject to Phi z = y, solved by operator splitting: an affine
projection onto {Phi v = y} (with Phi Phi^H Cholesky-factored once) and
componentwise shrinkage. The returned point is the projection iterate, so
it is feasible to factorization precision.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import linalg, optimize

from rip_lab import wilson_interval
from samplers import RngStream
from structured_ops import EnsembleSpec, MeasurementOperator
from workers import map_ordered

logger = logging.getLogger(__name__)

RIDGE = 1e-12
SUCCESS_TOL = 1e-4
# converged also requires ||Phi z - y|| <= RESIDUAL_TOL (1 + ||y||)
RESIDUAL_TOL = 1e-10


def shrink(v: np.ndarray, tau: float) -> np.ndarray:
    """v * max(1 - tau / |v|, 0): modulus shrinkage, phase preserved"""
    v = np.asarray(v)
    modulus = np.abs(v)
    factor = np.maximum(1.0 - tau / np.where(modulus > 0, modulus, 1.0), 0.0)
    return np.where(modulus > 0, v * factor, 0.0 * v)


@dataclass
class BasisPursuitOutcome:
    z: np.ndarray
    residual: float
    iterations: int
    converged: bool
    gap: float = 0.0
    ridge: bool = False

    @property
    def l1(self) -> float:
        return float(np.sum(np.abs(self.z)))


class AffineProjector:
    """v -> v - Phi^H (Phi Phi^H)^-1 (Phi v - y)"""

    def __init__(self, matrix: np.ndarray):
        self.matrix = matrix
        self.ridge = False
        gram = matrix @ matrix.conj().T
        try:
            self.factor = linalg.cho_factor(gram)
        except linalg.LinAlgError:
            logger.warning("Phi Phi^H is not positive definite; adding a %.0e ridge", RIDGE)
            self.ridge = True
            self.factor = linalg.cho_factor(gram + RIDGE * np.eye(gram.shape[0]))

    def __call__(self, v: np.ndarray, y: np.ndarray) -> np.ndarray:
        correction = linalg.cho_solve(self.factor, self.matrix @ v - y)
        return v - self.matrix.conj().T @ correction


def basis_pursuit(op: MeasurementOperator, y: np.ndarray, max_iter: int = 5000, rho: float = 1.0,
                  tol: float = 1e-8) -> BasisPursuitOutcome:
    matrix = op.to_dense()
    m, n = matrix.shape
    if m > n:
        raise ValueError(f"basis pursuit expects m <= n, got {m} x {n}")
    y = np.asarray(y)
    if y.shape != (m,):
        raise ValueError(f"y must have length {m}, got shape {y.shape}")

    project = AffineProjector(matrix)
    dtype = np.result_type(matrix, y, float)
    z = np.zeros(n, dtype=dtype)
    u = np.zeros(n, dtype=dtype)
    w = project(z, y)

    for it in range(1, max_iter + 1):
        w = project(z - u, y)
        z_new = shrink(w + u, 1.0 / rho)
        u = u + w - z_new
        gap = float(np.linalg.norm(w - z_new))
        step = float(np.linalg.norm(z_new - z))
        z = z_new
        if gap <= tol and step <= tol:
            residual = float(np.linalg.norm(matrix @ w - y))
            feasible = residual <= RESIDUAL_TOL * (1.0 + float(np.linalg.norm(y)))
            if not feasible:
                logger.warning("basis pursuit settled with residual %.3e; the system looks inconsistent", residual)
            return BasisPursuitOutcome(w, residual, it, feasible, gap, project.ridge)

    residual = float(np.linalg.norm(matrix @ w - y))
    logger.warning("basis pursuit stopped after %d iterations (gap %.3e)", max_iter, gap)
    return BasisPursuitOutcome(w, residual, max_iter, False, gap, project.ridge)


def basis_pursuit_lp(op: MeasurementOperator, y: np.ndarray) -> np.ndarray:
    """Reference solution from the LP split z = z+ - z-, real instances only"""
    matrix = op.to_dense()
    if np.iscomplexobj(matrix) or np.iscomplexobj(y):
        raise ValueError("the LP reference handles real instances only")
    n = matrix.shape[1]
    result = optimize.linprog(np.ones(2 * n), A_eq=np.hstack([matrix, -matrix]), b_eq=y,
                              bounds=(0, None), method='highs')
    if not result.success:
        raise RuntimeError(f"LP reference failed: {result.message}")
    return result.x[:n] - result.x[n:]


def random_sparse_signal(n: int, s: int, stream: RngStream, complex_values: bool = False,
                         model: str = 'gaussian') -> np.ndarray:
    """Unit-norm s-sparse vector on a uniform support"""
    x = np.zeros(n, dtype=complex if complex_values else float)
    if s == 0:
        return x
    rng = stream.generator()
    support = rng.choice(n, size=s, replace=False)
    if model == 'gaussian':
        values = rng.standard_normal(s)
        if complex_values:
            values = values + 1j * rng.standard_normal(s)
    elif model == 'flat':
        values = rng.integers(0, 2, size=s) * 2.0 - 1.0
        if complex_values:
            values = np.exp(2j * np.pi * rng.random(s))
    else:
        raise ValueError(f"unknown signal model '{model}'")
    x[support] = values / np.linalg.norm(values)
    return x


@dataclass
class TrialOutcome:
    success: bool
    error: float
    converged: bool
    iterations: int = 0


def recovery_trial(ensemble: EnsembleSpec, s: int, stream: RngStream, signal: str = 'gaussian',
                   max_iter: int = 5000) -> TrialOutcome:
    """Draw Phi and x, recover x from Phi x; non-convergence counts as failure"""
    if s > ensemble.m:
        raise ValueError(f"s = {s} exceeds m = {ensemble.m}")
    op = ensemble.draw(stream.child('operator'))
    x = random_sparse_signal(ensemble.n, s, stream.child('signal'), ensemble.is_complex, signal)
    outcome = basis_pursuit(op, op.apply(x), max_iter=max_iter)
    error = float(np.linalg.norm(outcome.z - x))
    return TrialOutcome(outcome.converged and error <= SUCCESS_TOL, error, outcome.converged,
                        outcome.iterations)


@dataclass
class PhaseTable:
    m_grid: List[int]
    s_grid: List[int]
    rate: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    nonconverged: np.ndarray
    trials: int
    outcomes: dict = field(default_factory=dict, repr=False)

    def rows(self) -> List[list]:
        out = []
        for i, m in enumerate(self.m_grid):
            for j, s in enumerate(self.s_grid):
                out.append([m, s, float(self.rate[i, j]), float(self.ci_lo[i, j]),
                            float(self.ci_hi[i, j]), int(self.nonconverged[i, j])])
        return out


def phase_transition(ensemble: EnsembleSpec, m_grid: Sequence[int], s_grid: Sequence[int], trials: int,
                     stream: RngStream, signal: str = 'gaussian', max_iter: int = 5000,
                     threads: int = 1) -> PhaseTable:
    """Success rate per (m, s) cell; rows m, columns s"""
    if not m_grid or not s_grid or trials < 1:
        raise ValueError("grids must be nonempty and trials >= 1")
    shape = (len(m_grid), len(s_grid))
    rate, lo, hi, stalled = np.zeros(shape), np.zeros(shape), np.zeros(shape), np.zeros(shape, dtype=int)
    outcomes = {}

    for i, m in enumerate(m_grid):
        cell_ensemble = ensemble.with_m(m)
        for j, s in enumerate(s_grid):
            if s > m:
                rate[i, j], lo[i, j], hi[i, j] = math.nan, math.nan, math.nan
                continue
            cell = stream.child('m', m, 's', s)
            results = map_ordered(
                lambda t: recovery_trial(cell_ensemble, s, cell.child('trial', t), signal, max_iter),
                range(trials), threads)
            wins = sum(1 for r in results if r.success)
            rate[i, j] = wins / trials
            lo[i, j], hi[i, j] = wilson_interval(wins, trials)
            stalled[i, j] = sum(1 for r in results if not r.converged)
            outcomes[(m, s)] = results
    return PhaseTable(list(m_grid), list(s_grid), rate, lo, hi, stalled, trials, outcomes)
