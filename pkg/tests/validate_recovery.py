#!/usr/bin/env python3
"""
Recovery Validator

Basis pursuit against an LP reference, and the trial and phase-transition
drivers built on it.
"""

import math

import numpy as np
import pytest

from recovery import (basis_pursuit, basis_pursuit_lp, phase_transition, random_sparse_signal,
                      recovery_trial, shrink)
from rip_lab import delta_s_exact
from samplers import SamplerKind, SamplerSpec, derive_stream
from structured_ops import DenseOperator, EnsembleKind, EnsembleSpec

GAUSSIAN = SamplerSpec(SamplerKind.GAUSSIAN)


def _stream(*labels):
    return derive_stream(55, labels)


def test_shrink_keeps_phase():
    v = np.array([3.0, -0.5, 0.0, 2j])
    np.testing.assert_allclose(shrink(v, 1.0), [2.0, 0.0, 0.0, 1j])


def test_zero_measurements_give_zero():
    op = DenseOperator(_stream('zero').generator().standard_normal((4, 10)))
    outcome = basis_pursuit(op, np.zeros(4))
    assert outcome.converged
    assert not np.any(outcome.z)


def test_orthonormal_system_is_solved_exactly():
    q, _ = np.linalg.qr(_stream('ortho').generator().standard_normal((6, 6)))
    op = DenseOperator(q)
    y = _stream('ortho_y').generator().standard_normal(6)
    outcome = basis_pursuit(op, y)
    np.testing.assert_allclose(outcome.z, q.T @ y, atol=1e-10)
    assert outcome.residual < 1e-10


def test_matches_lp_reference():
    rng = _stream('lp').generator()
    matrix = rng.standard_normal((12, 30)) / math.sqrt(12)
    op = DenseOperator(matrix)
    y = rng.standard_normal(12)
    outcome = basis_pursuit(op, y, max_iter=20000, tol=1e-10)
    reference = basis_pursuit_lp(op, y)
    assert outcome.residual < 1e-8
    assert outcome.l1 == pytest.approx(float(np.sum(np.abs(reference))), rel=1e-4)


def test_rejects_overdetermined_systems():
    with pytest.raises(ValueError):
        basis_pursuit(DenseOperator(np.ones((5, 3))), np.ones(5))


def test_sparse_signal_is_unit_norm():
    x = random_sparse_signal(20, 4, _stream('signal'))
    assert np.count_nonzero(x) == 4
    assert np.linalg.norm(x) == pytest.approx(1.0)
    flat = random_sparse_signal(20, 4, _stream('flat'), model='flat')
    assert np.allclose(np.abs(flat[flat != 0]), 0.5)
    assert not np.any(random_sparse_signal(5, 0, _stream('empty')))


def test_orthonormal_trials_always_succeed():
    ensemble = EnsembleSpec(EnsembleKind.ORTHONORMAL, 8, 8, GAUSSIAN)
    for t in range(5):
        assert recovery_trial(ensemble, 3, _stream('trial', t)).success
    assert recovery_trial(ensemble, 0, _stream('trial_empty')).success


def test_small_delta_implies_recovery():
    ensemble = EnsembleSpec(EnsembleKind.DENSE, 12, 10, GAUSSIAN)
    qualified, wins = 0, 0
    for t in range(20):
        stream = _stream('rip_recovery', t)
        op = ensemble.draw(stream.child('operator'))
        if delta_s_exact(op, 2).delta_estimate > 0.3:
            continue
        qualified += 1
        wins += recovery_trial(ensemble, 1, stream).success
    if qualified:
        assert wins >= math.ceil(0.95 * qualified)


def test_phase_transition_corner_cells():
    ensemble = EnsembleSpec(EnsembleKind.ORTHONORMAL, 8, 8, GAUSSIAN)
    table = phase_transition(ensemble, [2, 8], [1, 4], 6, _stream('phase'))
    assert table.rate.shape == (2, 2)
    assert table.rate[1, 0] == 1.0
    assert math.isnan(table.rate[0, 1])
    rows = table.rows()
    assert rows[0][:2] == [2, 1]
    assert len(rows) == 4


def test_phase_transition_is_independent_of_threads():
    ensemble = EnsembleSpec(EnsembleKind.DENSE, 16, 8, GAUSSIAN)
    one = phase_transition(ensemble, [6, 8], [1, 2], 4, _stream('threads'), threads=1)
    four = phase_transition(ensemble, [6, 8], [1, 2], 4, _stream('threads'), threads=4)
    np.testing.assert_array_equal(one.rate, four.rate)


def test_small_instances_match_lp_reference():
    for trial in range(20):
        rng = _stream('lp_small', trial).generator()
        matrix = rng.standard_normal((6, 12)) / math.sqrt(6)
        op = DenseOperator(matrix)
        x = np.zeros(12)
        x[rng.choice(12, size=2, replace=False)] = rng.standard_normal(2)
        y = matrix @ x
        outcome = basis_pursuit(op, y, max_iter=20000, tol=1e-10)
        reference = basis_pursuit_lp(op, y)
        assert outcome.converged
        assert np.linalg.norm(outcome.z - reference) <= 1e-4
        assert outcome.residual <= 1e-10 * (1.0 + np.linalg.norm(y))


def test_inconsistent_system_is_not_converged():
    op = DenseOperator(np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
    outcome = basis_pursuit(op, np.array([1.0, 2.0]), max_iter=200)
    assert outcome.ridge
    assert not outcome.converged
    assert outcome.residual > 0.5
