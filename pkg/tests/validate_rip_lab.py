#!/usr/bin/env python3
"""
Restricted Isometry Validator

Exact and sampled delta_s, success probabilities and the minimal-m scan.
"""

import math

import numpy as np
import pytest

from rip_lab import (BudgetExceededError, RipMethod, chaos_form_deviation, colex_supports, delta_s_exact,
                     delta_s_mc_lower, minimal_m_scan, per_support_deviation, rip_success_prob,
                     wilson_interval)
from samplers import AlphaShape, SamplerKind, SamplerSpec, derive_stream
from structured_ops import (DenseOperator, EnsembleKind, EnsembleSpec, PartialCirculantOperator,
                            PartialCirculantSpec)


def _stream(*labels):
    return derive_stream(31, labels)


def test_identity_is_an_isometry():
    op = DenseOperator(np.eye(6))
    for s in (1, 2, 3):
        assert delta_s_exact(op, s).delta_estimate == pytest.approx(0.0, abs=1e-12)
    assert delta_s_mc_lower(op, 2, 5, _stream('id')).delta_estimate == pytest.approx(0.0, abs=1e-12)


def test_duplicate_columns_give_delta_one():
    col = np.array([0.6, 0.8, 0.0])
    matrix = np.stack([col, col, np.array([0.0, 0.0, 1.0])], axis=1)
    result = delta_s_exact(DenseOperator(matrix), 2)
    assert result.delta_estimate == pytest.approx(1.0)
    assert result.witness_support == [0, 1]
    assert result.supports_examined == 3


def test_budget_is_enforced():
    op = DenseOperator(np.eye(30))
    with pytest.raises(BudgetExceededError):
        delta_s_exact(op, 10, budget=1000)


def test_exhaustive_mc_matches_exact():
    rng = _stream('mc').generator()
    op = DenseOperator(rng.standard_normal((5, 8)) / math.sqrt(5))
    exact = delta_s_exact(op, 2)
    sampled = delta_s_mc_lower(op, 2, math.comb(8, 2), _stream('mc_supports'))
    assert sampled.delta_estimate == pytest.approx(exact.delta_estimate)
    assert sampled.method is RipMethod.MC_LOWER


def test_mc_is_a_lower_bound():
    rng = _stream('lower').generator()
    op = DenseOperator(rng.standard_normal((6, 12)) / math.sqrt(6))
    exact = delta_s_exact(op, 3)
    sampled = delta_s_mc_lower(op, 3, 40, _stream('lower_supports'))
    assert sampled.delta_estimate <= exact.delta_estimate + 1e-12


def test_exact_is_independent_of_threads():
    rng = _stream('threads').generator()
    op = DenseOperator(rng.standard_normal((5, 14)))
    one = delta_s_exact(op, 3, threads=1)
    four = delta_s_exact(op, 3, threads=4)
    assert one.delta_estimate == four.delta_estimate
    assert one.witness_support == four.witness_support


def test_witness_attains_delta():
    rng = _stream('witness').generator()
    op = DenseOperator(rng.standard_normal((4, 7)) / 2.0)
    result = delta_s_exact(op, 2)
    x = np.zeros(7)
    x[result.witness_support] = result.witness_vector
    assert abs(np.sum(op.apply(x) ** 2) - np.sum(x ** 2)) == pytest.approx(result.delta_estimate, rel=1e-8)


def test_colex_order():
    supports = colex_supports(4, 2).tolist()
    assert supports == [[0, 1], [0, 2], [1, 2], [0, 3], [1, 3], [2, 3]]


def test_per_support_deviation():
    gram = np.array([[1.0, 0.5], [0.5, 1.0]])
    value, _ = per_support_deviation(gram, [0, 1])
    assert value == pytest.approx(0.5)


def test_success_prob_extremes():
    ensemble = EnsembleSpec(EnsembleKind.DENSE, 10, 5, SamplerSpec(SamplerKind.GAUSSIAN))
    certain = rip_success_prob(ensemble, 2, 1e6, 10, _stream('certain'))
    assert certain.fraction == 1.0
    never = rip_success_prob(ensemble, 2, 0.0, 10, _stream('never'))
    assert never.fraction == 0.0
    assert never.ci_lo == pytest.approx(0.0, abs=1e-12)
    assert 0.0 < never.ci_hi < 1.0


def test_mc_success_is_flagged_as_upper_estimate():
    ensemble = EnsembleSpec(EnsembleKind.DENSE, 40, 10, SamplerSpec(SamplerKind.GAUSSIAN))
    estimate = rip_success_prob(ensemble, 3, 0.9, 3, _stream('upper'), budget=100, mc_trials=50)
    assert estimate.method is RipMethod.MC_LOWER
    assert estimate.is_upper_estimate


def test_wilson_interval_contains_fraction():
    lo, hi = wilson_interval(7, 10)
    assert lo < 0.7 < hi


def test_identity_scan_needs_full_m():
    ensemble = EnsembleSpec(EnsembleKind.IDENTITY, 8, 8, SamplerSpec(SamplerKind.GAUSSIAN))
    scan = minimal_m_scan(ensemble, [1, 2], 0.1, 0.9, 3, _stream('scan'))
    assert [row.m_star for row in scan.rows] == [8, 8]
    assert scan.method is RipMethod.EXACT


def test_scan_on_circulant_ensemble():
    sampler = SamplerSpec(SamplerKind.WEIBULL_SYMMETRIC, AlphaShape(1.5))
    ensemble = EnsembleSpec(EnsembleKind.CIRCULANT, 12, 12, sampler, omega='random')
    scan = minimal_m_scan(ensemble, [1, 2], 0.8, 0.5, 5, _stream('circ_scan'))
    for row in scan.rows:
        assert row.m_star is None or 1 <= row.m_star <= 12
        assert row.f1 > 0.0


def test_scan_rejects_gabor():
    ensemble = EnsembleSpec(EnsembleKind.GABOR, 9, 3, SamplerSpec(SamplerKind.GAUSSIAN))
    with pytest.raises(ValueError):
        minimal_m_scan(ensemble, [1], 0.5, 0.9, 3, _stream('gabor'))


def test_chaos_form_matches_restricted_gram():
    n, omega = 10, np.array([0, 2, 5, 7])
    eta = _stream('chaos_form').generator().standard_normal(n)
    support = [1, 4, 6]
    op = PartialCirculantOperator(PartialCirculantSpec(eta, omega))
    value, _ = per_support_deviation(op.to_dense().T @ op.to_dense(), support)
    assert chaos_form_deviation(eta, omega, support) == pytest.approx(value, rel=1e-10)


def test_exact_matches_sphere_grid():
    rng = _stream('sphere').generator()
    theta = np.linspace(0.0, np.pi, 4001)
    for i in range(5):
        matrix = rng.standard_normal((3, 8)) / math.sqrt(3)
        if i % 2:
            matrix = matrix + 1j * rng.standard_normal((3, 8)) / math.sqrt(3)
        op = DenseOperator(matrix)
        gram = matrix.conj().T @ matrix
        brute = 0.0
        for a, b in colex_supports(8, 2):
            block = gram[np.ix_([a, b], [a, b])]
            if np.iscomplexobj(matrix):
                # unit vectors (cos t, e^{i phi} sin t), phi on a coarse grid
                values = []
                for phi in np.linspace(0.0, 2 * np.pi, 128, endpoint=False):
                    x = np.stack([np.cos(theta), np.exp(1j * phi) * np.sin(theta)])
                    values.append(np.abs(np.real(np.sum(x.conj() * (block @ x), axis=0)) - 1.0).max())
                brute = max(brute, max(values))
            else:
                x = np.stack([np.cos(theta), np.sin(theta)])
                brute = max(brute, float(np.abs(np.sum(x * (block @ x), axis=0) - 1.0).max()))
        assert delta_s_exact(op, 2).delta_estimate == pytest.approx(brute, abs=2e-3)


def test_delta_is_nondecreasing_in_s():
    rng = _stream('monotone').generator()
    op = DenseOperator(rng.standard_normal((6, 10)) / math.sqrt(6))
    deltas = [delta_s_exact(op, s).delta_estimate for s in range(1, 5)]
    assert all(b >= a - 1e-12 for a, b in zip(deltas, deltas[1:]))
