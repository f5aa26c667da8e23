#!/usr/bin/env python3
"""
Norm Validator

Exact norms against hand-computed values, and the certified intervals
against closed forms and the ordering chain between them.
"""

import math

import numpy as np
import pytest
from scipy import linalg

from norms import (NormInterval, NormMethod, dual_pair_norm_interval, exact_norms, lq_norm,
                   mixed_norm_interval, power_iteration, spectral_norm)
from samplers import AlphaShape, derive_stream


def _random_matrix(label, shape=(6, 5)):
    return derive_stream(77, ('norms', label)).generator().standard_normal(shape)


def test_exact_norms_of_identity():
    norms = exact_norms(np.eye(4))
    assert norms.frobenius == pytest.approx(2.0)
    assert norms.max_entry == 1.0
    assert norms.l2_to_inf == 1.0
    assert norms.lp_l2(2.0) == pytest.approx(2.0)
    assert norms.lp_l2(math.inf) == 1.0
    assert norms.l1_to_inf == 1.0


def test_exact_norms_of_all_ones():
    norms = exact_norms(np.ones((3, 4)))
    assert norms.frobenius == pytest.approx(math.sqrt(12.0))
    assert norms.l2_to_inf == pytest.approx(2.0)
    assert norms.lp_l2(4.0) == pytest.approx((3 * 2.0 ** 4) ** 0.25)


def test_lq_norm_handles_inf_and_zero():
    assert lq_norm(np.array([3.0, -4.0]), 2.0) == pytest.approx(5.0)
    assert lq_norm(np.array([3.0, -4.0]), math.inf) == 4.0
    assert lq_norm(np.zeros(3), 3.0) == 0.0


def test_spectral_norm_examples():
    assert spectral_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0)
    u, v = np.array([1.0, 2.0, 2.0]), np.array([3.0, 4.0])
    assert spectral_norm(np.outer(u, v)) == pytest.approx(15.0)


def test_power_iteration_agrees_with_svd():
    A = _random_matrix('power')
    result = power_iteration(A, stream=derive_stream(0, ('pi',)))
    assert result.converged
    assert result.value == pytest.approx(spectral_norm(A), rel=1e-6)


def test_mixed_norm_at_q2_is_spectral():
    A = _random_matrix('q2')
    interval = mixed_norm_interval(A, 2.0, restarts=5, stream=derive_stream(0, ('q2',)))
    assert interval.lo == pytest.approx(spectral_norm(A))
    assert interval.hi == pytest.approx(spectral_norm(A))


def test_mixed_norm_rank_one_closed_form():
    u, v = np.array([1.0, -2.0, 0.5, 3.0]), np.array([2.0, 1.0, -1.0])
    A = np.outer(u, v)
    q = 3.0
    exact = lq_norm(u, q) * float(np.linalg.norm(v))
    interval = mixed_norm_interval(A, q, restarts=10, stream=derive_stream(0, ('rank1',)))
    assert interval.lo == pytest.approx(exact, rel=1e-6)
    assert interval.hi >= exact * (1 - 1e-9)
    assert interval.method is NormMethod.RESTART_ASCENT


def test_mixed_norm_at_inf_is_max_row():
    A = _random_matrix('inf')
    interval = mixed_norm_interval(A, math.inf)
    assert interval.lo == interval.hi == pytest.approx(exact_norms(A).l2_to_inf)


def test_mixed_norm_all_ones():
    n = 5
    q = 4.0
    interval = mixed_norm_interval(np.ones((n, n)), q, restarts=5, stream=derive_stream(0, ('ones',)))
    expected = n ** 0.5 * n ** (1.0 / q)
    assert interval.lo == pytest.approx(expected, rel=1e-6)
    assert interval.hi == pytest.approx(expected, rel=1e-6)


def test_dual_pair_alpha_one_is_max_entry():
    A = _random_matrix('alpha1')
    interval = dual_pair_norm_interval(A, AlphaShape(1.0))
    assert interval.lo == interval.hi == pytest.approx(float(np.max(np.abs(A))))


def test_dual_pair_alpha_two_is_spectral():
    A = _random_matrix('alpha2')
    interval = dual_pair_norm_interval(A, AlphaShape(2.0), restarts=5, stream=derive_stream(0, ('a2',)))
    assert interval.hi == pytest.approx(spectral_norm(A))


@pytest.mark.parametrize('alpha', [1.25, 1.5, 1.75])
def test_norm_ordering_chain(alpha):
    shape = AlphaShape(alpha)
    A = _random_matrix(f'chain{alpha}', (7, 7))
    stream = derive_stream(1, ('chain', alpha))
    dual = dual_pair_norm_interval(A, shape, restarts=10, stream=stream)
    mixed = mixed_norm_interval(A, shape.alpha_star, restarts=10, stream=stream)
    assert dual.lo <= mixed.hi * (1 + 1e-9)
    assert mixed.lo <= mixed.hi * (1 + 1e-9)
    assert mixed.hi <= spectral_norm(A) + 1e-9
    norms = exact_norms(A)
    assert norms.lp_l2(shape.alpha_star) <= norms.frobenius * (1 + 1e-12)


def test_zero_matrix_intervals():
    Z = np.zeros((3, 3))
    assert mixed_norm_interval(Z, 3.0).hi == 0.0
    assert dual_pair_norm_interval(Z, AlphaShape(1.5)).hi == 0.0


def test_interval_never_inverts():
    interval = NormInterval(2.0, 1.9999999, NormMethod.RESTART_ASCENT)
    assert interval.hi >= interval.lo
    assert interval.scaled(-2.0).lo == pytest.approx(4.0)


def test_power_iteration_interval_covers_spectral_norm():
    A = derive_stream(77, ('norms', 'large')).generator().standard_normal((600, 600))
    interval = mixed_norm_interval(A, 2.0)
    assert interval.method is NormMethod.POWER_ITERATION
    assert interval.hi >= float(linalg.svdvals(A)[0])
    assert interval.lo <= interval.hi


def test_power_iteration_label_survives_ascent():
    A = derive_stream(77, ('norms', 'large_q3')).generator().standard_normal((520, 540))
    interval = mixed_norm_interval(A, 3.0, restarts=3, max_iter=50)
    assert interval.method is NormMethod.POWER_ITERATION
    assert interval.hi >= interval.lo > 0.0
