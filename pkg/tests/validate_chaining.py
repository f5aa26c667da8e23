#!/usr/bin/env python3
"""
Chaining Validator

Covering-number models, the Dudley integral, the closed forms and the
greedy nets used for empirical covers.
"""

import math

import numpy as np
import pytest
from scipy import special

from chaining import (CoverKind, CoverModel, closed_form_gamma, cover_trace, dudley_gamma,
                      empirical_cover_model, family_cover_model, farthest_point_order, floored_log,
                      greedy_net, iid_gamma_bound, iid_sample_complexity, log_cover, sample_complexity,
                      sparse_vx_family)
from samplers import AlphaShape, derive_stream


def test_euclidean_ball_cover():
    model = CoverModel(CoverKind.EUCLIDEAN_BALL, n=3)
    assert log_cover(model, 2.0) == pytest.approx(3.0 * math.log(2.0))


def test_sparse_ball_large_radius_limit():
    model = CoverModel(CoverKind.SPARSE_BALL, s=3, n=50)
    assert log_cover(model, 1e12) == pytest.approx(3 * math.log(math.e * 50 / 3), rel=1e-9)


@pytest.mark.parametrize('kind', [CoverKind.CIRCULANT_FAMILY, CoverKind.GABOR_FAMILY, CoverKind.SPARSE_BALL])
def test_log_cover_is_nonincreasing(kind):
    model = CoverModel(kind, s=4, n=256, m=16)
    grid = np.geomspace(1e-6, 2.0, 400)
    values = [log_cover(model, float(u)) for u in grid]
    assert min(values) >= 0.0
    assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))


def test_circulant_cover_vanishes_beyond_diameter():
    model = CoverModel(CoverKind.CIRCULANT_FAMILY, s=4, n=256, m=16)
    assert log_cover(model, model.diameter * 1.01) == 0.0


def test_log_cover_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        log_cover(CoverModel(CoverKind.SPARSE_BALL, s=1, n=4), 0.0)


def test_dudley_constant_cover():
    K, U = 2.7, 0.8
    for alpha in (1.0, 1.5, 2.0):
        value = dudley_gamma(alpha, lambda u: K, U)
        assert value == pytest.approx(K ** (1.0 / alpha) * U, rel=1e-6)


def test_dudley_log_tail():
    # integral of sqrt(1 + ln(1/u)) over (0, 1] is 1 + (e / 2) sqrt(pi) erfc(1)
    value = dudley_gamma(2.0, lambda u: 1.0 - math.log(u), 1.0)
    expected = 1.0 + math.e / 2.0 * math.sqrt(math.pi) * special.erfc(1.0)
    assert value == pytest.approx(expected, rel=1e-5)


def test_dudley_self_convergence_on_circulant_model():
    model = CoverModel(CoverKind.CIRCULANT_FAMILY, s=4, n=1024, m=64)
    coarse = dudley_gamma(1.5, model, model.diameter, nodes=512)
    fine = dudley_gamma(1.5, model, model.diameter, nodes=2048)
    assert coarse == pytest.approx(fine, rel=1e-4)


def test_dudley_scales_with_metric():
    model = CoverModel(CoverKind.GABOR_FAMILY, s=3, n=64, m=8)
    base = dudley_gamma(2.0, model, model.diameter)
    doubled = model.scaled(2.0)
    assert dudley_gamma(2.0, doubled, doubled.diameter) == pytest.approx(2.0 * base, rel=1e-6)


def test_closed_form_gamma_branches():
    assert closed_form_gamma(2.0, 16, 1024, 64) == pytest.approx(
        math.sqrt(16 / 64) * math.log(16) * math.log(1024))
    assert closed_form_gamma(1.0, 2, 100, 25) == pytest.approx(2 / 5 * math.log(100) ** 2)
    # ln s is floored at 1 for small s
    assert closed_form_gamma(2.0, 1, 100, 4, C=2.0) == pytest.approx(2.0 * 0.5 * math.log(100))
    with pytest.raises(ValueError):
        closed_form_gamma(2.0, 5, 4, 4)


def test_closed_form_gamma_decreases_in_m():
    values = [closed_form_gamma(1.5, 4, 512, m) for m in (16, 64, 256)]
    assert values[0] > values[1] > values[2]


def test_dudley_tracks_closed_form_on_circulant_grid():
    for s in (2, 4, 8, 16):
        for n in (256, 1024):
            for m in (32, 64, 128, 256, 512, 1024):
                if m > n:
                    continue
                model = CoverModel(CoverKind.CIRCULANT_FAMILY, s=s, n=n, m=m)
                ratio = dudley_gamma(2.0, model, model.diameter) / closed_form_gamma(2.0, s, n, m)
                assert 1.0 / 8.0 <= ratio <= 8.0, (s, n, m, ratio)


def test_sample_complexity_example():
    result = sample_complexity(1.0, 4, 1024, 0.5)
    ls, ln = math.log(4), math.log(1024)
    f1 = max(16 * ln ** 4, 4 * ls ** 2 * ln ** 2)
    assert result.f1 == pytest.approx(f1)
    assert result.f2 == pytest.approx(max(4 ** 0.5 * ln ** 2, ls * ln))
    assert result.m_required == math.ceil(f1 / 0.25)


def test_sample_complexity_rejects_bad_delta():
    with pytest.raises(ValueError):
        sample_complexity(2.0, 2, 10, 1.0)


def test_iid_bounds():
    assert iid_gamma_bound(2.0, 2, 20, 4) == pytest.approx(math.sqrt(2 * math.log(10 * math.e)) / 2)
    assert iid_sample_complexity(1.0, 2, 20, 0.5) == math.ceil(4 * (2 * math.log(10 * math.e)) ** 2)


def test_floored_log():
    assert floored_log(1.0) == 1.0
    assert floored_log(2.0) == 1.0
    assert floored_log(100.0) == pytest.approx(math.log(100.0))


def test_greedy_net_examples():
    points = [np.array([0.0]), np.array([1.0])]
    assert greedy_net(points, 2.0).count == 1
    duplicated = [np.array([0.0]), np.array([1.0]), np.array([1.0]), np.array([3.0])]
    assert greedy_net(duplicated, 1e-12).count == 3


def test_greedy_net_covers_every_point():
    rng = derive_stream(0, ('net',)).generator()
    points = list(rng.standard_normal((60, 3)))
    u = 0.7
    net = greedy_net(points, u)
    for p in points:
        assert min(float(np.linalg.norm(p - q)) for q in net.points) <= u + 1e-12


def test_farthest_point_order_prefix_is_net():
    rng = derive_stream(0, ('fps',)).generator()
    points = list(rng.standard_normal((40, 2)))
    traversal = farthest_point_order(points)
    assert traversal.order[0] == 0
    assert math.isinf(traversal.radii[0])
    assert np.all(np.diff(traversal.radii[1:]) <= 1e-12)
    assert traversal.net_at(0.5) == greedy_net(points, 0.5).indices


def test_empirical_cover_integral_is_exact():
    points = [np.array([0.0]), np.array([1.0]), np.array([3.0])]
    model = empirical_cover_model(points)
    # radii after the first point: 3 then 1
    assert model.diameter == pytest.approx(3.0)
    expected = 1.0 * math.log(3.0) + 2.0 * math.log(2.0)
    assert dudley_gamma(1.0, model, model.diameter) == pytest.approx(expected)


def test_sparse_vx_family_and_cover():
    family = sparse_vx_family('circulant', 2, 16, 4, 6, derive_stream(0, ('family',)))
    assert len(family) == 6
    assert family.shape == (4, 16)
    for A in family:
        assert np.linalg.norm(A) == pytest.approx(1.0)
    model = family_cover_model(family)
    assert model.kind is CoverKind.EMPIRICAL
    assert model.diameter > 0.0
    gabor = sparse_vx_family('gabor', 2, 0, 3, 2, derive_stream(0, ('gabor',)))
    assert gabor.n == 9 and gabor.shape == (3, 3)


def test_cover_trace_rows():
    model = CoverModel(CoverKind.SPARSE_BALL, s=2, n=32)
    rows = cover_trace(model, AlphaShape(1.0), 1.0, points=8)
    assert len(rows) == 8
    assert rows[-1][0] == pytest.approx(1.0)
    assert all(r[2] == pytest.approx(r[1]) for r in rows)
