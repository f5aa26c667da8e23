#!/usr/bin/env python3
"""
Covering numbers, Dudley integrals and sample-complexity shapes.

Every bound here carries an unspecified absolute constant (c_cov, C, c1).
They default to 1, so the outputs are shape functions: they scale the way
the bounds do, not to their true size.

Logarithms of s and n are floored at 1 so the formulas stay positive for
s in {1, 2}.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from scipy import integrate, special

from samplers import AlphaShape, RngStream
from structured_ops import (MatrixFamily, build_vx_circulant, build_vx_dense, build_vx_gabor,
                            choose_omega)

logger = logging.getLogger(__name__)

DUDLEY_NODES = 512
DUDLEY_TAIL_NODES = 64
DUDLEY_SPAN = 1e-8


def floored_log(v: float) -> float:
    return max(math.log(v), 1.0) if v > 0 else 1.0


class CoverKind(str, Enum):
    SPARSE_BALL = 'sparse_ball'
    CIRCULANT_FAMILY = 'circulant_family'
    GABOR_FAMILY = 'gabor_family'
    EUCLIDEAN_BALL = 'euclidean_ball'
    EMPIRICAL = 'empirical'


@dataclass
class CoverModel:
    """Upper bound on ln N(T, d, u) for one family of sets.

    scale multiplies the metric: a model with scale c covers at radius u what
    the unscaled model covers at u / c.
    """
    kind: CoverKind
    s: int = 1
    n: int = 1
    m: int = 1
    c_cov: float = 1.0
    scale: float = 1.0
    radii: Optional[np.ndarray] = None

    def __post_init__(self):
        self.kind = CoverKind(self.kind)
        if self.c_cov <= 0 or self.scale <= 0:
            raise ValueError("c_cov and scale must be positive")
        if self.kind is CoverKind.EMPIRICAL:
            if self.radii is None:
                raise ValueError("empirical cover models need insertion radii")
            self.radii = np.sort(np.asarray(self.radii, dtype=float))[::-1]

    def scaled(self, c: float) -> 'CoverModel':
        return replace(self, scale=self.scale * c)

    @property
    def diameter(self) -> float:
        """Natural u_max for the Dudley integral of this model"""
        if self.kind in (CoverKind.CIRCULANT_FAMILY, CoverKind.GABOR_FAMILY):
            return self.scale * math.sqrt(self.s / self.m)
        if self.kind is CoverKind.EMPIRICAL:
            # radii[0] is the infinite radius of the first net point
            return self.scale * (float(self.radii[1]) if self.radii.size > 1 else 0.0)
        return 2.0 * self.scale

    def breakpoints(self) -> List[float]:
        """Radii where the bound switches branch or jumps"""
        if self.kind is CoverKind.CIRCULANT_FAMILY:
            return [self.scale / math.sqrt(self.m), self.diameter]
        if self.kind is CoverKind.EMPIRICAL:
            return [self.scale * r for r in self.radii]
        return []


def log_cover_branches(model: CoverModel, u: float) -> dict:
    """Raw branch values before clamping or enveloping"""
    if u <= 0:
        raise ValueError(f"covering radius must be positive, got {u}")
    v = u / model.scale
    s, n, m, c = model.s, model.n, model.m, model.c_cov

    if model.kind is CoverKind.SPARSE_BALL:
        return {'sparse': s * math.log(math.e * n / s) + s * math.log1p(2.0 / v)}
    if model.kind is CoverKind.EUCLIDEAN_BALL:
        return {'ball': n * math.log1p(2.0 / v)}
    if model.kind is CoverKind.CIRCULANT_FAMILY:
        splice = 1.0 / math.sqrt(m)
        return {
            'large_u': c * (s / m) * (math.log(n) / v) ** 2,
            'small_u': c * s * math.log(math.e * n / (s * v)),
            'small_u_at_splice': c * s * math.log(math.e * n / (s * splice)),
        }
    if model.kind is CoverKind.GABOR_FAMILY:
        return {
            'volumetric': c * s * (math.log(math.e * m * m / s) + math.log(3.0 * math.sqrt(s / m) / v)),
            'maurey': c * (s / m) * (math.log(m) / v) ** 2,
        }
    count = 1 + int(np.sum(model.radii[1:] > v)) if model.radii.size else 1
    return {'greedy': math.log(count)}


def log_cover(model: CoverModel, u: float) -> float:
    """Nonnegative, nonincreasing bound on ln N(T, d, u)"""
    branches = log_cover_branches(model, u)
    v = u / model.scale

    if model.kind is CoverKind.CIRCULANT_FAMILY:
        if v >= math.sqrt(model.s / model.m):
            return 0.0
        if v < 1.0 / math.sqrt(model.m):
            value = branches['small_u']
        else:
            # envelope keeps the bound monotone across the splice
            value = min(branches['large_u'], branches['small_u_at_splice'])
    elif model.kind is CoverKind.GABOR_FAMILY:
        value = min(branches.values())
    else:
        value = next(iter(branches.values()))
    return max(value, 0.0)


CoverFunction = Union[CoverModel, Callable[[float], float]]


def _integrand(model: CoverFunction, alpha: float) -> Callable[[float], float]:
    cover = (lambda u: log_cover(model, u)) if isinstance(model, CoverModel) else model
    return lambda u: max(cover(u), 0.0) ** (1.0 / alpha)


def _alpha_value(alpha) -> float:
    return alpha.alpha if isinstance(alpha, AlphaShape) else float(alpha)


def dudley_gamma(alpha, model: CoverFunction, u_max: float, nodes: int = DUDLEY_NODES,
                 tail_nodes: int = DUDLEY_TAIL_NODES) -> float:
    """Integral of (ln N(u))^(1/alpha) over (0, u_max].

    Log-spaced Simpson rule on [u_max * 1e-8, u_max], split at the model's
    breakpoints, plus a Gauss-Laguerre tail for (0, u_max * 1e-8] after the
    substitution u = u_min * exp(-v).
    """
    if u_max <= 0:
        raise ValueError(f"u_max must be positive, got {u_max}")
    a = _alpha_value(alpha)
    f = _integrand(model, a)

    if isinstance(model, CoverModel) and model.kind is CoverKind.EMPIRICAL:
        return _step_integral(model, a, u_max)

    u_min = u_max * DUDLEY_SPAN
    cuts = [u_min, u_max]
    if isinstance(model, CoverModel):
        cuts += [b for b in model.breakpoints() if u_min < b < u_max]
    cuts = sorted(set(cuts))

    total_log = math.log(u_max / u_min)
    body = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        share = math.log(hi / lo) / total_log
        intervals = max(8, int(round(nodes * share)))
        intervals += intervals % 2
        t = np.linspace(math.log(lo), math.log(hi), intervals + 1)
        u = np.exp(t)
        # one-sided limits at the segment ends
        u[0] *= 1.0 + 1e-12
        u[-1] *= 1.0 - 1e-12
        y = np.array([f(val) for val in u]) * u
        body += float(integrate.simpson(y, x=t))

    v, w = special.roots_laguerre(tail_nodes)
    tail = u_min * float(np.sum(w * np.array([f(u_min * math.exp(-x)) for x in v])))
    return body + tail


def _step_integral(model: CoverModel, alpha: float, u_max: float) -> float:
    """Exact integral for the piecewise-constant greedy cover count"""
    edges = sorted({0.0, u_max} | {model.scale * r for r in model.radii[1:] if r < u_max / model.scale})
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        total += (hi - lo) * log_cover(model, mid) ** (1.0 / alpha)
    return total


def closed_form_gamma(alpha, s: int, n: int, m: int, C: float = 1.0) -> float:
    """Closed-form gamma bound for the structured families"""
    a = _alpha_value(alpha)
    if s < 1 or s > n or m < 2:
        raise ValueError(f"need 1 <= s <= n and m >= 2, got s={s}, n={n}, m={m}")
    if a == 2.0:
        return C * math.sqrt(s / m) * floored_log(s) * floored_log(n)
    return C * s ** (1.0 / a) / math.sqrt(m) * floored_log(n) ** (2.0 / a)


def iid_gamma_bound(alpha, s: int, n: int, m: int) -> float:
    """(s ln(en/s))^(1/alpha) / sqrt(m) for i.i.d. alpha-subexponential matrices"""
    a = _alpha_value(alpha)
    return (s * math.log(math.e * n / s)) ** (1.0 / a) / math.sqrt(m)


@dataclass
class SampleComplexity:
    f1: float
    f2: float
    m_required: int

    def to_dict(self) -> dict:
        return {'f1': self.f1, 'f2': self.f2, 'm_required': self.m_required}


def sample_complexity(alpha, s: int, n: int, delta: float, c1: float = 1.0) -> SampleComplexity:
    a = _alpha_value(alpha)
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if s < 1 or s > n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    ls, ln = floored_log(s), floored_log(n)
    f1 = max(s ** (2.0 / a) * ln ** (4.0 / a), s * ls ** 2 * ln ** 2)
    f2 = max(s ** ((2.0 - a) / 2.0) * ln ** 2, ls ** a * ln ** a)
    return SampleComplexity(f1, f2, int(math.ceil(c1 * f1 / delta ** 2)))


def iid_sample_complexity(alpha, s: int, n: int, delta: float, C: float = 1.0) -> int:
    a = _alpha_value(alpha)
    return int(math.ceil(C / delta ** 2 * (s * math.log(math.e * n / s)) ** (2.0 / a)))


def _euclidean(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))


@dataclass
class FarthestPointOrder:
    order: List[int]
    radii: np.ndarray  # radii[i] = distance of order[i] to the points chosen before it

    def net_at(self, u: float) -> List[int]:
        """Greedy net at radius u: the prefix of points inserted farther than u"""
        count = 1 + int(np.sum(self.radii[1:] > u))
        return self.order[:count]


def farthest_point_order(points: Sequence, metric: Callable = _euclidean) -> FarthestPointOrder:
    """Farthest-point traversal from index 0, ties to the lowest index"""
    count = len(points)
    if count == 0:
        raise ValueError("need at least one point")
    order = [0]
    radii = [math.inf]
    dist = np.array([metric(points[0], p) for p in points], dtype=float)
    dist[0] = -1.0
    while len(order) < count:
        nxt = int(np.argmax(dist))
        radii.append(float(dist[nxt]))
        order.append(nxt)
        dist[nxt] = -1.0
        for i in range(count):
            if dist[i] > 0.0:
                dist[i] = min(dist[i], metric(points[nxt], points[i]))
    return FarthestPointOrder(order, np.array(radii))


@dataclass
class GreedyNet:
    indices: List[int]
    points: list = field(repr=False, default_factory=list)

    @property
    def count(self) -> int:
        return len(self.indices)


def greedy_net(points: Sequence, u: float, metric: Callable = _euclidean) -> GreedyNet:
    """Add the farthest remaining point until every point is within u of the net"""
    if len(points) == 0:
        raise ValueError("need at least one point")
    indices = [0]
    dist = np.array([metric(points[0], p) for p in points], dtype=float)
    while True:
        nxt = int(np.argmax(dist))
        if dist[nxt] <= u:
            break
        indices.append(nxt)
        dist = np.minimum(dist, [metric(points[nxt], p) for p in points])
    return GreedyNet(indices, [points[i] for i in indices])


def empirical_cover_model(points: Sequence, metric: Callable = _euclidean) -> CoverModel:
    traversal = farthest_point_order(points, metric)
    return CoverModel(CoverKind.EMPIRICAL, radii=traversal.radii)


def _random_sparse(s: int, n: int, complex_values: bool, rng: np.random.Generator) -> np.ndarray:
    x = np.zeros(n, dtype=complex if complex_values else float)
    support = rng.choice(n, size=s, replace=False)
    values = rng.standard_normal(s)
    if complex_values:
        values = values + 1j * rng.standard_normal(s)
    x[support] = values / np.linalg.norm(values)
    return x


def sparse_vx_family(kind: str, s: int, n: int, m: int, count: int, stream: RngStream,
                     omega: Optional[np.ndarray] = None) -> MatrixFamily:
    """Random finite net of {V_x : x s-sparse, ||x||_2 = 1}"""
    if count < 1:
        raise ValueError("family needs at least one member")
    if kind == 'gabor':
        n = m * m
    if s < 1 or s > n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    if kind == 'circulant' and omega is None:
        omega = choose_omega(n, m, 'first')

    matrices = []
    for i in range(count):
        rng = stream.child('member', i).generator()
        x = _random_sparse(s, n, kind == 'gabor', rng)
        if kind == 'circulant':
            matrices.append(build_vx_circulant(x, omega).matrix)
        elif kind == 'gabor':
            matrices.append(build_vx_gabor(x).matrix)
        elif kind == 'dense':
            matrices.append(build_vx_dense(x, m).matrix)
        else:
            raise ValueError(f"unknown V_x family kind '{kind}'")
    labels = [f"{kind}_vx_{i}" for i in range(count)]
    return MatrixFamily(matrices, labels, kind=kind, s=s, n=n, m=m)


def operator_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b, ord=2))


def family_cover_model(family: MatrixFamily) -> CoverModel:
    """Greedy-net cover model of a finite family in the operator-norm metric"""
    model = empirical_cover_model(family.matrices, operator_distance)
    return replace(model, s=family.s or 1, n=family.n or 1, m=family.m or 1)


def cover_trace(model: CoverModel, alpha, u_max: float, points: int = 64) -> List[list]:
    """(u, log_cover, integrand) rows on a log-spaced grid, for plotting"""
    a = _alpha_value(alpha)
    rows = []
    for u in np.geomspace(u_max * 1e-4, u_max, points):
        value = log_cover(model, float(u))
        rows.append([float(u), value, value ** (1.0 / a)])
    return rows
