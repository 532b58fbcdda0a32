"""Cross-edge statistic, its standardizations and the resulting tests.

``T`` counts directed k-NN edges whose tail carries label 1 and whose head
carries label 2. Under the null its mean is ``N k N1 N2 / N^2`` and it is
standardized by ``k sqrt(N) sigma0`` with ``sigma0^2 = pq((p-q)^2 + pq)``.

Given the point locations, labels are independent Bernoulli variables, so
the conditional mean and variance of ``T`` are exact finite sums over the
graph. Those drive the conditional test.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np
from scipy import stats

from .errors import DegenerateTestError, ValidationError
from .graph import DirectedKnnGraph, build_knn_graph
from .sampling import Distribution, LabeledPointCloud, SampleDesign, label_probabilities, make_rng

__all__ = [
    "TestConfig",
    "TestOutcome",
    "ConditionalMoments",
    "cross_edge_count",
    "cross_edge_counts",
    "null_mean",
    "null_variance_sigma0",
    "standardize",
    "run_test",
    "edge_probabilities",
    "conditional_mean",
    "conditional_variance_exact",
    "conditional_moments",
    "resample_statistic",
    "conditional_test",
]

SIDES = ("one", "two", "conditional")


@dataclass(frozen=True)
class TestConfig:
    """Level, neighbor count and rejection rule.

    ``side="one"`` rejects for small ``T``; ``"two"`` for large ``|R|``;
    ``"conditional"`` is the one-sided rule after centering and scaling by
    the conditional moments given the point locations.
    """

    __test__ = False  # not a pytest class

    k: int
    alpha: float = 0.05
    side: str = "one"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValidationError(f"alpha must lie in (0, 1); got {self.alpha!r}")
        if int(self.k) != self.k or self.k < 1:
            raise ValidationError(f"k must be a positive integer; got {self.k!r}")
        side = {"one-sided": "one", "two-sided": "two"}.get(self.side, self.side)
        if side not in SIDES:
            raise ValidationError(f"side must be one of {SIDES}; got {self.side!r}")
        object.__setattr__(self, "side", side)
        object.__setattr__(self, "k", int(self.k))


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False

    t_stat: int
    null_mean: float
    sigma0: float
    r_stat: float
    decision: Optional[bool]
    p_value: float
    k: int
    alpha: float
    side: str
    n_points: int
    cond_mean: Optional[float] = None
    cond_var: Optional[float] = None
    perm_p_value: Optional[float] = None

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ConditionalMoments:
    cond_mean: float
    cond_var: float
    r_cond: Optional[float] = None


# -- the statistic ---------------------------------------------------------


def _check_sizes(graph: DirectedKnnGraph, n: int):
    if graph.n_vertices != n:
        raise ValidationError(
            f"graph has {graph.n_vertices} vertices but there are {n} labels")


def cross_edge_count(graph: DirectedKnnGraph, labeled) -> int:
    """Number of edges (x, y) with label(x) = 1 and label(y) = 2."""
    labels = labeled.labels if isinstance(labeled, LabeledPointCloud) else np.asarray(labeled)
    _check_sizes(graph, labels.size)
    return int(np.count_nonzero((labels[graph.tails] == 1) & (labels[graph.heads] == 2)))


def cross_edge_counts(graph: DirectedKnnGraph, is_one: np.ndarray) -> np.ndarray:
    """``T`` for a batch of labelings; ``is_one`` has shape ``(B, L)``, True for label 1."""
    is_one = np.asarray(is_one, dtype=bool)
    _check_sizes(graph, is_one.shape[-1])
    out = np.zeros(is_one.shape[0], dtype=np.int64)
    nbrs = graph.out_neighbors
    for j in range(graph.out_degree):
        out += np.count_nonzero(is_one & ~is_one[:, nbrs[:, j]], axis=1)
    return out


def null_mean(design: SampleDesign, k: int) -> float:
    return design.n * k * design.n1 * design.n2 / design.n ** 2


def null_variance_sigma0(p: float) -> float:
    """Null variance constant ``pq((p-q)^2 + pq)``; returns sigma0 squared."""
    if not 0 < p < 1:
        raise ValidationError(f"p must lie in (0, 1); got {p!r}")
    q = 1.0 - p
    return p * q * ((p - q) ** 2 + p * q)


def _decide(r: float, alpha: float, side: str):
    if side == "two":
        return bool(abs(r) > stats.norm.ppf(1 - alpha / 2)), float(2 * stats.norm.sf(abs(r)))
    return bool(r < stats.norm.ppf(alpha)), float(stats.norm.cdf(r))


def standardize(t_stat: int, design: SampleDesign, config: TestConfig,
                n_points: Optional[int] = None) -> TestOutcome:
    """Turn a raw count into ``R`` plus decision and normal-approximation p-value."""
    if config.side == "conditional":
        raise ValidationError("conditional standardization needs label probabilities")
    sigma0 = math.sqrt(null_variance_sigma0(design.p))
    mu = null_mean(design, config.k)
    r = (t_stat - mu) / (config.k * math.sqrt(design.n) * sigma0)
    decision, p_value = _decide(r, config.alpha, config.side)
    return TestOutcome(int(t_stat), mu, sigma0, r, decision, p_value,
                       config.k, config.alpha, config.side, n_points)


def _no_decision(labeled, config):
    sigma0 = math.sqrt(null_variance_sigma0(labeled.design.p))
    return TestOutcome(0, null_mean(labeled.design, config.k), sigma0, math.nan,
                       None, math.nan, config.k, config.alpha, config.side, len(labeled))


def run_test(labeled: LabeledPointCloud, config: TestConfig,
             graph: Optional[DirectedKnnGraph] = None) -> TestOutcome:
    """Build the k-NN graph (unless given) and run the configured test.

    Clouds with fewer than two points yield an outcome with ``decision=None``.
    For ``side="conditional"`` the label probabilities stored by the sampler
    are used; call :func:`conditional_test` to supply densities instead.
    """
    if len(labeled) < 2:
        return _no_decision(labeled, config)
    if len(labeled) < config.k + 1:
        warnings.warn(f"only {len(labeled)} points for k={config.k}; "
                      "out-degree clamped", RuntimeWarning, stacklevel=2)
    if graph is None:
        graph = build_knn_graph(labeled.cloud, config.k)
    if config.side == "conditional":
        if labeled.prob1 is None:
            raise ValidationError("conditional test needs densities f, g; use conditional_test")
        return _conditional_outcome(graph, labeled, labeled.prob1, config)
    return standardize(cross_edge_count(graph, labeled), labeled.design, config, len(labeled))


# -- conditional moments ---------------------------------------------------


def edge_probabilities(graph: DirectedKnnGraph, prob1) -> np.ndarray:
    """P(edge is a cross edge | locations) for every edge, tail-major order."""
    prob1 = np.asarray(prob1, dtype=np.float64)
    _check_sizes(graph, prob1.size)
    return prob1[graph.tails] * (1.0 - prob1[graph.heads])


def _prob1(points, f, g, design):
    if f is None and g is None:
        return np.asarray(points, dtype=np.float64)
    if isinstance(points, LabeledPointCloud):
        points = points.points
    return label_probabilities(points, f, g, design)


def conditional_mean(graph: DirectedKnnGraph, points, f: Optional[Distribution] = None,
                     g: Optional[Distribution] = None,
                     design: Optional[SampleDesign] = None) -> float:
    """``E(T | locations) = sum over edges of P(c_x = 1) P(c_y = 2)``.

    Pass either point locations with ``f``, ``g`` and ``design``, or the
    vector of label-1 probabilities alone.
    """
    return float(np.sum(edge_probabilities(graph, _prob1(points, f, g, design))))


def conditional_variance_exact(graph: DirectedKnnGraph, points,
                               f: Optional[Distribution] = None,
                               g: Optional[Distribution] = None,
                               design: Optional[SampleDesign] = None) -> float:
    """Exact ``Var(T | locations)``.

    Edge indicators are dependent only through shared endpoints. With
    ``a = P(label 1)`` and ``b = 1 - a`` per vertex the covariance of two
    distinct edges is

    * shared tail x, heads y != z:  ``a_x b_x b_y b_z``
    * shared head x, tails y != z:  ``a_x b_x a_y a_z``
    * head of one is tail of the other:  ``-h(y,x) h(x,z)`` (the product
      of the indicators is identically zero), including mutual pairs.
    """
    a = _prob1(points, f, g, design)
    _check_sizes(graph, a.size)
    b = 1.0 - a
    n = graph.n_vertices
    h = a[graph.tails] * b[graph.heads]
    total = np.sum(h * (1.0 - h))

    out_b = b[graph.out_neighbors]
    out_sum = out_b.sum(axis=1)
    out_sq = np.einsum("ij,ij->i", out_b, out_b)
    in_sum = np.bincount(graph.heads, weights=a[graph.tails], minlength=n)
    in_sq = np.bincount(graph.heads, weights=a[graph.tails] ** 2, minlength=n)
    ab = a * b
    total += np.sum(ab * (out_sum ** 2 - out_sq))
    total += np.sum(ab * (in_sum ** 2 - in_sq))

    # ordered (into x, out of x) pairs; each pair of distinct edges counted twice
    total -= 2.0 * np.sum(b * in_sum * a * out_sum)
    # ... which double counts the mutual pairs already seen at both endpoints
    total += np.sum(_mutual_products(graph, a, b))
    return float(max(total, 0.0))


def _mutual_products(graph, a, b):
    """``h(x,y) h(y,x)`` for every ordered mutual pair (x,y), (y,x)."""
    n = graph.n_vertices
    key = graph.tails * n + graph.heads
    rev = graph.heads * n + graph.tails
    sorted_key = np.sort(key)
    pos = np.searchsorted(sorted_key, rev)
    pos[pos == sorted_key.size] = 0
    mutual = sorted_key[pos] == rev
    t, hd = graph.tails[mutual], graph.heads[mutual]
    return a[t] * b[hd] * a[hd] * b[t]


def conditional_moments(graph, points, f=None, g=None, design=None, t_stat=None):
    mean = conditional_mean(graph, points, f, g, design)
    var = conditional_variance_exact(graph, points, f, g, design)
    r = None
    if t_stat is not None and var > 0:
        r = (t_stat - mean) / math.sqrt(var)
    return ConditionalMoments(mean, var, r)


def resample_statistic(graph: DirectedKnnGraph, prob1, n_resamples: int,
                       seed=None, batch: int = 256) -> np.ndarray:
    """``T`` under independent relabeling with P(label 1) = ``prob1``."""
    rng = make_rng(seed)
    prob1 = np.asarray(prob1, dtype=np.float64)
    out = np.empty(int(n_resamples), dtype=np.int64)
    for start in range(0, out.size, batch):
        m = min(batch, out.size - start)
        is_one = rng.random((m, prob1.size)) < prob1
        out[start:start + m] = cross_edge_counts(graph, is_one)
    return out


def _conditional_outcome(graph, labeled, prob1, config, n_resamples=0, seed=None):
    t = cross_edge_count(graph, labeled)
    mean = conditional_mean(graph, prob1)
    var = conditional_variance_exact(graph, prob1)
    if not var > 0:
        raise DegenerateTestError("conditional variance is zero; every edge is deterministic")
    r = (t - mean) / math.sqrt(var)
    side = "two" if config.side == "two" else "one"
    decision, p_value = _decide(r, config.alpha, side)
    perm_p = None
    if n_resamples:
        sims = resample_statistic(graph, prob1, n_resamples, seed)
        if side == "two":
            extreme = np.abs(sims - mean) >= abs(t - mean)
        else:
            extreme = sims <= t
        perm_p = float((1 + np.count_nonzero(extreme)) / (1 + n_resamples))
    sigma0 = math.sqrt(null_variance_sigma0(labeled.design.p))
    return TestOutcome(t, null_mean(labeled.design, config.k), sigma0, r, decision,
                       p_value, config.k, config.alpha, config.side, len(labeled),
                       cond_mean=mean, cond_var=var, perm_p_value=perm_p)


def conditional_test(labeled: LabeledPointCloud, f: Distribution, g: Distribution,
                     design: Optional[SampleDesign], config: TestConfig,
                     graph: Optional[DirectedKnnGraph] = None,
                     n_resamples: int = 0, seed=None) -> TestOutcome:
    """Test standardized by the exact conditional moments given the locations.

    With ``n_resamples > 0`` a resampling p-value is added: the share of
    relabeled statistics at least as extreme as the observed one (ties
    count), with the usual +1 correction.
    """
    design = design or labeled.design
    if len(labeled) < 2:
        return _no_decision(labeled, config)
    if graph is None:
        graph = build_knn_graph(labeled.cloud, config.k)
    prob1 = label_probabilities(labeled.points, f, g, design)
    return _conditional_outcome(graph, labeled, prob1, config, n_resamples, seed)
