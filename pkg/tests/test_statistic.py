import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from knntwosample.errors import DegenerateTestError, ValidationError
from knntwosample.graph import DirectedKnnGraph, build_knn_graph
from knntwosample.sampling import (IsotropicNormal, LabeledPointCloud, SampleDesign,
                                   label_probabilities, sample_poissonized)
from knntwosample.statistic import (
    TestConfig,
    conditional_mean,
    conditional_moments,
    conditional_test,
    conditional_variance_exact,
    cross_edge_count,
    null_mean,
    null_variance_sigma0,
    resample_statistic,
    run_test,
    standardize,
)
from oracles import count_cross_edges, enumerate_label_moments


def _labeled(points, labels, n1=None, n2=None):
    labels = np.asarray(labels)
    design = SampleDesign(n1 or max(1, int(np.sum(labels == 1))),
                          n2 or max(1, int(np.sum(labels == 2))))
    return LabeledPointCloud(np.asarray(points, float), labels, design)


def _complete(L):
    return DirectedKnnGraph(L - 1, np.array([[j for j in range(L) if j != i] for i in range(L)]))


def test_line_example():
    data = _labeled([0.0, 1.0, 3.0], [1, 2, 1])
    assert cross_edge_count(build_knn_graph(data.cloud, 1), data) == 2


def test_constant_labels_give_zero():
    g = build_knn_graph(np.random.default_rng(0).random((30, 2)), 4)
    assert cross_edge_count(g, np.ones(30, int)) == 0
    assert cross_edge_count(g, np.full(30, 2)) == 0


@pytest.mark.parametrize("a,b", [(1, 1), (3, 4), (5, 2)])
def test_complete_digraph_counts_ordered_pairs(a, b):
    g = _complete(a + b)
    labels = np.array([1] * a + [2] * b)
    assert cross_edge_count(g, labels) == a * b
    # swapping labels counts the 2 -> 1 edges; together every cross pair twice
    assert cross_edge_count(g, 3 - labels) + cross_edge_count(g, labels) == 2 * a * b


def test_size_mismatch():
    g = build_knn_graph(np.arange(5.0), 1)
    with pytest.raises(ValidationError):
        cross_edge_count(g, np.ones(4, int))


@pytest.mark.parametrize("n1,n2,k,expect", [(500, 500, 5, 1250.0), (12000, 8000, 200, 960000.0),
                                            (1, 1, 1, 0.5)])
def test_null_mean(n1, n2, k, expect):
    assert null_mean(SampleDesign(n1, n2), k) == pytest.approx(expect, rel=1e-14)


def test_sigma0():
    assert null_variance_sigma0(0.5) == 0.0625
    assert null_variance_sigma0(0.6) == pytest.approx(0.0672, rel=1e-14)
    for p in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValidationError):
            null_variance_sigma0(p)


def test_standardization_identity():
    design = SampleDesign(300, 200)
    out = standardize(5000, design, TestConfig(10, 0.1, "one"))
    expect = (5000 - null_mean(design, 10)) / (10 * math.sqrt(500) * out.sigma0)
    assert out.r_stat == pytest.approx(expect, rel=1e-14)
    assert out.p_value == pytest.approx(stats.norm.cdf(expect))


def test_two_sided_p_value():
    out = standardize(5000, SampleDesign(300, 200), TestConfig(10, 0.1, "two"))
    assert out.p_value == pytest.approx(2 * stats.norm.sf(abs(out.r_stat)))
    assert out.decision == (abs(out.r_stat) > stats.norm.ppf(0.95))


def test_all_ones_rejects():
    rng = np.random.default_rng(0)
    data = _labeled(rng.random((200, 2)), np.ones(200, int), 100, 100)
    out = run_test(data, TestConfig(5, 0.05))
    assert out.t_stat == 0
    assert out.r_stat < -5
    assert out.decision


def test_deterministic_outcome():
    design = SampleDesign(200, 100)
    f = IsotropicNormal.standard(2)
    a = run_test(sample_poissonized(design, f, f, 5), TestConfig(4, 0.1, "two"))
    b = run_test(sample_poissonized(design, f, f, 5), TestConfig(4, 0.1, "two"))
    assert a == b


def test_tiny_clouds():
    out = run_test(_labeled([[0.0]], [1]), TestConfig(3))
    assert out.decision is None
    with pytest.warns(RuntimeWarning):
        out = run_test(_labeled([[0.0], [1.0], [2.0]], [1, 2, 1]), TestConfig(5))
    assert out.decision is not None


@pytest.mark.parametrize("kwargs", [dict(k=0), dict(k=2, alpha=0), dict(k=2, alpha=1.0),
                                    dict(k=2, side="left")])
def test_config_validation(kwargs):
    with pytest.raises(ValidationError):
        TestConfig(**kwargs)


def test_side_aliases():
    assert TestConfig(1, side="two-sided").side == "two"


def test_invariance_to_vertex_relabeling():
    rng = np.random.default_rng(4)
    pts = rng.standard_normal((60, 3))
    labels = rng.integers(1, 3, 60)
    perm = rng.permutation(60)
    moved_pts = np.empty_like(pts)
    moved_pts[perm] = pts
    moved_labels = np.empty_like(labels)
    moved_labels[perm] = labels
    t = cross_edge_count(build_knn_graph(pts, 5), labels)
    assert t == cross_edge_count(build_knn_graph(moved_pts, 5), moved_labels)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 30), st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_count_bounds_and_oracle(L, k, seed):
    rng = np.random.default_rng(seed)
    g = build_knn_graph(rng.standard_normal((L, 2)), k)
    labels = rng.integers(1, 3, L)
    t = cross_edge_count(g, labels)
    assert 0 <= t <= k * L
    assert t == count_cross_edges(g.out_neighbors, labels)


# -- conditional moments ---------------------------------------------------


def test_conditional_mean_null_is_edges_times_pq():
    rng = np.random.default_rng(1)
    pts = rng.standard_normal((40, 2))
    g = build_knn_graph(pts, 3)
    f = IsotropicNormal.standard(2)
    design = SampleDesign(30, 10)
    assert conditional_mean(g, pts, f, f, design) == pytest.approx(g.n_edges * 0.75 * 0.25)


def test_conditional_mean_line_example_direct_sum():
    pts = np.array([[0.0], [1.0], [3.0]])
    g = build_knn_graph(pts, 1)
    f, gd = stats.norm(0, 1), stats.norm(1, 1)
    phi = lambda x: 0.5 * f.pdf(x) + 0.5 * gd.pdf(x)  # noqa: E731
    expect = sum(0.25 * f.pdf(pts[x, 0]) * gd.pdf(pts[y, 0]) / (phi(pts[x, 0]) * phi(pts[y, 0]))
                 for x, y in g.edges())
    got = conditional_mean(g, pts, IsotropicNormal([0.0]), IsotropicNormal([1.0]),
                           SampleDesign(10, 10))
    assert got == pytest.approx(expect, rel=1e-12)


def test_mutual_pair_variance():
    g = DirectedKnnGraph(1, np.array([[1], [0]]))
    prob1 = np.array([0.3, 0.9])
    h01, h10 = 0.3 * 0.1, 0.9 * 0.7
    # both edges can never cross at once, so their covariance is -h01 h10
    expect = h01 * (1 - h01) + h10 * (1 - h10) - 2 * h01 * h10
    assert conditional_variance_exact(g, prob1) == pytest.approx(expect, rel=1e-12)
    assert enumerate_label_moments(g.out_neighbors, prob1)[1] == pytest.approx(expect, rel=1e-12)


def test_star_graph_variance():
    # star 0 -> 1, 0 -> 2; vertices 3..5 always carry label 1, so every
    # other edge points at a label-1 head and never crosses
    nbrs = np.array([[1, 2], [3, 4], [3, 4], [4, 5], [3, 5], [3, 4]])
    g = DirectedKnnGraph(2, nbrs)
    prob1 = np.array([0.5, 0.5, 0.5, 1.0, 1.0, 1.0])
    assert conditional_variance_exact(g, prob1) == pytest.approx(0.5, rel=1e-14)
    assert conditional_mean(g, prob1) == pytest.approx(0.5, rel=1e-14)
    assert enumerate_label_moments(nbrs, prob1)[1] == pytest.approx(0.5, rel=1e-14)


def test_single_edge_z_scores_are_plus_minus_one():
    g = DirectedKnnGraph(1, np.array([[1], [0]]))
    prob1 = np.array([1.0, 0.5])
    # edge 0 -> 1 is a Bernoulli(1/2); edge 1 -> 0 never crosses
    mean = conditional_mean(g, prob1)
    var = conditional_variance_exact(g, prob1)
    assert (mean, var) == (0.5, 0.25)
    for t in (0, 1):
        assert abs((t - mean) / math.sqrt(var)) == 1.0


def test_moments_match_enumeration_on_random_graphs():
    rng = np.random.default_rng(2024)
    for _ in range(25):
        L = int(rng.integers(2, 13))
        k = int(rng.integers(1, L))
        g = build_knn_graph(rng.standard_normal((L, int(rng.integers(1, 4)))), k)
        prob1 = rng.uniform(0.02, 0.98, L)
        m, v = enumerate_label_moments(g.out_neighbors, prob1)
        assert conditional_mean(g, prob1) == pytest.approx(m, rel=1e-10)
        assert conditional_variance_exact(g, prob1) == pytest.approx(v, rel=1e-10)


def test_moments_match_label_resampling():
    rng = np.random.default_rng(8)
    pts = rng.standard_normal((80, 2))
    g = build_knn_graph(pts, 4)
    f, gd = IsotropicNormal.standard(2), IsotropicNormal([1.0, 0.0])
    design = SampleDesign(40, 40)
    prob1 = label_probabilities(pts, f, gd, design)
    sims = resample_statistic(g, prob1, 10_000, seed=1)
    mean = conditional_mean(g, pts, f, gd, design)
    var = conditional_variance_exact(g, pts, f, gd, design)
    assert abs(sims.mean() - mean) < 3 * math.sqrt(var / sims.size)
    assert sims.var() == pytest.approx(var, rel=0.05)


def test_null_moments_match_label_resampling():
    rng = np.random.default_rng(9)
    g = build_knn_graph(rng.standard_normal((100, 3)), 6)
    prob1 = np.full(100, 0.5)
    sims = resample_statistic(g, prob1, 10_000, seed=2)
    assert sims.var() == pytest.approx(conditional_variance_exact(g, prob1), rel=0.05)


def test_conditional_moments_record():
    rng = np.random.default_rng(3)
    g = build_knn_graph(rng.random((20, 2)), 2)
    prob1 = np.full(20, 0.4)
    mom = conditional_moments(g, prob1, t_stat=10)
    assert mom.cond_var >= 0
    assert mom.r_cond == pytest.approx((10 - mom.cond_mean) / math.sqrt(mom.cond_var))


def test_conditional_test_degenerate():
    f = IsotropicNormal([-50.0])
    gd = IsotropicNormal([50.0])
    data = _labeled([[-50.0], [-49.0], [49.0], [50.0]], [1, 1, 2, 2])
    with pytest.raises(DegenerateTestError):
        conditional_test(data, f, gd, None, TestConfig(1, 0.1, "conditional"))


def test_conditional_test_under_null():
    design = SampleDesign(300, 200)
    f = IsotropicNormal.standard(2)
    data = sample_poissonized(design, f, f, 12)
    out = conditional_test(data, f, f, design, TestConfig(5, 0.1, "conditional"),
                           n_resamples=2000, seed=0)
    assert 0 < out.perm_p_value <= 1
    assert abs(out.perm_p_value - out.p_value) < 0.05
    via_run = run_test(data, TestConfig(5, 0.1, "conditional"))
    assert via_run.r_stat == pytest.approx(out.r_stat)


def test_resampling_p_value_is_uniform_under_null():
    rng = np.random.default_rng(21)
    pts = rng.standard_normal((60, 2))
    g = build_knn_graph(pts, 3)
    prob1 = np.full(60, 0.5)
    design = SampleDesign(30, 30)
    f = IsotropicNormal.standard(2)
    pvals = []
    for i in range(300):
        labels = np.where(rng.random(60) < prob1, 1, 2)
        data = LabeledPointCloud(pts, labels, design)
        out = conditional_test(data, f, f, design, TestConfig(3, 0.1, "conditional"),
                               graph=g, n_resamples=200, seed=i)
        pvals.append(out.perm_p_value)
    # discrete p-values: compare with a uniform on the same support loosely
    assert stats.kstest(pvals, "uniform").statistic < 0.1


def test_null_rejection_rates_conditional_and_plain():
    design = SampleDesign(1200, 800)
    f = IsotropicNormal.standard(2)
    plain = cond = 0
    reps = 200
    for r in range(reps):
        data = sample_poissonized(design, f, f, 1000 + r)
        g = build_knn_graph(data.cloud, 5)
        plain += run_test(data, TestConfig(5, 0.1, "one"), g).decision
        cond += run_test(data, TestConfig(5, 0.1, "conditional"), g).decision
    band = 3 * math.sqrt(0.1 * 0.9 / reps)
    assert abs(plain / reps - 0.1) < band
    assert abs(cond / reps - 0.1) < band
