"""Quick self-checks against independent oracles, used by ``knntwosample selftest``."""

from __future__ import annotations

import itertools
import math

import numpy as np

from .graph import (build_knn_graph_brute, build_knn_graph_indexed, cone_covering_constant,
                    max_in_degree)
from .sampling import IsotropicNormal, make_rng, spherical_normal_family
from .statistic import conditional_mean, conditional_variance_exact, null_variance_sigma0
from .theory import (asymptotic_variance_general, coeff_b, gamma_sum_identity_check,
                     hp_dissimilarity)

__all__ = ["run_selftests", "enumerate_moments"]


def enumerate_moments(graph, prob1):
    """Mean and variance of the cross-edge count over all 2^L labelings."""
    L = graph.n_vertices
    prob1 = np.asarray(prob1, dtype=float)
    edges = graph.edges()
    mean = 0.0
    second = 0.0
    for bits in itertools.product((True, False), repeat=L):
        one = np.array(bits)
        w = float(np.prod(np.where(one, prob1, 1 - prob1)))
        t = float(np.sum(one[edges[:, 0]] & ~one[edges[:, 1]]))
        mean += w * t
        second += w * t * t
    return mean, second - mean * mean


def _graphs(rng):
    ok = True
    for _ in range(20):
        d = int(rng.choice([1, 2, 6, 25]))
        L = int(rng.integers(2, 200))
        k = int(rng.integers(1, 30))
        pts = rng.standard_normal((L, d))
        if rng.random() < 0.3:
            pts = np.round(pts, 1)
        a = build_knn_graph_brute(pts, k)
        b = build_knn_graph_indexed(pts, k)
        ok &= np.array_equal(a.out_neighbors, b.out_neighbors)
        ok &= max_in_degree(a) <= cone_covering_constant(d) * k
    return bool(ok)


def _moments(rng):
    worst = 0.0
    for _ in range(5):
        L = int(rng.integers(3, 10))
        graph = build_knn_graph_brute(rng.standard_normal((L, 2)), int(rng.integers(1, L)))
        prob1 = rng.uniform(0.05, 0.95, L)
        m, v = enumerate_moments(graph, prob1)
        worst = max(worst, abs(conditional_mean(graph, prob1) - m) / abs(m),
                    abs(conditional_variance_exact(graph, prob1) - v) / abs(v))
    return worst < 1e-10


def run_selftests(seed: int = 0):
    """Return ``[(check name, passed)]``."""
    rng = make_rng(seed)
    f1 = IsotropicNormal.standard(1)
    results = [
        ("graph_brute_vs_indexed", _graphs(rng)),
        ("conditional_moments_enumeration", _moments(rng)),
        ("sigma0_sq_half", null_variance_sigma0(0.5) == 0.0625),
        ("variance_f_eq_g", all(
            abs(asymptotic_variance_general(f1, f1, p).value - null_variance_sigma0(p)) < 1e-10
            for p in (0.3, 0.5, 0.6))),
        ("hp_f_eq_g", abs(hp_dissimilarity(f1, f1, 0.3).value - 0.21) < 1e-10),
        ("gamma_identity", all(gamma_sum_identity_check(K, d)
                               for K in (1, 2, 10, 50) for d in (2, 6, 25))),
    ]
    fam = spherical_normal_family(3)
    closed = coeff_b(fam, 20.0, 1.0, 0.5, method="closed").value
    numeric = coeff_b(fam, 20.0, 1.0, 0.5, method="numeric").value
    results.append(("coeff_b_d3_closed_vs_cubature", math.isclose(closed, numeric, rel_tol=1e-4)))
    return results
