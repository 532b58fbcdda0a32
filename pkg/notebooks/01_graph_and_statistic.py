# %% [markdown]
# # The cross-edge statistic
#
# Draw a Poissonized two-sample dataset, build the directed k-NN graph and
# count the edges that run from a sample-1 point to a sample-2 point.

# %%
import numpy as np

from knntwosample import (IsotropicNormal, SampleDesign, TestConfig, build_knn_graph,
                          conditional_test, run_test, sample_poissonized)
from knntwosample.graph import max_in_degree, cone_covering_constant

design = SampleDesign(600, 400)
f = IsotropicNormal.standard(3)
g = IsotropicNormal([0.4, 0.0, 0.0])
data = sample_poissonized(design, f, g, seed=1)
len(data), np.bincount(data.labels)[1:]

# %% [markdown]
# Each point sends k edges. In-degrees vary but stay below the cone bound.

# %%
graph = build_knn_graph(data.cloud, 10)
graph.n_edges, max_in_degree(graph), cone_covering_constant(3) * 10

# %% [markdown]
# Fewer cross edges than the null mean of N k pq push R negative; the
# one-sided test rejects for small R.

# %%
for side in ("one", "two"):
    out = run_test(data, TestConfig(10, 0.1, side), graph)
    print(side, out.t_stat, round(out.null_mean, 1), round(out.r_stat, 3), out.decision)

# %% [markdown]
# The conditional test standardizes by the exact mean and variance of T
# given the locations, with labels the only randomness. Passing f twice
# gives the null label probabilities; resampling adds a permutation-style
# p-value.

# %%
cond = conditional_test(data, f, f, None, TestConfig(10, 0.1, "one"), graph,
                        n_resamples=200, seed=0)
cond.cond_mean, cond.cond_var, cond.p_value, cond.perm_p_value
