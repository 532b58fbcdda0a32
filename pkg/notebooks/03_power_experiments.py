# %% [markdown]
# # A small power curve
#
# A reduced version of the power study: d = 6, the deviation
# theta_N = theta_1 + h N^b over a grid of b, and two neighbor counts.
# Replicates are kept low so this runs in under a minute.

# %%
import io

from knntwosample import spherical_normal_family
from knntwosample.experiments import (ExperimentPlan, compare_empirical_vs_predicted,
                                      emit_csv, estimate_power, predict_surface)

plan = ExperimentPlan(d=6, n1=600, n2=400, b_values=(-0.6, -0.4, -0.25, -0.1),
                      k_values=(5, 30), theta1=(20.0,), h=(19.0,), replicates=40, seed=1)
surface = estimate_power(plan)

# %%
buf = io.StringIO()
emit_csv(surface, buf)
print(buf.getvalue())

# %% [markdown]
# Predictions use gamma = log k / log N. At this N the asymptotic
# statements are only a guide.

# %%
preds = predict_surface(surface, spherical_normal_family(6), (20.0,), (19.0,), 0.6)
for row in compare_empirical_vs_predicted(surface, preds):
    print(row.side, row.k, row.b, round(row.empirical, 2), row.label, row.consistent)
