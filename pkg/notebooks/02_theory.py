# %% [markdown]
# # Limits, coefficients and regimes
#
# Variance limits for a shifted pair of normals, the local-power
# coefficients of the spherical normal family and the regime table.

# %%
from knntwosample import IsotropicNormal, spherical_normal_family
from knntwosample.theory import (classify_regime, coeff_a, coeff_b, hp_dissimilarity,
                                 phase_transition_dimension, predicted_power_one_sided,
                                 predicted_power_two_sided, variance_report)

f, g = IsotropicNormal([0.0, 0.0]), IsotropicNormal([2.0, 0.0])
hp_dissimilarity(f, g, 0.5), variance_report(f, g, 0.5)

# %% [markdown]
# `a` is the curvature term and never negative. The sign of `b` follows
# the direction h. The closed form of `b` and the numeric integral agree.

# %%
fam = spherical_normal_family(6)
a = coeff_a(fam, [20.0], [19.0], 0.6)
b_closed = coeff_b(fam, [20.0], [19.0], 0.6, method="closed")
b_numeric = coeff_b(fam, [20.0], [19.0], 0.6, method="numeric")
a, b_closed, b_numeric

# %% [markdown]
# With k = N^0.25 the phase transition sits at d = 6. Above it the two
# thresholds separate and the one-sided test depends on the direction.

# %%
phase_transition_dimension(0.25)

# %%
for b in (-0.6, -0.44, -0.3, -0.1, -0.03):
    report = classify_regime(25, 0.25, b)
    one = predicted_power_one_sided(None, report, 0.1)
    two = predicted_power_two_sided(None, report, 0.1)
    print(f"{b:6}  {report.regime:12} {one.label:20} {two.label}")
