"""Two-sample tests from cross-edge counts in growing-k nearest-neighbor graphs.

The pooled sample is turned into a directed k-NN graph and the test counts
edges that point from a sample-1 point to a sample-2 point. Too few such
edges is evidence that the two distributions differ.

Modules
-------
graph
    k-NN digraph construction (brute force and kd-tree, identical output).
sampling
    Poissonized two-sample data, parametric families, CSV I/O.
statistic
    The cross-edge count, its null standardization and conditional moments.
theory
    Asymptotic variances, local-power coefficients, thresholds and regimes.
experiments
    Monte-Carlo power studies with deterministic parallel reduction.
"""

__version__ = "0.1.0"

from .errors import (DegenerateDirectionError, DegenerateInputError, DegenerateTestError,
                     NumericalDegeneracyError, NumericalError, ToleranceError,
                     UnsupportedScheduleError, ValidationError)
from .graph import (DirectedKnnGraph, PointCloud, build_knn_graph, build_knn_graph_brute,
                    build_knn_graph_indexed, cone_covering_constant, max_in_degree)
from .sampling import (IsotropicNormal, LabeledPointCloud, SampleDesign, SphericalNormalFamily,
                       TruncatedFamily, read_labeled_csv, sample_poissonized,
                       spherical_normal_family, write_labeled_csv)
from .statistic import (TestConfig, TestOutcome, conditional_mean, conditional_moments,
                        conditional_test, conditional_variance_exact, cross_edge_count,
                        null_mean, null_variance_sigma0, run_test)
from .theory import (Estimate, asymptotic_variance_conditional, asymptotic_variance_general,
                     classify_regime, coeff_a, coeff_b, gamma_sum_identity_check,
                     hp_dissimilarity, mean_shift_heuristic, phase_transition_dimension,
                     predicted_power_one_sided, predicted_power_two_sided, unit_ball_volume)
from .experiments import (ExperimentPlan, PowerSurface, compare_empirical_vs_predicted,
                          emit_csv, estimate_power, parse_plan, run_single_trial)
