import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy import integrate, stats

from knntwosample.errors import NumericalDegeneracyError, ValidationError
from knntwosample.sampling import (
    Distribution,
    IsotropicNormal,
    LabeledPointCloud,
    SampleDesign,
    TruncatedFamily,
    label_probabilities,
    read_labeled_csv,
    replicate_rng,
    sample_count,
    sample_poissonized,
    spherical_normal_family,
    write_labeled_csv,
)


def test_design_proportions():
    design = SampleDesign(1200, 800)
    assert design.n == 2000
    assert design.p == 0.6
    assert design.q == pytest.approx(0.4)


@pytest.mark.parametrize("n1,n2", [(0, 5), (5, -1), (2.5, 3)])
def test_design_rejects_bad_sizes(n1, n2):
    with pytest.raises(ValidationError):
        SampleDesign(n1, n2)


def test_sample_count_is_poisson():
    rng = np.random.default_rng(0)
    draws = np.array([sample_count(50.0, rng) for _ in range(4000)])
    # mean and variance both N; 5 standard errors of slack
    assert abs(draws.mean() - 50) < 5 * math.sqrt(50 / 4000)
    assert abs(draws.var() - 50) < 5 * 50 * math.sqrt(2 / 4000)


def test_sample_count_rejects_nonpositive():
    with pytest.raises(ValidationError):
        sample_count(0)


def test_same_seed_same_sample():
    design = SampleDesign(30, 20)
    f = IsotropicNormal.standard(3)
    a = sample_poissonized(design, f, f, 42)
    b = sample_poissonized(design, f, f, 42)
    assert_array_equal(a.points, b.points)
    assert_array_equal(a.labels, b.labels)


def test_replicate_streams_independent_of_order():
    first = replicate_rng(7, 1, 2, 3).random(5)
    replicate_rng(7, 9, 9, 9).random(100)
    assert_array_equal(first, replicate_rng(7, 1, 2, 3).random(5))
    assert not np.array_equal(first, replicate_rng(7, 1, 2, 4).random(5))


def test_null_labels_are_bernoulli_p():
    design = SampleDesign(600, 400)
    f = IsotropicNormal.standard(2)
    data = sample_poissonized(design, f, f, 1)
    assert_allclose(data.prob1, 0.6, rtol=1e-12)
    # label-1 count is Poisson(N1) under the null
    assert abs(np.sum(data.labels == 1) - 600) < 5 * math.sqrt(600)


def test_label_probabilities_far_in_the_tail():
    # densities underflow in 25 dimensions far from the mean; the log scale does not
    design = SampleDesign(1, 1)
    f = IsotropicNormal.standard(25, 1.0)
    g = IsotropicNormal.standard(25, 1.1)
    x = np.full((1, 25), 40.0)
    assert f.pdf(x)[0] == 0.0
    p = label_probabilities(x, f, g, design)
    assert 0 <= p[0] < 1e-10


class _Nowhere(Distribution):
    dim = 1

    def logpdf(self, x):
        return np.full(np.shape(x)[0], -np.inf)


def test_label_probabilities_degenerate():
    with pytest.raises(NumericalDegeneracyError):
        label_probabilities(np.zeros((2, 1)), _Nowhere(), _Nowhere(), SampleDesign(1, 1))


def test_mixture_moments():
    design = SampleDesign(5000, 5000)
    f = IsotropicNormal([-1.0])
    g = IsotropicNormal([1.0])
    data = sample_poissonized(design, f, g, 3)
    x = data.points[:, 0]
    # mixture mean 0, variance 1 + 1
    assert abs(x.mean()) < 5 * math.sqrt(2 / len(x))
    assert abs(x.var() - 2) < 0.1
    # labels mostly follow the side the point came from
    assert np.mean(data.labels[x < -2] == 1) > 0.9


def test_mismatched_dimensions():
    with pytest.raises(ValidationError):
        sample_poissonized(SampleDesign(1, 1), IsotropicNormal.standard(1),
                           IsotropicNormal.standard(2))


def test_csv_round_trip(tmp_path):
    design = SampleDesign(20, 15)
    f = IsotropicNormal.standard(3)
    data = sample_poissonized(design, f, IsotropicNormal([0.5, 0, 0]), 9)
    path = tmp_path / "pts.csv"
    write_labeled_csv(data, path)
    back = read_labeled_csv(path, design)
    assert_array_equal(back.points, data.points)
    assert_array_equal(back.labels, data.labels)
    assert open(path).readline().strip() == "x1,x2,x3,label"


def test_csv_infers_design(tmp_path):
    path = tmp_path / "pts.csv"
    path.write_text("x1,label\n0.0,1\n1.0,2\n3.0,1\n")
    data = read_labeled_csv(path)
    assert (data.design.n1, data.design.n2) == (2, 1)


@pytest.mark.parametrize("text", [
    "a,b\n1,2\n",
    "x1,label\n0.0,3\n",
    "x1,label\n0.0\n",
    "x1,label\n0.0,1\n",
    "",
])
def test_csv_rejects_malformed(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ValidationError):
        read_labeled_csv(path)


def test_labeled_cloud_checks_lengths():
    with pytest.raises(ValidationError):
        LabeledPointCloud(np.zeros((3, 1)), [1, 2], SampleDesign(1, 1))


# -- spherical normal family -----------------------------------------------


def _fd_theta(fun, theta, step=1e-5):
    return (fun(theta + step) - fun(theta - step)) / (2 * step)


@pytest.mark.parametrize("d", [1, 3, 6])
def test_score_is_theta_derivative(d):
    fam = spherical_normal_family(d)
    x = np.random.default_rng(d).standard_normal((20, d)) * 2
    theta = 1.7
    fd = _fd_theta(lambda t: fam.logpdf(x, [t]), theta)
    assert_allclose(fam.log_score(x, [theta])[:, 0], fd, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("d", [1, 2, 6])
def test_hessian_ratio_is_laplacian_over_density(d):
    fam = spherical_normal_family(d)
    theta = 1.3
    x = np.random.default_rng(0).standard_normal((10, d))
    step = 1e-4
    lap = np.zeros(len(x))
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        lap += (fam.density(x + e, [theta]) - 2 * fam.density(x, [theta])
                + fam.density(x - e, [theta])) / step ** 2
    assert_allclose(fam.hessian_ratio(x, [theta]), lap / fam.density(x, [theta]),
                    rtol=1e-4, atol=1e-5)


@pytest.mark.parametrize("d", [1, 4])
def test_fisher_quadratic_matches_chi_square_moment(d):
    fam = spherical_normal_family(d)
    theta, h = 2.0, 0.7
    # E[(h dlog p/dtheta)^2] with ||X||^2 = theta^2 chi2_d
    expect = h ** 2 * stats.chi2(d).expect(lambda c: (-d / theta + theta ** 2 * c / theta ** 3) ** 2)
    assert fam.fisher_quadratic([theta], [h]) == pytest.approx(expect, rel=1e-9)


def test_gradient_integral_against_radial_quadrature():
    # the integrand is radial, so the d-dimensional integral is a 1-d one
    d, theta, h = 5, 3.0, 1.0
    fam = spherical_normal_family(d)
    surface = 2 * math.pi ** (d / 2) / math.gamma(d / 2)

    def radial(r):
        x = np.array([[r] + [0.0] * (d - 1)])
        grad = _fd_theta(lambda t: fam.hessian_ratio(x, [t]), theta)[0]
        return grad * fam.density(x, [theta])[0] ** ((d - 2) / d) * surface * r ** (d - 1)

    value, _ = integrate.quad(radial, 0, 60 * theta, limit=200)
    assert fam.gradient_integral([theta], [h]) == pytest.approx(value, rel=1e-6)


def test_gradient_integral_undefined_in_low_dimension():
    assert spherical_normal_family(2).gradient_integral([1.0], [1.0]) is None


def test_theta_must_be_positive():
    with pytest.raises(ValidationError):
        spherical_normal_family(2).at([-1.0])


def test_sample_scale():
    fam = spherical_normal_family(4)
    x = fam.sample([3.0], 20000, np.random.default_rng(2))
    assert x.std() == pytest.approx(3.0, rel=0.02)


# -- truncated family ------------------------------------------------------


def test_truncated_density_integrates_to_one():
    fam = TruncatedFamily(spherical_normal_family(1), -1.0, 2.0)
    total, _ = integrate.quad(lambda t: float(fam.density(np.array([[t]]), [1.5])[0]), -1, 2)
    assert total == pytest.approx(1.0, rel=1e-10)
    assert fam.density(np.array([[2.5]]), [1.5])[0] == 0.0


def test_truncated_samples_stay_inside():
    fam = TruncatedFamily(spherical_normal_family(2), -0.5, 0.5)
    x = fam.sample([1.0], 500, np.random.default_rng(0))
    assert x.shape == (500, 2)
    assert np.all(np.abs(x) <= 0.5)


def test_truncated_score_is_theta_derivative():
    fam = TruncatedFamily(spherical_normal_family(2), -1.0, 1.0)
    x = np.random.default_rng(1).uniform(-1, 1, (10, 2))
    fd = _fd_theta(lambda t: fam.logpdf(x, [t]), 0.8)
    assert_allclose(fam.log_score(x, [0.8])[:, 0], fd, rtol=1e-5)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 2000), st.integers(1, 2000))
def test_design_p_plus_q_is_one(n1, n2):
    design = SampleDesign(n1, n2)
    assert design.p + design.q == pytest.approx(1.0)
    assert 0 < design.p < 1
