import json
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from oracles import centred_excess, mixture_raw_moments, norm_cdf, tv_normals
from twomix.errors import DegenerateMeans, DimensionMismatch, InvalidMixture, NonZeroMean, SingularCovariance
from twomix.mixture import (
    Gaussian1D,
    Mixture1D,
    MixtureD,
    Reparam,
    excess_from_raw,
    excess_from_reparam,
    exact_excess_moments,
    mixture_from_json,
    mixture_to_json,
    param_distance,
    raw_moments,
    recover_probs_and_vars,
    reparameterize,
    sample,
    sample_labeled,
    tv_gaussians_1d,
    tv_gaussians_upper_bound,
    variance_1d,
    variance_d,
)

probs = st.floats(0.05, 0.95)
means = st.floats(-3.0, 3.0)
variances = st.floats(0.1, 5.0)


@st.composite
def mixtures(draw, centred=False):
    p1 = draw(probs)
    mu1, mu2 = draw(means), draw(means)
    m = Mixture1D(p1, 1 - p1, Gaussian1D(mu1, draw(variances)), Gaussian1D(mu2, draw(variances)))
    return m.shifted(-m.mean) if centred else m


def close(a, b, scale, rel=1e-9):
    return abs(a - b) <= rel * max(scale, 1e-300)


# ------------------------------------------------------------------ types

def test_mixture_rejects_bad_weights():
    with pytest.raises(InvalidMixture):
        Mixture1D(0.6, 0.6, Gaussian1D(0, 1), Gaussian1D(1, 1))
    with pytest.raises(InvalidMixture):
        Mixture1D(1.0, 0.0, Gaussian1D(0, 1), Gaussian1D(1, 1))
    with pytest.raises(InvalidMixture):
        Gaussian1D(0.0, 0.0)


def test_mixture_d_validates_covariances():
    I2 = np.eye(2)
    with pytest.raises(InvalidMixture):
        MixtureD(0.5, 0.5, np.zeros(2), np.ones(2), np.array([[1.0, 0.5], [0.4, 1.0]]), I2)
    with pytest.raises(InvalidMixture):
        MixtureD(0.5, 0.5, np.zeros(2), np.ones(2), np.array([[1.0, 2.0], [2.0, 1.0]]), I2)
    with pytest.raises(DimensionMismatch):
        MixtureD(0.5, 0.5, np.zeros(2), np.ones(3), I2, I2)


# --------------------------------------------------------------- variance

def test_variance_f0(f0):
    assert variance_1d(f0) == pytest.approx(2.5, abs=1e-15)
    x = sample(f0, 10 ** 6, 11)
    assert float(np.var(x)) == pytest.approx(2.5, abs=0.03)


def test_variance_identical_components():
    m = Mixture1D(0.5, 0.5, Gaussian1D(0, 1), Gaussian1D(0, 1))
    assert variance_1d(m) == 1.0


def test_variance_unequal_weights():
    m = Mixture1D(0.25, 0.75, Gaussian1D(0, 1), Gaussian1D(0, 5))
    assert variance_1d(m) == pytest.approx(4.0, abs=1e-15)
    assert float(np.var(sample(m, 10 ** 6, 5))) == pytest.approx(4.0, abs=0.03)


def test_variance_d_examples(f0):
    assert variance_d(f0.to_d()) == pytest.approx(variance_1d(f0), abs=1e-12)
    m = MixtureD(0.5, 0.5, np.zeros(2), np.array([2.0, 0.0]), np.eye(2), np.eye(2))
    assert variance_d(m) == pytest.approx(2.0, abs=1e-15)
    same = MixtureD(0.5, 0.5, np.zeros(2), np.zeros(2), np.eye(2), np.eye(2))
    assert variance_d(same) == 1.0


# --------------------------------------------------------- reparameterize

def test_reparameterize_examples(f0):
    r = reparameterize(f0)
    assert (r.alpha, r.beta, r.gamma) == pytest.approx((1.0, 0.0, 0.5), abs=1e-15)
    r = reparameterize(Mixture1D(0.5, 0.5, Gaussian1D(-1, 1), Gaussian1D(1, 1)))
    assert (r.alpha, r.beta, r.gamma) == pytest.approx((1.0, 0.0, 0.0), abs=1e-15)
    r = reparameterize(Mixture1D(2 / 3, 1 / 3, Gaussian1D(-1, 1), Gaussian1D(2, 1)))
    assert (r.alpha, r.beta, r.gamma) == pytest.approx((2.0, 1.0, 0.0), abs=1e-12)


def test_reparameterize_reorders_components(f0):
    assert reparameterize(f0.swapped()) == reparameterize(f0)


def test_reparameterize_flags_equal_means():
    r = reparameterize(Mixture1D(0.3, 0.7, Gaussian1D(0, 1), Gaussian1D(0, 2)))
    assert not r.gamma_defined and r.alpha == 0.0


def test_reparameterize_needs_mean_zero():
    with pytest.raises(NonZeroMean):
        reparameterize(Mixture1D(0.5, 0.5, Gaussian1D(0, 1), Gaussian1D(1, 1)))


# ------------------------------------------------------------ excess moments

def test_excess_from_reparam_examples():
    assert excess_from_reparam(Reparam(1.0, 0.0, 0.5)) == pytest.approx((1.5, -1.25, -10.0, 16.0))
    assert excess_from_reparam(Reparam(0.0, 0.0, 0.0)) == (0.0, 0.0, 0.0, 0.0)
    assert excess_from_reparam(Reparam(1.0, 0.0, 0.0)) == pytest.approx((0.0, -2.0, 0.0, 16.0))


def test_raw_moments_examples(f0):
    assert raw_moments(f0, 3) == pytest.approx((0.0, 2.5, 1.5), abs=1e-14)
    std = Mixture1D(0.5, 0.5, Gaussian1D(0, 1), Gaussian1D(0, 1))
    assert raw_moments(std, 6) == pytest.approx((0, 1, 0, 3, 0, 15), abs=1e-14)
    sym = Mixture1D(0.5, 0.5, Gaussian1D(-1, 1), Gaussian1D(1, 1))
    assert raw_moments(sym, 4) == pytest.approx((0, 2, 0, 10), abs=1e-14)
    with pytest.raises(ValueError):
        raw_moments(f0, 7)


def test_raw_moments_match_quadrature_oracle():
    m = Mixture1D(0.3, 0.7, Gaussian1D(-0.4, 0.8), Gaussian1D(1.7, 2.2))
    assert raw_moments(m, 6) == pytest.approx(mixture_raw_moments(0.3, -0.4, 0.8, 1.7, 2.2), rel=1e-12)


def test_excess_from_raw_examples(f0):
    e = excess_from_raw(*raw_moments(f0, 6))
    assert (e.x3, e.x4, e.x5, e.x6) == pytest.approx((1.5, -1.25, -10.0, 16.0), abs=1e-12)
    for var in (0.3, 1.0, 7.0):
        g = Mixture1D(0.5, 0.5, Gaussian1D(0, var), Gaussian1D(0, var))
        e = excess_from_raw(*raw_moments(g, 6))
        assert (e.x3, e.x4, e.x5, e.x6) == pytest.approx((0, 0, 0, 0), abs=1e-12 * var ** 3)
    noisy = Mixture1D(0.5, 0.5, Gaussian1D(-1, 5), Gaussian1D(1, 6))
    e2 = excess_from_raw(*raw_moments(noisy, 6))
    e = excess_from_raw(*raw_moments(f0, 6))
    assert (e2.x3, e2.x4, e2.x5, e2.x6) == pytest.approx((e.x3, e.x4, e.x5, e.x6), abs=1e-10)


@given(mixtures(centred=True))
def test_excess_identity_matches_reparam(m):
    assume(abs(m.g1.mu - m.g2.mu) > 0.05)
    s2 = variance_1d(m)
    e = excess_from_raw(*raw_moments(m, 6))
    x = excess_from_reparam(reparameterize(m))
    for k, (a, b) in enumerate(zip((e.x3, e.x4, e.x5, e.x6), x), start=3):
        assert close(a, b, s2 ** (k / 2))


@given(mixtures(centred=True))
def test_excess_matches_quadrature_oracle(m):
    s2 = variance_1d(m)
    want = centred_excess(m.p1, m.g1.mu, m.g1.var, m.g2.mu, m.g2.var)
    e = exact_excess_moments(m)
    for k, (a, b) in enumerate(zip((e.x2, e.x3, e.x4, e.x5, e.x6), want), start=2):
        assert close(a, b, s2 ** (k / 2), rel=1e-9)


@given(mixtures(), st.floats(0.01, 20.0))
def test_noise_invariance(m, tau_sq):
    s2 = variance_1d(m) + tau_sq
    a = exact_excess_moments(m)
    noisy = Mixture1D(m.p1, m.p2, Gaussian1D(m.g1.mu, m.g1.var + tau_sq), Gaussian1D(m.g2.mu, m.g2.var + tau_sq))
    b = exact_excess_moments(noisy)
    for k, name in enumerate(("x3", "x4", "x5", "x6"), start=3):
        assert close(getattr(a, name), getattr(b, name), s2 ** (k / 2))


@given(mixtures(), st.floats(0.2, 5.0) | st.floats(-5.0, -0.2))
def test_scaling(m, s):
    a = exact_excess_moments(m)
    b = exact_excess_moments(m.scaled(s))
    s2 = variance_1d(m)
    for k, name in enumerate(("x2", "x3", "x4", "x5", "x6"), start=2):
        assert close(getattr(b, name), s ** k * getattr(a, name), (abs(s) ** 2 * s2) ** (k / 2))


@given(mixtures(centred=True))
def test_x4_x3_identity(m):
    assume(abs(m.g1.mu - m.g2.mu) > 0.05)
    r = reparameterize(m)
    x3, x4, _, _ = excess_from_reparam(r)
    s2 = variance_1d(m)
    lhs = 6 * (r.alpha * r.gamma) ** 2
    rhs = x3 ** 2 - 2 * r.alpha ** 3 - x4 * r.alpha
    assert close(lhs, rhs, s2 ** 3)


# ----------------------------------------------------- probs and variances

def test_recover_probs_and_vars_examples():
    assert tuple(recover_probs_and_vars(-1, 1, 0.5, 2.5))[:4] == pytest.approx((0.5, 0.5, 1.0, 2.0))
    assert tuple(recover_probs_and_vars(-1, 1, 0.0, 2.0))[:4] == pytest.approx((0.5, 0.5, 1.0, 1.0))
    out = recover_probs_and_vars(-1, 2, 0.0, 2.0)
    assert (out.p1, out.p2) == pytest.approx((2 / 3, 1 / 3))
    assert out.clamped
    assert out.var1 == out.var2 == pytest.approx(2e-12)


def test_recover_probs_and_vars_equal_means():
    with pytest.raises(DegenerateMeans):
        recover_probs_and_vars(0.5, 0.5, 0.0, 1.0)


# ------------------------------------------------------------------ sampling

def test_sample_mean_f0(f0):
    assert abs(float(np.mean(sample(f0, 10 ** 6, 3)))) <= 0.01


def test_sample_single_draw_and_determinism(f0):
    one = sample(f0, 1, 123)
    assert one.shape == (1,) and math.isfinite(one[0])
    assert np.array_equal(sample(f0, 1000, 9), sample(f0, 1000, 9))
    assert not np.array_equal(sample(f0, 1000, 9), sample(f0, 1000, 10))


def test_sample_labeled_agrees_with_sample():
    m = MixtureD(0.3, 0.7, np.zeros(2), np.array([5.0, 0.0]), np.eye(2), 0.5 * np.eye(2))
    x, lab = sample_labeled(m, 20_000, 4)
    assert np.array_equal(x, sample(m, 20_000, 4))
    assert abs(lab.mean() - 0.7) < 0.02
    assert np.all((x[:, 0] > 2.5) == (lab == 1)) or np.mean((x[:, 0] > 2.5) == (lab == 1)) > 0.99


# ---------------------------------------------------------- param distance

def test_param_distance_examples(f0):
    assert param_distance(f0, f0) == 0.0
    assert param_distance(f0, f0.swapped()) == 0.0
    moved = Mixture1D(0.5, 0.5, Gaussian1D(-1, 1), Gaussian1D(1.1, 2))
    assert param_distance(f0, moved) == pytest.approx(math.sqrt(0.01 / 2.5), rel=1e-9)
    with pytest.raises(DimensionMismatch):
        param_distance(f0, MixtureD(0.5, 0.5, np.zeros(2), np.ones(2), np.eye(2), np.eye(2)))


@given(mixtures(), mixtures())
def test_param_distance_permutation_and_zero(a, b):
    assert param_distance(a, b) == pytest.approx(param_distance(a, b.swapped()), abs=1e-15)
    assert param_distance(a, a.swapped()) == 0.0
    assert param_distance(a, a) == 0.0
    nudged = Mixture1D(a.p1, a.p2, a.g1, Gaussian1D(a.g2.mu, a.g2.var * (1 + 1e-6)))
    assert param_distance(a, nudged) > 0.0


# ------------------------------------------------------------------- TV

def test_tv_examples():
    g = Gaussian1D(0, 1)
    assert tv_gaussians_1d(g, g) == 0.0
    assert tv_gaussians_1d(g, Gaussian1D(1, 1)) == pytest.approx(2 * norm_cdf(0.5) - 1, abs=1e-8)
    assert tv_gaussians_1d(g, Gaussian1D(1, 1)) == pytest.approx(0.38292, abs=1e-5)


def test_tv_unequal_variances_against_monte_carlo():
    got = tv_gaussians_1d(Gaussian1D(0, 1), Gaussian1D(0, 4))
    assert got == pytest.approx(tv_normals(0, 1, 0, 4), abs=1e-8)
    # TV = 1 - E_p[min(1, q/p)] estimated from draws of p
    rng = np.random.default_rng(0)
    x = rng.standard_normal(2_000_000)
    p = np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    q = np.exp(-0.125 * x * x) / math.sqrt(8 * math.pi)
    assert got == pytest.approx(1 - float(np.mean(np.minimum(1, q / p))), abs=1e-3)


@given(means, variances, means, variances)
def test_tv_matches_cdf_oracle(m1, v1, m2, v2):
    got = tv_gaussians_1d(Gaussian1D(m1, v1), Gaussian1D(m2, v2))
    assert got == pytest.approx(tv_normals(m1, v1, m2, v2), abs=1e-8)


@given(st.lists(st.tuples(means, variances), min_size=3, max_size=3))
def test_tv_metric_properties(triple):
    a, b, c = (Gaussian1D(m, v) for m, v in triple)
    ab, ba = tv_gaussians_1d(a, b), tv_gaussians_1d(b, a)
    assert 0.0 <= ab <= 1.0
    assert ab == pytest.approx(ba, abs=1e-8)
    assert ab <= tv_gaussians_1d(a, c) + tv_gaussians_1d(c, b) + 1e-8


def test_tv_upper_bound_examples():
    assert tv_gaussians_upper_bound([0.0], [[1.0]], [0.0], [[1.0]]) == 0.0
    assert tv_gaussians_upper_bound(0.0, 1.0, 0.1, 1.0) == pytest.approx(0.1)
    assert tv_normals(0, 1, 0.1, 1) == pytest.approx(0.0399, abs=1e-4)
    assert tv_gaussians_1d(Gaussian1D(0, 1), Gaussian1D(0.1, 1)) <= 0.1
    assert tv_gaussians_upper_bound(np.zeros(2), np.eye(2), [0.1, 0.0], np.eye(2)) == pytest.approx(0.1)
    with pytest.raises(SingularCovariance):
        tv_gaussians_upper_bound(np.zeros(2), np.diag([1.0, 0.0]), np.zeros(2), np.eye(2))


@given(means, variances, means, variances)
def test_tv_upper_bound_dominates_tv(m1, v1, m2, v2):
    bound = tv_gaussians_upper_bound(m1, v1, m2, v2)
    assert tv_normals(m1, v1, m2, v2) <= bound + 1e-12


# ------------------------------------------------------------------- JSON

def test_json_roundtrip(f0):
    assert mixture_from_json(json.loads(json.dumps(mixture_to_json(f0)))) == f0
    m = MixtureD(0.4, 0.6, np.zeros(2), np.ones(2), np.eye(2), 2 * np.eye(2))
    back = mixture_from_json(mixture_to_json(m))
    assert param_distance(m, back) == 0.0 and back.p1 == 0.4


@pytest.mark.parametrize("obj, field", [
    ({}, "components"),
    ({"components": [{"p": 0.5, "mu": 0}, {"p": 0.5, "mu": 1, "sigma": 1}]}, "components[0].sigma"),
    ({"components": [{"p": "x", "mu": 0, "sigma": 1}, {"p": 0.5, "mu": 1, "sigma": 1}]}, "components[0].p"),
])
def test_json_errors_name_the_field(obj, field):
    with pytest.raises(InvalidMixture, match=field.replace("[", r"\[").replace("]", r"\]")):
        mixture_from_json(obj)
