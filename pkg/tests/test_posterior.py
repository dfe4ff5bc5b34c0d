import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from chromclust.posterior import (DegreesOfFreedomError, GaussianMixtureTarget, NoiseModel,
                                  Observations, ParameterSpec, PosteriorProblem, gaussian_mixture_target,
                                  log_likelihood, sample_variance_estimate, trimodal_target)


def test_perfect_fit_likelihood():
    y = np.arange(6.0).reshape(3, 2)
    val, s = log_likelihood(y, y, 2.0)
    assert s == 0.0
    assert val == pytest.approx(-3 * np.log(2 * np.pi * 2.0))


def test_hand_likelihood():
    val, s = log_likelihood([0.0, 0.0], [1.0, 2.0], 1.0)
    assert s == 5.0
    assert val == pytest.approx(-np.log(2 * np.pi) - 2.5)


def test_likelihood_variance_doubling():
    rng = np.random.default_rng(0)
    y, ym = rng.normal(size=40), rng.normal(size=40)
    s2 = 0.7
    a, s = log_likelihood(ym, y, s2)
    b, _ = log_likelihood(ym, y, 2 * s2)
    direct = -20 * np.log(2 * np.pi * 2 * s2) - s / (4 * s2) - (-20 * np.log(2 * np.pi * s2) - s / (2 * s2))
    assert b - a == pytest.approx(direct, rel=1e-12)


def test_sample_variance_examples():
    assert sample_variance_estimate([1, 2, 3], [1, 2, 3], 1) == 0.0
    assert sample_variance_estimate([0, 0, 0], [1, 1, 1], 1) == pytest.approx(1.5)
    r = np.array([0.3, -1.2, 2.0, 0.4])
    assert sample_variance_estimate(np.zeros(4), 3 * r, 2) == pytest.approx(9 * sample_variance_estimate(np.zeros(4), r, 2))
    with pytest.raises(DegreesOfFreedomError):
        sample_variance_estimate([0, 0], [1, 1], 2)


def test_parameter_spec_validation():
    with pytest.raises(ValueError):
        ParameterSpec("a", 1.0, 1.0)
    with pytest.raises(ValueError):
        ParameterSpec("a", 0.0, 1.0, "log")
    ParameterSpec("a", -1.0, 1.0, "linear")


def _toy_problem(noise=None):
    params = [ParameterSpec("a", 0.1, 10.0), ParameterSpec("b", 0.5, 2.0)]
    t = np.linspace(0, 1, 20)

    def forward(eta):
        return (eta[0] * np.exp(-eta[1] * t))[:, None]

    y = forward(np.array([2.0, 1.0])) + 0.01 * np.random.default_rng(1).normal(size=(20, 1))
    return PosteriorProblem(params, Observations(t, y), forward, noise=noise), forward, y


def test_log_posterior_out_of_support():
    prob, _, _ = _toy_problem(NoiseModel(0.5, 0.5))
    assert prob.log_posterior(np.array([np.log(20.0), 0.0]), 1.0) == -np.inf


def test_jacobian_zero_at_origin():
    prob, _, _ = _toy_problem(NoiseModel(0.5, 0.5))
    assert prob.log_jacobian(np.zeros(2)) == 0.0


def test_log_posterior_term_by_term():
    noise = NoiseModel(0.5, 0.3)
    prob, forward, y = _toy_problem(noise)
    rho, s2 = np.array([0.5, 0.1]), 0.02
    eta = np.exp(rho)
    resid = y - forward(eta)
    s = float(np.sum(resid ** 2))
    lik = -0.5 * y.size * np.log(2 * np.pi * s2) - s / (2 * s2)
    prior = -np.log(9.9) - np.log(1.5)
    ig = stats.invgamma(a=0.5, scale=0.3).logpdf(s2)
    assert prob.log_posterior(rho, s2) == pytest.approx(lik + prior + ig + rho.sum(), rel=1e-12)


def test_default_beta0_from_midpoint():
    prob, forward, y = _toy_problem()
    mid = np.exp(0.5 * (np.log([0.1, 0.5]) + np.log([10.0, 2.0])))
    s0 = np.sum((y - forward(mid)) ** 2) / (20 - 2)
    assert prob.noise.alpha0 == 0.5
    assert prob.noise.beta0 == pytest.approx(0.5 * s0)


def test_forward_failure_is_minus_inf():
    params = [ParameterSpec("a", 0.1, 10.0)]

    def forward(eta):
        raise ArithmeticError("blow-up")

    prob = PosteriorProblem(params, Observations([0.0, 1.0], [1.0, 2.0]), forward, noise=NoiseModel())
    base, sse = prob.evaluate([[0.0]])
    assert base[0] == -np.inf


def test_reordering_components_invariant():
    prob, forward, y = _toy_problem(NoiseModel(0.5, 0.5))
    perm = np.random.default_rng(3).permutation(20)
    prob2 = PosteriorProblem(prob.params, Observations(prob.observations.times[perm], y[perm]),
                             lambda eta: forward(eta)[perm], noise=prob.noise)
    rho = np.array([0.4, -0.1])
    assert prob.log_posterior(rho, 0.1) == pytest.approx(prob2.log_posterior(rho, 0.1), rel=1e-13)


def test_jacobian_pushforward_lognormal():
    # A log-uniform-in-rho density on eta, pushed through exp, equals the Jacobian-weighted form.
    params = [ParameterSpec("a", 0.5, 4.0)]
    prob = PosteriorProblem(params, Observations([0.0, 1.0], [0.0, 0.0]), lambda e: np.zeros((2, 1)),
                            noise=NoiseModel())
    rng = np.random.default_rng(0)
    eta = rng.uniform(0.5, 4.0, 400_000)
    hist, edges = np.histogram(np.log(eta), bins=40, density=True)
    centres = 0.5 * (edges[1:] + edges[:-1])
    dens = np.exp(prob.log_prior(centres[:, None]) + prob.log_jacobian(centres[:, None]))
    np.testing.assert_allclose(hist, dens, rtol=0.05)


def test_mixture_single_mode_peak():
    c = np.array([[2.0, 0.3], [0.3, 1.0]])
    tgt = gaussian_mixture_target([(1.0, [1.0, -1.0], c)])
    expected = -np.log(2 * np.pi) - 0.5 * np.log(np.linalg.det(c))
    assert tgt.log_density(np.array([1.0, -1.0])) == pytest.approx(expected, rel=1e-12)


def test_mixture_symmetric_midpoint():
    tgt = gaussian_mixture_target([(0.5, [-3.0], [[1.0]]), (0.5, [3.0], [[1.0]])])
    one = 0.5 * stats.norm(3.0, 1.0).pdf(0.0)
    assert np.exp(tgt.log_density(np.array([0.0]))) == pytest.approx(2 * one, rel=1e-12)


def test_mixture_rejects_non_pd():
    with pytest.raises(ValueError):
        gaussian_mixture_target([(1.0, [0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])])


def test_trimodal_target_normalised_and_separated():
    tgt = trimodal_target()
    d = np.linalg.norm(tgt.means[:, None] - tgt.means[None], axis=-1)
    assert d[np.triu_indices(3, 1)].min() >= 10.0
    g = np.linspace(-20, 20, 801)
    xx, yy = np.meshgrid(g, g)
    dens = np.exp(tgt.log_density(np.stack([xx, yy], -1)))
    assert np.trapezoid(np.trapezoid(dens, g, axis=1), g) == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_mixture_ratio_consistency(a, b):
    tgt = trimodal_target()
    la, lb = tgt.evaluate(np.array([a, b]))[0]
    direct = [sum(stats.multivariate_normal(m, np.eye(2)).pdf(x) for m in tgt.means) / 3 for x in (a, b)]
    assert la - lb == pytest.approx(np.log(direct[0]) - np.log(direct[1]), rel=1e-9, abs=1e-9)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(0.0, 1.0)
    assert NoiseModel(0.5, 0.5).conditional(10, 0.0) == (5.5, 0.5)


def test_mixture_from_dict():
    t = GaussianMixtureTarget.from_dict({"modes": [{"mean": [0, 0], "cov": 2.0}, {"mean": [5, 5]}]})
    assert t.n_params == 2 and np.allclose(t.covs[0], 2 * np.eye(2))
