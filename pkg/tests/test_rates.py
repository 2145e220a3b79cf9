import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from advlin.geometry import decompose, strong_reach
from advlin.learn import bayes_classifier
from advlin.model import GaussianMixtureSpec, LinearClassifier, PerturbationBudget, lp_norm
from advlin.numerics import std_normal_cdf as Phi
from advlin.rates import (
    AsymptoticAngleParams,
    DeltaClampWarning,
    RootFindingError,
    adv_error_lower_bound,
    adversarial_error_rate,
    adversarial_rate,
    asymptotic_residuals,
    asymptotic_svm_angle,
    bayes_rates,
    g_effective,
    lp_adversarial_error_rate,
    lp_adversarial_rate,
    lp_strong_adversarial_rate,
    lp_strong_error_rate,
    minimal_bayes_snr,
    misclassification_rate,
    rate_report,
    required_snr_order,
    small_bias_rates,
    strong_adversarial_rate,
    strong_error_rate,
)


def _quad_flip_probability(mean, sd, lo, hi):
    """P(lo < N(mean, sd^2) <= hi) by integrating the density."""
    f = lambda z: math.exp(-0.5 * ((z - mean) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))  # noqa: E731
    lo = max(lo, mean - 40 * sd)
    hi = min(hi, mean + 40 * sd)
    if hi <= lo:
        return 0.0
    return integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]


def _quad_error(clf, mix, reach):
    """Adversarial-error rate from the per-class score distributions: a '+' point
    counts when its score is <= reach, a '-' point when its score is > -reach."""
    sd = float(np.linalg.norm(clf.w)) * mix.sigma
    mp = float(clf.w @ mix.mu_plus) + clf.b
    mm = float(clf.w @ mix.mu_minus) + clf.b
    return 0.5 * (_quad_flip_probability(mp, sd, -math.inf, reach)
                  + _quad_flip_probability(mm, sd, -reach, math.inf))


def _random_case(rng, d):
    clf = LinearClassifier(rng.standard_normal(d), float(rng.normal(scale=0.5)))
    m_plus = rng.standard_normal(d)
    m_minus = rng.standard_normal(d)
    return clf, GaussianMixtureSpec(m_plus, m_minus, float(rng.uniform(0.5, 2.0)))


@pytest.mark.parametrize("seed", range(15))
def test_closed_forms_against_score_quadrature(seed):
    rng = np.random.default_rng(seed)
    clf, mix = _random_case(rng, int(rng.integers(1, 6)))
    eps = float(rng.uniform(0, 2))
    delta = float(rng.uniform(0, eps))
    p_m = _quad_error(clf, mix, 0.0)
    assert misclassification_rate(clf, mix) == pytest.approx(p_m, abs=1e-10)
    wn = float(np.linalg.norm(clf.w))
    assert adversarial_error_rate(clf, mix, eps) == pytest.approx(
        _quad_error(clf, mix, eps * wn), abs=1e-10)
    theta = decompose(clf, mix).theta
    reach = g_effective(eps, delta, theta) * wn
    assert strong_error_rate(clf, mix, eps, delta) == pytest.approx(
        _quad_error(clf, mix, reach), abs=1e-10)
    for p in (1.0, 3.0, math.inf):
        b = PerturbationBudget(p=p, epsilon=eps, delta=delta)
        q = 1.0 if math.isinf(p) else (math.inf if p == 1.0 else p / (p - 1))
        assert lp_adversarial_error_rate(clf, mix, eps, p) == pytest.approx(
            _quad_error(clf, mix, eps * lp_norm(clf.w, q)), abs=1e-10)
        assert lp_strong_error_rate(clf, mix, eps, delta, p) == pytest.approx(
            _quad_error(clf, mix, strong_reach(clf, mix, b)), abs=1e-10)


def test_bayes_anchor():
    mix = GaussianMixtureSpec.symmetric(3.0, 361)
    assert misclassification_rate(bayes_classifier(mix), mix) == pytest.approx(0.001350, abs=1e-6)
    assert misclassification_rate(bayes_classifier(mix), mix) == pytest.approx(stats.norm.sf(3), rel=1e-12)


def test_orthogonal_unbiased_classifier_is_a_coin_flip():
    mix = GaussianMixtureSpec.symmetric(2.0, 3)
    assert misclassification_rate(LinearClassifier([0.0, 1.0, 0.0]), mix) == pytest.approx(0.5)


def test_adversarial_rate_limits():
    mix = GaussianMixtureSpec.symmetric(1.5, 4)
    clf = LinearClassifier([1.0, 0.3, 0.0, 0.0], 0.2)
    assert adversarial_rate(clf, mix, 0.0) == 0.0
    assert adversarial_rate(clf, mix, 1e6) == pytest.approx(1 - misclassification_rate(clf, mix))
    with pytest.raises(ValueError):
        adversarial_rate(clf, mix, -1.0)


def test_bayes_snr4_examples():
    mix = GaussianMixtureSpec.symmetric(4.0, 361)
    clf = bayes_classifier(mix)
    assert adversarial_error_rate(clf, mix, 5.7) == pytest.approx(0.95543, abs=1e-5)
    assert adversarial_rate(clf, mix, 5.7) == pytest.approx(0.95540, abs=1e-5)
    assert adv_error_lower_bound(mix, 5.7) == pytest.approx(0.9554, abs=1e-4)
    assert strong_error_rate(clf, mix, 5.7, 1.2) == pytest.approx(0.00256, abs=1e-5)
    assert strong_error_rate(clf, mix, 5.7, 1.2) == pytest.approx(stats.norm.sf(2.8), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 3))
def test_lower_bound_holds_for_every_classifier(seed, eps):
    rng = np.random.default_rng(seed)
    d = 4
    mix = GaussianMixtureSpec.symmetric(float(rng.uniform(0.5, 4)), d)
    clf = LinearClassifier(rng.standard_normal(d), float(rng.normal()))
    if float(clf.w @ mix.mu) <= eps * float(np.linalg.norm(clf.w)):
        return  # the bound is only claimed when w.mu > eps ||w||
    assert adversarial_error_rate(clf, mix, eps) >= adv_error_lower_bound(mix, eps) - 1e-12


def test_g_function_examples():
    assert g_effective(2.0, 0.5, 0.0) == pytest.approx(0.5)
    assert g_effective(2.0, 0.5, math.pi / 2) == pytest.approx(2.0)
    assert g_effective(2.0, 1.95, 0.3) == pytest.approx(2.0)  # delta >= eps cos(theta)
    assert g_effective(5.7, 1.2, 0.2) == pytest.approx(2.2831, abs=1e-4)


@given(st.floats(0, 10), st.floats(0, 1), st.floats(0, math.pi / 2))
def test_g_bounded_by_eps(eps, frac, theta):
    g = g_effective(eps, frac * eps, theta)
    assert -1e-12 <= g <= eps + 1e-12


def test_strong_rates_degenerate_to_plain_when_delta_equals_eps():
    rng = np.random.default_rng(1)
    clf, mix = _random_case(rng, 4)
    assert strong_adversarial_rate(clf, mix, 1.3, 1.3) == pytest.approx(
        adversarial_rate(clf, mix, 1.3), rel=1e-14)


def test_delta_above_eps_is_clamped_with_warning():
    mix = GaussianMixtureSpec.symmetric(2.0, 3)
    clf = LinearClassifier([1.0, 0.5, 0.0])
    with pytest.warns(DeltaClampWarning):
        r = strong_adversarial_rate(clf, mix, 1.0, 2.0)
    assert r == pytest.approx(adversarial_rate(clf, mix, 1.0))


def test_linf_slab_beyond_eps_is_not_vacuous():
    # the l_inf ball reaches eps * ||mu0||_1 = eps sqrt(d) along a uniform mean
    mix = GaussianMixtureSpec.symmetric(2.0, 9, layout="uniform")
    clf = bayes_classifier(mix)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        r = lp_strong_error_rate(clf, mix, 0.5, 1.0, math.inf)
    assert r == pytest.approx(stats.norm.sf(2.0 - 1.0), rel=1e-12)


def test_lp_rates_reduce_at_p2():
    rng = np.random.default_rng(2)
    clf, mix = _random_case(rng, 5)
    assert lp_adversarial_rate(clf, mix, 0.7, 2) == pytest.approx(adversarial_rate(clf, mix, 0.7), rel=1e-13)
    assert lp_strong_adversarial_rate(clf, mix, 0.7, 0.2, 2) == pytest.approx(
        strong_adversarial_rate(clf, mix, 0.7, 0.2), rel=1e-9)


def test_linf_equal_weights_scale_budget_by_sqrt_d():
    d = 16
    mix = GaussianMixtureSpec.symmetric(3.0, d, layout="uniform")
    clf = LinearClassifier(np.ones(d))
    eps = 0.1
    assert lp_adversarial_error_rate(clf, mix, eps, math.inf) == pytest.approx(
        adversarial_error_rate(clf, mix, eps * math.sqrt(d)), rel=1e-13)


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0, math.inf])
def test_bayes_strong_error_independent_of_p(p):
    mix = GaussianMixtureSpec.symmetric(3.5, 20, layout="uniform")
    # delta mu0 stays inside the l_p ball: 0.3 <= 2 ||mu0||_q for every p here
    got = lp_strong_error_rate(bayes_classifier(mix), mix, 2.0, 0.3, p)
    assert got == pytest.approx(stats.norm.sf(3.5 - 0.3), rel=1e-10)


def test_bayes_strong_error_when_ball_cannot_reach_delta():
    # l1 ball of radius 2 reaches only 2 / sqrt(20) along a uniform mean
    mix = GaussianMixtureSpec.symmetric(3.5, 20, layout="uniform")
    got = lp_strong_error_rate(bayes_classifier(mix), mix, 2.0, 0.7, 1.0)
    assert got == pytest.approx(stats.norm.sf(3.5 - 2.0 / math.sqrt(20)), rel=1e-10)


def test_large_delta_matches_plain_lp_rate():
    rng = np.random.default_rng(4)
    clf, mix = _random_case(rng, 5)
    assert lp_strong_adversarial_rate(clf, mix, 0.8, 0.8, 1.5) == pytest.approx(
        lp_adversarial_rate(clf, mix, 0.8, 1.5), rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1.0, 2.0, 3.0, math.inf]))
def test_report_orderings(seed, p):
    rng = np.random.default_rng(seed)
    clf, mix = _random_case(rng, 4)
    eps = float(rng.uniform(0, 2))
    r = rate_report(clf, mix, PerturbationBudget(p=p, epsilon=eps, delta=float(rng.uniform(0, eps))))
    assert r.p_s_adv <= r.p_adv + 1e-12
    assert r.p_m <= r.p_s_err <= r.p_err + 1e-12
    bigger = rate_report(clf, mix, PerturbationBudget(p=p, epsilon=eps * 1.5 + 0.1))
    assert bigger.p_adv >= r.p_adv - 1e-12


def test_small_bias_rates():
    mix = GaussianMixtureSpec.symmetric(2.0, 361)
    assert small_bias_rates(mix, 0.0, 5.7, 0.6) == bayes_rates(mix, 5.7, 0.6)
    assert small_bias_rates(mix, 0.0, 5.7, 0.6, linearized=True) == bayes_rates(mix, 5.7, 0.6)
    theta = 0.4
    lin = small_bias_rates(mix, theta, 5.7, 0.6, linearized=True)
    assert lin.p_s_err == pytest.approx(
        stats.norm.sf(1.4 * math.cos(theta) - 5.7 * math.sin(theta)), rel=1e-12)
    # exact variant equals the full formula for an unbiased classifier at that angle
    w = np.zeros(361)
    w[0], w[1] = math.cos(theta), math.sin(theta)
    clf = LinearClassifier(w, 0.0)
    exact = small_bias_rates(mix, theta, 5.7, 0.6)
    full = rate_report(clf, mix, PerturbationBudget(epsilon=5.7, delta=0.6))
    assert exact.p_m == pytest.approx(full.p_m, rel=1e-12)
    assert exact.p_err == pytest.approx(full.p_err, rel=1e-12)
    assert exact.p_s_err == pytest.approx(full.p_s_err, rel=1e-12)
    with pytest.raises(ValueError):
        small_bias_rates(mix, -0.1, 1.0)


def _grid_oracle(n, d, mu):
    """Dense grid minimum of the squared residuals, with scipy's normal functions."""
    th = np.linspace(1e-4, math.pi / 2 - 1e-4, 1500)[:, None]
    t = np.linspace(-6, 6, 1500)[None, :]
    t1 = t * stats.norm.cdf(t) + stats.norm.pdf(t)
    t2 = (1 + t * t) * stats.norm.cdf(t) + t * stats.norm.pdf(t)
    r1 = np.sin(th) ** 2 - n / d * t2
    r2 = np.cos(th) - n / d * mu * t1
    obj = r1 ** 2 + r2 ** 2
    i, j = np.unravel_index(np.argmin(obj), obj.shape)
    return float(th[i, 0]), float(t[0, j]), float(obj[i, j])


def test_asymptotic_angle_against_grid_search():
    params = AsymptoticAngleParams(4000, 361, 3.0)
    theta, t = asymptotic_svm_angle(params)
    assert max(abs(r) for r in asymptotic_residuals(theta, t, params)) <= 1e-8
    g_theta, g_t, g_obj = _grid_oracle(4000, 361, 3.0)
    assert math.sqrt(g_obj) < 1e-2
    assert theta == pytest.approx(g_theta, abs=5e-3)
    assert t == pytest.approx(g_t, abs=2e-2)
    assert 0 < theta < math.pi / 2


@pytest.mark.parametrize("mu", [0.5, 1.0, 2.0, 3.5, 5.0])
def test_asymptotic_angle_residuals(mu):
    params = AsymptoticAngleParams(4000, 361, mu)
    theta, t = asymptotic_svm_angle(params)
    assert max(abs(r) for r in asymptotic_residuals(theta, t, params)) <= 1e-8


def test_asymptotic_angle_shrinks_with_signal():
    thetas = [asymptotic_svm_angle(AsymptoticAngleParams(4000, 361, m))[0] for m in (1, 2, 3, 4)]
    assert thetas == sorted(thetas, reverse=True)


def test_asymptotic_angle_without_root_fails_loudly():
    # far fewer samples than dimensions leaves no solution inside the box
    with pytest.raises(RootFindingError) as info:
        asymptotic_svm_angle(AsymptoticAngleParams(1, 100000, 0.01))
    assert info.value.residuals is not None


def test_required_snr_order_examples():
    assert required_snr_order(2, 361) == pytest.approx(19.0)
    assert required_snr_order(1, 361) == pytest.approx(19.0)
    assert required_snr_order(4, 361) == pytest.approx(361 ** 0.25)
    assert required_snr_order("inf", 361) == pytest.approx(2.427, abs=1e-3)


@pytest.mark.parametrize("d", [100, 1000, 10000])
def test_minimal_bayes_snr_matches_inverse_cdf(d):
    expected = 0.3 * math.sqrt(d) + stats.norm.ppf(0.9)
    assert minimal_bayes_snr(0.1, d, 0.3) == pytest.approx(expected, rel=1e-10)
    mix = GaussianMixtureSpec.symmetric(minimal_bayes_snr(0.1, d, 0.3), 1)
    assert Phi(0.3 * math.sqrt(d) - mix.mu_norm) == pytest.approx(0.1, rel=1e-9)
