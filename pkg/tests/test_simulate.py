import math

import numpy as np
import pytest

from advlin import rates
from advlin.learn import bayes_classifier
from advlin.model import GaussianMixtureSpec, LinearClassifier, PerturbationBudget
from advlin.numerics import abs_moment
from advlin.simulate import (
    LabeledDataset,
    empirical_linf_noise,
    empirical_lp_noise,
    empirical_rates,
    make_rng,
    rates_on,
    sample,
    status_counts,
)

RATES = ("p_m", "p_adv", "p_err", "p_s_adv", "p_s_err")


def test_sampling_is_keyed_by_seed_and_stream():
    mix = GaussianMixtureSpec.symmetric(2.0, 4)
    a = sample(mix, 50, 7, (1, 2))
    b = sample(mix, 50, 7, (1, 2))
    c = sample(mix, 50, 7, (1, 3))
    np.testing.assert_array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)
    assert set(np.unique(a.labels)) <= {-1, 1}
    with pytest.raises(ValueError):
        sample(mix, 0, 1)


def test_sample_moments():
    mix = GaussianMixtureSpec([1.0, -2.0], [-1.0, 0.0], 0.5)
    data = sample(mix, 200_000, 3)
    plus = data.points[data.labels > 0]
    minus = data.points[data.labels < 0]
    np.testing.assert_allclose(plus.mean(axis=0), mix.mu_plus, atol=0.01)
    np.testing.assert_allclose(minus.mean(axis=0), mix.mu_minus, atol=0.01)
    np.testing.assert_allclose(plus.std(axis=0), 0.5, atol=0.01)
    assert abs((data.labels > 0).mean() - 0.5) < 0.005


def test_csv_round_trip(tmp_path):
    data = sample(GaussianMixtureSpec.symmetric(1.0, 3), 20, 0)
    path = tmp_path / "data.csv"
    data.to_csv(path)
    assert path.read_text().splitlines()[0] == "label,x0,x1,x2"
    again = LabeledDataset.from_csv(path)
    np.testing.assert_array_equal(again.points, data.points)
    np.testing.assert_array_equal(again.labels, data.labels)


def test_partition_nesting_and_determinism():
    mix = GaussianMixtureSpec.symmetric(2.0, 10)
    clf = LinearClassifier(np.r_[1.0, 0.3 * np.ones(9)], 0.1)
    budget = PerturbationBudget(epsilon=1.0, delta=0.3)
    data = sample(mix, 5000, 11)
    counts = status_counts(data, clf, mix, budget)
    assert counts.sum() == 5000
    r1 = empirical_rates(clf, mix, budget, 20_000, 5)
    r2 = empirical_rates(clf, mix, budget, 20_000, 5)
    assert r1 == r2
    assert r1.p_s_adv <= r1.p_adv
    assert rates_on(data, clf, mix, budget).n_samples == 5000


def test_zero_budget_has_no_adversarial_points():
    mix = GaussianMixtureSpec.symmetric(1.0, 5)
    r = empirical_rates(bayes_classifier(mix), mix, PerturbationBudget(epsilon=0.0, delta=0.0), 10_000, 2)
    assert r.p_adv == 0.0
    assert r.p_s_adv == 0.0


def test_bayes_rates_at_desk_scale():
    mix = GaussianMixtureSpec.symmetric(4.0, 361)
    clf = bayes_classifier(mix)
    budget = PerturbationBudget.from_eta(mix, 0.3, 0.3)
    emp = empirical_rates(clf, mix, budget, 100_000, 1)
    closed = rates.rate_report(clf, mix, budget)
    for name in RATES:
        assert abs(getattr(emp, name) - getattr(closed, name)) <= 3 * emp.std_err[name] + 1e-12


def _random_configuration(rng):
    d = int(rng.choice([2, 50, 361]))
    m = rng.standard_normal(d)
    m *= rng.uniform(0.5, 3.0) / np.linalg.norm(m)
    mix = GaussianMixtureSpec(m + 0.1 * rng.standard_normal(d), -m, float(rng.uniform(0.5, 1.5)))
    w = mix.mu + rng.standard_normal(d) * rng.uniform(0.0, 2.0) / math.sqrt(d)
    clf = LinearClassifier(w, float(-(w @ mix.mu_bar) + rng.normal(scale=0.3)))
    p = float(rng.choice([1.0, 2.0, 3.0, math.inf]))
    eps = float(rng.uniform(0.0, 1.5)) * mix.sigma * (1.0 if p <= 2 else 0.3)
    return clf, mix, PerturbationBudget(p=p, epsilon=eps, delta=float(rng.uniform(0, eps)))


def test_closed_forms_agree_with_simulation_in_most_configurations():
    rng = np.random.default_rng(2024)
    passed = 0
    for k in range(100):
        clf, mix, budget = _random_configuration(rng)
        closed = rates.rate_report(clf, mix, budget)
        emp = empirical_rates(clf, mix, budget, 100_000, 1000 + k)
        ok = all(abs(getattr(emp, n) - getattr(closed, n)) <= 3 * emp.std_err[n] + 1e-12
                 for n in RATES)
        passed += ok
    assert passed >= 97


def test_lp_noise_examples():
    assert empirical_lp_noise(2, 361, 1.0, 20_000, 0) == pytest.approx(361, rel=0.02)
    assert empirical_lp_noise(1, 361, 1.0, 20_000, 0) == pytest.approx(288.0, rel=0.02)
    assert empirical_lp_noise(3, 361, 1.0, 20_000, 0) == pytest.approx(361 * abs_moment(3), rel=0.02)
    assert empirical_lp_noise(2, 10, 2.0, 50_000, 0) == pytest.approx(40.0, rel=0.02)
    ratio = empirical_linf_noise(1000, 1.0, 2000, 0) / math.sqrt(math.log(1000))
    assert 1.0 <= ratio <= 2.5
    with pytest.raises(ValueError):
        empirical_lp_noise(0.5, 3, 1.0, 10, 0)


def test_make_rng_streams_are_independent_of_order():
    a = make_rng(3, (0,)).standard_normal(5)
    make_rng(3, (1,)).standard_normal(5)
    np.testing.assert_array_equal(a, make_rng(3, (0,)).standard_normal(5))
