"""Closed-form rates for linear classifiers on the balanced Gaussian mixture.

Every rate is written in terms of the two standardised class margins

    A+ = (w.mu + b') / (||w|| sigma),   A- = (w.mu - b') / (||w|| sigma)

where ``b'`` is the centered bias. A perturbation that can move ``w.x`` by at
most ``r`` turns correctly classified points within ``r`` of the boundary into
(strong-)adversarial ones, so

    p_m   = 1 - (Phi(A+) + Phi(A-)) / 2
    p_err = 1 - (Phi(A+ - r/(||w|| sigma)) + Phi(A- - r/(||w|| sigma))) / 2

with ``r = eps ||w||_q`` for the classical l_p budget and ``r = w.u`` for the
strong budget. Upper tails are evaluated as ``Phi(-A)`` to keep small rates
accurate.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import geometry
from .model import (
    CLOSED_FORM,
    GaussianMixtureSpec,
    LinearClassifier,
    PerturbationBudget,
    RateReport,
    centered_bias,
    dual_exponent,
    lp_norm,
    parse_p,
    snr,
)
from .numerics import std_normal_cdf as Phi
from .numerics import trunc_moment1, trunc_moment2


class DeltaClampWarning(UserWarning):
    pass


def _margins(clf: LinearClassifier, mix: GaussianMixtureSpec):
    wn = float(np.linalg.norm(clf.w))
    wmu = float(clf.w @ mix.mu)
    bc = centered_bias(clf, mix)
    scale = wn * mix.sigma
    return (wmu + bc) / scale, (wmu - bc) / scale, wn


def _error_for_reach(a_plus: float, a_minus: float, shift: float) -> float:
    # 1 - (Phi(A+ - s) + Phi(A- - s))/2 written with lower tails
    return 0.5 * (Phi(shift - a_plus) + Phi(shift - a_minus))


def _adv_part(a_plus: float, a_minus: float, shift: float) -> float:
    # Probability of 0 < margin < reach for either class; a sum of two
    # non-negative Phi differences, so no clamping is needed.
    return 0.5 * ((Phi(shift - a_plus) - Phi(-a_plus)) + (Phi(shift - a_minus) - Phi(-a_minus)))


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not (eps >= 0.0) or math.isnan(eps):
        raise ValueError(f"epsilon must be >= 0, got {eps}")
    return eps


def _clamp_delta(eps: float, delta: float) -> float:
    delta = float(delta)
    if delta < 0.0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if delta > eps:
        warnings.warn(f"delta={delta} exceeds epsilon={eps}; using delta=epsilon",
                      DeltaClampWarning, stacklevel=3)
        return eps
    return delta


def _clamp_delta_lp(eps: float, delta: float, p: float, mix: GaussianMixtureSpec) -> float:
    # For p <= 2 the l_p ball lies inside the l2 ball, so delta > eps is vacuous.
    # For p > 2 the ball reaches eps ||mu0||_q along the signal, which can exceed
    # eps; only delta beyond that extent is vacuous.
    if p <= 2.0:
        return _clamp_delta(eps, delta)
    delta = float(delta)
    if delta < 0.0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    return min(delta, eps * lp_norm(mix.mu0, dual_exponent(p)))


def misclassification_rate(clf: LinearClassifier, mix: GaussianMixtureSpec) -> float:
    a_plus, a_minus, _ = _margins(clf, mix)
    return 0.5 * (Phi(-a_plus) + Phi(-a_minus))


def adversarial_rate(clf: LinearClassifier, mix: GaussianMixtureSpec, eps: float) -> float:
    """Probability that a point is correctly classified yet has an l2
    adversarial example within ``eps``."""
    eps = _check_eps(eps)
    a_plus, a_minus, _ = _margins(clf, mix)
    return _adv_part(a_plus, a_minus, eps / mix.sigma)


def adversarial_error_rate(clf: LinearClassifier, mix: GaussianMixtureSpec, eps: float) -> float:
    eps = _check_eps(eps)
    a_plus, a_minus, _ = _margins(clf, mix)
    return _error_for_reach(a_plus, a_minus, eps / mix.sigma)


def adv_error_lower_bound(mix: GaussianMixtureSpec, eps: float) -> float:
    """``1 - Phi(SNR - eps/sigma)``; no linear classifier with ``w.mu > eps ||w||``
    achieves a smaller adversarial-error rate."""
    eps = _check_eps(eps)
    return Phi(eps / mix.sigma - snr(mix))


def g_effective(eps: float, delta: float, theta: float) -> float:
    """Reach of the strong budget along the classifier normal, per unit ``||w||``."""
    if eps < 0 or delta < 0:
        raise ValueError("eps and delta must be non-negative")
    if not (0.0 <= theta <= math.pi / 2 + 1e-15):
        raise ValueError(f"theta must lie in [0, pi/2], got {theta}")
    c, s = math.cos(theta), math.sin(theta)
    beta = min(eps * c, delta)
    return beta * c + math.sqrt(max(eps * eps - beta * beta, 0.0)) * s


def _strong_shift(clf, mix, eps, delta) -> float:
    theta = geometry.decompose(clf, mix).theta
    return g_effective(eps, delta, theta) / mix.sigma


def strong_adversarial_rate(clf: LinearClassifier, mix: GaussianMixtureSpec,
                            eps: float, delta: float) -> float:
    eps = _check_eps(eps)
    delta = _clamp_delta(eps, delta)
    a_plus, a_minus, _ = _margins(clf, mix)
    return _adv_part(a_plus, a_minus, _strong_shift(clf, mix, eps, delta))


def strong_error_rate(clf: LinearClassifier, mix: GaussianMixtureSpec,
                      eps: float, delta: float) -> float:
    eps = _check_eps(eps)
    delta = _clamp_delta(eps, delta)
    a_plus, a_minus, _ = _margins(clf, mix)
    return _error_for_reach(a_plus, a_minus, _strong_shift(clf, mix, eps, delta))


def _lp_shift(clf, mix, eps, p) -> float:
    q = dual_exponent(p)
    return eps * lp_norm(clf.w, q) / (np.linalg.norm(clf.w) * mix.sigma)


def lp_adversarial_rate(clf: LinearClassifier, mix: GaussianMixtureSpec,
                        eps: float, p) -> float:
    eps = _check_eps(eps)
    a_plus, a_minus, _ = _margins(clf, mix)
    return _adv_part(a_plus, a_minus, _lp_shift(clf, mix, eps, parse_p(p)))


def lp_adversarial_error_rate(clf: LinearClassifier, mix: GaussianMixtureSpec,
                              eps: float, p) -> float:
    eps = _check_eps(eps)
    a_plus, a_minus, _ = _margins(clf, mix)
    return _error_for_reach(a_plus, a_minus, _lp_shift(clf, mix, eps, parse_p(p)))


def _lp_strong_shift(clf, mix, eps, delta, p) -> float:
    budget = PerturbationBudget(p=p, epsilon=eps, delta=delta)
    u = geometry.lp_strong_perturbation(clf, mix, budget).direction
    return float(clf.w @ u) / (np.linalg.norm(clf.w) * mix.sigma)


def lp_strong_adversarial_rate(clf: LinearClassifier, mix: GaussianMixtureSpec,
                               eps: float, delta: float, p) -> float:
    eps = _check_eps(eps)
    delta = _clamp_delta_lp(eps, delta, parse_p(p), mix)
    a_plus, a_minus, _ = _margins(clf, mix)
    return _adv_part(a_plus, a_minus, _lp_strong_shift(clf, mix, eps, delta, parse_p(p)))


def lp_strong_error_rate(clf: LinearClassifier, mix: GaussianMixtureSpec,
                         eps: float, delta: float, p) -> float:
    eps = _check_eps(eps)
    delta = _clamp_delta_lp(eps, delta, parse_p(p), mix)
    a_plus, a_minus, _ = _margins(clf, mix)
    return _error_for_reach(a_plus, a_minus, _lp_strong_shift(clf, mix, eps, delta, parse_p(p)))


def rate_report(clf: LinearClassifier, mix: GaussianMixtureSpec,
                budget: PerturbationBudget) -> RateReport:
    """All closed-form rates for one budget, any p."""
    a_plus, a_minus, _ = _margins(clf, mix)
    p_m = 0.5 * (Phi(-a_plus) + Phi(-a_minus))
    p_adv = _adv_part(a_plus, a_minus, _lp_shift(clf, mix, budget.epsilon, budget.p))
    p_s_adv = None
    if budget.delta is not None:
        delta = _clamp_delta_lp(budget.epsilon, budget.delta, budget.p, mix)
        if budget.p == 2.0:
            shift = _strong_shift(clf, mix, budget.epsilon, delta)
        else:
            shift = _lp_strong_shift(clf, mix, budget.epsilon, delta, budget.p)
        p_s_adv = _adv_part(a_plus, a_minus, shift)
    return RateReport.from_parts(p_m, p_adv, p_s_adv, provenance=CLOSED_FORM)


def small_bias_rates(mix: GaussianMixtureSpec, theta: float, eps: float,
                     delta: Optional[float] = None, linearized: bool = False) -> RateReport:
    """Rates of an unbiased (``b' = 0``) classifier at angle ``theta`` to the signal.

    By default these are the exact rates with the bias dropped:
    ``1 - Phi(SNR cos theta - r/sigma)`` with ``r = eps`` or ``g(eps, delta, theta)``.
    ``linearized=True`` returns the cruder closed forms
    ``1 - Phi((SNR - eps/sigma) cos theta)`` and
    ``1 - Phi((SNR - delta/sigma) cos theta - (eps/sigma) sin theta)``,
    which treat ``delta << eps``. Both agree at ``theta = 0``.
    """
    if not (0.0 <= theta <= math.pi / 2 + 1e-15):
        raise ValueError(f"theta must lie in [0, pi/2], got {theta}")
    eps = _check_eps(eps)
    s = snr(mix)
    sig = mix.sigma
    c, sn = math.cos(theta), math.sin(theta)
    p_m = Phi(-s * c)
    if linearized:
        p_err = Phi(-(s - eps / sig) * c)
    else:
        p_err = Phi(eps / sig - s * c)
    p_s_err = None
    if delta is not None:
        delta = _clamp_delta(eps, delta)
        if linearized:
            p_s_err = Phi(-((s - delta / sig) * c - eps / sig * sn))
        else:
            p_s_err = Phi(g_effective(eps, delta, theta) / sig - s * c)
    p_s_adv = None if p_s_err is None else max(p_s_err - p_m, 0.0)
    return RateReport.from_parts(p_m, max(p_err - p_m, 0.0), p_s_adv, provenance=CLOSED_FORM)


def bayes_rates(mix: GaussianMixtureSpec, eps: float, delta: Optional[float] = None) -> RateReport:
    """Optimal rates, reached by the Bayes rule: ``1 - Phi(SNR)``,
    ``1 - Phi(SNR - eps/sigma)`` and ``1 - Phi(SNR - delta/sigma)``."""
    return small_bias_rates(mix, 0.0, eps, delta)


@dataclass(frozen=True)
class AsymptoticAngleParams:
    n_train: int
    d: int
    mu: float
    sigma: float = 1.0

    def __post_init__(self):
        if self.n_train <= 0 or self.d <= 0 or not self.mu > 0 or not self.sigma > 0:
            raise ValueError("all asymptotic angle parameters must be positive")


class RootFindingError(RuntimeError):
    def __init__(self, message: str, residuals):
        super().__init__(f"{message}; residuals={residuals}")
        self.residuals = residuals


THETA_BOX = (1e-6, math.pi / 2 - 1e-6)
T_BOX = (-10.0, 10.0)


def asymptotic_residuals(theta: float, t: float, params: AsymptoticAngleParams):
    ratio = params.n_train / params.d
    r1 = math.sin(theta) ** 2 - ratio * trunc_moment2(t)
    r2 = math.cos(theta) - ratio * (params.mu / params.sigma) * trunc_moment1(t)
    return r1, r2


def _grid_start(params: AsymptoticAngleParams, n: int = 201):
    thetas = np.linspace(*THETA_BOX, n)
    ts = np.linspace(*T_BOX, n)
    best = None
    for t in ts:
        for th in thetas:
            r1, r2 = asymptotic_residuals(th, t, params)
            val = r1 * r1 + r2 * r2
            if best is None or val < best[0]:
                best = (val, th, t)
    return best[1], best[2]


def asymptotic_svm_angle(params: AsymptoticAngleParams, tol: float = 1e-8,
                         max_iter: int = 100):
    """Solve the two-equation system for the large-sample SVM angle.

    Returns ``(theta, t)``. Newton's method with a forward-difference
    Jacobian and step halving, restarted from a coarse grid search when it
    stagnates or leaves the search box.
    """
    best_r = None

    def newton(theta, t):
        nonlocal best_r
        r = np.array(asymptotic_residuals(theta, t, params))
        for _ in range(max_iter):
            if best_r is None or np.max(np.abs(r)) < np.max(np.abs(best_r)):
                best_r = r
            if np.max(np.abs(r)) <= tol:
                return theta, t
            h = 1e-7
            jac = np.empty((2, 2))
            jac[:, 0] = (np.array(asymptotic_residuals(theta + h, t, params)) - r) / h
            jac[:, 1] = (np.array(asymptotic_residuals(theta, t + h, params)) - r) / h
            try:
                step = np.linalg.solve(jac, -r)
            except np.linalg.LinAlgError:
                return None
            lam = 1.0
            while lam > 1e-6:
                th_new, t_new = theta + lam * step[0], t + lam * step[1]
                if THETA_BOX[0] <= th_new <= THETA_BOX[1] and T_BOX[0] <= t_new <= T_BOX[1]:
                    r_new = np.array(asymptotic_residuals(th_new, t_new, params))
                    if np.max(np.abs(r_new)) < np.max(np.abs(r)):
                        break
                lam *= 0.5
            else:
                return None
            theta, t, r = th_new, t_new, r_new
        return None

    for theta0, t0 in ((math.pi / 4, 0.0), _grid_start(params)):
        root = newton(theta0, t0)
        if root is not None:
            return float(root[0]), float(root[1])
    raise RootFindingError("no root of the asymptotic angle system in the search box",
                           None if best_r is None else tuple(float(x) for x in best_r))


def required_snr_order(p, d: int) -> float:
    """SNR scale needed for any useful l_p-adversarially robust linear
    classifier: ``d^min(1/p, 1/2)`` for finite p and ``sqrt(log d)`` at p = inf.

    Only the order is known, so the constant is 1.
    """
    p = parse_p(p)
    if d < 1:
        raise ValueError("d must be >= 1")
    if math.isinf(p):
        return math.sqrt(math.log(d))
    return float(d) ** min(1.0 / p, 0.5)


def minimal_bayes_snr(target: float, d: int, eta_a: float, sigma: float = 1.0,
                      tol: float = 1e-12) -> float:
    """Smallest SNR at which the adversarial-error lower bound with
    ``eps = eta_a sqrt(d) sigma`` drops to ``target``, found by bisection."""
    if not 0.0 < target < 0.5:
        raise ValueError("target must lie in (0, 0.5)")
    eps = eta_a * math.sqrt(d) * sigma

    def bound(s: float) -> float:
        return adv_error_lower_bound(GaussianMixtureSpec.symmetric(s * sigma, 1, sigma), eps)

    lo, hi = 0.0, 1.0
    while bound(hi) > target:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if bound(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi
