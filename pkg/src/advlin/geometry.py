"""Worst-case perturbations for linear classifiers.

For a linear rule the set of points that own an adversarial example is
determined by a single perturbation: the one maximising ``w . v`` over the
allowed perturbation set. Everything in this module builds that maximiser
(for the plain l_p ball and for the ball intersected with the signal slab
``|v . mu0| <= delta``) and uses it to label points.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    GaussianMixtureSpec,
    LinearClassifier,
    Perturbation,
    PerturbationBudget,
    dual_exponent,
    lp_norm,
)

FEASIBILITY_SLACK = 1e-9
OBJECTIVE_RTOL = 1e-8
MAX_BISECTIONS = 200


class SolverError(RuntimeError):
    """Raised when the strong l_p solver cannot certify its answer."""

    def __init__(self, message: str, **residuals):
        super().__init__(f"{message} ({', '.join(f'{k}={v:.3g}' for k, v in residuals.items())})")
        self.residuals = residuals


class PointStatus(enum.IntEnum):
    MISCLASSIFIED = 0
    STRONG_ADVERSARIAL = 1
    ADVERSARIAL_ONLY = 2
    ROBUST = 3


@dataclass(frozen=True, eq=False)
class AngleDecomposition:
    """``v0 = cos(theta) mu0 + sin(theta) n0`` with theta in [0, pi/2].

    ``mu0`` is the signal direction after orientation, i.e. possibly
    sign-flipped so that ``w . mu0 >= 0``; ``orientation`` is that sign.
    """

    theta: float
    n0: Optional[np.ndarray]
    mu0: np.ndarray
    orientation: int
    cos_theta: float
    sin_theta: float


def normal_direction(clf: LinearClassifier) -> np.ndarray:
    norm = np.linalg.norm(clf.w)
    if norm == 0.0:
        raise ValueError("zero weight vector has no normal direction")
    return clf.w / norm


def decompose(clf: LinearClassifier, mix: GaussianMixtureSpec) -> AngleDecomposition:
    if clf.d != mix.d:
        raise ValueError(f"classifier has d={clf.d}, mixture has d={mix.d}")
    v0 = normal_direction(clf)
    mu0 = mix.mu0
    c = float(v0 @ mu0)
    orientation = 1 if c >= 0.0 else -1
    mu0 = orientation * mu0
    c = abs(c)
    n = v0 - c * mu0
    # one Gram-Schmidt refinement keeps n0 . mu0 at round-off level
    n = n - (n @ mu0) * mu0
    s = float(np.linalg.norm(n))
    if s <= 1e-14:
        return AngleDecomposition(0.0, None, mu0, orientation, 1.0, 0.0)
    theta = math.atan2(s, c)
    return AngleDecomposition(theta, n / s, mu0, orientation, math.cos(theta), math.sin(theta))


def _orthogonal_unit(u: np.ndarray) -> Optional[np.ndarray]:
    """Some unit vector orthogonal to ``u``; None when d == 1."""
    if u.size < 2:
        return None
    e = np.zeros_like(u)
    e[int(np.argmin(np.abs(u)))] = 1.0
    n = e - (e @ u) * u
    return n / np.linalg.norm(n)


def strong_perturbation_l2(clf: LinearClassifier, mix: GaussianMixtureSpec,
                           budget: PerturbationBudget) -> Perturbation:
    """Closed-form maximiser of ``w . v`` over ``||v||_2 <= eps, |v . mu0| <= delta``.

    The answer is ``beta mu0 + sqrt(eps^2 - beta^2) n0`` with
    ``beta = min(eps cos(theta), delta)``. When ``w`` is parallel to ``mu0``
    any orthogonal unit vector serves as ``n0``; in one dimension there is
    none and the result is ``beta mu0`` with norm ``beta < eps``.
    """
    if budget.delta is None:
        raise ValueError("strong perturbation needs a signal budget delta")
    if budget.p != 2.0:
        raise ValueError("closed form only applies to p = 2")
    eps, delta = budget.epsilon, budget.delta
    dec = decompose(clf, mix)
    beta = min(eps * dec.cos_theta, delta)
    n0 = dec.n0 if dec.n0 is not None else _orthogonal_unit(dec.mu0)
    u = beta * dec.mu0
    if n0 is not None:
        u = u + math.sqrt(max(eps * eps - beta * beta, 0.0)) * n0
    return Perturbation.build(u, 2.0, mix.mu0)


def lp_unit_maximizer(c: np.ndarray, p: float) -> np.ndarray:
    """Unit l_p vector maximising ``c . v`` (Holder equality case).

    Components are ``sgn(c_i) (|c_i| / ||c||_q)^(q-1)``. At p = 1 all mass goes
    to the first coordinate of largest ``|c_i|``; at p = inf the answer is the
    sign vector.
    """
    c = np.asarray(c, dtype=np.float64)
    scale = float(np.max(np.abs(c)))
    if scale == 0.0:
        raise ValueError("zero objective has no unique maximiser")
    if math.isinf(p):
        return np.sign(c)
    if p == 1.0:
        k = int(np.argmax(np.abs(c)))
        v = np.zeros_like(c)
        v[k] = math.copysign(1.0, c[k])
        return v
    if p == 2.0:
        return c / np.linalg.norm(c)
    q = dual_exponent(p)
    a = np.abs(c) / scale
    a = a / lp_norm(a, q)
    return np.sign(c) * a ** (q - 1.0)


def lp_perturbation(clf: LinearClassifier, budget: PerturbationBudget,
                    mix: Optional[GaussianMixtureSpec] = None) -> Perturbation:
    """``eps * v0|p``, the classical l_p worst-case direction.

    ``mix`` is only used to report the signal component.
    """
    v = budget.epsilon * lp_unit_maximizer(clf.w, budget.p)
    mu0 = mix.mu0 if mix is not None else np.zeros_like(v)
    return Perturbation.build(v, budget.p, mu0)


def _dual_value(w, mu0, eps, delta, lam, q) -> float:
    # Lagrangian dual of max w.v s.t. ||v||_p <= eps, |v.mu0| <= delta.
    return eps * lp_norm(w - lam * mu0, q) + delta * abs(lam)


def lp_strong_perturbation(clf: LinearClassifier, mix: GaussianMixtureSpec,
                           budget: PerturbationBudget) -> Perturbation:
    """Maximiser of ``w . v`` over ``{||v||_p <= eps, |v . mu0| <= delta}``.

    Solved through the dual variable ``lam`` of the slab constraint: for fixed
    ``lam`` the ball maximiser of ``(w - lam mu0) . v`` is the Holder direction,
    and its signal component is non-increasing in ``lam`` (it is minus a
    subgradient of a convex function). Bisection brackets the ``lam`` where the
    signal component crosses ``+-delta``; the two bracket maximisers are mixed
    so that the slab constraint is met exactly, which also handles the
    piecewise-constant cases p = 1 and p = inf. The result is certified by the
    duality gap.
    """
    if budget.delta is None:
        raise ValueError("strong perturbation needs a signal budget delta")
    if clf.d != mix.d:
        raise ValueError(f"classifier has d={clf.d}, mixture has d={mix.d}")
    p, eps, delta = budget.p, budget.epsilon, budget.delta
    w, mu0 = clf.w, mix.mu0
    if eps == 0.0:
        return Perturbation.build(np.zeros_like(w), p, mu0)

    def v_at(lam: float) -> np.ndarray:
        return eps * lp_unit_maximizer(w - lam * mu0, p)

    v = v_at(0.0)
    s0 = float(v @ mu0)
    if abs(s0) <= delta:
        return Perturbation.build(v, p, mu0)

    sign = 1.0 if s0 > 0 else -1.0
    target = sign * delta
    wm = float(w @ mu0)
    residual = w - wm * mu0
    if np.linalg.norm(residual) <= 1e-14 * np.linalg.norm(w):
        # w parallel to mu0: every feasible v with v.mu0 = target is optimal.
        u = target * mu0
        if lp_norm(u, p) > eps * (1.0 + FEASIBILITY_SLACK):
            dirn = lp_unit_maximizer(sign * mu0, p)
            u = dirn * (delta / float(dirn @ (sign * mu0)))
        return Perturbation.build(u, p, mu0)

    # phi(lam) = v(lam).mu0 is non-increasing; find lam with phi(lam) = target.
    lo, hi = 0.0, sign * max(float(np.linalg.norm(w)), 1.0)
    for _ in range(MAX_BISECTIONS):
        if sign * float(v_at(hi) @ mu0) <= delta:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise SolverError("could not bracket the slab multiplier", hi=hi)
    v_lo, v_hi = v_at(lo), v_at(hi)
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        v_mid = v_at(mid)
        if sign * float(v_mid @ mu0) > delta:
            lo, v_lo = mid, v_mid
        else:
            hi, v_hi = mid, v_mid
    s_lo, s_hi = float(v_lo @ mu0), float(v_hi @ mu0)
    if s_lo == s_hi:
        u = v_hi
    else:
        t = (target - s_hi) / (s_lo - s_hi)
        t = min(max(t, 0.0), 1.0)
        u = t * v_lo + (1.0 - t) * v_hi

    q = dual_exponent(p)
    primal = float(w @ u)
    dual = min(_dual_value(w, mu0, eps, delta, lam, q) for lam in (lo, hi))
    gap = dual - primal
    if gap > OBJECTIVE_RTOL * max(abs(dual), 1e-300):
        raise SolverError("duality gap above tolerance", gap=gap, primal=primal, dual=dual)
    out = Perturbation.build(u, p, mu0)
    if out.achieved_norm > eps + FEASIBILITY_SLACK or abs(out.signal_component) > delta + FEASIBILITY_SLACK:
        raise SolverError("infeasible solution", norm=out.achieved_norm,
                          signal=out.signal_component)
    return out


def strong_perturbation(clf: LinearClassifier, mix: GaussianMixtureSpec,
                        budget: PerturbationBudget) -> Perturbation:
    """Dispatch to the closed form at p = 2 and to the solver otherwise."""
    if budget.p == 2.0:
        return strong_perturbation_l2(clf, mix, budget)
    return lp_strong_perturbation(clf, mix, budget)


def adversarial_reach(clf: LinearClassifier, budget: PerturbationBudget) -> float:
    """``max w . v`` over the l_p ball, i.e. ``eps ||w||_q``."""
    return budget.epsilon * lp_norm(clf.w, budget.q)


def strong_reach(clf: LinearClassifier, mix: GaussianMixtureSpec,
                 budget: PerturbationBudget) -> float:
    return float(clf.w @ strong_perturbation(clf, mix, budget).direction)


def _flips(margin: float, clf: LinearClassifier, x: np.ndarray, v: np.ndarray) -> bool:
    plus = margin > 0.0
    return any((clf.decision_function(x + s * v) > 0.0) != plus for s in (1.0, -1.0))


def point_status(x, label: int, clf: LinearClassifier, mix: GaussianMixtureSpec,
                 budget: PerturbationBudget) -> PointStatus:
    """Classify one point by trying the two defining perturbations ``+-u``.

    ``label`` is +1 or -1.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (clf.d,) or mix.d != clf.d:
        raise ValueError("dimension mismatch between point, classifier and mixture")
    margin = float(clf.decision_function(x))
    if (1 if margin > 0.0 else -1) != label:
        return PointStatus.MISCLASSIFIED
    if budget.delta is not None:
        if _flips(margin, clf, x, strong_perturbation(clf, mix, budget).direction):
            return PointStatus.STRONG_ADVERSARIAL
    if _flips(margin, clf, x, lp_perturbation(clf, budget).direction):
        return PointStatus.ADVERSARIAL_ONLY
    return PointStatus.ROBUST


def point_statuses(points, labels, clf: LinearClassifier, mix: GaussianMixtureSpec,
                   budget: PerturbationBudget) -> np.ndarray:
    """Vectorised :func:`point_status` using margins instead of explicit moves.

    A '+'-classified point with margin ``m`` flips under ``-u`` iff
    ``m - w.u <= 0``; a '-'-classified one flips under ``+u`` iff ``m + w.u > 0``.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    if mix.d != clf.d:
        raise ValueError("dimension mismatch between classifier and mixture")
    margin = clf.decision_function(points)
    plus = margin > 0.0

    def flipped(reach: float) -> np.ndarray:
        return np.where(plus, margin - reach <= 0.0, margin + reach > 0.0)

    status = np.full(margin.shape, int(PointStatus.ROBUST), dtype=np.int8)
    adv = flipped(adversarial_reach(clf, budget))
    status[adv] = PointStatus.ADVERSARIAL_ONLY
    if budget.delta is not None:
        status[flipped(strong_reach(clf, mix, budget))] = PointStatus.STRONG_ADVERSARIAL
    status[np.where(plus, 1, -1) != labels] = PointStatus.MISCLASSIFIED
    return status


def _scale_to_boundary(v: np.ndarray, budget: PerturbationBudget,
                       mu0: Optional[np.ndarray]) -> np.ndarray:
    # rows of v rescaled onto the boundary of the (possibly slab-cut) ball
    if math.isinf(budget.p):
        norms = np.max(np.abs(v), axis=1)
    else:
        norms = np.sum(np.abs(v) ** budget.p, axis=1) ** (1.0 / budget.p)
    with np.errstate(divide="ignore"):
        scale = budget.epsilon / norms
        if budget.delta is not None:
            scale = np.minimum(scale, budget.delta / np.abs(v @ mu0))
    return v * scale[:, None]


def brute_force_adversarial_search(x, clf: LinearClassifier, budget: PerturbationBudget,
                                   trials: int, seed: int,
                                   mix: Optional[GaussianMixtureSpec] = None,
                                   constructive: bool = True) -> Optional[Perturbation]:
    """Randomised search for any allowed perturbation that changes ``C(x)``.

    Random directions (Gaussian, sparse and sign patterns) are pushed to the
    boundary of the allowed set. With ``constructive=True`` the two defining
    perturbations are tried first. Deterministic in ``seed``.
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    if budget.delta is not None and mix is None:
        raise ValueError("a strong budget needs the mixture for its signal direction")
    x = np.asarray(x, dtype=np.float64)
    d = clf.d
    mu0 = mix.mu0 if mix is not None else None
    margin = float(clf.decision_function(x))
    plus = margin > 0.0

    def first_flip(cands: np.ndarray) -> Optional[Perturbation]:
        moved = (x + cands) @ clf.w + clf.b > 0.0
        hits = np.flatnonzero(moved != plus)
        if hits.size == 0:
            return None
        return Perturbation.build(cands[hits[0]], budget.p,
                                  mu0 if mu0 is not None else np.zeros(d))

    if constructive:
        if budget.delta is not None:
            u = strong_perturbation(clf, mix, budget).direction
        else:
            u = lp_perturbation(clf, budget).direction
        found = first_flip(np.stack([u, -u]))
        if found is not None:
            return found

    rng = np.random.default_rng(seed)
    remaining = int(trials)
    chunk = 20000
    while remaining > 0:
        m = min(chunk, remaining)
        remaining -= m
        v = rng.standard_normal((m, d))
        kind = rng.integers(0, 3, size=m)
        sparse = kind == 1
        v[sparse] *= rng.random((int(sparse.sum()), d)) < 0.5
        signs = kind == 2
        v[signs] = np.sign(v[signs])
        v = v[np.any(v != 0.0, axis=1)]
        found = first_flip(np.nan_to_num(_scale_to_boundary(v, budget, mu0)))
        if found is not None:
            return found
    return None
