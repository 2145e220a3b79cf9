"""Linear SVM training, the Bayes rule, and the sparse-SVM defense."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import GaussianMixtureSpec, LinearClassifier


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SvmConfig:
    c: float = 1.0
    tol: float = 1e-4
    max_epochs: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not (self.c > 0 and self.tol > 0 and self.max_epochs > 0):
            raise ValueError("c, tol and max_epochs must be positive")


@dataclass(frozen=True, eq=False)
class SvmFit:
    classifier: LinearClassifier
    alpha: np.ndarray
    epochs: int
    converged: bool
    dual_trace: np.ndarray  # dual objective 0.5||w||^2 - sum(alpha) after each epoch
    pg_gap: float


@njit(cache=True)
def _splitmix64(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return state, z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _dual_cd(X, y, c, tol, max_epochs, seed):
    # Dual coordinate descent for the L1-loss (hinge) SVM with shrinking.
    # X carries the constant bias feature as its last column.
    n, d = X.shape
    alpha = np.zeros(n)
    w = np.zeros(d)
    qii = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(d):
            s += X[i, j] * X[i, j]
        qii[i] = s
    index = np.arange(n)
    active = n
    pg_max_old = np.inf
    pg_min_old = -np.inf
    trace = np.empty(max_epochs)
    state = np.uint64(seed)
    converged = False
    gap = np.inf
    epoch = 0
    while epoch < max_epochs:
        # Fisher-Yates shuffle of the active prefix
        for k in range(active - 1, 0, -1):
            state, r = _splitmix64(state)
            m = np.int64(r % np.uint64(k + 1))
            tmp = index[k]
            index[k] = index[m]
            index[m] = tmp
        pg_max = -np.inf
        pg_min = np.inf
        k = 0
        while k < active:
            i = index[k]
            g = 0.0
            for j in range(d):
                g += w[j] * X[i, j]
            g = y[i] * g - 1.0
            pg = 0.0
            if alpha[i] == 0.0:
                if g > pg_max_old:
                    active -= 1
                    index[k] = index[active]
                    index[active] = i
                    continue
                elif g < 0.0:
                    pg = g
            elif alpha[i] == c:
                if g < pg_min_old:
                    active -= 1
                    index[k] = index[active]
                    index[active] = i
                    continue
                elif g > 0.0:
                    pg = g
            else:
                pg = g
            if pg > pg_max:
                pg_max = pg
            if pg < pg_min:
                pg_min = pg
            if abs(pg) > 1e-12 and qii[i] > 0.0:
                old = alpha[i]
                new = min(max(old - g / qii[i], 0.0), c)
                alpha[i] = new
                step = (new - old) * y[i]
                for j in range(d):
                    w[j] += step * X[i, j]
            k += 1
        obj = 0.0
        for j in range(d):
            obj += w[j] * w[j]
        trace[epoch] = 0.5 * obj - alpha.sum()
        epoch += 1
        gap = pg_max - pg_min
        if gap <= tol:
            if active == n:
                converged = True
                break
            active = n
            pg_max_old = np.inf
            pg_min_old = -np.inf
            continue
        pg_max_old = pg_max if pg_max > 0.0 else np.inf
        pg_min_old = pg_min if pg_min < 0.0 else -np.inf
    return w, alpha, epoch, converged, trace[:epoch], gap


def fit_svm(points, labels, cfg: SvmConfig = SvmConfig()) -> SvmFit:
    """Soft-margin linear SVM, ``min 0.5||(w, b)||^2 + C sum hinge(y (w.x + b))``.

    The bias is learned through an appended constant feature, so it is
    regularised like the weights. Labels must be +1/-1 and both classes must
    occur. Emits :class:`ConvergenceWarning` if ``max_epochs`` is exhausted.
    """
    X = np.asarray(points, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("points must be n x d and labels length n")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be +1 or -1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("training data must contain both classes")
    Xa = np.empty((X.shape[0], X.shape[1] + 1))
    Xa[:, :-1] = X
    Xa[:, -1] = 1.0
    w, alpha, epochs, converged, trace, gap = _dual_cd(
        Xa, y, float(cfg.c), float(cfg.tol), int(cfg.max_epochs), int(cfg.seed) & 0xFFFFFFFFFFFFFFFF)
    if not converged:
        warnings.warn(f"dual coordinate descent stopped after {epochs} epochs "
                      f"with projected-gradient gap {gap:.3g} > tol {cfg.tol:g}",
                      ConvergenceWarning, stacklevel=2)
    if not np.any(w[:-1] != 0.0):
        raise ValueError("training produced a zero weight vector")
    return SvmFit(LinearClassifier(w[:-1], w[-1]), alpha, int(epochs), bool(converged),
                  trace, float(gap))


def train_svm(data, cfg: SvmConfig = SvmConfig()) -> LinearClassifier:
    """Train on a :class:`~advlin.simulate.LabeledDataset`."""
    return fit_svm(data.points, data.labels, cfg).classifier


def primal_objective(clf: LinearClassifier, points, labels, c: float) -> float:
    margins = np.asarray(labels) * clf.decision_function(points)
    reg = 0.5 * (float(clf.w @ clf.w) + clf.b * clf.b)
    return reg + c * float(np.maximum(0.0, 1.0 - margins).sum())


def bayes_classifier(mix: GaussianMixtureSpec) -> LinearClassifier:
    """The rule ``mu . (x - mu_bar) > 0``."""
    mu = mix.mu
    return LinearClassifier(mu, -float(mu @ mix.mu_bar))


def sparsify(clf: LinearClassifier, k: int) -> LinearClassifier:
    """Keep the ``k`` largest-magnitude weights (ties to the lower index)."""
    k = int(k)
    if not 1 <= k <= clf.d:
        raise ValueError(f"k must lie in [1, {clf.d}], got {k}")
    keep = np.argsort(-np.abs(clf.w), kind="stable")[:k]
    w = np.zeros_like(clf.w)
    w[keep] = clf.w[keep]
    if not np.any(w != 0.0):
        raise ValueError("sparsified weight vector is zero")
    return LinearClassifier(w, clf.b)
