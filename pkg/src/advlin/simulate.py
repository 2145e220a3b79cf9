"""Seeded sampling from the mixture and Monte Carlo rate estimates."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import PointStatus, point_statuses
from .model import (
    MONTE_CARLO,
    GaussianMixtureSpec,
    LinearClassifier,
    PerturbationBudget,
    RateReport,
)


def make_rng(seed: int, stream: Sequence[int] = ()) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, *stream)``.

    Replicate ``r`` of an experiment uses ``stream=(r,)``, which gives
    independent reproducible streams regardless of execution order.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    points: np.ndarray
    labels: np.ndarray  # +1 / -1
    seed: int
    stream: tuple = field(default=())

    def __len__(self) -> int:
        return self.labels.size

    def split(self, n_first: int):
        """First ``n_first`` rows and the rest. Rows are already in random
        order, so this is a random split."""
        a = LabeledDataset(self.points[:n_first], self.labels[:n_first], self.seed, self.stream)
        b = LabeledDataset(self.points[n_first:], self.labels[n_first:], self.seed, self.stream)
        return a, b

    def to_csv(self, path) -> None:
        d = self.points.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label"] + [f"x{i}" for i in range(d)])
            for lab, row in zip(self.labels, self.points):
                writer.writerow(["+" if lab > 0 else "-"] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, seed: int = 0) -> "LabeledDataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[0] != "label":
                raise ValueError("dataset CSV must start with a 'label' column")
            labels, rows = [], []
            for rec in reader:
                labels.append(1 if rec[0] == "+" else -1)
                rows.append([float(v) for v in rec[1:]])
        return cls(np.array(rows, dtype=np.float64), np.array(labels, dtype=np.int8), seed)


def sample(mix: GaussianMixtureSpec, n: int, seed: int, stream: Sequence[int] = ()) -> LabeledDataset:
    """Draw ``n`` labelled points from ``0.5 N(mu+, s^2 I) + 0.5 N(mu-, s^2 I)``."""
    n = int(n)
    if n <= 0:
        raise ValueError("n must be positive")
    rng = make_rng(seed, stream)
    labels = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
    points = rng.standard_normal((n, mix.d))
    points *= mix.sigma
    points += np.where(labels[:, None] > 0, mix.mu_plus, mix.mu_minus)
    return LabeledDataset(points, labels, int(seed), tuple(stream))


def _report_from_counts(counts: np.ndarray, n: int, strong: bool) -> RateReport:
    mis = counts[PointStatus.MISCLASSIFIED]
    s_adv = counts[PointStatus.STRONG_ADVERSARIAL]
    adv = s_adv + counts[PointStatus.ADVERSARIAL_ONLY]
    p_m, p_adv, p_s_adv = mis / n, adv / n, s_adv / n
    err = (mis + adv) / n
    se = lambda p: math.sqrt(p * (1.0 - p) / n)  # noqa: E731
    std_err = {"p_m": se(p_m), "p_adv": se(p_adv), "p_err": se(err)}
    if strong:
        std_err["p_s_adv"] = se(p_s_adv)
        std_err["p_s_err"] = se((mis + s_adv) / n)
    return RateReport.from_parts(p_m, p_adv, p_s_adv if strong else None,
                                 provenance=MONTE_CARLO, n_samples=int(n), std_err=std_err)


def status_counts(data: LabeledDataset, clf: LinearClassifier, mix: GaussianMixtureSpec,
                  budget: PerturbationBudget) -> np.ndarray:
    """Counts indexed by :class:`PointStatus`; they always sum to ``len(data)``."""
    status = point_statuses(data.points, data.labels, clf, mix, budget)
    return np.bincount(status, minlength=len(PointStatus))


def rates_on(data: LabeledDataset, clf: LinearClassifier, mix: GaussianMixtureSpec,
             budget: PerturbationBudget) -> RateReport:
    """Empirical rates on a given sample."""
    counts = status_counts(data, clf, mix, budget)
    return _report_from_counts(counts, len(data), budget.delta is not None)


def empirical_rates(clf: LinearClassifier, mix: GaussianMixtureSpec, budget: PerturbationBudget,
                    n: int, seed: int, chunk: int = 200_000) -> RateReport:
    """Monte Carlo rates over ``n`` fresh points, sampled in chunks to bound memory.

    Chunk ``i`` uses stream ``(i,)`` of ``seed``; the integer counts are summed.
    """
    n = int(n)
    if n <= 0:
        raise ValueError("n must be positive")
    rows = max(1, min(chunk, 50_000_000 // max(mix.d, 1)))
    counts = np.zeros(len(PointStatus), dtype=np.int64)
    done = 0
    i = 0
    while done < n:
        m = min(rows, n - done)
        data = sample(mix, m, seed, stream=(i,))
        counts += status_counts(data, clf, mix, budget)
        done += m
        i += 1
    return _report_from_counts(counts, n, budget.delta is not None)


def empirical_lp_noise(p, d: int, sigma: float, n: int, seed: int, chunk: int = 100_000) -> float:
    """Mean of ``||x||_p^p`` over ``n`` draws of ``N(0, sigma^2 I_d)``; at
    ``p = inf`` the mean of ``||x||_inf`` instead."""
    p = float("inf") if p in ("inf", math.inf) else float(p)
    if p < 1.0:
        raise ValueError("p must be >= 1")
    if n <= 0 or d <= 0:
        raise ValueError("n and d must be positive")
    rows = max(1, min(chunk, 20_000_000 // d))
    total = 0.0
    done = 0
    i = 0
    while done < n:
        m = min(rows, n - done)
        x = np.abs(make_rng(seed, (i,)).standard_normal((m, d)) * sigma)
        if math.isinf(p):
            total += float(x.max(axis=1).sum())
        else:
            total += float((x ** p).sum())
        done += m
        i += 1
    return total / n


def empirical_linf_noise(d: int, sigma: float, n: int, seed: int) -> float:
    return empirical_lp_noise(math.inf, d, sigma, n, seed)
