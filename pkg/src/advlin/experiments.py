"""Experiment scenarios: sweeps, figure reproductions, noise checks and images.

Every scenario writes CSV files whose content depends only on the config
(including its seed). Replicate ``r`` at grid point ``i`` draws from the
random stream ``(seed, i, r)``, so the thread count never changes results.
"""
from __future__ import annotations

import csv
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import geometry, learn, rates, simulate
from .learn import ConvergenceWarning, SvmConfig
from .model import GaussianMixtureSpec, LinearClassifier, PerturbationBudget, encode_p, parse_p
from .numerics import abs_moment
from .pgm import SIDE, center_index, render_image

SCENARIOS = ("rates", "sweep", "figure2", "figure3", "figure4", "lp_noise", "image")
RATE_NAMES = ("p_m", "p_adv", "p_err", "p_s_adv", "p_s_err")
FIGURE2_RATES = ("p_m", "p_err", "p_s_err")
MU_GRID = tuple(0.5 * i for i in range(1, 11))


class ConfigError(ValueError):
    pass


def _as_list(value, cast=float) -> list:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        return [cast(v) for v in value]
    return [cast(value)]


@dataclass
class ExperimentConfig:
    scenario: str
    mu: list = field(default_factory=lambda: list(MU_GRID))
    d: int = 361
    sigma: float = 1.0
    mean_layout: Optional[str] = "axis"
    eta_a: list = field(default_factory=lambda: [0.3])
    eta_s: Optional[list] = None
    p: float = 2.0
    classifier: str = "svm"
    k: int = 10
    n_train: int = 4000
    n_test: int = 1000
    replicates: int = 50
    seed: int = 0
    svm_c: float = 1.0
    svm_tol: float = 1e-4
    svm_max_epochs: int = 1000
    n_samples: int = 100_000
    lp_orders: list = field(default_factory=lambda: [1.0, 2.0, 3.0, math.inf])
    dims: list = field(default_factory=lambda: [100, 1000, 10000])
    output: str = "advlin_out"

    _SCENARIO_DEFAULTS = {
        "figure2": {"eta_a": [0.05, 0.1, 0.3]},
        "rates": {"mu": [4.0], "classifier": "bayes"},
        "figure4": {"mean_layout": None},
        "image": {"mu": [4.0]},
    }

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.eta_s is None:
            self.eta_s = list(self.eta_a)
        if len(self.eta_s) != len(self.eta_a):
            raise ConfigError("eta_a and eta_s must have the same length")
        if any(e < 0 for e in self.eta_a + self.eta_s):
            raise ConfigError("eta values must be >= 0")
        if not self.mu or any(m <= 0 for m in self.mu):
            raise ConfigError("mu values must be positive")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.d < 1 or self.sigma <= 0:
            raise ConfigError("d must be >= 1 and sigma > 0")
        if self.mean_layout not in (None, "axis", "uniform"):
            raise ConfigError(f"unknown mean_layout {self.mean_layout!r}")
        if self.classifier not in ("svm", "bayes", "sparse"):
            raise ConfigError(f"unknown classifier {self.classifier!r}")
        if self.n_train < 2 or self.n_test < 1 or self.n_samples < 1:
            raise ConfigError("sample sizes must be positive (n_train >= 2)")
        if not 1 <= self.k <= self.d:
            raise ConfigError("k must lie in [1, d]")
        if self.scenario == "image" and self.d != SIDE * SIDE:
            raise ConfigError(f"the image scenario needs d = {SIDE * SIDE}")
        try:
            self.p = parse_p(self.p)
            self.lp_orders = [parse_p(v) for v in self.lp_orders]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, data: dict, scenario: Optional[str] = None) -> "ExperimentConfig":
        data = dict(data)
        scenario = scenario or data.pop("scenario", None)
        data.pop("scenario", None)
        if scenario is None:
            raise ConfigError("config does not name a scenario")
        merged = dict(cls._SCENARIO_DEFAULTS.get(scenario, {}))
        if "eta" in data:
            eta = data.pop("eta")
            merged["eta_a"] = eta
            merged["eta_s"] = eta
        nested = {}
        for group in ("mixture", "budget", "simulation", "svm"):
            for key, value in (data.pop(group, None) or {}).items():
                nested[f"svm_{key}" if group == "svm" else key] = value
        merged.update(nested)
        merged.update(data)
        known = {f.name for f in fields(cls)}
        unknown = set(merged) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            for key in ("mu", "eta_a"):
                if key in merged:
                    merged[key] = _as_list(merged[key])
            if merged.get("eta_s") is not None:
                merged["eta_s"] = _as_list(merged["eta_s"])
            if "dims" in merged:
                merged["dims"] = _as_list(merged["dims"], int)
            if "lp_orders" in merged:
                merged["lp_orders"] = _as_list(merged["lp_orders"], parse_p)
            for key in ("d", "k", "n_train", "n_test", "replicates", "seed",
                        "svm_max_epochs", "n_samples"):
                if key in merged:
                    merged[key] = int(merged[key])
            for key in ("sigma", "svm_c", "svm_tol"):
                if key in merged:
                    merged[key] = float(merged[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config value: {exc}") from exc
        return cls(scenario=scenario, **merged)

    def mixture(self, mu: float, layout: Optional[str] = None) -> GaussianMixtureSpec:
        return GaussianMixtureSpec.symmetric(mu, self.d, self.sigma, layout or self.mean_layout or "axis")

    def svm_config(self, seed: int) -> SvmConfig:
        return SvmConfig(c=self.svm_c, tol=self.svm_tol, max_epochs=self.svm_max_epochs, seed=seed)


def thread_count() -> int:
    env = os.environ.get("ADVLIN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def parallel_map(fn: Callable, items: list, threads: Optional[int] = None) -> list:
    """Ordered map; output order is the input order whatever the thread count."""
    threads = threads or thread_count()
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, ".17g")


def write_csv(path: Path, columns: list, rows: list) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row.get(c)) for c in columns])
    return path


def _stream_seed(seed: int, *key: int) -> int:
    return int(simulate.make_rng(seed, key).integers(0, 2**63 - 1))


def _train(cfg: ExperimentConfig, data: simulate.LabeledDataset, seed: int):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        fit = learn.fit_svm(data.points, data.labels, cfg.svm_config(seed))
    return fit.classifier, fit.converged


def _budgets(cfg: ExperimentConfig, mix: GaussianMixtureSpec):
    return [PerturbationBudget.from_eta(mix, ea, es, cfg.p) for ea, es in zip(cfg.eta_a, cfg.eta_s)]


def _classifier_for(cfg, mix, train, seed):
    if cfg.classifier == "bayes":
        return learn.bayes_classifier(mix), True
    clf, converged = _train(cfg, train, seed)
    if cfg.classifier == "sparse":
        clf = learn.sparsify(clf, cfg.k)
    return clf, converged


def replicate_rows(cfg: ExperimentConfig, mu_index: int, rep: int) -> list:
    """One replicate at one grid point: fit, then score every budget."""
    mu = cfg.mu[mu_index]
    mix = cfg.mixture(mu)
    if cfg.classifier == "bayes":
        train, test = None, simulate.sample(mix, cfg.n_test, cfg.seed, (mu_index, rep))
    else:
        data = simulate.sample(mix, cfg.n_train + cfg.n_test, cfg.seed, (mu_index, rep))
        train, test = data.split(cfg.n_train)
    clf, converged = _classifier_for(cfg, mix, train, _stream_seed(cfg.seed, mu_index, rep, 1))
    dec = geometry.decompose(clf, mix)
    rows = []
    for eta_a, eta_s, budget in zip(cfg.eta_a, cfg.eta_s, _budgets(cfg, mix)):
        closed = rates.rate_report(clf, mix, budget)
        emp = simulate.rates_on(test, clf, mix, budget)
        row = {"mu": mu, "eta_a": eta_a, "eta_s": eta_s, "p": encode_p(cfg.p),
               "epsilon": budget.epsilon, "delta": budget.delta, "replicate": rep,
               "theta": dec.theta,
               "bias_centered": (clf.w @ mix.mu_bar + clf.b) / np.linalg.norm(clf.w),
               "converged": converged}
        for name in RATE_NAMES:
            row[f"formula_{name}"] = getattr(closed, name)
            row[f"empirical_{name}"] = getattr(emp, name)
        rows.append(row)
    return rows


def _aggregate(rows: list, names=RATE_NAMES) -> dict:
    n = len(rows)
    out = {k: rows[0][k] for k in ("mu", "eta_a", "eta_s", "p", "epsilon", "delta")}
    out["replicates"] = n
    out["theta_mean"] = float(np.mean([r["theta"] for r in rows]))
    out["bias_centered_mean"] = float(np.mean([r["bias_centered"] for r in rows]))
    out["unconverged"] = sum(0 if r["converged"] else 1 for r in rows)
    for name in names:
        f = np.array([r[f"formula_{name}"] for r in rows], dtype=float)
        e = np.array([r[f"empirical_{name}"] for r in rows], dtype=float)
        out[f"formula_{name}"] = float(f.mean())
        out[f"empirical_{name}"] = float(e.mean())
        out[f"empirical_{name}_se"] = float(e.std(ddof=1) / math.sqrt(n)) if n > 1 else None
    return out


def sweep_rows(cfg: ExperimentConfig, threads: Optional[int] = None) -> list:
    """Per-replicate rows for every (mu, eta) combination, in grid order."""
    jobs = [(i, r) for i in range(len(cfg.mu)) for r in range(cfg.replicates)]
    results = parallel_map(lambda job: replicate_rows(cfg, *job), jobs, threads)
    per_point = {}
    for (i, _), rows in zip(jobs, results):
        for j, row in enumerate(rows):
            per_point.setdefault((i, j), []).append(row)
    return [per_point[key] for key in sorted(per_point)]


def run_sweep(cfg: ExperimentConfig, names=RATE_NAMES, threads=None) -> list:
    return [_aggregate(rows, names) for rows in sweep_rows(cfg, threads)]


def _sweep_columns(names) -> list:
    cols = ["mu", "eta_a", "eta_s", "p", "epsilon", "delta", "replicates",
            "theta_mean", "bias_centered_mean", "unconverged"]
    for name in names:
        cols += [f"formula_{name}", f"empirical_{name}", f"empirical_{name}_se"]
    return cols


def run_rates(cfg: ExperimentConfig, threads=None) -> list:
    rows = []
    for group in sweep_rows(cfg, threads):
        rows.extend(group)
    return rows


RATES_COLUMNS = (["mu", "eta_a", "eta_s", "p", "epsilon", "delta", "replicate", "theta",
                  "bias_centered", "converged"]
                 + [f"{kind}_{n}" for n in RATE_NAMES for kind in ("formula", "empirical")])


def run_figure3(cfg: ExperimentConfig, threads=None) -> list:
    """Closed-form curves for the SVM (asymptotic angle), the Bayes rule, and an
    unbiased classifier at mu = 2 as a function of cos(theta); each with a
    Monte Carlo column."""
    eta_a, eta_s = cfg.eta_a[0], cfg.eta_s[0]
    rows = []

    svm_cfg = replace(cfg, classifier="svm", eta_a=[eta_a], eta_s=[eta_s])
    svm_groups = sweep_rows(svm_cfg, threads)
    for mu, group in zip(cfg.mu, svm_groups):
        mix = cfg.mixture(mu)
        budget = _budgets(svm_cfg, mix)[0]
        theta, _ = rates.asymptotic_svm_angle(
            rates.AsymptoticAngleParams(cfg.n_train, cfg.d, mu, cfg.sigma))
        agg = _aggregate(group)
        rows.append(_figure3_row("svm", mix, mu, theta, budget, agg))

    def bayes_point(args):
        idx, mu = args
        mix = cfg.mixture(mu)
        budget = _budgets(svm_cfg, mix)[0]
        emp = simulate.empirical_rates(learn.bayes_classifier(mix), mix, budget,
                                       cfg.n_samples, _stream_seed(cfg.seed, 3, idx))
        return _figure3_row("bayes", mix, mu, 0.0, budget, _mc_columns(emp))

    rows.extend(parallel_map(bayes_point, list(enumerate(cfg.mu)), threads))

    mix2 = cfg.mixture(2.0)
    budget2 = _budgets(svm_cfg, mix2)[0]
    perp = np.zeros(cfg.d)
    perp[1 % cfg.d] = 1.0

    def angle_point(args):
        idx, cos_t = args
        theta = math.acos(cos_t)
        w = cos_t * mix2.mu0 + math.sin(theta) * perp
        clf = LinearClassifier(w, -float(w @ mix2.mu_bar))
        emp = simulate.empirical_rates(clf, mix2, budget2, cfg.n_samples,
                                       _stream_seed(cfg.seed, 4, idx))
        return _figure3_row("angle", mix2, 2.0, theta, budget2, _mc_columns(emp))

    cos_grid = [round(0.5 + 0.025 * i, 10) for i in range(21)]
    rows.extend(parallel_map(angle_point, list(enumerate(cos_grid)), threads))
    return rows


def _mc_columns(emp) -> dict:
    out = {}
    for name in FIGURE2_RATES:
        out[f"empirical_{name}"] = getattr(emp, name)
        out[f"empirical_{name}_se"] = emp.std_err[name]
    return out


def _figure3_row(panel, mix, mu, theta, budget, empirical: dict) -> dict:
    exact = rates.small_bias_rates(mix, theta, budget.epsilon, budget.delta)
    lin = rates.small_bias_rates(mix, theta, budget.epsilon, budget.delta, linearized=True)
    row = {"panel": panel, "mu": mu, "theta": theta, "cos_theta": math.cos(theta),
           "epsilon": budget.epsilon, "delta": budget.delta}
    for name in FIGURE2_RATES:
        row[f"formula_{name}"] = getattr(exact, name)
        row[f"linearized_{name}"] = getattr(lin, name)
        row[f"empirical_{name}"] = empirical.get(f"empirical_{name}")
        row[f"empirical_{name}_se"] = empirical.get(f"empirical_{name}_se")
    return row


FIGURE3_COLUMNS = (["panel", "mu", "theta", "cos_theta", "epsilon", "delta"]
                   + [f"{kind}_{n}" for n in FIGURE2_RATES
                      for kind in ("formula", "linearized", "empirical")]
                   + [f"empirical_{n}_se" for n in FIGURE2_RATES])


FIGURE4_MODELS = ("svm", "sparse", "bayes")


def figure4_replicate(cfg: ExperimentConfig, layout: str, mu_index: int, rep: int) -> dict:
    mu = cfg.mu[mu_index]
    mix = cfg.mixture(mu, layout)
    budget = PerturbationBudget.from_eta(mix, cfg.eta_a[0], cfg.eta_s[0], cfg.p)
    data = simulate.sample(mix, cfg.n_train + cfg.n_test, cfg.seed,
                           (0 if layout == "axis" else 1, mu_index, rep))
    train, test = data.split(cfg.n_train)
    svm, converged = _train(cfg, train, _stream_seed(cfg.seed, mu_index, rep, 2))
    models = {"svm": svm, "sparse": learn.sparsify(svm, cfg.k), "bayes": learn.bayes_classifier(mix)}
    row = {"converged": converged}
    for name, clf in models.items():
        closed = rates.rate_report(clf, mix, budget)
        emp = simulate.rates_on(test, clf, mix, budget)
        row[f"formula_{name}_p_s_err"] = closed.p_s_err
        row[f"empirical_{name}_p_s_err"] = emp.p_s_err
        row[f"formula_{name}_p_m"] = closed.p_m
        row[f"theta_{name}"] = geometry.decompose(clf, mix).theta
    return row


def run_figure4(cfg: ExperimentConfig, threads=None) -> list:
    layouts = [cfg.mean_layout] if cfg.mean_layout else ["axis", "uniform"]
    jobs = [(lay, i, r) for lay in layouts for i in range(len(cfg.mu))
            for r in range(cfg.replicates)]
    results = parallel_map(lambda job: figure4_replicate(cfg, *job), jobs, threads)
    grouped = {}
    for (lay, i, _), res in zip(jobs, results):
        grouped.setdefault((layouts.index(lay), i), []).append(res)
    rows = []
    for (li, i), group in sorted(grouped.items()):
        n = len(group)
        row = {"mean_layout": layouts[li], "mu": cfg.mu[i], "eta_a": cfg.eta_a[0],
               "eta_s": cfg.eta_s[0], "k": cfg.k, "replicates": n,
               "unconverged": sum(0 if g["converged"] else 1 for g in group)}
        for key in group[0]:
            if key == "converged":
                continue
            vals = np.array([g[key] for g in group], dtype=float)
            row[key] = float(vals.mean())
            if key.startswith("empirical"):
                row[f"{key}_se"] = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else None
        rows.append(row)
    return rows


FIGURE4_COLUMNS = (["mean_layout", "mu", "eta_a", "eta_s", "k", "replicates", "unconverged"]
                   + [c for m in FIGURE4_MODELS for c in (
                       f"formula_{m}_p_s_err", f"empirical_{m}_p_s_err",
                       f"empirical_{m}_p_s_err_se", f"formula_{m}_p_m", f"theta_{m}")])


def run_lp_noise(cfg: ExperimentConfig, threads=None) -> list:
    """Mean l_p noise against ``m_p d sigma^p`` (finite p) or ``sigma sqrt(log d)`` (p = inf)."""
    jobs = [(p, d) for p in cfg.lp_orders for d in cfg.dims]

    def one(job):
        p, d = job
        idx = jobs.index(job)
        n = cfg.n_samples
        if math.isinf(p):
            # cap the draw count so ~1e8 normals suffice at large d
            n = max(1, min(n, 100_000_000 // d))
            value = simulate.empirical_lp_noise(p, d, cfg.sigma, n, _stream_seed(cfg.seed, 5, idx))
            expected = cfg.sigma * math.sqrt(math.log(d))
        else:
            value = simulate.empirical_lp_noise(p, d, cfg.sigma, n, _stream_seed(cfg.seed, 5, idx))
            expected = abs_moment(p) * d * cfg.sigma ** p
        return {"p": encode_p(p), "d": d, "sigma": cfg.sigma, "n": n,
                "empirical": value, "reference": expected, "ratio": value / expected}

    return parallel_map(one, jobs, threads)


LP_NOISE_COLUMNS = ["p", "d", "sigma", "n", "empirical", "reference", "ratio"]


def run_image(cfg: ExperimentConfig, out_dir: Path) -> list:
    """Clean, randomly perturbed, adversarial and strong-adversarial renderings of
    one '+' test point, all perturbations of l2 size epsilon."""
    mu = cfg.mu[0]
    m = np.zeros(cfg.d)
    m[center_index()] = mu
    mix = GaussianMixtureSpec(m, -m, cfg.sigma)
    budget = PerturbationBudget.from_eta(mix, cfg.eta_a[0], cfg.eta_s[0], 2.0)
    data = simulate.sample(mix, cfg.n_train + cfg.n_test, cfg.seed, (0,))
    train, test = data.split(cfg.n_train)
    clf, _ = _train(cfg, train, _stream_seed(cfg.seed, 6))
    status = geometry.point_statuses(test.points, test.labels, clf, mix, budget)
    picks = np.flatnonzero((test.labels > 0) & (status == geometry.PointStatus.STRONG_ADVERSARIAL))
    if picks.size == 0:
        raise geometry.SolverError("no strong-adversarial '+' test point to render", count=0.0)
    x = test.points[picks[0]]
    rng = simulate.make_rng(cfg.seed, (7,))
    noise = rng.standard_normal(cfg.d)
    noise *= budget.epsilon / np.linalg.norm(noise)
    adv = -geometry.lp_perturbation(clf, budget).direction
    strong = -geometry.strong_perturbation_l2(clf, mix, budget).direction
    panels = [("a_clean", np.zeros(cfg.d)), ("b_random", noise),
              ("c_adversarial", adv), ("d_strong_adversarial", strong)]
    rows = []
    for name, v in panels:
        path = render_image(x + v, out_dir / f"figure1_{name}.pgm")
        rows.append({"panel": name, "file": path.name, "perturbation_l2": float(np.linalg.norm(v)),
                     "signal_component": float(v @ mix.mu0),
                     "decision_value": float(clf.decision_function(x + v)),
                     "predicted": int(clf.predict(x + v))})
    return rows


IMAGE_COLUMNS = ["panel", "file", "perturbation_l2", "signal_component", "decision_value", "predicted"]


def run(cfg: ExperimentConfig, out_dir=None, threads=None) -> list:
    """Run one scenario and return the paths of the files written."""
    out = Path(out_dir or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"{cfg.scenario}.csv"
    if cfg.scenario == "rates":
        paths = [write_csv(target, RATES_COLUMNS, run_rates(cfg, threads))]
    elif cfg.scenario == "sweep":
        paths = [write_csv(target, _sweep_columns(RATE_NAMES), run_sweep(cfg, RATE_NAMES, threads))]
    elif cfg.scenario == "figure2":
        svm_cfg = replace(cfg, classifier="svm") if cfg.classifier == "bayes" else cfg
        rows = run_sweep(svm_cfg, FIGURE2_RATES, threads)
        paths = [write_csv(target, _sweep_columns(FIGURE2_RATES), rows)]
    elif cfg.scenario == "figure3":
        paths = [write_csv(target, FIGURE3_COLUMNS, run_figure3(cfg, threads))]
    elif cfg.scenario == "figure4":
        paths = [write_csv(target, FIGURE4_COLUMNS, run_figure4(cfg, threads))]
    elif cfg.scenario == "lp_noise":
        paths = [write_csv(target, LP_NOISE_COLUMNS, run_lp_noise(cfg, threads))]
    else:
        rows = run_image(cfg, out)
        paths = [write_csv(target, IMAGE_COLUMNS, rows)] + [out / r["file"] for r in rows]
    return paths
