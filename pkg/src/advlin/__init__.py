"""Adversarial and strong-adversarial rates of linear classifiers on a
balanced Gaussian mixture, with Monte Carlo verification."""
from .geometry import (
    PointStatus,
    SolverError,
    decompose,
    lp_perturbation,
    lp_strong_perturbation,
    point_status,
    strong_perturbation,
    strong_perturbation_l2,
)
from .learn import SvmConfig, bayes_classifier, fit_svm, sparsify, train_svm
from .model import (
    GaussianMixtureSpec,
    LinearClassifier,
    Perturbation,
    PerturbationBudget,
    RateReport,
    snr,
)
from .rates import (
    AsymptoticAngleParams,
    RootFindingError,
    asymptotic_svm_angle,
    bayes_rates,
    rate_report,
    small_bias_rates,
)
from .simulate import empirical_rates, sample

__version__ = "0.1.0"

__all__ = [
    "AsymptoticAngleParams", "GaussianMixtureSpec", "LinearClassifier", "Perturbation",
    "PerturbationBudget", "PointStatus", "RateReport", "RootFindingError", "SolverError",
    "SvmConfig", "asymptotic_svm_angle", "bayes_classifier", "bayes_rates", "decompose",
    "empirical_rates", "fit_svm", "lp_perturbation", "lp_strong_perturbation", "point_status",
    "rate_report", "sample", "small_bias_rates", "snr", "sparsify", "strong_perturbation",
    "strong_perturbation_l2", "train_svm",
]
