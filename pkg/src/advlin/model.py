"""Value types shared across the package.

The data model is the balanced two-class isotropic Gaussian mixture
``0.5 N(mu_plus, sigma^2 I) + 0.5 N(mu_minus, sigma^2 I)``. Class priors and
per-class variances are fixed by construction; there is no way to build an
unbalanced mixture.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

CLOSED_FORM = "closed_form"
MONTE_CARLO = "monte_carlo"
_PROVENANCES = (CLOSED_FORM, MONTE_CARLO)


def _frozen_vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


def parse_p(p) -> float:
    """Accept a norm order as a number or the strings ``"inf"``/``"infinity"``."""
    if isinstance(p, str):
        if p.strip().lower() in ("inf", "infinity", "+inf"):
            return math.inf
        p = float(p)
    p = float(p)
    if math.isnan(p) or p < 1.0:
        raise ValueError(f"norm order p must lie in [1, inf], got {p}")
    return p


def dual_exponent(p: float) -> float:
    """q with 1/p + 1/q = 1 (p = 1 gives inf, p = inf gives 1)."""
    p = parse_p(p)
    if p == 1.0:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def encode_p(p: float):
    return "inf" if math.isinf(p) else float(p)


def lp_norm(v: np.ndarray, p: float) -> float:
    v = np.asarray(v, dtype=np.float64)
    if math.isinf(p):
        return float(np.max(np.abs(v))) if v.size else 0.0
    if p == 2.0:
        return float(np.linalg.norm(v))
    if p == 1.0:
        return float(np.sum(np.abs(v)))
    scale = float(np.max(np.abs(v))) if v.size else 0.0
    if scale == 0.0:
        return 0.0
    return scale * float(np.sum((np.abs(v) / scale) ** p)) ** (1.0 / p)


@dataclass(frozen=True, eq=False)
class GaussianMixtureSpec:
    mu_plus: np.ndarray
    mu_minus: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        mu_plus = _frozen_vector(self.mu_plus, "mu_plus")
        mu_minus = _frozen_vector(self.mu_minus, "mu_minus")
        if mu_plus.shape != mu_minus.shape:
            raise ValueError("mu_plus and mu_minus must have the same length")
        if np.array_equal(mu_plus, mu_minus):
            raise ValueError("class means coincide; the mixture carries no signal")
        sigma = float(self.sigma)
        if not (sigma > 0.0 and math.isfinite(sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "mu_plus", mu_plus)
        object.__setattr__(self, "mu_minus", mu_minus)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def symmetric(cls, mu: float, d: int, sigma: float = 1.0, layout: str = "axis"):
        """Means ``+-m`` with ``||m|| = mu``.

        ``layout="axis"`` puts all signal on the first coordinate;
        ``layout="uniform"`` spreads it as ``(mu, ..., mu) / sqrt(d)``.
        """
        d = int(d)
        if d < 1:
            raise ValueError("d must be positive")
        if layout == "axis":
            m = np.zeros(d)
            m[0] = mu
        elif layout == "uniform":
            m = np.full(d, mu / math.sqrt(d))
        else:
            raise ValueError(f"unknown mean layout {layout!r}")
        return cls(m, -m, sigma)

    @property
    def d(self) -> int:
        return self.mu_plus.size

    @property
    def mu(self) -> np.ndarray:
        """Half the mean difference."""
        return 0.5 * (self.mu_plus - self.mu_minus)

    @property
    def mu_bar(self) -> np.ndarray:
        return 0.5 * (self.mu_plus + self.mu_minus)

    @property
    def mu_norm(self) -> float:
        return float(np.linalg.norm(self.mu))

    @property
    def mu0(self) -> np.ndarray:
        """Unit signal direction."""
        return self.mu / self.mu_norm

    def to_dict(self) -> dict:
        return {
            "mu_plus": self.mu_plus.tolist(),
            "mu_minus": self.mu_minus.tolist(),
            "sigma": self.sigma,
            "d": self.d,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianMixtureSpec":
        mix = cls(data["mu_plus"], data["mu_minus"], data.get("sigma", 1.0))
        if "d" in data and int(data["d"]) != mix.d:
            raise ValueError(f"d={data['d']} does not match vector length {mix.d}")
        return mix


def snr(mix: GaussianMixtureSpec) -> float:
    """Signal-to-noise ratio ``||mu|| / sigma``."""
    return mix.mu_norm / mix.sigma


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    """Decision rule ``C(x) = [w.x + b > 0]`` ('+' when true)."""

    w: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        w = _frozen_vector(self.w, "w")
        if not np.any(w != 0.0):
            raise ValueError("weight vector must be non-zero")
        b = float(self.b)
        if not math.isfinite(b):
            raise ValueError("bias must be finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return self.w.size

    def decision_function(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d:
            raise ValueError(f"expected vectors of length {self.d}, got {x.shape[-1]}")
        return x @ self.w + self.b

    def predict(self, x) -> np.ndarray:
        """Labels in {+1, -1}."""
        return np.where(self.decision_function(x) > 0.0, 1, -1)

    def to_dict(self) -> dict:
        return {"w": self.w.tolist(), "b": self.b}

    @classmethod
    def from_dict(cls, data: dict) -> "LinearClassifier":
        return cls(data["w"], data.get("b", 0.0))


def centered_bias(clf: LinearClassifier, mix: GaussianMixtureSpec) -> float:
    """``b' = w . mu_bar + b``, the bias measured from the mixture midpoint."""
    if clf.d != mix.d:
        raise ValueError(f"classifier has d={clf.d}, mixture has d={mix.d}")
    return float(clf.w @ mix.mu_bar) + clf.b


@dataclass(frozen=True)
class PerturbationBudget:
    """An l_p ball of radius ``epsilon``, optionally intersected with the slab
    ``|v . mu0| <= delta``. Without ``delta`` the classical definition applies."""

    p: float = 2.0
    epsilon: float = 0.0
    delta: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "p", parse_p(self.p))
        eps = float(self.epsilon)
        if not (eps >= 0.0 and math.isfinite(eps)):
            raise ValueError(f"epsilon must be a finite value >= 0, got {self.epsilon}")
        object.__setattr__(self, "epsilon", eps)
        if self.delta is not None:
            delta = float(self.delta)
            if not (delta >= 0.0 and math.isfinite(delta)):
                raise ValueError(f"delta must be a finite value >= 0, got {self.delta}")
            object.__setattr__(self, "delta", delta)

    @property
    def q(self) -> float:
        return dual_exponent(self.p)

    @property
    def strong(self) -> bool:
        return self.delta is not None

    @classmethod
    def from_eta(cls, mix: GaussianMixtureSpec, eta_a: float, eta_s: Optional[float] = None,
                 p: float = 2.0) -> "PerturbationBudget":
        """``epsilon = eta_a sqrt(d) sigma`` and ``delta = eta_s ||mu||``."""
        eps = eta_a * math.sqrt(mix.d) * mix.sigma
        delta = None if eta_s is None else eta_s * mix.mu_norm
        return cls(p=p, epsilon=eps, delta=delta)

    def to_dict(self) -> dict:
        return {"p": encode_p(self.p), "epsilon": self.epsilon, "delta": self.delta}

    @classmethod
    def from_dict(cls, data: dict) -> "PerturbationBudget":
        return cls(p=data.get("p", 2.0), epsilon=data["epsilon"], delta=data.get("delta"))


@dataclass(frozen=True, eq=False)
class Perturbation:
    direction: np.ndarray
    achieved_norm: float
    signal_component: float

    @classmethod
    def build(cls, direction, p: float, mu0: np.ndarray) -> "Perturbation":
        v = np.array(direction, dtype=np.float64)
        v.setflags(write=False)
        return cls(v, lp_norm(v, p), float(v @ mu0))

    def to_dict(self) -> dict:
        return {
            "direction": self.direction.tolist(),
            "achieved_norm": self.achieved_norm,
            "signal_component": self.signal_component,
        }


def _check_probability(name: str, value: float) -> float:
    value = float(value)
    if not (-1e-12 <= value <= 1.0 + 1e-12):
        raise ValueError(f"{name}={value} is not a probability")
    return min(max(value, 0.0), 1.0)


@dataclass(frozen=True)
class RateReport:
    """Misclassification, adversarial and strong-adversarial rates.

    ``std_err`` maps rate names to their standard errors for Monte Carlo
    reports and is ``None`` for closed-form ones.
    """

    p_m: float
    p_adv: float
    p_err: float
    p_s_adv: Optional[float] = None
    p_s_err: Optional[float] = None
    provenance: str = CLOSED_FORM
    n_samples: Optional[int] = None
    std_err: Optional[dict] = field(default=None)

    def __post_init__(self):
        if self.provenance not in _PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        for name in ("p_m", "p_adv", "p_err", "p_s_adv", "p_s_err"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _check_probability(name, value))
        tol = 1e-12
        if abs(self.p_err - (self.p_m + self.p_adv)) > tol:
            raise ValueError("p_err must equal p_m + p_adv")
        if self.p_s_adv is not None and self.p_s_err is not None:
            if abs(self.p_s_err - (self.p_m + self.p_s_adv)) > tol:
                raise ValueError("p_s_err must equal p_m + p_s_adv")

    @classmethod
    def from_parts(cls, p_m: float, p_adv: float, p_s_adv: Optional[float] = None,
                   **kwargs) -> "RateReport":
        """Build a report from the additive parts so the sum identities hold."""
        p_s_err = None if p_s_adv is None else p_m + p_s_adv
        return cls(p_m=p_m, p_adv=p_adv, p_err=p_m + p_adv, p_s_adv=p_s_adv,
                   p_s_err=p_s_err, **kwargs)

    def to_dict(self) -> dict:
        return {
            "p_m": self.p_m,
            "p_adv": self.p_adv,
            "p_err": self.p_err,
            "p_s_adv": self.p_s_adv,
            "p_s_err": self.p_s_err,
            "provenance": self.provenance,
            "n_samples": self.n_samples,
            "std_err": self.std_err,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RateReport":
        return cls(**{k: data.get(k) for k in (
            "p_m", "p_adv", "p_err", "p_s_adv", "p_s_err", "n_samples", "std_err")},
            provenance=data.get("provenance", CLOSED_FORM))


def dumps(obj: Any, **kwargs) -> str:
    """JSON-encode any of the value types above."""
    return json.dumps(obj.to_dict(), **kwargs)
