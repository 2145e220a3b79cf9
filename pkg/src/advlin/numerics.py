"""Scalar special functions used by the rate formulas.

Everything here is a pure function of finite real input. Non-finite input is
rejected with ``ValueError`` instead of being propagated as ``nan``.
"""
from __future__ import annotations

import math

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT_PI = math.sqrt(math.pi)


def _check_finite(x: float, name: str = "x") -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"{name} must be finite, got {x!r}")
    return x


def std_normal_cdf(x: float) -> float:
    """Standard normal CDF.

    Uses ``erfc`` on the side where the result is small so that both tails
    keep full relative precision.
    """
    x = _check_finite(x)
    if x < 0.0:
        return 0.5 * math.erfc(-x / math.sqrt(2.0))
    return 1.0 - 0.5 * math.erfc(x / math.sqrt(2.0))


def std_normal_sf(x: float) -> float:
    """Upper tail ``1 - Phi(x)``, accurate for large positive ``x``."""
    x = _check_finite(x)
    return std_normal_cdf(-x)


def std_normal_pdf(x: float) -> float:
    x = _check_finite(x)
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def abs_moment(p: float) -> float:
    """E|Z|^p for a standard normal Z, p >= 1.

    Closed form ``2^(p/2) Gamma((p+1)/2) / sqrt(pi)``.
    """
    p = _check_finite(p, "p")
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    return math.exp(0.5 * p * math.log(2.0) + math.lgamma(0.5 * (p + 1.0))) / _SQRT_PI


def trunc_moment1(t: float) -> float:
    """Integral of (t - z) phi(z) over (-inf, t], i.e. t Phi(t) + phi(t)."""
    t = _check_finite(t, "t")
    if t < -8.0:
        # Mills-ratio series; the closed form cancels catastrophically here.
        return _lower_tail_series(t, 1)
    return max(t * std_normal_cdf(t) + std_normal_pdf(t), 0.0)


def trunc_moment2(t: float) -> float:
    """Integral of (t - z)^2 phi(z) over (-inf, t], i.e. (1+t^2) Phi(t) + t phi(t)."""
    t = _check_finite(t, "t")
    if t < -8.0:
        return _lower_tail_series(t, 2)
    return max((1.0 + t * t) * std_normal_cdf(t) + t * std_normal_pdf(t), 0.0)


def _lower_tail_series(t: float, order: int) -> float:
    # For s = -t large: int_0^inf u^k phi(s + u) du
    #   = phi(s) * int_0^inf u^k exp(-s u - u^2/2) du.
    # Expand exp(-u^2/2) and integrate term by term (asymptotic in 1/s).
    s = -t
    total = 0.0
    term_coef = 1.0
    for j in range(12):
        # coefficient (-1/2)^j / j! times int u^(k+2j) e^{-su} du = (k+2j)! / s^(k+2j+1)
        n = order + 2 * j
        term = term_coef * math.factorial(n) / s ** (n + 1)
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
        term_coef *= -0.5 / (j + 1)
    return std_normal_pdf(s) * total
