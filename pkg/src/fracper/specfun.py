"""Gamma function and the sharp fractional Hardy constants.

The Hardy inequality bounds the weighted mass ``int u^2/|x|^{2 sigma}``
by the fractional Sobolev seminorm of order sigma.  Its sharp constant
pair (H, c) is an explicit Gamma-function expression; for sigma close
to 1/2 the quotient H/c degenerates quadratically, which is the
mechanism driving the small-order instability detected by the
stability module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "gamma",
    "hardy_H",
    "hardy_c",
    "hardy_ratio",
    "hardy_constants",
    "HardyConstants",
]

# Lanczos coefficients, g = 7, 9 terms.  Relative accuracy of the
# resulting gamma is ~1e-15 on the positive axis once arguments below
# 1.5 are lifted with the recurrence; no reflection branch is provided.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

_SQRT_TWO_PI = math.sqrt(2.0 * math.pi)

# Gamma(172) exceeds the double range; the contract cuts off earlier.
_OVERFLOW_ARG = 170.0


def gamma(x: float) -> float:
    """Gamma function on the positive real axis.

    Arguments below 1.5 are lifted through Gamma(x) = Gamma(x+2)/(x(x+1))
    so the Lanczos series is only ever evaluated in its sweet spot.

    Raises
    ------
    ValueError
        If ``x <= 0``.
    OverflowError
        If ``x > 170`` (result would exceed double range soon after).
    """
    x = float(x)
    if x <= 0.0:
        raise ValueError(f"gamma: argument must be positive, got {x}")
    if x > _OVERFLOW_ARG:
        raise OverflowError(f"gamma: argument {x} beyond overflow cutoff {_OVERFLOW_ARG}")
    if x < 1.5:
        return _lanczos(x + 2.0) / (x * (x + 1.0))
    return _lanczos(x)


def _lanczos(x: float) -> float:
    z = x - 1.0
    acc = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _SQRT_TWO_PI * t ** (z + 0.5) * math.exp(-t) * acc


@dataclass(frozen=True)
class HardyConstants:
    """Sharp constant pair of the fractional Hardy inequality.

    ``H * int u^2/|x|^{2 sigma} <= c * [u]^2_{H^sigma}`` on R^n, with
    H vanishing exactly at sigma = n/2.
    """

    n: int
    sigma: float
    H: float
    c: float


def _check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not 0.0 < sigma < 1.0:
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")
    return sigma


def hardy_H(n: int, sigma: float) -> float:
    """Sharp Hardy numerator 2^(2s-1) (s-n/2)^2 G(n/4+s/2)^2 / G(n/4-s/2+1)^2."""
    sigma = _check_sigma(sigma)
    if n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    g_top = gamma(n / 4.0 + sigma / 2.0)
    g_bot = gamma(n / 4.0 - sigma / 2.0 + 1.0)
    return 2.0 ** (2.0 * sigma - 1.0) * (sigma - n / 2.0) ** 2 * (g_top / g_bot) ** 2


def hardy_c(n: int, sigma: float) -> float:
    """Sharp Hardy denominator 2^(2s-1) pi^(-n/2) G(n/2+s)/G(2-s) * s(1-s)."""
    sigma = _check_sigma(sigma)
    if n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    return (
        2.0 ** (2.0 * sigma - 1.0)
        * math.pi ** (-n / 2.0)
        * gamma(n / 2.0 + sigma)
        / gamma(2.0 - sigma)
        * sigma
        * (1.0 - sigma)
    )


def hardy_ratio(s: float) -> float:
    """Quotient H/c at n = 1, sigma = (1+s)/2; behaves like s^2 pi^2/2 as s -> 0."""
    s = float(s)
    if not 0.0 < s < 0.5:
        raise ValueError(f"s must lie in (0, 1/2), got {s}")
    sigma = (1.0 + s) / 2.0
    return hardy_H(1, sigma) / hardy_c(1, sigma)


def hardy_constants(n: int, sigma: float) -> HardyConstants:
    """Bundle (n, sigma, H, c) into a record."""
    return HardyConstants(n=n, sigma=float(sigma), H=hardy_H(n, sigma), c=hardy_c(n, sigma))
