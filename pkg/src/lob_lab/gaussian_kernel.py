"""Standard-normal primitives and the closed-form limit-order objective.

Everything here is a pure function of its arguments. Prices are measured
relative to the current fundamental price, and the one-period fundamental
increment is Gaussian with mean ``m`` and standard deviation ``s``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import erfc, erfcx

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
MILLS_AT_ZERO = math.sqrt(math.pi / 2.0)  # (1 - F(0)) / f(0)


@dataclass(frozen=True)
class GaussianIncrement:
    """Distribution N(mean, std**2) of the fundamental-price move over one step."""

    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError(f"std must be positive, got {self.std}")

    def scaled(self, factor: float) -> "GaussianIncrement":
        return GaussianIncrement(self.mean * factor, self.std * factor)

    def mirrored(self) -> "GaussianIncrement":
        return GaussianIncrement(-self.mean, self.std)


@dataclass(frozen=True)
class Interior:
    price: float
    value: float


@dataclass(frozen=True)
class NoFiniteMaximizer:
    """The objective is negative everywhere and only tends to ``supremum`` as p -> inf."""

    supremum: float = 0.0


MaximizerResult = Union[Interior, NoFiniteMaximizer]


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return out[()] if out.ndim == 0 else out


def std_normal_cdf(x):
    # erfc route keeps 1 - F(x) relatively accurate in the far right tail
    x = np.asarray(x, dtype=float)
    out = 0.5 * erfc(-x / SQRT2)
    return out[()] if out.ndim == 0 else out


def std_normal_sf(x):
    """Upper tail 1 - F(x), without cancellation."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * erfc(x / SQRT2)
    return out[()] if out.ndim == 0 else out


def mills_ratio(p):
    """(1 - F(p)) / f(p) for the standard normal.

    Evaluated through the scaled complementary error function, which stays
    finite and relatively accurate where both numerator and denominator
    underflow. Overflows to ``inf`` below p ~ -37.5.
    """
    p = np.asarray(p, dtype=float)
    out = MILLS_AT_ZERO * erfcx(p / SQRT2)
    return out[()] if out.ndim == 0 else out


def _mills_derivative(p: float, r: float) -> float:
    # d/dp (1-F)/f = p * (1-F)/f - 1, strictly negative
    return p * r - 1.0


def mills_inverse(y: float, tol: float = 1e-14, max_iter: int = 200) -> float:
    """Return the unique p with ``mills_ratio(p) == y``.

    Safeguarded Newton on a bracket: for y below Mills(0) the root lies in
    (0, 1/y] because Mills(p) < 1/p there; above it, the lower end is found
    by doubling. Newton steps that leave the bracket fall back to bisection.
    """
    y = float(y)
    if not y > 0 or math.isnan(y):
        raise ValueError(f"mills_inverse is defined for y > 0, got {y}")
    if y == MILLS_AT_ZERO:
        return 0.0
    if math.isinf(y):
        return -math.inf
    if y < MILLS_AT_ZERO:
        lo, hi = 0.0, 1.0 / y
        if math.isinf(hi):
            return hi
    else:
        lo, hi = -1.0, 0.0
        while float(mills_ratio(lo)) < y:
            hi = lo
            lo *= 2.0

    # initial guess from the asymptotics
    p = 1.0 / y - y if y < 0.1 else 0.5 * (lo + hi)
    if not lo < p < hi:
        p = 0.5 * (lo + hi)
    for _ in range(max_iter):
        r = float(mills_ratio(p))
        g = r - y
        if g == 0.0:
            return p
        # g is decreasing in p
        if g > 0:
            lo = p
        else:
            hi = p
        step = g / _mills_derivative(p, r)
        p_new = p - step
        if not lo < p_new < hi:
            p_new = 0.5 * (lo + hi)
        if abs(p_new - p) <= tol * max(1.0, abs(p_new)) or hi - lo <= tol * max(1.0, abs(p_new)):
            return p_new
        p = p_new
    raise RuntimeError(f"mills_inverse({y}) did not converge; bracket [{lo}, {hi}]")


def sell_objective(p: float, x: float, inc: GaussianIncrement) -> float:
    """E[(p - x - xi) 1{xi > p}] for xi ~ N(inc.mean, inc.std**2).

    Expected relative profit of a limit sell posted at ``p`` when the
    continuation value after execution is ``x``.
    """
    m, s = inc.mean, inc.std
    d = (p - m) / s
    if d > 0:
        # factor out f(d) so large-d values keep relative accuracy
        return float(std_normal_pdf(d) * ((p - x - m) * mills_ratio(d) - s))
    return float((p - x - m) * std_normal_sf(d) - s * std_normal_pdf(d))


def buy_objective(p: float, x: float, inc: GaussianIncrement) -> float:
    """E[(x - p + xi) 1{xi < p}], the mirror image of :func:`sell_objective`."""
    return sell_objective(-p, -x, inc.mirrored())


def sell_objective_maximizer(x: float, inc: GaussianIncrement) -> MaximizerResult:
    """Maximize ``sell_objective(., x, inc)`` over the posting price.

    The derivative in p is (1 - F(d)) + x f(d)/s, so an interior maximum
    exists iff x < 0 and sits where Mills(d) = -x/s. For x >= 0 the
    integrand is negative on the execution event and the supremum 0 is only
    reached as p -> inf.
    """
    if x >= 0:
        return NoFiniteMaximizer(0.0)
    m, s = inc.mean, inc.std
    price = m + s * mills_inverse(-x / s)
    return Interior(price, sell_objective(price, x, inc))


def buy_objective_maximizer(x: float, inc: GaussianIncrement) -> MaximizerResult:
    res = sell_objective_maximizer(-x, inc.mirrored())
    if isinstance(res, NoFiniteMaximizer):
        return res
    return Interior(-res.price, res.value)
