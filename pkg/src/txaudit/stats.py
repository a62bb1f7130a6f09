"""Binomial tests for differential prioritization and Fisher's combination.

A miner with block share theta0 should mine about theta0 of the y blocks
that contain cohort transactions.  Seeing x such blocks, the acceleration
p-value is P(B >= x) and the deceleration p-value is P(B <= x) for
B ~ Binomial(y, theta0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

DEFAULT_ALPHA = 0.01

_LN_2PI = math.log(2.0 * math.pi)
_RESYNC = 256


class DegenerateParameterError(ValueError):
    """theta0 must lie strictly between 0 and 1."""


@dataclass(frozen=True)
class TestResult:
    kind: str        # "acceleration" | "deceleration"
    method: str      # "exact" | "normal-approx"
    x: int
    y: int
    theta0: Fraction
    p_value: float
    alpha: float = DEFAULT_ALPHA
    approx_warning: bool = False

    __test__ = False  # not a pytest class

    @property
    def rejected(self) -> bool:
        return self.p_value < self.alpha


@dataclass(frozen=True)
class FisherResult:
    statistic: float
    df: int
    p_value: float
    exact_zero_input: bool = False


# -- binomial pmf (saddle-point form, accurate for large y) ------------------

def _stirlerr(n: int) -> float:
    """log(n!) - log(sqrt(2*pi*n) * (n/e)**n)."""
    if n <= 15:
        return math.lgamma(n + 1.0) - (n + 0.5) * math.log(n) + n - 0.5 * _LN_2PI
    nn = float(n) * n
    s0, s1, s2, s3, s4 = 1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188
    if n > 500:
        return (s0 - s1 / nn) / n
    if n > 80:
        return (s0 - (s1 - s2 / nn) / nn) / n
    if n > 35:
        return (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / n
    return (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / n


def _bd0(x: float, m: float) -> float:
    """Deviance term x*log(x/m) + m - x, evaluated without cancellation."""
    if abs(x - m) < 0.1 * (x + m):
        v = (x - m) / (x + m)
        s = (x - m) * v
        ej = 2 * x * v
        v *= v
        j = 1
        while True:
            ej *= v
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
            j += 1
    return x * math.log(x / m) + m - x


def binom_pmf(k: int, n: int, p: float, q: float) -> float:
    """P(B = k) for B ~ Binomial(n, p), with q = 1 - p passed separately."""
    if k < 0 or k > n:
        return 0.0
    if k == 0:
        if n == 0:
            return 1.0
        lc = -_bd0(n, n * q) - n * p if p < 0.1 else n * math.log(q)
        return math.exp(lc)
    if k == n:
        lc = -_bd0(n, n * p) - n * q if q < 0.1 else n * math.log(p)
        return math.exp(lc)
    lc = (_stirlerr(n) - _stirlerr(k) - _stirlerr(n - k)
          - _bd0(k, n * p) - _bd0(n - k, n * q))
    lf = _LN_2PI + math.log(k) + math.log1p(-k / n)
    return math.exp(lc - 0.5 * lf)


def _upper_tail(x: int, y: int, p: float, q: float) -> float:
    """P(B >= x), summing whichever tail is the smaller one."""
    if x <= 0:
        return 1.0
    if x > y:
        return 0.0
    if x <= y * p:
        return 1.0 - _lower_tail(x - 1, y, p, q)
    ratio = p / q
    term = binom_pmf(x, y, p, q)
    total = term
    k = x
    while k < y:
        k += 1
        if (k - x) % _RESYNC == 0:
            term = binom_pmf(k, y, p, q)
        else:
            term *= (y - k + 1) / k * ratio
        total += term
        if term <= total * 1e-18:
            break
    return total


def _lower_tail(x: int, y: int, p: float, q: float) -> float:
    """P(B <= x)."""
    if x < 0:
        return 0.0
    if x >= y:
        return 1.0
    if x >= y * p:
        return 1.0 - _upper_tail(x + 1, y, p, q)
    ratio = q / p
    term = binom_pmf(x, y, p, q)
    total = term
    k = x
    while k > 0:
        if (x - k + 1) % _RESYNC == 0:
            term = binom_pmf(k - 1, y, p, q)
        else:
            term *= k / (y - k + 1) * ratio
        k -= 1
        total += term
        if term <= total * 1e-18:
            break
    return total


def _check(x: int, y: int, theta0) -> Fraction:
    if not 0 <= x <= y:
        raise ValueError(f"need 0 <= x <= y, got x={x}, y={y}")
    theta0 = Fraction(theta0)
    if not 0 < theta0 < 1:
        raise DegenerateParameterError(f"theta0 must be in (0, 1), got {theta0}")
    return theta0


def _clip(p: float) -> float:
    return min(1.0, max(0.0, p))


def accel_test_exact(x: int, y: int, theta0, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Exact acceleration test, p = P(B >= x)."""
    t = _check(x, y, theta0)
    p = _upper_tail(x, y, float(t), float(1 - t))
    return TestResult("acceleration", "exact", x, y, t, _clip(p), alpha)


def decel_test_exact(x: int, y: int, theta0, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Exact deceleration test, p = P(B <= x)."""
    t = _check(x, y, theta0)
    p = _lower_tail(x, y, float(t), float(1 - t))
    return TestResult("deceleration", "exact", x, y, t, _clip(p), alpha)


def _normal_z(x: int, y: int, theta0: Fraction, shift: Fraction) -> tuple:
    mean = y * theta0
    var = mean * (1 - theta0)
    z = float(x + shift - mean) / math.sqrt(var)
    warn = mean < 10 or y * (1 - theta0) < 10
    return z, warn


def _phi(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def accel_test_normal(x: int, y: int, theta0, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Normal approximation to P(B >= x) with continuity correction."""
    t = _check(x, y, theta0)
    z, warn = _normal_z(x, y, t, Fraction(-1, 2))
    return TestResult("acceleration", "normal-approx", x, y, t, _clip(_phi(-z)), alpha, warn)


def decel_test_normal(x: int, y: int, theta0, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Normal approximation to P(B <= x) with continuity correction."""
    t = _check(x, y, theta0)
    z, warn = _normal_z(x, y, t, Fraction(1, 2))
    return TestResult("deceleration", "normal-approx", x, y, t, _clip(_phi(z)), alpha, warn)


TESTS = {
    ("accel", "exact"): accel_test_exact,
    ("decel", "exact"): decel_test_exact,
    ("accel", "normal"): accel_test_normal,
    ("decel", "normal"): decel_test_normal,
}


def fisher_combine(ps) -> FisherResult:
    """Combine independent p-values with Fisher's method.

    The chi-square survival function with 2k degrees of freedom has the
    closed form exp(-X/2) * sum_{j<k} (X/2)**j / j!.
    """
    ps = [float(p) for p in ps]
    if not ps:
        raise ValueError("need at least one p-value")
    for p in ps:
        if not 0.0 <= p <= 1.0 or math.isnan(p):
            raise ValueError(f"p-value out of [0, 1]: {p}")
    k = len(ps)
    if any(p == 0.0 for p in ps):
        return FisherResult(math.inf, 2 * k, 0.0, True)
    half = -math.fsum(math.log(p) for p in ps)
    if half == 0.0:
        return FisherResult(0.0, 2 * k, 1.0)
    log_half = math.log(half)
    terms = [math.exp(-half + j * log_half - math.lgamma(j + 1)) for j in range(k)]
    return FisherResult(2 * half, 2 * k, _clip(math.fsum(terms)))
