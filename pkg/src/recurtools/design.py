"""Sample-size calculators for time-to-first-event and recurrent-event designs.

Three planning tools: the classic required-event count for a log-rank/Cox
comparison, a per-group sample size for a negative-binomial rate comparison,
and a total sample size for a robust rate-based (LWYY-type) analysis whose
variance depends on the baseline mean function and the censoring pattern.

All calculators take ``alpha`` as the two-sided level and ``power`` as the
target probability of rejection under the alternative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .errors import HROneError

_QUAD_TOL = 1e-9


@dataclass(frozen=True)
class RateModel:
    """Baseline event-rate function r0(t) with its cumulative mean R0(t).

    ``kind`` is one of ``constant`` (argument: rate), ``weibull`` (arguments:
    eta, nu — rate eta*nu*t^(nu-1)), or ``piecewise`` (arguments: breaks,
    rates — constant rate per interval, last rate extending beyond the last
    break).
    """

    kind: str = "constant"
    rate: float = 1.0
    eta: float = 1.0
    nu: float = 1.0
    breaks: tuple = ()
    rates: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "weibull", "piecewise"):
            raise ValueError(f"unknown rate model {self.kind!r}")
        if self.kind == "constant" and self.rate <= 0:
            raise ValueError("rate must be positive")
        if self.kind == "weibull" and (self.eta <= 0 or self.nu <= 0):
            raise ValueError("eta and nu must be positive")
        if self.kind == "piecewise":
            if len(self.rates) != len(self.breaks) + 1:
                raise ValueError("piecewise needs one more rate than breaks")
            if any(r < 0 for r in self.rates) or any(b <= 0 for b in self.breaks):
                raise ValueError("piecewise rates must be >= 0 and breaks > 0")
            if list(self.breaks) != sorted(self.breaks):
                raise ValueError("breaks must increase")

    def cumulative(self, t: float) -> float:
        """R0(t), the expected events by time t at rate 1x."""
        if t <= 0:
            return 0.0
        if self.kind == "constant":
            return self.rate * t
        if self.kind == "weibull":
            return self.eta * t**self.nu
        total = 0.0
        prev = 0.0
        for b, r in zip(self.breaks, self.rates):
            if t <= b:
                return total + r * (t - prev)
            total += r * (b - prev)
            prev = b
        return total + self.rates[-1] * (t - prev)

    def inverse_cumulative(self, u: float) -> float:
        """Smallest t with R0(t) = u (flat stretches resolve to their start)."""
        if u <= 0:
            return 0.0
        if self.kind == "constant":
            return u / self.rate
        if self.kind == "weibull":
            return (u / self.eta) ** (1.0 / self.nu)
        total = 0.0
        prev = 0.0
        for b, r in zip(self.breaks, self.rates):
            seg = r * (b - prev)
            if u <= total + seg and r > 0:
                return prev + (u - total) / r
            total += seg
            prev = b
        if self.rates[-1] == 0:
            return prev
        return prev + (u - total) / self.rates[-1]

    def cumulative_knots(self, tau: float) -> list[float]:
        """Interior R0 values where the rate may jump (quadrature split points)."""
        if self.kind != "piecewise":
            return []
        return [self.cumulative(b) for b in self.breaks if 0 < b < tau]


@dataclass(frozen=True)
class CensoringModel:
    """Probability of still being under observation at day t, within [0, tau].

    ``kind='none'`` keeps everyone to tau; ``kind='exponential'`` censors with
    constant rate per day.
    """

    kind: str = "none"
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "exponential"):
            raise ValueError(f"unknown censoring model {self.kind!r}")
        if self.kind == "exponential" and self.rate <= 0:
            raise ValueError("rate must be positive")

    def survivor(self, t: float) -> float:
        if self.kind == "none":
            return 1.0
        return math.exp(-self.rate * t)

    def expected_followup(self, tau: float) -> float:
        """E[min(C, tau)] under the censoring distribution."""
        if self.kind == "none":
            return tau
        return (1.0 - math.exp(-self.rate * tau)) / self.rate


@dataclass(frozen=True)
class DesignInputs:
    """Bundle of planning assumptions shared by the calculators."""

    alpha: float = 0.05
    power: float = 0.80
    hr: float = 0.7
    phi: float = 0.0
    p1: float = 0.5
    p0: float = 0.5
    rate_model: RateModel = field(default_factory=RateModel)
    censoring: CensoringModel = field(default_factory=CensoringModel)
    tau: float = 365.0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 < self.power < 1:
            raise ValueError("power must lie in (0, 1)")
        if self.hr <= 0:
            raise ValueError("hr must be positive")
        if abs(self.p1 + self.p0 - 1.0) > 1e-12 or self.p1 <= 0 or self.p0 <= 0:
            raise ValueError("allocation fractions must be positive and sum to 1")
        if self.phi < 0:
            raise ValueError("phi must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be positive")


@dataclass(frozen=True)
class SampleSizeResult:
    """Raw formula value plus the integer actually used for planning."""

    raw: float
    n: int

    def __str__(self) -> str:
        return f"{self.raw:.2f} (planned: {self.n})"


def _z(p: float) -> float:
    return float(stats.norm.ppf(p))


def schoenfeld_events(alpha: float, power: float, hr: float) -> SampleSizeResult:
    """Required number of first events for a two-arm log-rank/Cox comparison.

    ``4*(z_{1-alpha/2} + z_{power})^2 / log(hr)^2`` under 1:1 allocation.  The
    planned integer truncates the raw value downward.
    """
    if hr == 1.0:
        raise HROneError("hazard ratio must differ from 1")
    raw = 4.0 * (_z(1 - alpha / 2) + _z(power)) ** 2 / math.log(hr) ** 2
    return SampleSizeResult(raw, math.floor(raw))


def _adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float) -> float:
    """Recursive adaptive Simpson quadrature with Richardson correction."""

    def _simpson(x0, f0, x2, f2, f1):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def _rec(x0, f0, x2, f2, x1, f1, whole, tol, depth):
        xl = 0.5 * (x0 + x1)
        xr = 0.5 * (x1 + x2)
        fl, fr = f(xl), f(xr)
        left = _simpson(x0, f0, x1, f1, fl)
        right = _simpson(x1, f1, x2, f2, fr)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return (_rec(x0, f0, x1, f1, xl, fl, left, tol / 2.0, depth - 1)
                + _rec(x1, f1, x2, f2, xr, fr, right, tol / 2.0, depth - 1))

    if b <= a:
        return 0.0
    m = 0.5 * (a + b)
    fa, fb, fm = f(a), f(b), f(m)
    return _rec(a, fa, b, fb, m, fm, _simpson(a, fa, b, fb, fm), tol, 48)


def _exposure_integrals(rate_model: RateModel, censoring: CensoringModel,
                        tau: float) -> tuple[float, float]:
    """E = ∫ pi dR0 and F = ∫ pi R0 dR0 over [0, tau].

    Both integrals are taken in the u = R0(t) scale, which absorbs any
    integrable singularity of the rate at zero and skips zero-rate stretches.
    """
    top = rate_model.cumulative(tau)
    if top == 0.0:
        return 0.0, 0.0
    knots = [0.0] + rate_model.cumulative_knots(tau) + [top]
    e = f = 0.0
    for lo, hi in zip(knots, knots[1:]):
        e += _adaptive_simpson(lambda u: censoring.survivor(rate_model.inverse_cumulative(u)),
                               lo, hi, _QUAD_TOL)
        f += _adaptive_simpson(lambda u: censoring.survivor(rate_model.inverse_cumulative(u)) * u,
                               lo, hi, _QUAD_TOL)
    return e, f


def nb_sample_size(alpha: float, power: float, beta1_h0: float, beta1_h1: float,
                   beta0: float, phi: float,
                   censoring: CensoringModel = CensoringModel(),
                   tau: float = 365.0) -> SampleSizeResult:
    """Per-group sample size for a two-arm negative-binomial rate comparison.

    The variance of the normalized rate-ratio estimate under a hypothesized
    log rate ratio b is ``sum over arms of (1 + phi*mu_z)/mu_z`` with
    ``mu_z = exp(beta0 + b*z) * E[C]``; the returned n solves the usual
    two-variance normal approximation at the null and alternative values.
    """
    if beta1_h0 == beta1_h1:
        raise ValueError("null and alternative log rate ratios must differ")
    e_c = censoring.expected_followup(tau)

    def variance(b1: float) -> float:
        mu0 = math.exp(beta0) * e_c
        mu1 = math.exp(beta0 + b1) * e_c
        return (1.0 + phi * mu0) / mu0 + (1.0 + phi * mu1) / mu1

    num = (math.sqrt(variance(beta1_h0)) * _z(1 - alpha / 2)
           + math.sqrt(variance(beta1_h1)) * _z(power)) ** 2
    raw = num / (beta1_h0 - beta1_h1) ** 2
    return SampleSizeResult(raw, math.ceil(raw))


def lwyy_sample_size(alpha: float, power: float, beta1: float, phi: float,
                     p1: float = 0.5, p0: float = 0.5,
                     rate_model: RateModel = RateModel(),
                     censoring: CensoringModel = CensoringModel(),
                     tau: float = 365.0) -> SampleSizeResult:
    """Total sample size for a robust rate-based comparison.

    ``n = (z_{1-alpha/2} + z_{power})^2 * V / beta1^2`` where V combines the
    inverse expected event counts with an overdispersion term driven by the
    baseline mean function:

        V = (1/(p1*exp(beta1)) + 1/p0) / E0  +  phi*(1/p1 + 1/p0) * 2*F0/E0^2

    with E0 = ∫ pi dR0 and F0 = ∫ pi R0 dR0 over the study window.
    """
    if beta1 == 0.0:
        raise HROneError("planning effect must differ from 1")
    if abs(p1 + p0 - 1.0) > 1e-12 or p1 <= 0 or p0 <= 0:
        raise ValueError("allocation fractions must be positive and sum to 1")
    e0, f0 = _exposure_integrals(rate_model, censoring, tau)
    if e0 <= 0:
        raise ValueError("baseline mean function yields no expected events")
    v = (1.0 / (p1 * math.exp(beta1)) + 1.0 / p0) / e0
    v += phi * (1.0 / p1 + 1.0 / p0) * 2.0 * f0 / e0**2
    raw = (_z(1 - alpha / 2) + _z(power)) ** 2 * v / beta1**2
    return SampleSizeResult(raw, math.ceil(raw))
