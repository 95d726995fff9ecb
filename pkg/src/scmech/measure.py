"""Type distributions on the order parameter, hazard rates, and revenue.

The probability measure over preferences is specified directly on the
order-parameter chart: the mass of a preference interval ``[r', r'']`` is
``cdf(r'') - cdf(r')``.  All built-in distributions are atomless with a
positive density on their support.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy import stats

from .domain import Bundle, PreferenceDomain, ZERO_BUNDLE
from .errors import DomainError, SpecParseError

REVENUE_MODES = ("payment", "expected_payment")


def revenue_of(bundle: Bundle, mode: str) -> float:
    """Seller revenue of a bundle: the payment, or the expected payment
    ``q*t`` when ``q`` is a win probability."""
    if mode == "payment":
        return bundle[0]
    if mode == "expected_payment":
        return bundle[0] * bundle[1]
    raise ValueError(f"revenue mode must be one of {REVENUE_MODES}, got {mode!r}")


@dataclass(frozen=True)
class TypeDistribution:
    """CDF/pdf pair on a closed support ``[lo, hi]``."""

    name: str
    params: dict
    lo: float
    hi: float
    _cdf: Callable = field(repr=False)
    _pdf: Callable = field(repr=False)
    _ppf: Optional[Callable] = field(repr=False, default=None)

    def cdf(self, theta):
        theta = np.clip(np.asarray(theta, dtype=float), self.lo, self.hi)
        out = self._cdf(theta)
        return float(out) if np.ndim(out) == 0 else out

    def pdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.where((theta >= self.lo) & (theta <= self.hi),
                       self._pdf(np.clip(theta, self.lo, self.hi)), 0.0)
        return float(out) if out.ndim == 0 else out

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if self._ppf is not None:
            out = self._ppf(u)
            return float(out) if np.ndim(out) == 0 else out
        return self._ppf_bisect(u)

    def _ppf_bisect(self, u):
        scalar = np.ndim(u) == 0
        u = np.atleast_1d(np.asarray(u, dtype=float))
        lo = np.full_like(u, self.lo)
        hi = np.full_like(u, self.hi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = 0.5 * (lo + hi)
        return float(out[0]) if scalar else out

    def mass(self, r_lo: float, r_hi: float) -> float:
        if r_hi <= r_lo:
            return 0.0
        return float(self.cdf(r_hi) - self.cdf(r_lo))

    def to_spec(self) -> dict:
        return {"name": self.name, "params": dict(self.params)}

    @classmethod
    def from_spec(cls, spec: dict) -> "TypeDistribution":
        if "table" in spec:
            return from_table(spec["table"])
        try:
            name, params = spec["name"], spec.get("params", {})
        except (KeyError, TypeError):
            raise SpecParseError("distribution spec needs 'name' or 'table'")
        try:
            if name == "uniform":
                return uniform(params["lo"], params["hi"])
            if name == "truncated_exponential":
                return truncated_exponential(params["rate"], params["lo"],
                                             params["hi"])
            if name == "beta":
                return beta(params["a"], params["b"])
            if name == "table":
                return from_table(params["points"])
        except KeyError as exc:
            raise SpecParseError(f"distribution {name!r} is missing {exc}")
        raise SpecParseError(f"unknown distribution {name!r}")


def uniform(lo: float, hi: float) -> TypeDistribution:
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise DomainError(f"uniform needs lo < hi, got [{lo}, {hi}]")
    width = hi - lo
    return TypeDistribution(
        "uniform", {"lo": lo, "hi": hi}, lo, hi,
        lambda x: (x - lo) / width,
        lambda x: np.full_like(np.asarray(x, dtype=float), 1.0 / width),
        lambda u: lo + np.asarray(u, dtype=float) * width,
    )


def truncated_exponential(rate: float, lo: float, hi: float) -> TypeDistribution:
    rate, lo, hi = float(rate), float(lo), float(hi)
    if rate <= 0 or not lo < hi:
        raise DomainError("truncated exponential needs rate > 0 and lo < hi")
    z = 1.0 - math.exp(-rate * (hi - lo))
    return TypeDistribution(
        "truncated_exponential", {"rate": rate, "lo": lo, "hi": hi}, lo, hi,
        lambda x: (1.0 - np.exp(-rate * (np.asarray(x, float) - lo))) / z,
        lambda x: rate * np.exp(-rate * (np.asarray(x, float) - lo)) / z,
        lambda u: lo - np.log1p(-z * np.asarray(u, dtype=float)) / rate,
    )


def beta(a: float, b: float) -> TypeDistribution:
    a, b = float(a), float(b)
    if a <= 0 or b <= 0:
        raise DomainError("beta needs positive shape parameters")
    frozen = stats.beta(a, b)
    return TypeDistribution(
        "beta", {"a": a, "b": b}, 0.0, 1.0,
        frozen.cdf, frozen.pdf, frozen.ppf,
    )


def from_table(points: Sequence[Sequence[float]]) -> TypeDistribution:
    """Tabulated CDF with monotone linear interpolation.

    ``points`` is a sequence of ``[theta, cdf]`` pairs; the first must have
    cdf 0 and the last cdf 1.
    """
    pts = sorted((float(t), float(c)) for t, c in points)
    xs = np.array([p[0] for p in pts])
    cs = np.array([p[1] for p in pts])
    if len(xs) < 2 or cs[0] != 0.0 or cs[-1] != 1.0:
        raise SpecParseError("table must run from cdf 0 to cdf 1")
    if np.any(np.diff(xs) <= 0) or np.any(np.diff(cs) < 0):
        raise SpecParseError("table must be strictly increasing in theta and "
                             "nondecreasing in cdf")
    dens = np.diff(cs) / np.diff(xs)

    def pdf(x):
        idx = np.clip(np.searchsorted(xs, np.asarray(x, float), side="right") - 1,
                      0, len(dens) - 1)
        return dens[idx]

    return TypeDistribution(
        "table", {"points": [[float(t), float(c)] for t, c in pts]},
        float(xs[0]), float(xs[-1]),
        lambda x: np.interp(np.asarray(x, float), xs, cs),
        pdf,
        lambda u: np.interp(np.asarray(u, float), cs, xs),
    )


# -- hazard rates and virtual valuations --------------------------------------


def hazard(dist: TypeDistribution, theta: float) -> float:
    """Failure rate ``pdf / (1 - cdf)``; unbounded at the top of the support."""
    theta = float(theta)
    if not dist.lo <= theta <= dist.hi:
        raise DomainError(f"{theta} outside support [{dist.lo}, {dist.hi}]")
    surv = 1.0 - dist.cdf(theta)
    if surv <= 0.0:
        return math.inf
    return float(dist.pdf(theta)) / surv


def virtual_valuation(dist: TypeDistribution, theta: float) -> float:
    """``theta - (1 - cdf)/pdf``; approaches ``theta`` at the top."""
    theta = float(theta)
    if not dist.lo <= theta <= dist.hi:
        raise DomainError(f"{theta} outside support [{dist.lo}, {dist.hi}]")
    surv = 1.0 - dist.cdf(theta)
    if surv <= 0.0:
        return theta
    dens = float(dist.pdf(theta))
    if dens <= 0.0:
        return -math.inf
    return theta - surv / dens


def has_increasing_hazard(dist: TypeDistribution, n: int = 256) -> bool:
    grid = np.linspace(dist.lo, dist.hi, n + 1)[:-1]
    rates = [hazard(dist, g) for g in grid]
    return all(b >= a - 1e-9 for a, b in zip(rates, rates[1:]))


def inverse_virtual(dist: TypeDistribution, check: bool = True) -> float:
    """Root of the virtual valuation, clamped to the bottom of the support
    when the virtual valuation is already nonnegative there."""
    if check and not has_increasing_hazard(dist):
        warnings.warn(
            "hazard rate is not nondecreasing on the grid; the virtual "
            "valuation may have multiple roots", stacklevel=2)
    lo, hi = dist.lo, dist.hi
    if virtual_valuation(dist, lo) >= 0.0:
        return lo
    f_lo = virtual_valuation(dist, lo)
    f_hi = virtual_valuation(dist, hi)
    if f_hi < 0.0 or f_lo * f_hi > 0.0:
        raise DomainError("virtual valuation has no sign change on the support")
    a, b = lo, hi
    for _ in range(200):
        if b - a <= 1e-13 * max(1.0, abs(b)):
            break
        mid = 0.5 * (a + b)
        if virtual_valuation(dist, mid) < 0.0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


# -- expected revenue ---------------------------------------------------------


def revenue_upper_bound(domain: PreferenceDomain, dist: TypeDistribution) -> float:
    """Payment making the full bundle indifferent to ``(0, 0)`` under the
    top preference of the support; no individually rational mechanism can
    collect more."""
    return domain.canonical_payment(dist.hi, ZERO_BUNDLE)


def expected_revenue(domain: PreferenceDomain, mech, dist: TypeDistribution,
                     mode: str = "payment") -> float:
    """Expected seller revenue of a mechanism under ``dist``.

    Step mechanisms (anything exposing ``revenue_segments``) are summed
    exactly; bare callables ``r -> Bundle`` are integrated by adaptive
    quadrature.
    """
    revenue_of(ZERO_BUNDLE, mode)  # validate the mode early
    if hasattr(mech, "revenue_segments"):
        total = 0.0
        for r_lo, r_hi, bundle in mech.revenue_segments(dist):
            total += revenue_of(bundle, mode) * dist.mass(r_lo, r_hi)
        return total
    fn = mech.evaluate if hasattr(mech, "evaluate") else mech

    def integrand(r):
        return revenue_of(fn(r), mode) * float(dist.pdf(r))

    value, _ = integrate.quad(integrand, dist.lo, dist.hi, limit=400)
    return value
