"""Preference domains with the single-crossing property.

A preference over payment/quantity bundles ``(t, q)`` is represented
ordinally through its *canonical payment* map ``f_r``: the payment ``t'``
such that the full bundle ``(t', 1)`` is indifferent to the queried bundle
under the preference with order parameter ``r``.  Lower canonical payment
means a better bundle, and ``f_r(t, 1) = t`` for every ``r``.

Each built-in family stores closed forms for

* ``canonical(r, t, q)``   - the canonical payment of a bundle,
* ``curve_payment(r, c, q)`` - the payment at quantity ``q`` on the
  indifference curve whose canonical payment is ``c`` (the inverse of
  ``canonical`` in ``t``), and
* ``special(a, b)``        - the unique order parameter making two diagonal
  bundles indifferent, where a closed form exists.

The order parameter is chosen per family so that ``f_r(z)`` is strictly
increasing in ``r`` for every bundle with ``q < 1``; families whose natural
parameter runs the other way are stored under a reparametrization (see the
individual family notes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import DomainError, RichnessError

# Tolerances: indifference is decided in canonical-payment units, bisection
# runs on the order parameter.
TAU_INDIFF = 1e-9
BISECT_TOL = 1e-12

# Splice quantity of the spliced power family: the power piece q**d - t is
# single-crossing for d in [1/4, 1/3] only where d*ln(q) + 1 > 0, i.e.
# q > exp(-3); below the splice a linear piece takes over.
POWER_Q_SPLICE = math.exp(-3.0) + 0.01


class Bundle(NamedTuple):
    """A payment/quantity pair; ``q`` is a share or a win probability."""

    t: float
    q: float


ZERO_BUNDLE = Bundle(0.0, 0.0)


class Ordering(Enum):
    A_STRICT = "a-strictly"
    B_STRICT = "b-strictly"
    INDIFFERENT = "indifferent"


def check_bundle(z: Bundle) -> Bundle:
    t, q = float(z[0]), float(z[1])
    if not (math.isfinite(t) and math.isfinite(q)):
        raise DomainError(f"bundle has non-finite coordinates: {z}")
    if t < 0.0:
        raise DomainError(f"payment must be nonnegative, got t={t}")
    if not (0.0 <= q <= 1.0):
        raise DomainError(f"quantity must lie in [0, 1], got q={q}")
    return Bundle(t, q)


def is_diagonal(a: Bundle, b: Bundle) -> bool:
    """Strict componentwise order ``a < b``."""
    return a[0] < b[0] and a[1] < b[1]


def _power_q_slope_label(delta):
    # Linear bijection [1/4, 1/3] -> [1/8, 1/2] labelling the linear pieces
    # below the splice quantity.
    return 0.125 + 4.5 * (delta - 0.25)


def _two_param_coeff(r):
    # Single chart across the two branches: coefficient of (1 - sqrt(q)) in
    # the squared-payment canonical form.  Continuous and increasing on
    # (0, 3), equal to 2 at the branch junction.
    r = np.asarray(r, dtype=float)
    coeff = np.where(r <= 2.0, r, 2.0 / (3.0 - r))
    return coeff if coeff.ndim else float(coeff)


@dataclass(frozen=True)
class Family:
    """Closed-form description of one preference family.

    ``kind`` is ``"classical"`` (monotone everywhere) or ``"restricted"``
    (monotone up to a payment bound ``t_R = r``, with every bundle on the
    bound indifferent to ``(0, 0)``).
    """

    name: str
    kind: str
    param_lo: float
    param_hi: float
    utility: Callable
    canonical: Callable
    curve_payment: Callable
    special: Optional[Callable] = None
    blurb: str = ""

    @property
    def restricted(self) -> bool:
        return self.kind == "restricted"


def _ql_utility(r, t, q):
    return r * q - t


def _ql_canonical(r, t, q):
    return t + r * (1.0 - q)


def _ql_curve(r, c, q):
    return c - r * (1.0 - q)


def _ql_special(a, b):
    return (b[0] - a[0]) / (b[1] - a[1])


def _sq_utility(r, t, q):
    return r * np.sqrt(q) - t


def _sq_canonical(r, t, q):
    return t + r * (1.0 - np.sqrt(q))


def _sq_curve(r, c, q):
    return c - r * (1.0 - np.sqrt(q))


def _sq_special(a, b):
    return (b[0] - a[0]) / (math.sqrt(b[1]) - math.sqrt(a[1]))


def _ie_utility(r, t, q):
    return r * np.sqrt(q) - t * t


def _ie_canonical(r, t, q):
    return np.sqrt(t * t + r * (1.0 - np.sqrt(q)))


def _ie_curve(r, c, q):
    with np.errstate(invalid="ignore"):
        return np.sqrt(c * c - r * (1.0 - np.sqrt(q)))


def _ie_special(a, b):
    return (b[0] ** 2 - a[0] ** 2) / (math.sqrt(b[1]) - math.sqrt(a[1]))


def _pp_utility(r, t, q):
    # Natural form q - theta*t**2 with theta = 1/r; larger natural theta
    # cuts from below, so the stored parameter is its reciprocal.
    return q - t * t / r


def _pp_canonical(r, t, q):
    return np.sqrt(t * t + r * (1.0 - q))


def _pp_curve(r, c, q):
    with np.errstate(invalid="ignore"):
        return np.sqrt(c * c - r * (1.0 - q))


def _pp_special(a, b):
    return (b[0] ** 2 - a[0] ** 2) / (b[1] - a[1])


def _tp_utility(r, t, q):
    if r <= 2.0:
        return r * np.sqrt(q) - t * t
    return 2.0 * np.sqrt(q) - (3.0 - r) * t * t


def _tp_canonical(r, t, q):
    return np.sqrt(t * t + _two_param_coeff(r) * (1.0 - np.sqrt(q)))


def _tp_curve(r, c, q):
    with np.errstate(invalid="ignore"):
        return np.sqrt(c * c - _two_param_coeff(r) * (1.0 - np.sqrt(q)))


def _tp_special(a, b):
    coeff = (b[0] ** 2 - a[0] ** 2) / (math.sqrt(b[1]) - math.sqrt(a[1]))
    return coeff if coeff <= 2.0 else 3.0 - 2.0 / coeff


def _pq_utility(r, t, q):
    q = np.asarray(q, dtype=float)
    qs = POWER_Q_SPLICE
    hi = q**r - t
    lo = qs**r - _power_q_slope_label(r) * (qs - q) - t
    out = np.where(q >= qs, hi, lo)
    return out if out.ndim else float(out)


def _pq_canonical(r, t, q):
    q = np.asarray(q, dtype=float)
    qs = POWER_Q_SPLICE
    hi = t + 1.0 - q**r
    lo = t + _power_q_slope_label(r) * (qs - q) + 1.0 - qs**r
    out = np.where(q >= qs, hi, lo)
    return out if out.ndim else float(out)


def _pq_curve(r, c, q):
    q = np.asarray(q, dtype=float)
    qs = POWER_Q_SPLICE
    hi = c - 1.0 + q**r
    lo = c - 1.0 + qs**r - _power_q_slope_label(r) * (qs - q)
    out = np.where(q >= qs, hi, lo)
    return out if out.ndim else float(out)


def _pqr_utility(r, t, q):
    return q**r - t


def _pqr_canonical(r, t, q):
    return t + 1.0 - q**r


def _pqr_curve(r, c, q):
    return c - 1.0 + q**r


def _my_utility(r, t, q):
    return q * (r - t)


def _my_canonical(r, t, q):
    return r * (1.0 - q) + q * t


def _my_curve(r, c, q):
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(q > 0.0, (c - r * (1.0 - q)) / np.where(q > 0.0, q, 1.0), np.nan)
    return out if out.ndim else float(out)


def _my_special(a, b):
    return (b[1] * b[0] - a[1] * a[0]) / (b[1] - a[1])


def _ra_utility(r, t, q):
    return q * np.sqrt(np.maximum(r - t, 0.0))


def _ra_canonical(r, t, q):
    return r * (1.0 - q * q) + q * q * t


def _ra_curve(r, c, q):
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(q > 0.0, r - (r - c) / np.where(q > 0.0, q * q, 1.0), np.nan)
    return out if out.ndim else float(out)


def _ra_special(a, b):
    qa2, qb2 = a[1] ** 2, b[1] ** 2
    return (qb2 * b[0] - qa2 * a[0]) / (qb2 - qa2)


FAMILIES: dict[str, Family] = {}


def register_family(fam: Family) -> Family:
    """Extension point: add a preference family to the registry.

    The family must supply a canonical-payment map increasing in the order
    parameter; everything else (mechanism construction, verification,
    optimization) is family-agnostic.
    """
    if fam.name in FAMILIES:
        raise ValueError(f"family {fam.name!r} already registered")
    FAMILIES[fam.name] = fam
    return fam


register_family(Family(
    "quasilinear", "classical", 0.0, math.inf,
    _ql_utility, _ql_canonical, _ql_curve, _ql_special,
    blurb="r*q - t; linear indifference curves with slope 1/r",
))
register_family(Family(
    "sqrt_quasilinear", "classical", 0.0, math.inf,
    _sq_utility, _sq_canonical, _sq_curve, _sq_special,
    blurb="r*sqrt(q) - t; strictly convex indifference curves",
))
register_family(Family(
    "income_effect", "classical", 0.0, math.inf,
    _ie_utility, _ie_canonical, _ie_curve, _ie_special,
    blurb="r*sqrt(q) - t**2; payment increments shrink at higher payments",
))
register_family(Family(
    "payment_param", "classical", 0.0, math.inf,
    _pp_utility, _pp_canonical, _pp_curve, _pp_special,
    blurb="q - t**2/r; stored parameter is the reciprocal of the payment weight",
))
register_family(Family(
    "two_param", "classical", 0.0, 3.0,
    _tp_utility, _tp_canonical, _tp_curve, _tp_special,
    blurb="two-branch chart: r*sqrt(q)-t**2 on (0,2], 2*sqrt(q)-(3-r)*t**2 on [2,3)",
))
register_family(Family(
    "power_q", "classical", 0.25, 1.0 / 3.0,
    _pq_utility, _pq_canonical, _pq_curve, None,
    blurb="q**r - t above the splice quantity, linear label below it",
))
register_family(Family(
    "power_q_raw", "classical", 0.0, 1.0,
    _pqr_utility, _pqr_canonical, _pqr_curve, None,
    blurb="q**r - t on the full quantity range; not single-crossing",
))
register_family(Family(
    "myerson", "restricted", 0.0, math.inf,
    _my_utility, _my_canonical, _my_curve, _my_special,
    blurb="q*(r - t); win-probability model with expected payment q*t",
))
register_family(Family(
    "risk_averse", "restricted", 0.0, math.inf,
    _ra_utility, _ra_canonical, _ra_curve, _ra_special,
    blurb="q*sqrt(r - t); payments above r are inadmissible",
))


@dataclass(frozen=True)
class PreferenceDomain:
    """A one-parameter slice of a preference family.

    ``lo``/``hi`` bound the admissible order parameters. ``hi`` may be
    ``inf`` for families that extend indefinitely.
    """

    family: Family
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError(f"empty parameter interval [{self.lo}, {self.hi}]")
        if self.lo < self.family.param_lo - 1e-12 or self.hi > self.family.param_hi + 1e-12:
            raise DomainError(
                f"interval [{self.lo}, {self.hi}] outside the valid range "
                f"[{self.family.param_lo}, {self.family.param_hi}] of family "
                f"{self.family.name!r}"
            )

    @property
    def kind(self) -> str:
        return self.family.kind

    @property
    def restricted(self) -> bool:
        return self.family.restricted

    # -- admissibility ----------------------------------------------------

    def check_param(self, r: float) -> float:
        r = float(r)
        if not (self.lo <= r <= self.hi) or not math.isfinite(r):
            raise DomainError(
                f"parameter {r} outside interval [{self.lo}, {self.hi}]"
            )
        return r

    def payment_bound(self, r: float) -> Optional[float]:
        """Largest admissible payment under preference ``r``; ``None`` for
        classical families."""
        r = self.check_param(r)
        return r if self.restricted else None

    def check_admissible(self, r: float, z: Bundle) -> Bundle:
        z = check_bundle(z)
        if self.restricted and z.t > r + 1e-12:
            raise DomainError(
                f"bundle {z} has payment above the bound t_R={r} of this "
                f"restricted preference"
            )
        return z

    # -- core ordinal operations ------------------------------------------

    def canonical_payment(self, r: float, z: Bundle) -> float:
        """Payment ``t'`` with ``(t', 1)`` indifferent to ``z`` under ``r``."""
        r = self.check_param(r)
        z = self.check_admissible(r, z)
        return float(self.family.canonical(r, z.t, z.q))

    def canonical_payment_many(self, r: float, t, q):
        """Vectorized canonical payment; no admissibility checks."""
        return self.family.canonical(r, np.asarray(t, float), np.asarray(q, float))

    def curve_payment(self, r: float, c: float, q):
        """Payment at quantity ``q`` on the indifference curve with
        canonical payment ``c``.  NaN where the curve leaves the bundle
        space."""
        return self.family.curve_payment(r, c, np.asarray(q, float))

    def prefers(self, r: float, a: Bundle, b: Bundle,
                tol: float = TAU_INDIFF) -> Ordering:
        """Compare two bundles under preference ``r``.

        Lower canonical payment wins; differences within ``tol`` count as
        indifference.
        """
        fa = self.canonical_payment(r, a)
        fb = self.canonical_payment(r, b)
        if abs(fa - fb) <= tol:
            return Ordering.INDIFFERENT
        return Ordering.A_STRICT if fa < fb else Ordering.B_STRICT

    def special_preference(self, a: Bundle, b: Bundle) -> float:
        """The unique parameter making diagonal bundles ``a < b`` indifferent.

        Uses the family closed form when available, otherwise bisection on
        the canonical-payment difference, which changes sign exactly once
        on a single-crossing domain.
        """
        a, b = check_bundle(a), check_bundle(b)
        if not is_diagonal(a, b):
            raise DomainError(f"bundles must satisfy a < b componentwise: {a}, {b}")
        if self.restricted and math.isfinite(self.hi) and b.t >= self.hi:
            raise DomainError(
                f"payment {b.t} is not below the best payment bound {self.hi}"
            )
        if self.family.special is not None:
            r = float(self.family.special(a, b))
            if not (self.lo - 1e-12 <= r <= self.hi + 1e-12):
                raise RichnessError(
                    f"indifference parameter {r:.6g} for {a}, {b} lies outside "
                    f"[{self.lo}, {self.hi}]"
                )
            return min(max(r, self.lo), self.hi)
        return self._special_by_bisection(a, b)

    def _special_by_bisection(self, a: Bundle, b: Bundle) -> float:
        def gap(r):
            return (self.family.canonical(r, a.t, a.q)
                    - self.family.canonical(r, b.t, b.q))

        lo, hi = self.lo, self.hi
        if not math.isfinite(hi):
            # Expand geometrically until the sign flips; the gap is
            # increasing in r (higher parameters favor the larger bundle).
            hi = max(1.0, lo * 2.0)
            for _ in range(200):
                if gap(hi) > 0.0:
                    break
                hi *= 2.0
            else:
                raise RichnessError(f"no indifference parameter found for {a}, {b}")
        glo, ghi = gap(lo), gap(hi)
        if glo == 0.0:
            return lo
        if ghi == 0.0:
            return hi
        if glo * ghi > 0.0:
            raise RichnessError(
                f"no parameter in [{self.lo}, {self.hi}] makes {a} and {b} "
                f"indifferent"
            )
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if hi - lo <= BISECT_TOL:
                return mid
            gm = gap(mid)
            if gm == 0.0:
                return mid
            if glo * gm < 0.0:
                hi = mid
            else:
                lo, glo = mid, gm
        return 0.5 * (lo + hi)

    # -- serialization -----------------------------------------------------

    def to_spec(self) -> dict:
        return {
            "family": self.family.name,
            "params": {"lo": self.lo, "hi": self.hi},
            "kind": self.kind,
        }

    @classmethod
    def from_spec(cls, spec: dict) -> "PreferenceDomain":
        from .errors import SpecParseError

        try:
            name = spec["family"]
        except (KeyError, TypeError):
            raise SpecParseError("domain spec needs a 'family' entry")
        if name not in FAMILIES:
            raise SpecParseError(
                f"unknown family {name!r}; known: {sorted(FAMILIES)}"
            )
        fam = FAMILIES[name]
        params = spec.get("params", {}) or {}
        lo = params.get("lo", fam.param_lo)
        hi = params.get("hi", fam.param_hi)
        lo = fam.param_lo if lo is None else float(lo)
        hi = fam.param_hi if hi is None else float(hi)
        dom = cls(fam, lo, hi)
        kind = spec.get("kind")
        if kind is not None and kind != dom.kind:
            raise SpecParseError(
                f"family {name!r} is {dom.kind}, spec says {kind!r}"
            )
        return dom


def make_domain(family: str, lo: Optional[float] = None,
                hi: Optional[float] = None) -> PreferenceDomain:
    """Convenience constructor by family name with default bounds."""
    if family not in FAMILIES:
        raise DomainError(f"unknown family {family!r}; known: {sorted(FAMILIES)}")
    fam = FAMILIES[family]
    return PreferenceDomain(
        fam,
        fam.param_lo if lo is None else float(lo),
        fam.param_hi if hi is None else float(hi),
    )


# -- single-crossing validation --------------------------------------------


@dataclass(frozen=True)
class TangencyWitness:
    """Evidence that two preferences' indifference curves meet more than
    once, or touch tangentially."""

    r_lo: float
    r_hi: float
    anchor: Bundle
    location: Bundle
    kind: str  # "multiple-intersections" | "tangency"

    def to_dict(self) -> dict:
        return {
            "r_lo": self.r_lo,
            "r_hi": self.r_hi,
            "anchor": [self.anchor.t, self.anchor.q],
            "location": [self.location.t, self.location.q],
            "kind": self.kind,
        }


@dataclass(frozen=True)
class SingleCrossingReport:
    tangency_witnesses: tuple
    n_params: int
    n_anchors: int

    @property
    def ok(self) -> bool:
        return len(self.tangency_witnesses) == 0

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "n_params": self.n_params,
            "n_anchors": self.n_anchors,
            "tangency_witnesses": [w.to_dict() for w in self.tangency_witnesses],
        }


def _curve_slope(domain: PreferenceDomain, r: float, c: float, q: float) -> float:
    # dt/dq along the indifference curve, by central difference.
    h = 1e-6 * max(q, 1e-3)
    q_lo, q_hi = max(q - h, 1e-12), min(q + h, 1.0)
    t_lo = float(domain.curve_payment(r, c, q_lo))
    t_hi = float(domain.curve_payment(r, c, q_hi))
    if not (math.isfinite(t_lo) and math.isfinite(t_hi)) or q_hi == q_lo:
        return math.nan
    return (t_hi - t_lo) / (q_hi - q_lo)


def validate_single_crossing(
    domain: PreferenceDomain,
    bundle_grid: Sequence[Bundle],
    param_grid: Sequence[float],
    q_grid: Optional[Sequence[float]] = None,
    touch_tol: float = 1e-7,
    slope_tol: float = 1e-6,
) -> SingleCrossingReport:
    """Search for single-crossing failures on a grid.

    For every parameter pair ``r' < r''`` and every anchor bundle, both
    indifference curves through the anchor are traced over the quantity
    grid.  A pair is reported when the curves meet at two or more grid
    locations, or when they touch tangentially (equal slopes without a
    transversal crossing) at the anchor.
    """
    anchors = [check_bundle(z) for z in bundle_grid]
    params = sorted(float(r) for r in param_grid)
    if not anchors or not params:
        raise DomainError("grids must be nonempty")
    if q_grid is None:
        q_grid = np.linspace(1e-4, 1.0, 201)
    q_grid = np.asarray(sorted(set(float(q) for q in q_grid)), dtype=float)

    witnesses: list[TangencyWitness] = []
    for i, r1 in enumerate(params):
        for r2 in params[i + 1:]:
            for anchor in anchors:
                w = _check_pair(domain, r1, r2, anchor, q_grid,
                                touch_tol, slope_tol)
                if w is not None:
                    witnesses.append(w)
    return SingleCrossingReport(tuple(witnesses), len(params), len(anchors))


def _check_pair(domain, r1, r2, anchor, q_grid, touch_tol, slope_tol):
    try:
        c1 = domain.canonical_payment(r1, anchor)
        c2 = domain.canonical_payment(r2, anchor)
    except DomainError:
        return None  # anchor inadmissible for this pair
    qs = np.unique(np.append(q_grid, anchor.q))
    with np.errstate(invalid="ignore"):
        t_on_1 = np.asarray(domain.curve_payment(r1, c1, qs), dtype=float)
        h = np.asarray(domain.canonical_payment_many(r2, t_on_1, qs),
                       dtype=float) - c2
    valid = np.isfinite(t_on_1) & (t_on_1 >= -1e-12) & np.isfinite(h)
    if domain.restricted:
        valid &= t_on_1 <= min(r1, r2) + 1e-12
    qs, h, t_on_1 = qs[valid], h[valid], t_on_1[valid]
    if qs.size < 3:
        return None

    scale = max(1.0, abs(c2))
    signs = np.where(np.abs(h) <= touch_tol * scale, 0, np.sign(h)).astype(int)

    # Compress into runs and count intersections: each zero-run is one
    # contact; each sign flip between adjacent nonzero runs is one crossing.
    runs: list[tuple[int, int]] = []  # (sign, representative index)
    for idx, s in enumerate(signs):
        if not runs or runs[-1][0] != s:
            runs.append((s, idx))
    contacts = []  # (index, tangent?)
    prev_nonzero = None
    for j, (s, idx) in enumerate(runs):
        if s == 0:
            nxt = runs[j + 1][0] if j + 1 < len(runs) else None
            tangent = (prev_nonzero is not None and nxt is not None
                       and prev_nonzero == nxt)
            contacts.append((idx, tangent))
        else:
            if prev_nonzero is not None and prev_nonzero != s:
                # transversal crossing between grid points, unless a zero
                # run in between already recorded the contact
                if runs[j - 1][0] != 0:
                    contacts.append((idx, False))
            prev_nonzero = s

    if len(contacts) >= 2:
        idx = contacts[1][0]
        loc = Bundle(float(t_on_1[idx]), float(qs[idx]))
        return TangencyWitness(r1, r2, anchor, loc, "multiple-intersections")
    if len(contacts) == 1 and contacts[0][1]:
        idx = contacts[0][0]
        loc = Bundle(float(t_on_1[idx]), float(qs[idx]))
        return TangencyWitness(r1, r2, anchor, loc, "tangency")

    # Slope tangency exactly at the anchor, even if the grid never sees a
    # second contact.
    s1 = _curve_slope(domain, r1, c1, anchor.q)
    s2 = _curve_slope(domain, r2, c2, anchor.q)
    if (math.isfinite(s1) and math.isfinite(s2)
            and abs(s1 - s2) <= slope_tol * max(1.0, abs(s1))):
        return TangencyWitness(r1, r2, anchor, anchor, "tangency")
    return None
