"""Strategy-proof mechanisms over ordered bundle ranges.

A finite mechanism is a nondecreasing step function from order parameters
to bundles.  Given a strictly increasing diagonal range, the unique
strategy-proof rule switches from each bundle to the next exactly at the
*breakpoint*: the preference making the two adjacent bundles indifferent.
``from_range`` computes those breakpoints and rejects ranges whose induced
breakpoints are not ordered.

Countable ranges accumulating at finitely many limit bundles are handled by
``CountableMechanism``; ``epsilon_truncate`` cuts their tails into a finite
mechanism whose expected revenue differs by at most ``eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

from scipy import optimize as _sciopt

from .domain import (Bundle, Ordering, PreferenceDomain, check_bundle,
                     is_diagonal)
from .errors import DomainError, InfeasibleRangeError, TractabilityError

TAIL_INDEX_CAP = 10**6


@dataclass(frozen=True)
class FiniteMechanism:
    """Step mechanism: ``bundles[k]`` is allocated where exactly ``k``
    breakpoints lie at or below the reported parameter.

    At a breakpoint both neighbors are indifferent; the tie goes to the
    higher bundle (a measure-zero event under an atomless distribution).
    The constructor stores fields as given, so malformed step functions can
    be represented for diagnostics; use :func:`from_range` to build a
    validated strategy-proof mechanism.
    """

    domain: PreferenceDomain
    bundles: tuple
    breakpoints: tuple

    def __post_init__(self):
        if len(self.breakpoints) != len(self.bundles) - 1:
            raise DomainError("need exactly one breakpoint between adjacent bundles")
        object.__setattr__(self, "bundles",
                           tuple(check_bundle(z) for z in self.bundles))
        object.__setattr__(self, "breakpoints",
                           tuple(float(r) for r in self.breakpoints))

    def evaluate(self, r: float) -> Bundle:
        r = self.domain.check_param(r)
        k = 0
        for bp in self.breakpoints:
            if bp <= r:
                k += 1
            else:
                break
        return self.bundles[k]

    def revenue_segments(self, dist) -> Iterator[tuple]:
        """Clamped parameter intervals on which each bundle is allocated."""
        edges = [dist.lo, *self.breakpoints, dist.hi]
        for k, z in enumerate(self.bundles):
            lo = min(max(edges[k], dist.lo), dist.hi)
            hi = min(max(edges[k + 1], dist.lo), dist.hi)
            if hi > lo:
                yield lo, hi, z

    def is_well_formed(self, tol: float = 1e-9) -> bool:
        """Ordered diagonal range with nondecreasing, indifferent breakpoints."""
        for a, b in zip(self.bundles, self.bundles[1:]):
            if not is_diagonal(a, b):
                return False
        for r1, r2 in zip(self.breakpoints, self.breakpoints[1:]):
            if r2 < r1 - tol:
                return False
        for k, bp in enumerate(self.breakpoints):
            if self.domain.prefers(bp, self.bundles[k], self.bundles[k + 1],
                                   tol=tol) is not Ordering.INDIFFERENT:
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "domain": self.domain.to_spec(),
            "bundles": [[z.t, z.q] for z in self.bundles],
            "breakpoints": list(self.breakpoints),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FiniteMechanism":
        domain = PreferenceDomain.from_spec(data["domain"])
        bundles = tuple(Bundle(float(t), float(q)) for t, q in data["bundles"])
        return cls(domain, bundles, tuple(float(r) for r in data["breakpoints"]))


def from_range(domain: PreferenceDomain, bundles: Sequence[Bundle]) -> FiniteMechanism:
    """Build the strategy-proof mechanism supported on a finite range.

    The range must be sorted and strictly diagonal.  Breakpoints are the
    pairwise indifference parameters of adjacent bundles; if they come out
    decreasing somewhere, no monotone mechanism with a continuous indirect
    preference has this range and the range is rejected.
    """
    zs = [check_bundle(z) for z in bundles]
    if not zs:
        raise DomainError("range must contain at least one bundle")
    for a, b in zip(zs, zs[1:]):
        if not is_diagonal(a, b):
            raise DomainError(
                f"range must be sorted and strictly diagonal; offending pair "
                f"{a}, {b}"
            )
    if domain.restricted and zs[0] != (0.0, 0.0) and domain.lo < zs[0].t:
        raise DomainError(
            "restricted-kind range must include (0, 0): preferences with "
            f"payment bound below {zs[0].t} cannot afford the bottom bundle"
        )
    breakpoints = [domain.special_preference(a, b) for a, b in zip(zs, zs[1:])]
    for k in range(1, len(breakpoints)):
        if breakpoints[k] < breakpoints[k - 1] - 1e-12:
            raise InfeasibleRangeError(
                "range unsupportable: breakpoints decrease on the triple "
                f"{zs[k - 1]}, {zs[k]}, {zs[k + 1]} "
                f"({breakpoints[k - 1]:.6g} then {breakpoints[k]:.6g})"
            )
    return FiniteMechanism(domain, tuple(zs), tuple(breakpoints))


# -- countable ranges ---------------------------------------------------------


@dataclass(frozen=True)
class AnchorLine:
    """Segment ``q = slope * t`` for ``t`` in ``[t_lo, t_hi]``."""

    slope: float
    t_lo: float
    t_hi: float

    def __post_init__(self):
        if self.slope <= 0 or not 0 <= self.t_lo < self.t_hi:
            raise DomainError("anchor line needs positive slope and 0 <= t_lo < t_hi")
        if self.slope * self.t_hi > 1.0 + 1e-12:
            raise DomainError("anchor line leaves the bundle space (q > 1)")

    def bundle(self, t: float) -> Bundle:
        return Bundle(float(t), min(self.slope * float(t), 1.0))


@dataclass(frozen=True)
class ParamSequence:
    """Monotone parameter sequence with an explicit limit."""

    value: Callable
    limit: float
    start: int = 1

    def __call__(self, n: int) -> float:
        return float(self.value(n))


def harmonic_sequence(limit: float, coeff: float = 1.0, start: int = 3) -> ParamSequence:
    """``limit - coeff/n`` for ``n >= start``; increasing when coeff > 0."""
    return ParamSequence(lambda n: limit - coeff / n, float(limit), start)


def constant_sequence(value: float) -> ParamSequence:
    return ParamSequence(lambda n: value, float(value), 1)


@dataclass
class TailRule:
    """Lazy bundle sequence indexed from ``start``; memoized."""

    bundle_fn: Callable
    start: int
    _cache: dict = field(default_factory=dict, repr=False)

    def bundle(self, n: int) -> Bundle:
        if n not in self._cache:
            if n - self.start > TAIL_INDEX_CAP:
                raise TractabilityError(f"tail index {n} beyond cap {TAIL_INDEX_CAP}")
            self._cache[n] = check_bundle(self.bundle_fn(n))
        return self._cache[n]


@dataclass
class CountableMechanism:
    """Mechanism whose range accumulates at one limit bundle.

    ``increasing`` generates bundles rising to ``limit_bundle`` and is
    allocated below ``limit_lo``; ``decreasing`` generates bundles falling
    to it and is allocated above ``limit_hi``.  Either tail may be absent.
    """

    domain: PreferenceDomain
    limit_bundle: Bundle
    increasing: Optional[TailRule] = None
    decreasing: Optional[TailRule] = None
    limit_lo: Optional[float] = None  # parameter where the limit bundle starts
    limit_hi: Optional[float] = None  # parameter where it ends
    _inc_bp: dict = field(default_factory=dict, repr=False)
    _dec_bp: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.limit_bundle = check_bundle(self.limit_bundle)
        if self.increasing is not None and self.limit_lo is None:
            raise DomainError("an increasing tail needs limit_lo")
        if self.decreasing is not None and self.limit_hi is None:
            raise DomainError("a decreasing tail needs limit_hi")

    # breakpoint entering increasing-tail bundle n (indifference with n-1)
    def inc_breakpoint(self, n: int) -> float:
        if n not in self._inc_bp:
            tail = self.increasing
            self._inc_bp[n] = self.domain.special_preference(
                tail.bundle(n - 1), tail.bundle(n))
        return self._inc_bp[n]

    # breakpoint entering decreasing-tail bundle k from below (indifference
    # of d(k) with the next-smaller bundle d(k+1))
    def dec_breakpoint(self, k: int) -> float:
        if k not in self._dec_bp:
            tail = self.decreasing
            self._dec_bp[k] = self.domain.special_preference(
                tail.bundle(k + 1), tail.bundle(k))
        return self._dec_bp[k]

    def evaluate(self, r: float) -> Bundle:
        r = self.domain.check_param(r)
        lo = self.limit_lo if self.limit_lo is not None else -math.inf
        hi = self.limit_hi if self.limit_hi is not None else math.inf
        if lo <= r <= hi:
            return self.limit_bundle
        # Tail bundles inside numerical resolution of the limit are treated
        # as the limit bundle itself.
        try:
            if r < lo:
                tail = self.increasing
                n = tail.start
                while self.inc_breakpoint(n + 1) <= r:
                    n += 1
                    if n - tail.start > TAIL_INDEX_CAP:
                        return self.limit_bundle
                return tail.bundle(n)
            tail = self.decreasing
            k = tail.start
            while self.dec_breakpoint(k) > r:
                k += 1
                if k - tail.start > TAIL_INDEX_CAP:
                    return self.limit_bundle
            return tail.bundle(k)
        except DomainError:
            return self.limit_bundle

    def revenue_segments(self, dist, tol: float = 1e-7) -> Iterator[tuple]:
        """Allocation intervals, tails summed until the residual mass times
        the residual payment gap is below ``tol``."""
        lo = self.limit_lo if self.limit_lo is not None else dist.lo
        hi = self.limit_hi if self.limit_hi is not None else dist.hi
        t_star = self.limit_bundle.t
        if self.increasing is not None and dist.lo < lo:
            tail = self.increasing
            n = tail.start
            prev = dist.lo
            while prev < lo:
                try:
                    bp_next = min(self.inc_breakpoint(n + 1), lo)
                except DomainError:
                    bp_next = prev
                if bp_next <= prev and n > tail.start:
                    # tail resolution exhausted; remaining bundles are
                    # within noise of the limit bundle
                    yield prev, lo, self.limit_bundle
                    break
                z = tail.bundle(n)
                yield prev, bp_next, z
                prev = bp_next
                n += 1
                residual = dist.mass(prev, lo) * (t_star - z.t)
                if residual < tol or n - tail.start > TAIL_INDEX_CAP:
                    # remaining staircase is within tol of the limit payment
                    yield prev, lo, self.limit_bundle
                    break
        yield max(lo, dist.lo), min(hi, dist.hi), self.limit_bundle
        if self.decreasing is not None and dist.hi > hi:
            tail = self.decreasing
            segs = []
            k = tail.start
            prev = dist.hi
            while prev > hi:
                try:
                    bp = max(self.dec_breakpoint(k), hi)
                except DomainError:
                    bp = prev
                if bp >= prev and k > tail.start:
                    segs.append((hi, prev, self.limit_bundle))
                    break
                z = tail.bundle(k)
                segs.append((bp, prev, z))
                prev = bp
                k += 1
                residual = dist.mass(hi, prev) * (z.t - t_star)
                if residual < tol or k - tail.start > TAIL_INDEX_CAP:
                    segs.append((hi, prev, self.limit_bundle))
                    break
            yield from reversed(segs)


def countable_geometric(domain: PreferenceDomain, line: AnchorLine,
                        seq: ParamSequence) -> CountableMechanism:
    """Best-bundle-on-a-line construction of a countable mechanism.

    For each parameter in the sequence the allocated bundle maximizes the
    preference along the anchor line (equivalently, minimizes the canonical
    payment).  The bundles converge to the maximizer at the limit
    parameter, which becomes the mechanism's limit bundle; switching
    parameters between consecutive bundles are their indifference
    parameters, exactly as in the finite construction.
    """
    if not math.isfinite(seq.limit):
        raise DomainError("parameter sequence must converge to a finite limit")
    domain.check_param(seq.limit)
    probe = [seq(seq.start + i) for i in range(6)]
    diffs = [b - a for a, b in zip(probe, probe[1:])]
    increasing = all(d > 0 for d in diffs)
    decreasing = all(d < 0 for d in diffs)
    constant = all(d == 0 for d in diffs)
    if not (increasing or decreasing or constant):
        raise DomainError("parameter sequence must be monotone")
    gap0 = abs(seq.limit - probe[0])
    gap5 = abs(seq.limit - probe[-1])
    if not constant and gap5 >= gap0:
        raise DomainError("parameter sequence does not approach its limit")

    def objective(r, t):
        return float(domain.canonical_payment_many(
            r, t, min(line.slope * t, 1.0)))

    def argbest(r: float) -> Bundle:
        res = _sciopt.minimize_scalar(
            lambda t: objective(r, t),
            bounds=(line.t_lo, line.t_hi), method="bounded",
            options={"xatol": 1e-13},
        )
        best = float(res.x)
        # parabolic refinement: flat objectives leave the bracketing search
        # ~1e-8 off, which blurs deep-tail bundles into each other
        h = 1e-5 * max(line.t_hi - line.t_lo, 1.0)
        if line.t_lo + h < best < line.t_hi - h:
            f_lo, f_mid, f_hi = (objective(r, best - h), objective(r, best),
                                 objective(r, best + h))
            curv = f_lo - 2.0 * f_mid + f_hi
            if curv > 0.0:
                best += 0.5 * h * (f_lo - f_hi) / curv
        # endpoints can beat the interior probe on flat objectives
        cands = [best, line.t_lo, line.t_hi]
        best = min(cands, key=lambda t: objective(r, t))
        return line.bundle(best)

    limit_bundle = argbest(seq.limit)
    if constant:
        # degenerate: one bundle allocated everywhere
        return CountableMechanism(domain, limit_bundle=argbest(seq(seq.start)))
    tail = TailRule(lambda n: argbest(seq(n)), seq.start)
    z0 = tail.bundle(seq.start)
    z1 = tail.bundle(seq.start + 1)
    if increasing:
        if not is_diagonal(z0, z1) or not is_diagonal(z1, limit_bundle):
            raise DomainError(
                "best bundles along the line are not strictly increasing; "
                "steepen the line or shorten the parameter range"
            )
        return CountableMechanism(domain, limit_bundle, increasing=tail,
                                  limit_lo=seq.limit)
    if not is_diagonal(z1, z0) or not is_diagonal(limit_bundle, z1):
        raise DomainError(
            "best bundles along the line are not strictly decreasing toward "
            "the limit"
        )
    return CountableMechanism(domain, limit_bundle, decreasing=tail,
                              limit_hi=seq.limit)


def epsilon_truncate(cmech: CountableMechanism, eps: float,
                     dist) -> FiniteMechanism:
    """Cut each infinite tail into finitely many bundles.

    Each tail is cut where the residual revenue mass (limit payment for the
    rising tail, the global payment bound for the falling tail, times the
    mass of the remaining parameter interval) drops below ``eps/2``; beyond
    the cut the limit bundle is allocated, starting at its indifference
    parameter with the last kept bundle.  The resulting finite mechanism's
    expected revenue differs from the countable one's by at most ``eps``.
    """
    from .measure import revenue_upper_bound

    if not eps > 0.0:
        raise DomainError(f"eps must be positive, got {eps}")
    domain = cmech.domain
    bundles: list[Bundle] = []

    try:
        if cmech.increasing is not None and dist.lo < cmech.limit_lo:
            tail = cmech.increasing
            t_star = cmech.limit_bundle.t
            w = tail.start
            while True:
                entering = dist.lo if w == tail.start else cmech.inc_breakpoint(w)
                if t_star * dist.mass(entering, cmech.limit_lo) < eps / 2.0:
                    break
                w += 1
                if w - tail.start > TAIL_INDEX_CAP:
                    raise TractabilityError("eps too small: tail cut index beyond cap")
            bundles.extend(tail.bundle(n) for n in range(tail.start, w + 1))

        bundles.append(cmech.limit_bundle)

        if cmech.decreasing is not None and dist.hi > cmech.limit_hi:
            tail = cmech.decreasing
            t_bar = revenue_upper_bound(domain, dist)
            k = tail.start
            while True:
                entering = dist.hi if k == tail.start else cmech.dec_breakpoint(k - 1)
                if t_bar * dist.mass(cmech.limit_hi, entering) < eps / 2.0:
                    break
                k += 1
                if k - tail.start > TAIL_INDEX_CAP:
                    raise TractabilityError("eps too small: tail cut index beyond cap")
            bundles.extend(tail.bundle(j) for j in range(k, tail.start - 1, -1))
    except DomainError as exc:
        raise TractabilityError(
            f"eps={eps} is below the tail's numerical resolution: {exc}"
        ) from exc

    return from_range(domain, bundles)
