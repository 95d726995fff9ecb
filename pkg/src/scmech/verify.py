"""Grid certification of mechanism properties and a brute-force optimum.

Verification is report-based: each check returns a
:class:`VerificationReport` whose ``violations`` list is empty exactly when
the property holds on the grid.  Checks never raise on a bad mechanism;
they describe it.

The incentive check tests direct-revelation misreports only: for every
ordered pair of grid parameters, the allocation at the truthful report must
be weakly better (lower canonical payment) than the allocation at the
misreport.  For restricted-kind domains, misreports whose allocation is
unaffordable under the truthful preference are outside the definition and
are skipped.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .domain import Bundle, PreferenceDomain, ZERO_BUNDLE, is_diagonal
from .errors import DomainError, InfeasibleRangeError, TractabilityError
from .measure import TypeDistribution, expected_revenue
from .mechanism import FiniteMechanism, from_range

# Incentive/IR gains below this are attributed to floating-point round-off.
TAU_IC = 1e-7
BRUTE_FORCE_GUARD = 10**7


@dataclass(frozen=True)
class Violation:
    kind: str  # IC | IR | MONO | CONT
    truthful_r: float
    deviant_r: Optional[float]
    gain: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "truthful_r": self.truthful_r,
            "deviant_r": self.deviant_r,
            "gain": self.gain,
        }


@dataclass(frozen=True)
class VerificationReport:
    violations: tuple
    grid_size: int
    tolerance: float

    @property
    def ok(self) -> bool:
        return len(self.violations) == 0

    def worst(self) -> Optional[Violation]:
        return max(self.violations, key=lambda v: v.gain, default=None)

    def merged_with(self, other: "VerificationReport") -> "VerificationReport":
        return VerificationReport(
            _sorted(self.violations + other.violations),
            max(self.grid_size, other.grid_size),
            max(self.tolerance, other.tolerance),
        )

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "grid_size": self.grid_size,
            "tolerance": self.tolerance,
            "violations": [v.to_dict() for v in self.violations],
        }

    def to_csv_rows(self) -> list[dict]:
        return [v.to_dict() for v in self.violations]


CSV_COLUMNS = ["kind", "truthful_r", "deviant_r", "gain"]


def _sorted(violations) -> tuple:
    return tuple(sorted(
        violations,
        key=lambda v: (v.truthful_r,
                       -math.inf if v.deviant_r is None else v.deviant_r,
                       v.kind),
    ))


def check_strategy_proof(domain: PreferenceDomain, mech_fn: Callable,
                         param_grid: Sequence[float],
                         tol: float = TAU_IC) -> VerificationReport:
    """Flag every grid pair where misreporting beats truth-telling."""
    grid = np.asarray(sorted(float(r) for r in param_grid))
    allocs = [mech_fn(r) for r in grid]
    ts = np.array([z[0] for z in allocs])
    qs = np.array([z[1] for z in allocs])
    violations = []
    for i, r in enumerate(grid):
        if domain.restricted and ts[i] > r + 1e-12:
            raise DomainError(
                f"mechanism allocates payment {ts[i]} above the bound of "
                f"preference {r}"
            )
        f_all = np.asarray(domain.canonical_payment_many(r, ts, qs), dtype=float)
        gains = f_all[i] - f_all  # positive where the deviation is better
        gains[i] = 0.0
        if domain.restricted:
            gains[ts > r + 1e-12] = 0.0  # unaffordable deviations skipped
        bad = np.nonzero(gains > tol)[0]
        for j in bad:
            violations.append(Violation("IC", float(r), float(grid[j]),
                                        float(gains[j])))
    return VerificationReport(_sorted(violations), len(grid), tol)


def check_individual_rationality(domain: PreferenceDomain, mech_fn: Callable,
                                 param_grid: Sequence[float],
                                 tol: float = TAU_IC) -> VerificationReport:
    """Flag grid points where the buyer would rather walk away."""
    violations = []
    for r in sorted(float(r) for r in param_grid):
        f_alloc = domain.canonical_payment(r, mech_fn(r))
        f_zero = domain.canonical_payment(r, ZERO_BUNDLE)
        gain = f_alloc - f_zero
        if gain > tol:
            violations.append(Violation("IR", r, None, float(gain)))
    return VerificationReport(_sorted(violations), len(param_grid), tol)


def check_shape(domain: PreferenceDomain, mech: FiniteMechanism,
                param_grid: Sequence[float],
                indiff_tol: float = 1e-9) -> VerificationReport:
    """Monotonicity on the grid plus indifference at every breakpoint.

    Both properties hold for every strategy-proof mechanism; a mechanism
    passing the incentive grid check passes this one.
    """
    grid = sorted(float(r) for r in param_grid)
    violations = []
    prev = None
    for r in grid:
        z = mech.evaluate(r)
        if prev is not None:
            drop = max(prev[0] - z[0], prev[1] - z[1])
            if drop > 1e-12:
                violations.append(Violation("MONO", r, None, float(drop)))
        prev = z
    for k, bp in enumerate(mech.breakpoints):
        lo_z, hi_z = mech.bundles[k], mech.bundles[k + 1]
        try:
            f_lo = domain.canonical_payment(bp, lo_z)
            f_hi = domain.canonical_payment(bp, hi_z)
        except DomainError:
            violations.append(Violation("CONT", float(bp), None, math.inf))
            continue
        gap = abs(f_lo - f_hi)
        if gap > indiff_tol:
            violations.append(Violation("CONT", float(bp), None, float(gap)))
    return VerificationReport(_sorted(violations), len(grid), indiff_tol)


def verify_mechanism(domain: PreferenceDomain, mech, param_grid,
                     tol: float = TAU_IC) -> VerificationReport:
    """Incentives, individual rationality, and (for step mechanisms) shape."""
    fn = mech.evaluate if hasattr(mech, "evaluate") else mech
    report = check_strategy_proof(domain, fn, param_grid, tol)
    report = report.merged_with(
        check_individual_rationality(domain, fn, param_grid, tol))
    if isinstance(mech, FiniteMechanism):
        report = report.merged_with(check_shape(domain, mech, param_grid))
    return report


# -- brute-force optimal oracle ------------------------------------------------


def brute_force_optimal(domain: PreferenceDomain, dist: TypeDistribution,
                        t_grid: Sequence[float], q_grid: Sequence[float],
                        max_bundles: int,
                        mode: str = "payment") -> tuple[FiniteMechanism, float]:
    """Exhaustive search over grid-supported ranges anchored at ``(0, 0)``.

    Enumerates every strictly diagonal chain of up to ``max_bundles`` grid
    bundles starting at the origin, keeps the ones supportable as
    strategy-proof mechanisms, and returns the revenue maximizer.  Intended
    as an independent check on the continuous solver, so it shares no
    search machinery with it.
    """
    ts = sorted(set(float(t) for t in t_grid))
    qs = sorted(set(float(q) for q in q_grid))
    cands = [Bundle(t, q) for t in ts for q in qs if t > 0.0 and q > 0.0]
    cands.sort()
    n_extra = max_bundles - 1
    total = sum(math.comb(len(cands), k) for k in range(0, n_extra + 1))
    if total > BRUTE_FORCE_GUARD:
        raise TractabilityError(
            f"{total} candidate ranges exceed the guard of {BRUTE_FORCE_GUARD}"
        )

    best_mech = from_range(domain, [ZERO_BUNDLE])
    best_rev = 0.0
    for k in range(1, n_extra + 1):
        for combo in itertools.combinations(cands, k):
            chain = (ZERO_BUNDLE, *combo)
            if any(not is_diagonal(a, b) for a, b in zip(chain, chain[1:])):
                continue
            try:
                mech = from_range(domain, chain)
            except (DomainError, InfeasibleRangeError):
                continue
            rev = expected_revenue(domain, mech, dist, mode)
            if rev > best_rev + 1e-15:
                best_mech, best_rev = mech, rev
    return best_mech, best_rev
