"""Revenue maximization over strategy-proof mechanisms with bounded range.

The search space is the breakpoint/quantity profile
``(theta_1..theta_m, q_1..q_m)`` with ``m = max_bundles - 1``: payments are
eliminated exactly, because at the optimum each bundle is pinned by the
binding indifference with its predecessor at its entry parameter (the same
relation that defines breakpoints).  The bottom bundle is anchored at
``(0, 0)``, which also makes every candidate individually rational.

The objective is piecewise smooth and low-dimensional, so the solver is a
multi-start local search: coordinate-wise bounded scalar maximization with
endpoint probing, a simplex polish, and a ridge-collapse step that retries
the profile with one bundle dropped (the optimum frequently uses fewer
bundles than allowed, leaving flat directions the sweeps cannot tighten on
their own).
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize as _sciopt

from .domain import Bundle, PreferenceDomain, ZERO_BUNDLE
from .errors import DomainError, ScmechError
from .measure import (TypeDistribution, expected_revenue, has_increasing_hazard,
                      inverse_virtual, revenue_of)
from .mechanism import FiniteMechanism, from_range
from .verify import verify_mechanism

COLLAPSE_TOL = 1e-6  # componentwise duplicate-bundle threshold for reporting


@dataclass(frozen=True)
class OptimizeOptions:
    max_bundles: int = 2
    restarts: int = 16
    sweep_rounds: int = 12
    revenue_tol: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.max_bundles < 2:
            raise DomainError("max_bundles must be at least 2")
        if self.revenue_tol <= 0:
            raise DomainError("revenue_tol must be positive")


@dataclass(frozen=True)
class Solution:
    mechanism: FiniteMechanism
    revenue: float
    active_bundles: int
    diagnostics: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "revenue": self.revenue,
            "active_bundles": self.active_bundles,
            "restarts_used": self.diagnostics.get("restarts_used", 0),
        }


def payments_from_breakpoints(domain: PreferenceDomain,
                              thetas: Sequence[float],
                              qs: Sequence[float]) -> np.ndarray:
    """Payments pinned by binding indifference at each entry parameter.

    Starting from the anchor ``(0, 0)``, bundle ``k`` must be indifferent
    to bundle ``k-1`` under the preference ``thetas[k]``; with quantities
    given, that equation has a unique payment solution by money
    monotonicity, in closed form via the family's curve inverse.
    """
    thetas = [float(r) for r in thetas]
    qs = [float(q) for q in qs]
    if len(thetas) != len(qs):
        raise DomainError("thetas and qs must have equal length")
    if any(b < a - 1e-12 for a, b in zip(thetas, thetas[1:])):
        raise DomainError("thetas must be nondecreasing")
    if any(b < a - 1e-12 for a, b in zip(qs, qs[1:])):
        raise DomainError("qs must be nondecreasing")
    payments = []
    prev = ZERO_BUNDLE
    for r, q in zip(thetas, qs):
        domain.check_param(r)
        if not 0.0 <= q <= 1.0:
            raise DomainError(f"quantity {q} outside [0, 1]")
        if q <= prev.q + 1e-15:
            t = prev.t  # no quantity step: the bundle repeats
        else:
            c = float(domain.canonical_payment_many(r, prev.t, prev.q))
            t = float(domain.curve_payment(r, c, q))
            if not math.isfinite(t) or t < prev.t - 1e-9:
                raise DomainError(
                    f"no admissible payment at theta={r}, q={q} from {prev}"
                )
            t = max(t, prev.t)
            bound = domain.payment_bound(r)
            if bound is not None and t > bound:
                if t > bound + 1e-7 * max(1.0, bound):
                    raise DomainError(
                        f"binding payment {t:.6g} exceeds the payment bound "
                        f"{bound:.6g} at theta={r}"
                    )
                t = bound  # round-off above the bound at tiny quantity steps
        payments.append(t)
        prev = Bundle(t, q)
    return np.asarray(payments)


_INFEASIBLE = -1e12  # finite, so bracketing searches stay NaN-free


def _profile_revenue(domain, dist, mode, thetas, qs) -> float:
    try:
        payments = payments_from_breakpoints(domain, thetas, qs)
    except DomainError:
        return _INFEASIBLE
    total = 0.0
    edges = [*thetas, dist.hi]
    for k, t in enumerate(payments):
        mass = dist.mass(edges[k], edges[k + 1])
        if mass > 0.0:
            total += revenue_of(Bundle(t, qs[k]), mode) * mass
    return total


def _sweep(domain, dist, mode, thetas, qs, rounds, tol):
    """Coordinate-wise bounded maximization with endpoint probing."""
    thetas, qs = list(thetas), list(qs)
    m = len(thetas)
    best = _profile_revenue(domain, dist, mode, thetas, qs)
    for _ in range(rounds):
        improved = 0.0
        for which, k in [(w, k) for w in ("theta", "q") for k in range(m)]:
            if which == "theta":
                lo = dist.lo if k == 0 else thetas[k - 1]
                hi = dist.hi if k == m - 1 else thetas[k + 1]
                current = thetas[k]

                def apply(v):
                    trial = list(thetas)
                    trial[k] = v
                    return trial, qs
            else:
                lo = 0.0 if k == 0 else qs[k - 1]
                hi = 1.0 if k == m - 1 else qs[k + 1]
                current = qs[k]

                def apply(v):
                    trial = list(qs)
                    trial[k] = v
                    return thetas, trial
            if hi - lo < 1e-13:
                continue
            res = _sciopt.minimize_scalar(
                lambda v: -_profile_revenue(domain, dist, mode, *apply(v)),
                bounds=(lo, hi), method="bounded", options={"xatol": 1e-11},
            )
            # probe the exact endpoints: optima frequently sit on them
            cands = [float(res.x), lo, hi, current]
            vals = [_profile_revenue(domain, dist, mode, *apply(v)) for v in cands]
            j = int(np.argmax(vals))
            if vals[j] > best + 1e-15:
                improved += vals[j] - best
                best = vals[j]
                thetas, qs = (list(x) for x in apply(cands[j]))
        if improved < tol:
            break
    return thetas, qs, best


def _polish_simplex(domain, dist, mode, thetas, qs):
    m = len(thetas)
    lo, hi = dist.lo, dist.hi

    def decode(x):
        th = np.clip(np.sort(x[:m]), lo, hi)
        qq = np.clip(np.sort(x[m:]), 0.0, 1.0)
        return list(th), list(qq)

    def neg(x):
        return -_profile_revenue(domain, dist, mode, *decode(x))

    x0 = np.array([*thetas, *qs], dtype=float)
    res = _sciopt.minimize(neg, x0, method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-13,
                                    "maxiter": 400 * (2 * m), "disp": False})
    th, qq = decode(res.x)
    return th, qq, -float(res.fun)


def solve_finite(domain: PreferenceDomain, dist: TypeDistribution,
                 opts: OptimizeOptions = OptimizeOptions(),
                 mode: str = "payment") -> Solution:
    """Maximize expected revenue over mechanisms with at most
    ``opts.max_bundles`` range bundles."""
    if dist.lo < domain.lo - 1e-12 or dist.hi > domain.hi + 1e-12:
        raise DomainError(
            f"distribution support [{dist.lo}, {dist.hi}] not contained in "
            f"the domain interval [{domain.lo}, {domain.hi}]"
        )
    m = opts.max_bundles - 1
    rng = np.random.default_rng(opts.seed)

    starts = []
    ladder = [dist.ppf((k + 1) / (m + 1)) for k in range(m)]
    starts.append((list(ladder), [(k + 1) / m for k in range(m)]))
    starts.append((list(ladder), [1.0] * m))
    starts.append(([dist.ppf(0.5)] * m, [1.0] * m))
    while len(starts) < opts.restarts:
        th = sorted(dist.ppf(rng.uniform(size=m)))
        qq = sorted(rng.uniform(size=m))
        qq[-1] = 1.0 if rng.uniform() < 0.5 else qq[-1]
        starts.append((list(th), list(qq)))
    starts = starts[:opts.restarts]

    def run_start(start):
        th, qq = start
        th, qq, rev = _sweep(domain, dist, mode, th, qq,
                             opts.sweep_rounds, opts.revenue_tol * 1e-3)
        th2, qq2, rev2 = _polish_simplex(domain, dist, mode, th, qq)
        if rev2 > rev:
            th, qq, rev = th2, qq2, rev2
        return rev, tuple(th), tuple(qq)

    workers = int(os.environ.get("SC_MECH_THREADS", "1") or "1")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(starts))) as pool:
            results = list(pool.map(run_start, starts))
    else:
        results = [run_start(s) for s in starts]
    # deterministic merge: best revenue, ties broken lexicographically
    results.sort(key=lambda r: (-r[0], r[1], r[2]))
    rev, thetas, qs = results[0]
    thetas, qs = list(thetas), list(qs)
    restart_scores = sorted((r[0] for r in results), reverse=True)

    # ridge collapse: the optimum often uses fewer bundles than allowed,
    # leaving flat directions; drop one bundle at a time whenever doing so
    # costs no revenue after re-polishing
    reduced = True
    while reduced and len(thetas) > 1:
        reduced = False
        for k in range(len(thetas)):
            cth = thetas[:k] + thetas[k + 1:]
            cq = qs[:k] + qs[k + 1:]
            cth, cq, crev = _sweep(domain, dist, mode, cth, cq,
                                   opts.sweep_rounds, opts.revenue_tol * 1e-3)
            if crev >= rev - 1e-10:
                thetas, qs, rev = cth, cq, crev
                reduced = True
                break

    thetas, qs, rev = _sweep(domain, dist, mode, thetas, qs,
                             opts.sweep_rounds, 0.0)
    payments = payments_from_breakpoints(domain, thetas, qs)
    bundles = [ZERO_BUNDLE]
    for t, q in zip(payments, qs):
        z = Bundle(float(t), float(q))
        if z.t > bundles[-1].t + 1e-12 and z.q > bundles[-1].q + 1e-12:
            bundles.append(z)
    mech = from_range(domain, bundles)
    revenue = expected_revenue(domain, mech, dist, mode)

    grid = np.linspace(dist.lo, dist.hi, 200)
    report = verify_mechanism(domain, mech, grid)
    if not report.ok:
        raise ScmechError(
            "internal error: optimizer produced a mechanism failing "
            f"verification: {report.worst()}"
        )
    active = 1 + sum(
        1 for a, b in zip(mech.bundles, mech.bundles[1:])
        if b.t - a.t > COLLAPSE_TOL or b.q - a.q > COLLAPSE_TOL)
    return Solution(
        mechanism=mech,
        revenue=float(revenue),
        active_bundles=active,
        diagnostics={
            "restarts_used": len(starts),
            "restart_scores": restart_scores,
            "seed": opts.seed,
            "mode": mode,
            "max_bundles": opts.max_bundles,
        },
    )


def closed_form_deterministic(domain: PreferenceDomain,
                              dist: TypeDistribution) -> Solution:
    """Posted-price optimum for the linear-payment and win-probability
    models under a nondecreasing hazard rate.

    The price solves ``theta = (1 - cdf)/pdf`` (clamped to the bottom of
    the support) and the whole quantity is sold above it.
    """
    if domain.family.name not in ("quasilinear", "myerson"):
        raise DomainError(
            "closed form available for the quasilinear and myerson families "
            f"only, not {domain.family.name!r}"
        )
    if not has_increasing_hazard(dist):
        warnings.warn(
            "hazard rate is not nondecreasing on the grid; the posted price "
            "below is a stationary point but may not be the optimum",
            stacklevel=2)
    theta_star = inverse_virtual(dist, check=False)
    mech = from_range(domain, [ZERO_BUNDLE, Bundle(theta_star, 1.0)])
    mode = "payment" if domain.family.name == "quasilinear" else "expected_payment"
    revenue = expected_revenue(domain, mech, dist, mode)
    return Solution(mech, float(revenue), len(mech.bundles),
                    {"method": "closed_form", "reserve": theta_star,
                     "mode": mode})


def stationarity_residuals(dist: TypeDistribution, mech: FiniteMechanism,
                           mode: str = "payment") -> np.ndarray:
    """First-order residuals of the breakpoint program at a solution.

    With the multiplier of each binding indifference fixed to the negative
    survival mass at its breakpoint, the payment equations vanish
    identically and each breakpoint equation reduces to

        (1 - cdf(theta_k)) * dq_k  -  pdf(theta_k) * drev_k

    where ``drev_k`` is the step in the revenue measure (payment, or
    expected payment) across the breakpoint.  At an exact maximizer every
    residual is zero.
    """
    res = []
    prev = mech.bundles[0]
    for k, bp in enumerate(mech.breakpoints):
        cur = mech.bundles[k + 1]
        surv = 1.0 - dist.cdf(bp)
        dens = float(dist.pdf(bp))
        drev = revenue_of(cur, mode) - revenue_of(prev, mode)
        res.append(surv * (cur.q - prev.q) - dens * drev)
        prev = cur
    return np.asarray(res)
