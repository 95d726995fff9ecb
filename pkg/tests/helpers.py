"""Shared test utilities: random feasible ranges and verification grids."""

import numpy as np

from scmech.domain import Bundle, ZERO_BUNDLE
from scmech.errors import DomainError, InfeasibleRangeError
from scmech.mechanism import from_range


def random_feasible_range(domain, rng, max_tries=400, t_hi=2.5):
    """Rejection-sample a strictly diagonal range supportable on ``domain``."""
    for _ in range(max_tries):
        k = int(rng.integers(2, 6))
        ts = np.sort(rng.uniform(0.05, t_hi, k))
        qs = np.sort(rng.uniform(0.02, 1.0, k))
        if np.any(np.diff(ts) < 5e-3) or np.any(np.diff(qs) < 5e-3):
            continue
        bundles = [Bundle(float(t), float(q)) for t, q in zip(ts, qs)]
        if domain.restricted:
            bundles = [ZERO_BUNDLE, *bundles]
        try:
            return from_range(domain, bundles)
        except (DomainError, InfeasibleRangeError):
            continue
    raise RuntimeError(f"no feasible range found for {domain.family.name}")


def grid_around(mech, n=200):
    """Parameter grid spanning the mechanism's breakpoints."""
    domain = mech.domain
    bps = mech.breakpoints or (1.0,)
    lo = max(domain.lo + 1e-9, 0.5 * min(bps))
    hi = 1.3 * max(bps) + 0.1
    if np.isfinite(domain.hi):
        hi = min(hi, domain.hi - 1e-9)
    return np.linspace(lo, hi, n)
