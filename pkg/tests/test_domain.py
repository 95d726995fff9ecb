import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from scmech.domain import (Bundle, FAMILIES, Ordering, ZERO_BUNDLE,
                           make_domain, validate_single_crossing)
from scmech.errors import DomainError, RichnessError

QL = make_domain("quasilinear")
IE = make_domain("income_effect")
PP = make_domain("payment_param")
TP = make_domain("two_param")
SQ = make_domain("sqrt_quasilinear")
MY = make_domain("myerson")
RA = make_domain("risk_averse")
PQ = make_domain("power_q")

RICH = [QL, IE, PP, TP, SQ, MY, RA]


# -- canonical payment ---------------------------------------------------------

def test_canonical_quasilinear():
    assert QL.canonical_payment(2.0, Bundle(1.0, 0.5)) == pytest.approx(2.0)


def test_canonical_identity_at_full_quantity():
    for dom in RICH:
        assert dom.canonical_payment(0.9, Bundle(0.7, 1.0)) == pytest.approx(0.7)


def test_canonical_risk_averse_with_utility_oracle():
    # oracle: the payment t' solving sqrt(r - t') = q*sqrt(r - t)
    r, z = 4.0, Bundle(0.0, 0.5)
    oracle = brentq(lambda tp: math.sqrt(r - tp) - z.q * math.sqrt(r - z.t),
                    0.0, r)
    assert oracle == pytest.approx(3.0, abs=1e-12)
    assert RA.canonical_payment(r, z) == pytest.approx(oracle, abs=1e-12)


def test_canonical_income_effect_with_utility_oracle():
    r, z = 3.0, Bundle(0.4, 0.3)
    oracle = brentq(
        lambda tp: (r * 1.0 - tp**2) - (r * math.sqrt(z.q) - z.t**2), 0.0, 10.0)
    assert IE.canonical_payment(r, z) == pytest.approx(oracle, abs=1e-10)


def test_canonical_errors():
    with pytest.raises(DomainError):
        TP.canonical_payment(3.5, Bundle(0.1, 0.5))  # parameter outside (0, 3)
    with pytest.raises(DomainError):
        RA.canonical_payment(1.0, Bundle(1.5, 0.5))  # above the payment bound
    with pytest.raises(DomainError):
        QL.canonical_payment(1.0, Bundle(-0.1, 0.5))
    with pytest.raises(DomainError):
        QL.canonical_payment(1.0, Bundle(0.1, 1.2))


# -- pairwise comparison -------------------------------------------------------

def test_prefers_quasilinear_strict():
    assert QL.prefers(1.0, Bundle(0.5, 0.8), Bundle(0.2, 0.4)) is Ordering.A_STRICT


def test_prefers_same_bundle_indifferent():
    for dom in RICH:
        z = Bundle(0.3, 0.4)
        assert dom.prefers(0.8, z, z) is Ordering.INDIFFERENT


def test_prefers_knife_edge_indifference():
    # 5*0.2 - 1 = 5*0.6 - 3 = 0
    assert QL.prefers(5.0, Bundle(1.0, 0.2), Bundle(3.0, 0.6)) is Ordering.INDIFFERENT


def test_restricted_zero_equivalence():
    for dom in (MY, RA):
        for q in (0.0, 0.3, 0.7, 1.0):
            assert dom.prefers(2.0, ZERO_BUNDLE, Bundle(2.0, q)) is Ordering.INDIFFERENT
        # free disposal of payment at q = 0
        assert dom.prefers(2.0, ZERO_BUNDLE, Bundle(1.2, 0.0)) is Ordering.INDIFFERENT


# -- special preference --------------------------------------------------------

def test_special_quasilinear_slope():
    assert QL.special_preference(Bundle(1, 0.2), Bundle(3, 0.6)) == pytest.approx(5.0)


def test_special_income_effect():
    r = IE.special_preference(Bundle(0, 0), Bundle(2, 1))
    assert r == pytest.approx(4.0)
    assert IE.prefers(r, Bundle(0, 0), Bundle(2, 1)) is Ordering.INDIFFERENT


def test_special_non_diagonal_rejected():
    with pytest.raises(DomainError):
        QL.special_preference(Bundle(1, 0.5), Bundle(1, 0.8))


def test_special_outside_interval_rejected():
    narrow = make_domain("quasilinear", 0.5, 1.5)
    with pytest.raises(RichnessError):
        narrow.special_preference(Bundle(1, 0.2), Bundle(3, 0.6))  # slope 5


def test_special_by_bisection_power_q():
    # payment gap 0.2 lies between the quantity-power gaps at the two ends
    # of the exponent interval, so the indifference parameter is interior
    a, b = Bundle(0.2, 0.4), Bundle(0.4, 0.9)
    r = PQ.special_preference(a, b)
    assert 0.25 < r < 1 / 3
    assert PQ.prefers(r, a, b, tol=1e-8) is Ordering.INDIFFERENT


def test_special_two_param_spans_both_branches():
    # low coefficient lands on the first branch, high on the second
    r1 = TP.special_preference(Bundle(0.0, 0.0), Bundle(1.0, 1.0))
    assert 0 < r1 <= 2.0
    r2 = TP.special_preference(Bundle(0.0, 0.25), Bundle(2.0, 1.0))
    assert 2.0 < r2 < 3.0
    for r, pair in ((r1, (Bundle(0, 0), Bundle(1, 1))),
                    (r2, (Bundle(0, 0.25), Bundle(2, 1)))):
        assert TP.prefers(r, *pair) is Ordering.INDIFFERENT


# -- payment bound -------------------------------------------------------------

def test_payment_bound():
    assert RA.payment_bound(3.0) == 3.0
    assert MY.payment_bound(0.7) == 0.7
    assert QL.payment_bound(3.0) is None
    with pytest.raises(DomainError):
        TP.payment_bound(5.0)


# -- family structure ----------------------------------------------------------

def test_two_param_chart_continuous_at_junction():
    z = Bundle(0.4, 0.3)
    below = TP.canonical_payment(2.0 - 1e-9, z)
    above = TP.canonical_payment(2.0 + 1e-9, z)
    assert below == pytest.approx(above, abs=1e-8)


def test_power_q_canonical_continuous_at_splice():
    from scmech.domain import POWER_Q_SPLICE

    qs = POWER_Q_SPLICE
    for r in (0.25, 0.3, 1 / 3):
        lo = PQ.canonical_payment(r, Bundle(0.3, qs - 1e-10))
        hi = PQ.canonical_payment(r, Bundle(0.3, qs + 1e-10))
        assert lo == pytest.approx(hi, abs=1e-8)


def test_income_effect_payment_increments_shrink():
    # two chords of one preference: the increment needed to move to the
    # higher quantity falls as the starting payment rises
    rng = np.random.default_rng(5)
    for _ in range(50):
        r = float(rng.uniform(0.5, 6.0))
        q_lo, q_hi = np.sort(rng.uniform(0.05, 1.0, 2))
        if q_hi - q_lo < 1e-3:
            continue
        t1, t2 = np.sort(rng.uniform(0.0, 2.0, 2))
        if t2 - t1 < 1e-3:
            continue
        inc1 = float(IE.curve_payment(r, IE.canonical_payment(r, Bundle(t1, q_lo)), q_hi)) - t1
        inc2 = float(IE.curve_payment(r, IE.canonical_payment(r, Bundle(t2, q_lo)), q_hi)) - t2
        assert inc2 < inc1


# -- property tests ------------------------------------------------------------

DOMAIN_NAMES = ["quasilinear", "sqrt_quasilinear", "income_effect",
                "payment_param", "two_param", "myerson", "risk_averse"]


def _admissible(dom, r, t, q):
    return Bundle(min(t, 0.999 * r), q) if dom.restricted else Bundle(t, q)


@settings(max_examples=150, deadline=None)
@given(name=st.sampled_from(DOMAIN_NAMES),
       r=st.floats(0.2, 2.8), t=st.floats(0.0, 3.0), q=st.floats(0.0, 1.0))
def test_canonical_consistency(name, r, t, q):
    dom = make_domain(name)
    z = _admissible(dom, r, t, q)
    tp = dom.canonical_payment(r, z)
    assert dom.prefers(r, Bundle(tp, 1.0), z) is Ordering.INDIFFERENT


@settings(max_examples=150, deadline=None)
@given(name=st.sampled_from(DOMAIN_NAMES),
       t=st.floats(0.05, 1.5), q=st.floats(0.05, 0.95),
       dt=st.floats(0.05, 1.0), dq=st.floats(0.05, 0.9))
def test_order_preserved_around_special_preference(name, t, q, dt, dq):
    dom = make_domain(name)
    a = Bundle(t, q)
    b = Bundle(t + dt, min(q + dq, 1.0))
    if b.q - a.q < 1e-4:
        return
    try:
        r0 = dom.special_preference(a, b)
    except DomainError:
        return
    for r, want in ((0.9 * r0, Ordering.A_STRICT), (1.1 * r0, Ordering.B_STRICT)):
        if not dom.lo <= r <= dom.hi:
            continue
        if dom.restricted and b.t > r:
            continue
        got = dom.prefers(r, a, b)
        if got is not Ordering.INDIFFERENT:  # razor-thin gaps stay within tol
            assert got is want


@settings(max_examples=150, deadline=None)
@given(name=st.sampled_from(DOMAIN_NAMES),
       t=st.floats(0.0, 1.4), q=st.floats(0.0, 0.99))
def test_canonical_strictly_increasing_in_parameter(name, t, q):
    dom = make_domain(name)
    rs = [0.5, 1.0, 1.8, 2.6]
    z = _admissible(dom, min(rs), t, q)
    vals = [dom.canonical_payment(r, z) for r in rs]
    assert all(b > a for a, b in zip(vals, vals[1:]))


# -- single-crossing validation ------------------------------------------------

ANCHORS = [Bundle(t, q) for t in (0.25, 0.8, 1.4) for q in (0.2, 0.5, 0.85)]


def test_validator_passes_quasilinear():
    report = validate_single_crossing(QL, ANCHORS, np.linspace(0.4, 4.0, 10))
    assert report.ok


def test_validator_passes_income_effect():
    report = validate_single_crossing(IE, ANCHORS, np.linspace(0.4, 4.0, 10))
    assert report.ok


def test_validator_single_preference_trivially_ok():
    report = validate_single_crossing(QL, ANCHORS, [1.0])
    assert report.ok and report.n_params == 1


def test_validator_flags_power_q_raw_tangency():
    raw = make_domain("power_q_raw", 0.05, 0.95)
    anchors = [Bundle(1.0, 0.125), Bundle(1.0, 0.5), Bundle(0.5, 0.3)]
    report = validate_single_crossing(raw, anchors, [1 / 3, 2 / 3],
                                      q_grid=np.linspace(1e-3, 1.0, 401))
    assert not report.ok
    tangent = [w for w in report.tangency_witnesses
               if abs(w.location.t - 1.0) < 0.05 and abs(w.location.q - 0.125) < 0.05]
    assert tangent, "tangency near (1, 1/8) not reported"


def test_validator_passes_spliced_power_q_above_splice():
    from scmech.domain import POWER_Q_SPLICE

    anchors = [Bundle(t, q) for t in (0.2, 0.6, 1.0)
               for q in (POWER_Q_SPLICE + 0.01, 0.3, 0.7, 0.95)]
    report = validate_single_crossing(
        PQ, anchors, np.linspace(0.25, 1 / 3, 7),
        q_grid=np.linspace(POWER_Q_SPLICE, 1.0, 301))
    assert report.ok


def test_validator_empty_grid_rejected():
    with pytest.raises(DomainError):
        validate_single_crossing(QL, [], [1.0, 2.0])


# -- registry extension point ----------------------------------------------------

def test_registering_a_new_family_plugs_into_everything():
    from scmech.domain import Family, register_family
    from scmech.mechanism import from_range
    from scmech.verify import check_strategy_proof

    name = "cubic_quantity_test"
    if name not in FAMILIES:
        register_family(Family(
            name, "classical", 0.0, math.inf,
            utility=lambda r, t, q: r * q**3 - t,
            canonical=lambda r, t, q: t + r * (1.0 - q**3),
            curve_payment=lambda r, c, q: c - r * (1.0 - q**3),
            special=lambda a, b: (b[0] - a[0]) / (b[1] ** 3 - a[1] ** 3),
        ))
    dom = make_domain(name)
    assert dom.canonical_payment(2.0, Bundle(0.5, 1.0)) == pytest.approx(0.5)
    mech = from_range(dom, [ZERO_BUNDLE, Bundle(0.1, 0.6), Bundle(1.0, 1.0)])
    grid = np.linspace(0.2, 3.0, 150)
    assert check_strategy_proof(dom, mech.evaluate, grid).ok
    report = validate_single_crossing(
        dom, [Bundle(0.4, 0.5)], [0.7, 1.3, 2.1])
    assert report.ok
    with pytest.raises(ValueError):
        register_family(FAMILIES[name])  # duplicate names are rejected
