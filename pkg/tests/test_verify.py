import numpy as np
import pytest

from helpers import grid_around, random_feasible_range
from scmech import measure
from scmech.domain import Bundle, ZERO_BUNDLE, make_domain
from scmech.errors import TractabilityError
from scmech.mechanism import FiniteMechanism, from_range
from scmech.verify import (brute_force_optimal, check_individual_rationality,
                           check_shape, check_strategy_proof, verify_mechanism)

QL = make_domain("quasilinear")
QL12 = make_domain("quasilinear", 1.0, 2.0)


def linear_continuum_mech(r):
    """Continuum-range rule on [1, 2]: monotone, continuous indirect
    utility, individually rational, and not strategy-proof."""
    return Bundle(r / 3 - 1 / 3, r - 1)


def test_linear_continuum_mechanism_fails_ic():
    grid = np.linspace(1.0, 2.0, 101)
    report = check_strategy_proof(QL12, linear_continuum_mech, grid)
    assert not report.ok
    by_pair = {(v.truthful_r, v.deviant_r): v.gain for v in report.violations}
    # the buyer at 1.5 gains by reporting the top type
    assert by_pair[(1.5, 2.0)] == pytest.approx(7 / 12, abs=1e-9)


def test_linear_continuum_violation_persists_under_refinement():
    for n in (101, 1001):
        report = check_strategy_proof(QL12, linear_continuum_mech,
                                      np.linspace(1.0, 2.0, n))
        assert not report.ok
        assert report.worst().gain > 0.5


def test_linear_continuum_mechanism_is_individually_rational():
    report = check_individual_rationality(QL12, linear_continuum_mech,
                                          np.linspace(1.0, 2.0, 101))
    assert report.ok


def test_constructed_mechanism_passes_everything():
    mech = from_range(QL, [ZERO_BUNDLE, Bundle(1, 0.5), Bundle(3, 1)])
    grid = grid_around(mech, 200)
    assert check_strategy_proof(QL, mech.evaluate, grid).ok
    assert check_individual_rationality(QL, mech.evaluate, grid).ok
    assert check_shape(QL, mech, grid).ok
    assert verify_mechanism(QL, mech, grid).ok


def test_constant_mechanism_trivially_strategy_proof():
    mech = from_range(QL, [Bundle(0.2, 0.6)])
    grid = np.linspace(0.1, 3.0, 100)
    assert check_strategy_proof(QL, mech.evaluate, grid).ok
    # but charging for nothing is not individually rational
    broke = from_range(QL, [Bundle(1.0, 0.0)])
    report = check_individual_rationality(QL, broke.evaluate, grid)
    assert not report.ok and all(v.kind == "IR" for v in report.violations)


def test_zero_purchase_mechanism_flagged_by_ir():
    # allocating (t, 0) with t > 0 is strictly worse than walking away
    report = check_individual_rationality(
        QL, lambda r: Bundle(1.0, 0.0), np.linspace(0.5, 2.0, 20))
    assert len(report.violations) == 20


def test_teaser_mechanism_fails_monotonicity_only():
    # full bundle below the cheap threshold, nothing in the middle, full
    # bundle again on top; indirect utility stays continuous
    mech = FiniteMechanism(QL12, (Bundle(1.0, 1.0), ZERO_BUNDLE, Bundle(2.0, 1.0)),
                           (1.0, 2.0))
    dom = make_domain("quasilinear", 0.5, 3.0)
    mech = FiniteMechanism(dom, mech.bundles, mech.breakpoints)
    report = check_shape(dom, mech, np.linspace(0.5, 3.0, 200))
    kinds = {v.kind for v in report.violations}
    assert kinds == {"MONO"}


def test_jump_without_indifference_fails_continuity_only():
    lo, hi = Bundle(0.2, 0.3), Bundle(1.2, 0.8)
    indiff = QL.special_preference(lo, hi)  # 2.0
    mech = FiniteMechanism(QL, (lo, hi), (indiff - 0.5,))
    report = check_shape(QL, mech, np.linspace(0.5, 3.0, 200))
    kinds = {v.kind for v in report.violations}
    assert kinds == {"CONT"}
    assert report.violations[0].truthful_r == pytest.approx(indiff - 0.5)


def test_ic_pass_implies_shape_pass():
    rng = np.random.default_rng(7)
    for name in ("quasilinear", "income_effect", "payment_param", "risk_averse"):
        dom = make_domain(name)
        for _ in range(5):
            mech = random_feasible_range(dom, rng)
            grid = grid_around(mech, 200)
            assert check_strategy_proof(dom, mech.evaluate, grid).ok
            assert check_shape(dom, mech, grid).ok


def test_restricted_ic_skips_unaffordable_deviations():
    ra = make_domain("risk_averse")
    mech = from_range(ra, [ZERO_BUNDLE, Bundle(1.0, 0.5), Bundle(2.5, 1.0)])
    grid = np.linspace(0.2, 5.0, 150)
    assert check_strategy_proof(ra, mech.evaluate, grid).ok


def test_report_ordering_is_deterministic():
    report = check_strategy_proof(QL12, linear_continuum_mech,
                                  np.linspace(1.0, 2.0, 41))
    keys = [(v.truthful_r, v.deviant_r) for v in report.violations]
    assert keys == sorted(keys)


def test_report_serialization_round_trip():
    report = check_strategy_proof(QL12, linear_continuum_mech,
                                  np.linspace(1.0, 2.0, 11))
    data = report.to_dict()
    assert data["ok"] is False
    assert len(data["violations"]) == len(report.violations)
    rows = report.to_csv_rows()
    assert rows[0].keys() == {"kind", "truthful_r", "deviant_r", "gain"}


# -- brute force ----------------------------------------------------------------

T_GRID = np.round(np.arange(0.0, 1.0001, 0.05), 10)
Q_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


def test_brute_force_quasilinear_reserve_price():
    dom = make_domain("quasilinear", 0.0, 5.0)
    mech, rev = brute_force_optimal(dom, measure.uniform(0, 1),
                                    T_GRID, Q_GRID, max_bundles=2)
    assert rev == pytest.approx(0.25, abs=1e-12)
    assert mech.bundles == (ZERO_BUNDLE, Bundle(0.5, 1.0))


def test_brute_force_single_bundle_earns_nothing():
    dom = make_domain("quasilinear", 0.0, 5.0)
    mech, rev = brute_force_optimal(dom, measure.uniform(0, 1),
                                    T_GRID, Q_GRID, max_bundles=1)
    assert rev == 0.0
    assert mech.bundles == (ZERO_BUNDLE,)


def test_brute_force_myerson_expected_payment():
    dom = make_domain("myerson", 0.0, 5.0)
    mech, rev = brute_force_optimal(dom, measure.uniform(0, 1),
                                    T_GRID, Q_GRID, max_bundles=2,
                                    mode="expected_payment")
    assert rev == pytest.approx(0.25, abs=1e-12)


def test_brute_force_guard():
    dom = make_domain("quasilinear", 0.0, 5.0)
    with pytest.raises(TractabilityError):
        brute_force_optimal(dom, measure.uniform(0, 1),
                            np.linspace(0, 1, 300), np.linspace(0, 1, 50),
                            max_bundles=4)
