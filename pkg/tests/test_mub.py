import math

import numpy as np
import pytest

from incodim.errors import (
    CompatiblePair,
    DegenerateChord,
    NoSolution,
    ParamOutOfRange,
    SingularDirection,
)
from incodim.feasibility import (
    FeasibilityProblem,
    Status,
    binary_pair_compatible,
    joint_feasible,
)
from incodim.mub import (
    SQRT2_INV,
    LambdaFamily,
    SearchOptions,
    Segment,
    chi_incomp_mub,
    chord_effect_params,
    find_threshold,
    lambda_family,
    mub_pair,
    segment_compatible,
    sweep_rows,
    xi_min_limit,
    xi_range_first,
    xi_range_second,
    z_value,
    _segment_slack,
)
from incodim.operators import BinaryQubitObservable, InvalidEffect


def bloch_pair_at(t, phi0, psi0, xi1, xi2):
    c1, w1 = chord_effect_params(t, phi0, psi0, xi1)
    c2, w2 = chord_effect_params(t, math.pi / 2 - phi0, psi0, xi2)
    m1 = c1 * np.array([math.cos(xi1), math.sin(xi1), 0.0])
    m2 = c2 * np.array([math.sin(xi2), math.cos(xi2), 0.0])
    return BinaryQubitObservable(w1, m1), BinaryQubitObservable(w2, m2)


def test_chord_effect_params_at_zero_recovers_pair():
    c, w = chord_effect_params(0.8, 0.7, 0.4, 0.0)
    assert c == pytest.approx(0.8, abs=1e-15)
    assert w == pytest.approx(0.0, abs=1e-15)


def test_chord_effect_params_match_endpoint_statistics():
    t, phi0, psi0, xi = 1.0, math.pi / 4, math.pi / 8, 0.1
    c, w = chord_effect_params(t, phi0, psi0, xi)
    for phi in (phi0 - psi0, phi0 + psi0):
        target = 0.5 + 0.5 * t * math.cos(phi)
        model = 0.5 * (1 + w) + 0.5 * c * math.cos(phi - xi)
        assert model == pytest.approx(target, abs=1e-12)


def test_chord_effect_params_pole():
    with pytest.raises(SingularDirection):
        chord_effect_params(0.8, 0.7, 0.4, 0.7)


def test_xi_range_collapses_at_full_sharpness():
    r = xi_range_first(1.0, math.pi / 4, math.pi / 8)
    assert r.xi_min == pytest.approx(0.0, abs=1e-12)
    assert r.xi_max == pytest.approx(0.0, abs=1e-12)
    r2 = xi_range_second(1.0, math.pi / 4, math.pi / 8)
    assert r2.xi_min == pytest.approx(0.0, abs=1e-12)


def test_xi_min_approaches_limit_for_thin_chords():
    r = xi_range_first(SQRT2_INV, math.pi / 4, 1e-4)
    assert r.xi_min == pytest.approx(-math.pi / 4, abs=1e-3)


def test_xi_range_residuals_random():
    rng = np.random.default_rng(42)
    for _ in range(300):
        t = rng.uniform(0.05, 1.0)
        phi0 = rng.uniform(0.01, math.pi / 2 - 0.01)
        psi0 = rng.uniform(0.01, math.pi / 2 - 0.01)
        r = xi_range_first(t, phi0, psi0)
        c_min, w_min = chord_effect_params(t, phi0, psi0, r.xi_min)
        c_max, w_max = chord_effect_params(t, phi0, psi0, r.xi_max)
        assert abs(1 - w_min - c_min) < 1e-10
        assert abs(1 + w_max - c_max) < 1e-10
        assert -math.pi + phi0 < r.xi_min <= 0.0 <= r.xi_max < phi0


def test_xi_range_rejects_bad_parameters():
    with pytest.raises(NoSolution):
        xi_range_first(1.2, 0.5, 0.5)
    with pytest.raises(NoSolution):
        xi_range_first(0.8, 0.0, 0.5)


def test_xi_range_second_is_reflected_first():
    t, phi0, psi0 = SQRT2_INV, math.pi / 8, 1e-4
    second = xi_range_second(t, phi0, psi0)
    first = xi_range_first(t, 3 * math.pi / 8, psi0)
    assert second.xi_min == first.xi_min
    assert second.xi_max == first.xi_max
    # self-dual point
    a = xi_range_first(0.9, math.pi / 4, 0.3)
    b = xi_range_second(0.9, math.pi / 4, 0.3)
    assert a.xi_min == b.xi_min and a.xi_max == b.xi_max


def test_xi_min_limit_anchors():
    assert xi_min_limit(math.pi / 4) == pytest.approx(-math.pi / 4, abs=1e-12)
    assert xi_min_limit(math.pi / 2 - 1e-7) == pytest.approx(
        -math.acos(2 * math.sqrt(2) / 3), abs=1e-6
    )
    with pytest.raises(ParamOutOfRange):
        xi_min_limit(0.0)


def test_xi_min_limit_concavity():
    grid = np.arange(1e-3, math.pi / 2 - 1e-3, 1e-3)
    vals = np.array([xi_min_limit(p) for p in grid])
    second_diff = vals[2:] - 2 * vals[1:-1] + vals[:-2]
    assert second_diff.max() <= 1e-12


def test_limit_sum_bound():
    grid = np.arange(1e-3, math.pi / 2 - 1e-3, 1e-3)
    sums = np.array([xi_min_limit(p) + xi_min_limit(math.pi / 2 - p) for p in grid])
    assert sums.max() <= -math.pi / 2 + 1e-9


def test_xi_min_strictly_decreasing_in_psi0():
    for phi0 in (0.3, math.pi / 4, 1.2):
        psis = np.arange(0.02, math.pi / 2 - 0.02, 1e-3)
        vals = np.array([xi_range_first(SQRT2_INV, phi0, p).xi_min for p in psis])
        assert (np.diff(vals) < 0).all()


def test_z_value_at_collapse():
    assert z_value(1.0, math.pi / 4, math.pi / 8) == pytest.approx(1.0, abs=1e-12)


def test_z_value_negative_band_at_critical_noise():
    """Inside the thin band where the extreme angles sum just below -pi/2,
    the indicator is bounded away from zero by -(sin xi_hat)^2 / 4."""
    xi_hat = math.acos(2 * math.sqrt(2) / 3)
    eps = (math.sin(xi_hat) ** 2) / 16 * 0.999
    delta = math.acos(1 - eps)
    target = -math.pi / 2 - delta / 2
    found = 0
    for phi0 in np.linspace(0.55, math.pi / 2 - 0.55, 7):
        lo, hi = 1e-3, math.pi / 4 - 1e-3

        def total(psi0):
            return (
                xi_range_first(SQRT2_INV, phi0, psi0).xi_min
                + xi_range_second(SQRT2_INV, phi0, psi0).xi_min
            )

        if not total(lo) > target > total(hi):
            continue
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if total(mid) > target:
                lo = mid
            else:
                hi = mid
        psi0 = 0.5 * (lo + hi)
        r1 = xi_range_first(SQRT2_INV, phi0, psi0)
        r2 = xi_range_second(SQRT2_INV, phi0, psi0)
        if psi0 >= math.pi / 4 or r1.xi_min <= -math.pi / 2 or r2.xi_min <= -math.pi / 2:
            continue
        z = z_value(SQRT2_INV, phi0, psi0)
        assert z < -0.25 * math.sin(xi_hat) ** 2
        found += 1
    assert found >= 3


def test_z_nonpositive_certifies_compatible_extreme_pair():
    rng = np.random.default_rng(10)
    found = 0
    for _ in range(400):
        t = rng.uniform(SQRT2_INV + 1e-3, 1.0)
        phi0 = rng.uniform(0.05, math.pi / 2 - 0.05)
        psi0 = rng.uniform(0.05, math.pi / 2 - 0.05)
        if z_value(t, phi0, psi0) > 0:
            continue
        r1 = xi_range_first(t, phi0, psi0)
        r2 = xi_range_second(t, phi0, psi0)
        a, b = bloch_pair_at(t, phi0, psi0, r1.xi_min, r2.xi_min)
        assert binary_pair_compatible(a, b)
        found += 1
    assert found > 50


def test_segment_boundaries_are_compatible():
    assert segment_compatible(Segment(0.95, math.pi / 4, math.pi / 2))
    assert segment_compatible(Segment(0.95, 0.0, 0.3))
    assert segment_compatible(Segment(0.95, math.pi / 2, 0.3))


def test_sharp_segment_with_collapsed_ranges_is_incompatible():
    assert not segment_compatible(Segment(1.0, math.pi / 4, math.pi / 8))


def test_segment_compatible_matches_pair_criterion_scan():
    rng = np.random.default_rng(14)
    for _ in range(10):
        t = rng.uniform(0.75, 1.0)
        phi0 = rng.uniform(0.2, math.pi / 2 - 0.2)
        psi0 = rng.uniform(0.2, math.pi / 2 - 0.2)
        seg = Segment(t, phi0, psi0)
        verdict = segment_compatible(seg, grid_n=48)
        r1 = xi_range_first(t, phi0, psi0)
        r2 = xi_range_second(t, phi0, psi0)
        found = False
        for xi1 in np.linspace(r1.xi_min, r1.xi_max, 30):
            for xi2 in np.linspace(r2.xi_min, r2.xi_max, 30):
                a, b = bloch_pair_at(t, phi0, psi0, xi1, xi2)
                if binary_pair_compatible(a, b):
                    found = True
                    break
            if found:
                break
        if found:
            assert verdict
        # a coarse direct scan can miss compatible pairs near edges, so the
        # reverse implication is only checked through the oracle test below


def test_segment_grid_precondition():
    with pytest.raises(ParamOutOfRange):
        segment_compatible(Segment(0.9, 0.5, 0.5), grid_n=8)


def test_segment_oracle_cross_check():
    rng = np.random.default_rng(20)
    checked = 0
    while checked < 25:
        t = rng.uniform(SQRT2_INV + 5e-3, 1.0)
        phi0 = rng.uniform(0.05, math.pi / 2 - 0.05)
        psi0 = rng.uniform(0.05, math.pi / 2 - 0.05)
        slack = _segment_slack(t, phi0, psi0, 48)
        if math.isfinite(slack) and abs(slack) <= 1e-4:
            continue  # decision margin too thin for a clean cross-check
        seg = Segment(t, phi0, psi0)
        res = joint_feasible(FeasibilityProblem(mub_pair(t), seg.endpoint_states()))
        if res.status is Status.AMBIGUOUS:
            continue
        assert segment_compatible(seg, 48) == (res.status is Status.FEASIBLE)
        checked += 1


def test_full_space_restriction_equivalence():
    """Restricting to the equatorial disk preserves the compatibility verdict."""
    from incodim.feasibility import busch_compatible
    from incodim.operators import State, identity, state_from_bloch

    disk_span = (
        State(identity(2) / 2),
        state_from_bloch([1.0, 0.0, 0.0]),
        state_from_bloch([0.0, 1.0, 0.0]),
    )
    for t in (0.3, 0.69, 0.72, 0.9, 1.0):
        res = joint_feasible(FeasibilityProblem(mub_pair(t), disk_span))
        busch = busch_compatible([t, 0, 0], [0, t, 0])
        assert (res.status is Status.FEASIBLE) == busch


def test_chi_incomp_values():
    assert chi_incomp_mub(1.0) == 2
    assert chi_incomp_mub(SQRT2_INV + 1e-3) == 3
    with pytest.raises(CompatiblePair):
        chi_incomp_mub(0.5)
    with pytest.raises(ParamOutOfRange):
        chi_incomp_mub(1.2)


def test_chi_monotone_on_sweep():
    values = [chi_incomp_mub(t, SearchOptions(grid_n=32)) for t in np.arange(0.72, 1.001, 0.04)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_find_threshold_rejects_small_tolerance():
    with pytest.raises(ParamOutOfRange):
        find_threshold(1e-6)


def test_lambda_family_base_point():
    seg = Segment(0.9, 0.7, 0.4)
    fam = lambda_family(0.9, seg.r1, seg.r2)
    member = fam.member(0.0)
    assert member.bias == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(member.bloch, [0.9, 0.0, 0.0], atol=1e-12)
    assert fam.lambda_lo < 0.0 < fam.lambda_hi


def test_lambda_family_matches_xi_range_endpoints():
    rng = np.random.default_rng(33)
    for _ in range(50):
        t = rng.uniform(0.4, 0.999)
        phi0 = rng.uniform(0.05, math.pi / 2 - 0.05)
        psi0 = rng.uniform(0.05, math.pi / 2 - 0.05)
        seg_r1 = np.array([math.cos(phi0 - psi0), math.sin(phi0 - psi0)])
        seg_r2 = np.array([math.cos(phi0 + psi0), math.sin(phi0 + psi0)])
        fam = lambda_family(t, seg_r1, seg_r2)
        r = xi_range_first(t, phi0, psi0)
        c_min, w_min = chord_effect_params(t, phi0, psi0, r.xi_min)
        c_max, w_max = chord_effect_params(t, phi0, psi0, r.xi_max)
        hi = fam.member(fam.lambda_hi)
        lo = fam.member(fam.lambda_lo)
        assert hi.bias == pytest.approx(w_min, abs=1e-9)
        assert np.allclose(
            hi.bloch[:2], c_min * np.array([math.cos(r.xi_min), math.sin(r.xi_min)]), atol=1e-9
        )
        assert lo.bias == pytest.approx(w_max, abs=1e-9)
        assert np.allclose(
            lo.bloch[:2], c_max * np.array([math.cos(r.xi_max), math.sin(r.xi_max)]), atol=1e-9
        )


def test_lambda_family_boundary_saturation():
    seg = Segment(0.85, 0.6, 0.5)
    fam = lambda_family(0.85, seg.r1, seg.r2)
    fam.member(fam.lambda_hi)
    fam.member(fam.lambda_lo)
    with pytest.raises(InvalidEffect):
        fam.member(fam.lambda_hi + 1e-6)
    with pytest.raises(InvalidEffect):
        fam.member(fam.lambda_lo - 1e-6)


def test_lambda_family_degenerate_chords():
    with pytest.raises(DegenerateChord):
        lambda_family(0.9, [1.0, 0.0], [-1.0, 0.0])
    with pytest.raises(DegenerateChord):
        lambda_family(0.9, [0.6, 0.8], [0.6, -0.8])


def test_sweep_rows_columns_and_shortcut():
    rows = sweep_rows(0.8, 16)
    assert len(rows) == 256
    expected_keys = {"t", "phi0", "psi0", "xi1_min", "xi1_max", "xi2_min", "xi2_max", "Z", "compatible"}
    assert set(rows[0]) == expected_keys
    assert all(row["compatible"] for row in rows)  # 0.8 is below the threshold
    rows_sharp = sweep_rows(1.0, 16)
    assert any(not row["compatible"] for row in rows_sharp)
