"""Verification experiments: statistical gates, exact identities, norms.

Counting oracles are rebuilt here by explicit residue enumeration, and the
per-row bounds are recomputed from the budget functions they cite.
"""
import math
from fractions import Fraction

import numpy as np
import pytest

from haarshift.grid import (
    ScaleWindow,
    cube_at,
    euclidean_distance,
    sample_shift,
    zero_shift,
)
from haarshift.haar import HaarFunction, shift_cell_matrix
from haarshift.kernel import kernel_omega, size_budget
from haarshift.prf import Stream
from haarshift.shiftfamily import ShiftFamilySpec, build_shift
from haarshift.verify import (
    _near_boundary_count_le,
    _near_boundary_count_lt,
    boundary_lemma_check,
    default_window,
    dense_matrix_via_apply,
    ek_decay_check,
    fit_log_slope,
    fubini_check,
    holder_sweep,
    norm_suite,
    single_shift_holder_failure,
    size_estimate_sweep,
    vanishing_identity_check,
    vanishing_trials,
)

ZERO_TABLE = ShiftFamilySpec(
    delta=0.5, complexity_cap=2, lambda_rule="custom", lambda_table=((0, 0, 0.0),)
)


def test_fit_log_slope_recovers_power_law():
    xs = [0.1, 0.2, 0.4, 0.8]
    ys = [3.0 * x**1.7 for x in xs]
    assert fit_log_slope(xs, ys) == pytest.approx(1.7, abs=1e-12)
    assert math.isnan(fit_log_slope([1.0], [2.0]))


def test_report_json_shape():
    rep = boundary_lemma_check(1, [0.25], 2000, seed=1)
    obj = rep.to_json()
    assert obj["schema"] == 1
    assert obj["n_rows"] == len(rep.rows) == 1
    assert obj["experiment"] == "lemma"
    assert isinstance(obj["passed"], bool)


# ---------------------------------------------------------------------------
# Boundary lemma.


def test_near_boundary_counters_match_enumeration():
    for side in (4, 8, 16, 32):
        for t in (
            Fraction(0),
            Fraction(1, 2),
            Fraction(1),
            Fraction(3, 2),
            Fraction(7, 3),
            Fraction(side, 4),
            Fraction(side, 2),
        ):
            want = sum(1 for r in range(side) if min(r, side - r) <= t)
            assert _near_boundary_count_le(side, t) == want, (side, t)
        for t_sq in (0, 1, 2, 4, 5, 9, 16, 50, side * side):
            want = sum(1 for r in range(side) if min(r, side - r) ** 2 < t_sq)
            assert _near_boundary_count_lt(side, t_sq) == want, (side, t_sq)


def test_lemma_continuum_values():
    rep = boundary_lemma_check(1, [0.25, 0.0], 20000, seed=7)
    by_tau = {r["parameter"]: r for r in rep.rows}
    assert by_tau[0.25]["exact_or_bound"] == 0.5
    assert by_tau[0.0]["exact_or_bound"] == 0.0
    assert rep.passed
    rep2 = boundary_lemma_check(2, [0.25], 20000, seed=7)
    assert rep2.rows[0]["exact_or_bound"] == 0.75
    assert rep2.passed


def test_lemma_discrete_exact_from_residues():
    # d = 1 at a coarse scale: recompute the exact discrete probability by
    # enumerating every residue of the side.
    w = ScaleWindow(-3, 3, 1)
    rep = boundary_lemma_check(
        1, [0.25, 0.1], 20000, seed=3, k=2, window=w, x=(11,)
    )
    side = w.side_units(2)
    for row in rep.rows:
        tau = row["parameter"]
        t_int = math.floor(Fraction(tau) * side)
        count = sum(1 for r in range(side) if min(r, side - r) <= t_int)
        assert row["discrete_exact"] == count / side
        assert abs(row["estimate"] - row["exact_or_bound"]) <= row["band"]
    assert rep.passed


def test_lemma_rejects_tau_outside_formula_regime():
    with pytest.raises(ValueError):
        boundary_lemma_check(1, [0.7], 100, seed=1)
    with pytest.raises(ValueError):
        boundary_lemma_check(1, [-0.05], 100, seed=1)


# ---------------------------------------------------------------------------
# Near-boundary decay across scales.


def test_ek_rows_match_residue_oracle():
    rep = ek_decay_check(1, [2, 3, 4], 30000, seed=5)
    assert rep.passed
    w = default_window(1)
    x, xp = tuple(rep.params["x"]), tuple(rep.params["x_prime"])
    h2 = sum((a - b) ** 2 for a, b in zip(x, xp))
    for row in rep.rows:
        side = w.side_units(row["matched_scale"])
        count = sum(1 for r in range(side) if min(r, side - r) ** 2 < 4 * h2)
        assert _near_boundary_count_lt(side, 4 * h2) == count
        assert row["exact_or_bound"] == count / side
    exacts = [row["exact_or_bound"] for row in rep.rows]
    assert all(a >= b for a, b in zip(exacts, exacts[1:]))
    anchor = [row for row in rep.rows if row["is_anchor"]]
    assert len(anchor) == 1 and anchor[0]["parameter"] == 1
    assert rep.summary["C"] == pytest.approx(
        4.0 * rep.summary["tau1"] * rep.summary["anchor_estimate"]
    )


def test_ek_guards():
    with pytest.raises(ValueError):
        ek_decay_check(1, [25], 100, seed=1)  # no scale that coarse
    with pytest.raises(ValueError):
        ek_decay_check(1, [2], 100, seed=1, x=(0,), x_prime=(0,))


# ---------------------------------------------------------------------------
# Exact pairing agreement.


def test_fubini_instances_exactly_equal():
    rep = fubini_check(n_instances=6, seed=20102)
    assert rep.passed
    assert len(rep.rows) == 6
    assert all(r["exact_equal"] for r in rep.rows)
    assert {r["dim"] for r in rep.rows} == {1, 2}
    assert rep.summary["n_exact_equal"] == 6


# ---------------------------------------------------------------------------
# Size sweep.


def test_size_all_zero_family():
    rep = size_estimate_sweep(ZERO_TABLE, n_samples=50, seed=2, n_pairs=4)
    assert rep.passed
    assert rep.summary["sup_scaled_value"] == 0.0
    assert rep.summary["n_fit_points"] == 0
    assert all(r["estimate"] == 0.0 for r in rep.rows)


def test_size_rejects_degenerate_pairs():
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=2)
    with pytest.raises(ValueError):
        size_estimate_sweep(spec, pairs_xy=[])
    with pytest.raises(ValueError):
        size_estimate_sweep(spec, pairs_xy=[((3,), (3,))])


def test_size_rows_recompute_budget_and_scaled_value():
    w = ScaleWindow(-6, 2, 1)
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=2)
    pairs = [((5,), (21,)), ((7,), (71,))]
    rep = size_estimate_sweep(
        spec, n_samples=200, seed=6, window=w, pairs_xy=pairs
    )
    assert rep.passed
    for (x, y), row in zip(pairs, rep.rows):
        r = euclidean_distance(x, y, w)
        assert row["parameter"] == r
        assert row["exact_or_bound"] == size_budget(spec, w, r)
        assert row["scaled_value"] == row["mean_abs"] * r
        assert abs(row["estimate"]) <= row["exact_or_bound"] + 3 * row["stderr"]


# ---------------------------------------------------------------------------
# Averaged-kernel smoothness sweep.


def test_holder_all_zero_family_passes_vacuously():
    rep = holder_sweep(ZERO_TABLE, scales=range(4, 7), n_samples=50, seed=2)
    assert rep.passed
    assert all(r["estimate"] == 0.0 for r in rep.rows)
    assert rep.summary["n_fit_points"] == 0
    assert rep.summary["sup_ratio"] == 0.0


def test_holder_guards():
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=2)
    with pytest.raises(ValueError):
        holder_sweep(spec, direction=2, n_samples=10)
    with pytest.raises(ValueError):
        holder_sweep(spec, scales=[14], n_samples=10)  # below base cell
    with pytest.raises(ValueError):
        # x' = x + 2^-4 while |x - y| = 2^-8: outside the regime
        holder_sweep(
            spec,
            scales=range(4, 8),
            n_samples=10,
            x=(1 << 9,),
            y=((1 << 9) + 64,),
        )


def test_holder_small_run_structure():
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=2)
    rep = holder_sweep(spec, scales=range(5, 9), n_samples=4096, seed=11)
    assert rep.passed
    for row in rep.rows:
        assert row["parameter"] == 2.0 ** -row["scale_exp"]
        assert row["estimate"] >= abs(row["signed_mean"]) - 1e-15
        assert row["ratio"] <= row["ratio_bound"]
    assert rep.summary["slope_target"] == 0.4
    rep_neg = holder_sweep(
        spec, scales=range(5, 8), n_samples=2048, seed=11, direction=-1
    )
    assert rep_neg.passed


# ---------------------------------------------------------------------------
# Fixed-grid counterexample.


def test_classical_jump_magnitude_oracle():
    # (1,-1) Haar on the unit cube: two-sided limits across the child
    # boundary differ by 2, and |Q| = 1.
    w = ScaleWindow(-6, 1, 1)
    q = cube_at(w.point(0.0), 0, zero_shift(w))
    h = HaarFunction(q, (1.0, -1.0))
    left = h.evaluate(w.point(Fraction(31, 64)))
    right = h.evaluate(w.point(Fraction(33, 64)))
    assert (left - right) / q.volume_real == 2.0


def test_same_side_difference_is_exactly_zero():
    # No contributing child boundary separates 40 and 41 here (the finest
    # cube containing y as well has side 64), so the kernel difference is 0.
    w = ScaleWindow(-6, 2, 1)
    g = zero_shift(w)
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=2)
    y = (0,)
    assert kernel_omega((40,), y, g, spec) == kernel_omega((41,), y, g, spec)


def test_single_shift_growth_default():
    rep = single_shift_holder_failure()
    assert rep.passed
    assert rep.summary["jump"] > 0.0
    assert rep.summary["retries"] == 0
    rvals = [row["smoothness_ratio"] for row in rep.rows]
    assert all(b > a for a, b in zip(rvals, rvals[1:]))  # strictly increasing
    target = rep.summary["growth_target"]
    gated = [row for row in rep.rows if row["gated"]]
    assert len(gated) == 3  # three ratios span the final four scale points
    for row in gated:
        assert row["ratio"] >= target * (1.0 - 1e-12)


def test_single_shift_exhausts_retries_without_jump():
    # All-zero coefficients can never jump; every reseeded attempt is spent
    # and the failure is reported honestly.
    rep = single_shift_holder_failure(spec=ZERO_TABLE, max_retries=3)
    assert not rep.passed
    assert rep.summary["retries"] == 3
    assert rep.summary["jump"] == 0.0


# ---------------------------------------------------------------------------
# Vanishing identity.


def test_vanishing_trivial_cases():
    w = ScaleWindow(-6, 2, 1)
    g = sample_shift(Stream(8, "van"), w)
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=3)
    same = vanishing_identity_check(g, 1, (9,), (9,), spec)
    assert same.passed and same.geometric_all
    near = vanishing_identity_check(g, 0, (9,), (10,), spec)
    assert near.passed  # geometric scales must vanish exactly
    assert all(s.vanished for s in near.scales if s.geometric)
    assert any(s.geometric for s in near.scales)


def test_vanishing_rejects_uncovered_complexity():
    w = ScaleWindow(-6, 2, 1)
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=1)
    with pytest.raises(ValueError):
        vanishing_identity_check(zero_shift(w), 5, (9,), (10,), spec)


def test_vanishing_trials_small_batch():
    rep = vanishing_trials(1, n_trials=300, seed=20102)
    assert rep.passed
    assert rep.summary["violations"] == 0
    assert sum(r["trials"] for r in rep.rows) == 300
    for row in rep.rows:
        assert row["estimate"] == 1.0


# ---------------------------------------------------------------------------
# Norm battery.


def test_dense_assembly_routes_agree():
    w = ScaleWindow(-1, 2, 1)
    g = sample_shift(Stream(9, "na"), w)
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=2)
    for m, n in [(0, 0), (1, 1)]:
        shift = build_shift(spec, m, n, g)
        region = cube_at((0,), 2, g)
        a = shift_cell_matrix(shift, region)
        b = dense_matrix_via_apply(shift, region)
        assert float(np.max(np.abs(a - b))) <= 1e-12


def test_norm_suite_all_rows_pass():
    rep = norm_suite(seed=20102)
    assert rep.passed
    checks = {r["check"] for r in rep.rows}
    assert checks == {"bound", "svd"}
    for r in rep.rows:
        if r["check"] == "bound":
            assert r["estimate"] <= 1.0 + 1e-9
