"""Kernel evaluation, Monte Carlo averaging, analytic budgets, pairings.

The main oracle rebuilds the kernel the slow way: enumerate every
(Q, Q', Q'') term under the top cube with `iter_terms`, evaluate both Haar
functions pointwise, and accumulate the exact rational sum of the same
float products the fast path forms.  The fast path only walks the common
ancestor chain; agreement checks both the collapse and the coefficients.
"""
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
from haarshift.haar import StepFunction
from haarshift.kernel import (
    KernelEstimate,
    ResolutionError,
    RunningMoments,
    ShiftBatch,
    c_window,
    estimate_kernel,
    estimate_kernel_difference,
    kernel_omega,
    kernel_values,
    pairing_via_kernel,
    pairing_via_operator,
    size_budget,
    truncation_tail_bound,
)
from haarshift.prf import TAG_OMEGA, Stream
from haarshift.shiftfamily import (
    FAMILIES,
    ShiftFamilySpec,
    build_shift,
    lambda_value,
    scale_count,
)


def kernel_oracle(x, y, grid, spec) -> Fraction:
    """Exhaustive term sum under the top cube holding x; exact rationals."""
    w = grid.window
    total = Fraction(0)
    top = cube_at(x, w.k_max, grid)
    for m, n in spec.pairs():
        if scale_count(w, m, n) < 1:
            continue
        lam = lambda_value(spec, m, n, grid.digest_int())
        if lam == 0.0:
            continue
        shift = build_shift(spec, m, n, grid)
        for Q, Qp, Qpp, (h_in, h_out) in shift.iter_terms(region=top):
            ho = h_out.evaluate(x)
            hi = h_in.evaluate(y)
            if ho == 0.0 or hi == 0.0:
                continue
            fac = lam * 2.0 ** (-Q.k * w.dim)
            total += Fraction(fac) * Fraction(ho) * Fraction(hi)
    return total


# ---------------------------------------------------------------------------
# Fixed-grid kernel.


def test_kernel_matches_exhaustive_term_sum():
    for dim, x, y in [(1, (1,), (3,)), (2, (1, 2), (3, 0))]:
        w = ScaleWindow(-3, 1, dim)
        for gseed in (0, 1):
            g = (
                zero_shift(w)
                if gseed == 0
                else sample_shift(Stream(41, "ko", dim), w)
            )
            for fam in FAMILIES:
                spec = ShiftFamilySpec(
                    delta=0.5, complexity_cap=2, coeff_family=fam
                )
                want = kernel_oracle(x, y, g, spec)
                got = kernel_omega(x, y, g, spec, exact=True)
                assert got == want
                approx = kernel_omega(x, y, g, spec)
                assert approx == pytest.approx(float(want), abs=1e-12)


def test_kernel_zero_lambda_table():
    w = ScaleWindow(-3, 1, 1)
    g = sample_shift(Stream(42, "zl"), w)
    spec = ShiftFamilySpec(
        delta=0.5,
        complexity_cap=2,
        lambda_rule="custom",
        lambda_table=((0, 0, 0.0),),
    )
    assert kernel_omega((1,), (3,), g, spec) == 0.0
    assert kernel_omega((1,), (3,), g, spec, exact=True) == Fraction(0)


def test_kernel_vanishes_without_common_ancestor():
    w = ScaleWindow(-2, 2, 1)  # top cubes have side 16 units
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=2)
    assert kernel_omega((0,), (20,), zero_shift(w), spec) == 0.0


def test_kernel_diagonal_and_resolution_guards():
    w = ScaleWindow(-3, 1, 1)
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=2)
    g = zero_shift(w)
    with pytest.raises(ValueError) as ei:
        kernel_omega((3,), (3,), g, spec)
    assert not isinstance(ei.value, ResolutionError)
    with pytest.raises(ResolutionError):
        kernel_omega((3,), (4,), g, spec)
    with pytest.raises(ValueError):
        kernel_omega((3, 0), (5, 0), g, spec)  # wrong dimension


def test_kernel_alternating_rule_changes_sign_pattern():
    w = ScaleWindow(-3, 1, 1)
    g = sample_shift(Stream(43, "alt"), w)
    base = dict(delta=0.5, complexity_cap=2)
    k_def = kernel_omega((1,), (3,), g, ShiftFamilySpec(**base), exact=True)
    k_alt = kernel_omega(
        (1,), (3,), g, ShiftFamilySpec(lambda_rule="alternating", **base),
        exact=True,
    )
    per_pair = {
        (m, n): kernel_omega(
            (1,), (3,), g, ShiftFamilySpec(**base), exact=True, pairs=[(m, n)]
        )
        for m, n in ShiftFamilySpec(**base).pairs()
    }
    flipped = sum(
        v * (-1) ** (m + n) for (m, n), v in per_pair.items()
    )
    assert sum(per_pair.values()) == k_def
    assert flipped == k_alt


# ---------------------------------------------------------------------------
# Vectorized sampler.


def test_batch_lane_reproduces_sampled_grid():
    w = ScaleWindow(-4, 2, 2)
    batch = ShiftBatch(99, w, 3, 8)
    for r in range(8):
        g = sample_shift(Stream(99, TAG_OMEGA, 3 + r), w)
        cum = np.array(g.cumulative, dtype=np.int64)
        assert np.array_equal(batch.cum[r], cum)
        assert batch.grid(r) == g


def test_kernel_values_match_scalar_per_lane():
    for dim, x, y in [(1, (2,), (6,)), (2, (0, 5), (4, 2))]:
        w = ScaleWindow(-4, 2, dim)
        batch = ShiftBatch(7, w, 0, 16)
        for fam in FAMILIES:
            spec = ShiftFamilySpec(delta=0.5, complexity_cap=2, coeff_family=fam)
            vec = kernel_values(x, y, spec, batch)
            for r in range(16):
                assert vec[r] == kernel_omega(x, y, batch.grid(r), spec)


def test_kernel_values_prefix_stable():
    w = ScaleWindow(-5, 2, 1)
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=3)
    x, y = (3,), (8,)
    short = kernel_values(x, y, spec, ShiftBatch(5, w, 0, 40))
    long = kernel_values(x, y, spec, ShiftBatch(5, w, 0, 80))
    assert np.array_equal(short, long[:40])


# ---------------------------------------------------------------------------
# Monte Carlo estimates.


def test_estimate_single_forced_grid():
    w = ScaleWindow(-4, 2, 1)
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=2)
    x, y = (2,), (6,)
    est = estimate_kernel(
        x, y, spec, w, 1, seed=0, omega_sampler=lambda i: zero_shift(w)
    )
    assert est.mean == kernel_omega(x, y, zero_shift(w), spec)
    assert est.stderr == 0.0
    assert est.mean_abs == abs(est.mean)
    assert est.n_samples == 1


def test_estimate_matches_moment_oracle():
    w = ScaleWindow(-5, 2, 1)
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=2)
    x, y = (3,), (9,)
    est = estimate_kernel(x, y, spec, w, 200, seed=17)
    vals = kernel_values(x, y, spec, ShiftBatch(17, w, 0, 200))
    acc = RunningMoments.from_values(vals)
    assert est.mean == acc.mean
    assert est.stderr == acc.stderr
    assert est.mean_abs == RunningMoments.from_values(np.abs(vals)).mean
    assert est.mean_abs >= abs(est.mean)
    lo, hi = est.interval()
    assert lo == est.mean - (3 * est.stderr + est.truncation_bound)
    assert hi == est.mean + (3 * est.stderr + est.truncation_bound)


def test_estimate_repeatable_and_seed_sensitive():
    w = ScaleWindow(-5, 2, 1)
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=2)
    a = estimate_kernel((3,), (9,), spec, w, 300, seed=1)
    b = estimate_kernel((3,), (9,), spec, w, 300, seed=1)
    c = estimate_kernel((3,), (9,), spec, w, 300, seed=2)
    assert (a.mean, a.stderr, a.mean_abs) == (b.mean, b.stderr, b.mean_abs)
    assert a.mean != c.mean
    with pytest.raises(ValueError):
        estimate_kernel((3,), (9,), spec, w, 0, seed=1)


def test_estimate_seed_consistency_with_budget():
    # Five independent streams agree within joint error bars, and every
    # mean sits inside the deterministic size budget.
    w = ScaleWindow(-8, 2, 1)
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=4)
    x, y = w.point(0.5), w.point(0.75)
    r = euclidean_distance(x, y, w)
    budget = size_budget(spec, w, r)
    ests = [estimate_kernel(x, y, spec, w, 2000, seed=s) for s in range(5)]
    for e in ests:
        assert abs(e.mean) <= budget + 3 * e.stderr
    for i in range(5):
        for j in range(i + 1, 5):
            gap = abs(ests[i].mean - ests[j].mean)
            slack = 3 * (ests[i].stderr + ests[j].stderr)
            assert gap <= slack + 2 * ests[i].truncation_bound


def test_estimate_stderr_scales_like_root_n():
    w = ScaleWindow(-6, 2, 1)
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=3)
    se = {
        n: estimate_kernel((3,), (11,), spec, w, n, seed=9).stderr
        for n in (100, 10000)
    }
    ratio = se[100] / se[10000]
    assert 5.0 <= ratio <= 20.0  # expected 10


def test_estimate_to_json_keys():
    w = ScaleWindow(-4, 2, 1)
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=1)
    est = estimate_kernel((2,), (6,), spec, w, 10, seed=3)
    obj = est.to_json()
    assert set(obj) == {
        "x", "y", "mean", "stderr", "n_samples", "truncation_bound",
        "seed", "spec_digest",
    }
    assert obj["spec_digest"] == spec.digest()
    assert isinstance(est, KernelEstimate)


def test_difference_paired_and_exact_zero():
    w = ScaleWindow(-5, 2, 1)
    spec = ShiftFamilySpec(delta=0.5, complexity_cap=2)
    x, y = (3,), (12,)
    d = estimate_kernel_difference(x, x, y, spec, w, 500, seed=4)
    assert d.diff_mean == 0.0 and d.diff_stderr == 0.0 and d.abs_mean == 0.0
    x2 = (4,)
    d2 = estimate_kernel_difference(x, x2, y, spec, w, 500, seed=4)
    ex = estimate_kernel(x, y, spec, w, 500, seed=4)
    ex2 = estimate_kernel(x2, y, spec, w, 500, seed=4)
    assert d2.mean_x == ex.mean
    assert d2.mean_x2 == ex2.mean
    assert d2.abs_mean >= abs(d2.diff_mean)
    # Pairing on shared grids beats differencing the independent error bars.
    assert d2.diff_stderr <= ex.stderr + ex2.stderr


# ---------------------------------------------------------------------------
# Analytic budgets.


def test_c_window_geometric_values():
    w = ScaleWindow(-4, 10, 1)
    assert c_window(w, 1.0) == pytest.approx(2.0, abs=2e-3)
    assert c_window(w, 1.0) == pytest.approx(
        sum(2.0**-k for k in range(0, 11)), rel=0
    )
    assert c_window(w, 1.5) == pytest.approx(
        sum(2.0**-k for k in range(1, 11)), rel=0
    )
    assert c_window(w, 1.0, k_floor=2) == pytest.approx(
        sum(2.0**-k for k in range(2, 11)), rel=0
    )
    w2 = ScaleWindow(-4, 10, 2)
    assert c_window(w2, 1.0) == pytest.approx(4.0 / 3.0, abs=1e-5)


def test_truncation_tail_shrinks_with_cap_and_depth():
    # Deep window isolates the complexity tail; it vanishes as the cap grows.
    deep = ScaleWindow(-14, 40, 1)
    caps = [0, 4, 8, 16, 40]
    vals = [
        truncation_tail_bound(
            ShiftFamilySpec(delta=0.5, complexity_cap=c), 1.0, deep
        )
        for c in caps
    ]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-3
    # At fixed cap the residual floor is the above-window mass; it vanishes
    # as the window deepens.
    floors = [
        truncation_tail_bound(
            ShiftFamilySpec(delta=0.5, complexity_cap=8), 1.0,
            ScaleWindow(-14, kmax, 1),
        )
        for kmax in (6, 12, 24)
    ]
    assert floors[0] > floors[1] > floors[2]


def test_truncation_tail_dominates_discarded_mass():
    # Direct kernel sum over 8 < m + n <= 64 on one grid stays under the
    # cap-8 tail bound.
    w = ScaleWindow(-10, 4, 1)
    g = sample_shift(Stream(44, "tail"), w)
    big = ShiftFamilySpec(delta=0.5, complexity_cap=64)
    x, y = (3,), (9,)
    discarded = [
        (m, n) for m, n in big.pairs() if m + n > 8 and scale_count(w, m, n) >= 1
    ]
    direct = kernel_omega(x, y, g, big, pairs=discarded)
    r = euclidean_distance(x, y, w)
    bound = truncation_tail_bound(
        ShiftFamilySpec(delta=0.5, complexity_cap=8), r, w
    )
    assert abs(direct) <= bound


def test_size_budget_dominates_every_grid():
    w = ScaleWindow(-6, 2, 1)
    pts = Stream(45, "sz")
    for fam in FAMILIES:
        spec = ShiftFamilySpec(delta=0.5, complexity_cap=3, coeff_family=fam)
        for t in range(20):
            g = sample_shift(Stream(45, "szg", t), w)
            x = (int(pts.word(t, 0) % 64),)
            y = (x[0] + 2 + int(pts.word(t, 1) % 60),)
            r = euclidean_distance(x, y, w)
            assert abs(kernel_omega(x, y, g, spec)) <= size_budget(spec, w, r)


# ---------------------------------------------------------------------------
# Dual pairings.


def make_spec(fam="cancellative", cap=2):
    return ShiftFamilySpec(delta=0.5, complexity_cap=cap, coeff_family=fam)


def test_pairing_zero_function_gives_zero():
    w = ScaleWindow(-3, 2, 1)
    g = zero_shift(w)
    spec = make_spec()
    f = StepFunction(w, {(0,): Fraction(1)})
    z = StepFunction(w, {})
    assert pairing_via_kernel(z, f, g, spec) == 0
    assert pairing_via_kernel(f, z, g, spec) == 0
    assert pairing_via_operator(z, f, g, spec) == 0
    assert pairing_via_operator(f, z, g, spec) == 0


def test_pairing_single_term_unrolled():
    # Two-scale window, cap 0: exactly one cube holds both supports, so the
    # pairing is one product, written out by hand.
    w = ScaleWindow(-2, 0, 1)
    g = zero_shift(w)
    spec = make_spec(cap=0)
    f = StepFunction(w, {(0,): Fraction(2, 3)})
    gf = StepFunction(w, {(3,): Fraction(-5)})
    shift = build_shift(spec, 0, 0, g)
    Q = cube_at((0,), 0, g)
    h_in, h_out = shift.pair_for(Q, Q, Q)
    meas2 = Fraction(1, 16)
    want = (
        Fraction(-5)
        * Fraction(2, 3)
        * Fraction(h_out.evaluate((3,)))
        * Fraction(h_in.evaluate((0,)))
        * meas2
    )
    assert pairing_via_kernel(f, gf, g, spec) == want
    assert pairing_via_operator(f, gf, g, spec) == want
    assert want != 0


def test_pairing_routes_agree_on_random_grids():
    w = ScaleWindow(-3, 2, 1)
    f = StepFunction(w, {(0,): Fraction(1, 3), (1,): Fraction(-2, 7)})
    gf = StepFunction(w, {(24,): Fraction(5, 2), (26,): Fraction(1, 9)})
    for t in range(10):
        g = sample_shift(Stream(46, "pg", t), w)
        spec = make_spec(fam=FAMILIES[t % 3])
        assert pairing_via_kernel(f, gf, g, spec) == pairing_via_operator(
            f, gf, g, spec
        )


def test_pairing_rejects_touching_supports():
    w = ScaleWindow(-3, 2, 1)
    g = zero_shift(w)
    f = StepFunction(w, {(0,): Fraction(1)})
    gf = StepFunction(w, {(2,): Fraction(1)})
    with pytest.raises(ValueError):
        pairing_via_kernel(f, gf, g, make_spec())
