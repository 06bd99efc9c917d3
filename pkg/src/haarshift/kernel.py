"""Kernels of averaged shifts: exact per-grid values, Monte Carlo averages,
and the analytic budgets the estimates are judged against.

The kernel of one shift family on one shifted grid is, at points x != y,

    K(x, y) = sum over (m, n) of lambda(m, n) * sum over cubes Q containing
              both x and y of |Q|^{-1} h_out(x) h_in(y)

where h_out lives on the depth-m descendant of Q containing x and h_in on
the depth-n descendant containing y; all other terms of the shift vanish at
(x, y).  Averaging over grids is plain Monte Carlo over the translation
bits.  Everything here is deterministic given (seed, window, spec): the
scalar evaluator and the vectorized batch evaluator are kept bit-identical
by drawing from the same keyed words and accumulating in the same order.

Points are unit coordinates (integer multiples of the base cell side).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .grid import (
    GridShift,
    Point,
    ScaleWindow,
    distance_squared_units,
    euclidean_distance,
    sample_shift,
)
from .haar import StepFunction, apply_shift, step_inner
from .prf import TAG_OMEGA, Stream, key64_np
from .shiftfamily import (
    ShiftFamilySpec,
    build_shift,
    lambda_value,
    pair_values_at,
    pair_values_np,
    scale_count,
)

# Fixed accumulation chunk.  Moments are merged chunk by chunk in index
# order, so results are byte-stable regardless of sample count or caller.
CHUNK = 8192


class ResolutionError(ValueError):
    """Raised when two points are too close for the truncated window."""


def _check_separation(x: Point, y: Point, window: ScaleWindow) -> int:
    if len(x) != window.dim or len(y) != window.dim:
        raise ValueError("point dimension does not match the window")
    if x == y:
        # Off-diagonal only; distinct from running out of resolution.
        raise ValueError("kernel is undefined on the diagonal: x == y")
    d2 = distance_squared_units(x, y)
    if d2 < 4 * window.dim:
        raise ResolutionError(
            "points closer than twice the base cell diameter; the truncated"
            " kernel is not meaningful below the finest scale"
        )
    return d2


def _pair_list(
    spec: ShiftFamilySpec, pairs: Sequence[tuple[int, int]] | None
) -> list[tuple[int, int]]:
    if pairs is None:
        return list(spec.pairs())
    return [(int(m), int(n)) for m, n in pairs]


def kernel_omega(
    x: Point,
    y: Point,
    omega: GridShift,
    spec: ShiftFamilySpec,
    exact: bool = False,
    pairs: Sequence[tuple[int, int]] | None = None,
) -> float | Fraction:
    """Kernel of the (truncated) family sum on one grid, at unit points x, y.

    Only cubes containing both points contribute, so the sum collapses to
    the common ancestor chain.  With ``exact`` the float coefficient data is
    lifted to rationals and the value is exact; otherwise sums run in float
    in a fixed order, bit-identical to :func:`kernel_values`.
    """
    w = omega.window
    _check_separation(x, y, w)
    d = w.dim
    maxd = max(abs(a - b) for a, b in zip(x, y))
    floor_rel = maxd.bit_length()
    total: float | Fraction = Fraction(0) if exact else 0.0
    for m, n in _pair_list(spec, pairs):
        lam = lambda_value(spec, m, n, omega.digest_int())
        if lam == 0.0 or scale_count(w, m, n) < 1:
            continue
        rho = 1.0 / scale_count(w, m, n)
        for k_rel in range(max(max(m, n) + 1, floor_rel), w.levels + 1):
            k = w.k_min + k_rel
            s = omega.s_units(k)
            qx = tuple(
                si + (((a - si) >> k_rel) << k_rel) for a, si in zip(x, s)
            )
            qy = tuple(
                si + (((b - si) >> k_rel) << k_rel) for b, si in zip(y, s)
            )
            if qx != qy:
                continue
            bp = k_rel - m
            sp = omega.s_units(k - m)
            qpc = tuple(
                si + (((a - si) >> bp) << bp) for a, si in zip(x, sp)
            )
            cx = 0
            for i in range(d):
                cx |= (((x[i] - qpc[i]) >> (bp - 1)) & 1) << i
            bpp = k_rel - n
            spp = omega.s_units(k - n)
            qppc = tuple(
                si + (((b - si) >> bpp) << bpp) for b, si in zip(y, spp)
            )
            cy = 0
            for i in range(d):
                cy |= (((y[i] - qppc[i]) >> (bpp - 1)) & 1) << i
            outv, inv = pair_values_at(
                spec, rho, m, n, k, qx, qpc, qppc, cx, cy, bp, bpp
            )
            fac = lam * 2.0 ** (-k * d)
            if exact:
                total += Fraction(fac) * Fraction(outv) * Fraction(inv)
            else:
                total += fac * outv * inv
    return total


class ShiftBatch:
    """Cumulative translations of ``count`` independent grids, vectorized.

    Lane r reproduces exactly the grid ``sample_shift(Stream(seed,
    TAG_OMEGA, start + r), window)``: same words, same bits.
    """

    __slots__ = ("window", "seed", "start", "count", "cum")

    def __init__(self, seed: int, window: ScaleWindow, start: int, count: int):
        self.window = window
        self.seed = seed
        self.start = start
        self.count = count
        L = window.levels
        idx = np.arange(start, start + count, dtype=np.int64)[:, None]
        j = np.arange(L, dtype=np.int64)[None, :]
        words = key64_np(seed, TAG_OMEGA, idx, j)
        cum = np.zeros((count, L + 1, window.dim), dtype=np.int64)
        for i in range(window.dim):
            bits = ((words >> np.uint64(i)) & np.uint64(1)).astype(np.int64)
            np.cumsum(bits << j, axis=1, out=cum[:, 1:, i])
        self.cum = cum

    def s_units(self, k_rel: int) -> np.ndarray:
        """Translations at relative scale ``k_rel``, shape (count, dim)."""
        return self.cum[:, k_rel, :]

    def grid(self, r: int) -> GridShift:
        return sample_shift(
            Stream(self.seed, TAG_OMEGA, self.start + r), self.window
        )


def kernel_values(
    x: Point,
    y: Point,
    spec: ShiftFamilySpec,
    batch: ShiftBatch,
    pairs: Sequence[tuple[int, int]] | None = None,
) -> np.ndarray:
    """Kernel at (x, y) on every grid of the batch, bit-identical per lane
    to :func:`kernel_omega` in float mode."""
    w = batch.window
    _check_separation(x, y, w)
    d = w.dim
    xa = np.array(x, dtype=np.int64)
    ya = np.array(y, dtype=np.int64)
    maxd = max(abs(a - b) for a, b in zip(x, y))
    floor_rel = maxd.bit_length()
    totals = np.zeros(batch.count)
    for m, n in _pair_list(spec, pairs):
        lam = lambda_value(spec, m, n)
        if lam == 0.0 or scale_count(w, m, n) < 1:
            continue
        rho = 1.0 / scale_count(w, m, n)
        for k_rel in range(max(max(m, n) + 1, floor_rel), w.levels + 1):
            k = w.k_min + k_rel
            s = batch.s_units(k_rel)
            qx = s + (((xa - s) >> k_rel) << k_rel)
            qy = s + (((ya - s) >> k_rel) << k_rel)
            mask = (qx == qy).all(axis=1)
            if not mask.any():
                continue
            bp = k_rel - m
            sp = batch.s_units(bp)
            qpc = sp + (((xa - sp) >> bp) << bp)
            cx = np.zeros(batch.count, dtype=np.int64)
            for i in range(d):
                cx |= (((xa[i] - qpc[:, i]) >> (bp - 1)) & 1) << i
            bpp = k_rel - n
            spp = batch.s_units(bpp)
            qppc = spp + (((ya - spp) >> bpp) << bpp)
            cy = np.zeros(batch.count, dtype=np.int64)
            for i in range(d):
                cy |= (((ya[i] - qppc[:, i]) >> (bpp - 1)) & 1) << i
            outv, inv = pair_values_np(
                spec, rho, m, n, k, qx, qpc, qppc, cx, cy, bp, bpp
            )
            fac = lam * 2.0 ** (-k * d)
            totals += np.where(mask, fac * outv * inv, 0.0)
    return totals


@dataclass
class RunningMoments:
    """Streaming mean and variance (Welford), merged pairwise (Chan).

    Updates and merges always happen in a fixed chunk order, so results are
    byte-stable across runs and thread counts, far inside any drift budget.
    """

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, value: float) -> None:
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (value - self.mean)

    @classmethod
    def from_values(cls, values) -> "RunningMoments":
        acc = cls()
        for v in values:
            acc.add(float(v))
        return acc

    def merge(self, other: "RunningMoments") -> None:
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return
        n = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / n
        self.m2 += other.m2 + delta * delta * self.count * other.count / n
        self.count = n

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        return self.m2 / (self.count - 1)

    @property
    def stderr(self) -> float:
        if self.count < 1:
            return 0.0
        return math.sqrt(self.variance / self.count)


@dataclass(frozen=True)
class KernelEstimate:
    """Monte Carlo average of the kernel over grids, with its error bars.

    ``mean`` estimates the averaged kernel itself; ``mean_abs`` estimates
    the average of |K| over grids, which dominates |mean| and carries the
    size signal even where sign cancellation drives the average toward 0.
    """

    x: Point
    y: Point
    mean: float
    stderr: float
    mean_abs: float
    stderr_abs: float
    n_samples: int
    truncation_bound: float
    seed: int
    spec_digest: str

    def interval(self) -> tuple[float, float]:
        """Reported range: mean +- (3 stderr + truncation_bound)."""
        half = 3.0 * self.stderr + self.truncation_bound
        return (self.mean - half, self.mean + half)

    def to_json(self) -> dict:
        return {
            "x": list(self.x),
            "y": list(self.y),
            "mean": self.mean,
            "stderr": self.stderr,
            "n_samples": self.n_samples,
            "truncation_bound": self.truncation_bound,
            "seed": self.seed,
            "spec_digest": self.spec_digest,
        }


OmegaSampler = Callable[[int], GridShift]


def _chunk_values(
    points: Sequence[tuple[Point, Point]],
    spec: ShiftFamilySpec,
    window: ScaleWindow,
    seed: int,
    start: int,
    count: int,
    omega_sampler: OmegaSampler | None,
    pairs: Sequence[tuple[int, int]] | None,
) -> list[np.ndarray]:
    if omega_sampler is None:
        batch = ShiftBatch(seed, window, start, count)
        return [kernel_values(x, y, spec, batch, pairs=pairs) for x, y in points]
    out = []
    grids = [omega_sampler(i) for i in range(start, start + count)]
    for x, y in points:
        out.append(
            np.array(
                [kernel_omega(x, y, g, spec, pairs=pairs) for g in grids]
            )
        )
    return out


def estimate_kernel(
    x: Point,
    y: Point,
    spec: ShiftFamilySpec,
    window: ScaleWindow,
    n_samples: int,
    seed: int,
    omega_sampler: OmegaSampler | None = None,
    pairs: Sequence[tuple[int, int]] | None = None,
) -> KernelEstimate:
    """Average the kernel at (x, y) over ``n_samples`` grids.

    Grids come from the seeded translation stream unless ``omega_sampler``
    is given (index -> grid), which forces specific grids through the same
    chunked accumulation.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    acc = RunningMoments()
    acc_abs = RunningMoments()
    for c0 in range(0, n_samples, CHUNK):
        cnt = min(CHUNK, n_samples - c0)
        (vals,) = _chunk_values(
            [(x, y)], spec, window, seed, c0, cnt, omega_sampler, pairs
        )
        acc.merge(RunningMoments.from_values(vals))
        acc_abs.merge(RunningMoments.from_values(np.abs(vals)))
    r = euclidean_distance(x, y, window)
    return KernelEstimate(
        x=x,
        y=y,
        mean=acc.mean,
        stderr=acc.stderr,
        mean_abs=acc_abs.mean,
        stderr_abs=acc_abs.stderr,
        n_samples=n_samples,
        truncation_bound=truncation_tail_bound(spec, r, window),
        seed=seed,
        spec_digest=spec.digest(),
    )


@dataclass(frozen=True)
class DifferenceEstimate:
    """Paired average of K(x, y) - K(x2, y) over a shared grid stream.

    ``abs_mean`` averages |K(x, y) - K(x2, y)| per grid.  It dominates
    |diff_mean|, so a smoothness envelope on it certifies the averaged
    kernel too, and it keeps a measurable signal when the signed increments
    cancel across grids.
    """

    x: Point
    x2: Point
    y: Point
    mean_x: float
    mean_x2: float
    diff_mean: float
    diff_stderr: float
    abs_mean: float
    abs_stderr: float
    n_samples: int
    seed: int
    spec_digest: str


def estimate_kernel_difference(
    x: Point,
    x2: Point,
    y: Point,
    spec: ShiftFamilySpec,
    window: ScaleWindow,
    n_samples: int,
    seed: int,
    omega_sampler: OmegaSampler | None = None,
    pairs: Sequence[tuple[int, int]] | None = None,
) -> DifferenceEstimate:
    """Estimate E[K(x, y) - K(x2, y)] with both points on the same grids.

    Pairing removes the large common component, so the difference converges
    at the scale of the increment instead of the kernel size.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    acc_x = RunningMoments()
    acc_x2 = RunningMoments()
    acc_d = RunningMoments()
    acc_a = RunningMoments()
    for c0 in range(0, n_samples, CHUNK):
        cnt = min(CHUNK, n_samples - c0)
        vx, vx2 = _chunk_values(
            [(x, y), (x2, y)], spec, window, seed, c0, cnt, omega_sampler, pairs
        )
        diffs = vx - vx2
        acc_x.merge(RunningMoments.from_values(vx))
        acc_x2.merge(RunningMoments.from_values(vx2))
        acc_d.merge(RunningMoments.from_values(diffs))
        acc_a.merge(RunningMoments.from_values(np.abs(diffs)))
    return DifferenceEstimate(
        x=x,
        x2=x2,
        y=y,
        mean_x=acc_x.mean,
        mean_x2=acc_x2.mean,
        diff_mean=acc_d.mean,
        diff_stderr=acc_d.stderr,
        abs_mean=acc_a.mean,
        abs_stderr=acc_a.stderr,
        n_samples=n_samples,
        seed=seed,
        spec_digest=spec.digest(),
    )


# ---------------------------------------------------------------------------
# Analytic budgets.  Every estimate above is compared against one of these
# closed-form bounds; they must dominate the true value for every grid, so
# they use the admissible lambda magnitude, never the sampled values.


def _diameter_floor(window: ScaleWindow, r: float) -> int:
    """Smallest scale whose cube diameter reaches r (containment needs it)."""
    k = window.k_min
    root = math.sqrt(window.dim)
    while root * 2.0**k < r and k <= window.k_max:
        k += 1
    return k


def c_window(window: ScaleWindow, r: float, k_floor: int | None = None) -> float:
    """Sum of |Q|^{-1} over window scales that can contain two points at
    distance r; the geometric series behind every size bound here."""
    d = window.dim
    lo = _diameter_floor(window, r)
    if k_floor is not None:
        lo = max(lo, k_floor)
    return sum(2.0 ** (-k * d) for k in range(lo, window.k_max + 1))


def truncation_tail_bound(spec: ShiftFamilySpec, r: float, window: ScaleWindow) -> float:
    """Bound on what capping the complexity and the window discards at
    distance r.

    Complexities with m + n = s contribute at most (s+1) q^s C_window(r)
    with q = 2^{-delta} (scale factors are at most 1), and scales above the
    window contribute at most the remaining geometric mass across all
    complexities.
    """
    q = 2.0 ** (-spec.delta)
    S = spec.cap + 1
    tail_mn = q**S * (S * (1.0 - q) + 1.0) / (1.0 - q) ** 2
    d = window.dim
    above = 2.0 ** (-window.k_max * d) / (2.0**d - 1.0)
    return tail_mn * c_window(window, r) + above / (1.0 - q) ** 2


def size_budget(spec: ShiftFamilySpec, window: ScaleWindow, r: float) -> float:
    """Deterministic bound on |K(x, y)| at |x - y| = r, valid per grid.

    Each (m, n, k) term is at most lambda-bound * scale-factor * |Q|^{-1}
    since the coefficient sup products never exceed 1.
    """
    total = 0.0
    for m, n in spec.pairs():
        nu = scale_count(window, m, n)
        if nu < 1:
            continue
        bound = 2.0 ** (-(m + n) * spec.delta)
        k_floor = window.k_min + max(m, n) + 1
        total += bound * (1.0 / nu) * c_window(window, r, k_floor=k_floor)
    return total


def holder_envelope(
    spec: ShiftFamilySpec,
    window: ScaleWindow,
    x: Point,
    x2: Point,
    y: Point,
) -> float:
    """Deterministic bound on |E K(x, y) - E K(x2, y)|.

    The (m, n, k) term differs between x and x2 only when some grid line at
    the child scale of the output cube separates them, which happens with
    probability at most sum_i |x_i - x2_i| / 2^(k - m - 1) under the uniform
    translation, and the jump is then at most twice the term bound.  Scales
    too small for containment of either point with y contribute nothing.
    """
    d = window.dim
    u = float(window.unit)
    delta_units = [abs(a - b) for a, b in zip(x, x2)]
    l1 = sum(delta_units) * u
    r = min(
        euclidean_distance(x, y, window), euclidean_distance(x2, y, window)
    )
    lo_diam = _diameter_floor(window, r)
    total = 0.0
    for m, n in spec.pairs():
        nu = scale_count(window, m, n)
        if nu < 1:
            continue
        bound = 2.0 ** (-(m + n) * spec.delta)
        lo = max(lo_diam, window.k_min + max(m, n) + 1)
        for k in range(lo, window.k_max + 1):
            p_sep = min(1.0, l1 / 2.0 ** (k - m - 1))
            total += bound * (1.0 / nu) * 2.0 ** (-k * d) * 2.0 * p_sep
    return total


# ---------------------------------------------------------------------------
# Dual pairing routes.  The operator route applies every shift to f and
# pairs with g; the kernel route integrates g(x) f(y) K(x, y).  For disjoint
# supports the two are the same finite rational sum, term for term, and the
# comparison is exact.


def _support_separation(f: StepFunction, g: StepFunction, window: ScaleWindow):
    if not f.support or not g.support:
        return  # a zero function pairs to zero against anything
    min_d2 = min(
        distance_squared_units(a, b) for a in g.support for b in f.support
    )
    if min_d2 <= 4 * window.dim:
        raise ValueError(
            "supports must be separated by more than twice the base cell"
            " diameter for the kernel pairing to apply"
        )


def pairing_via_kernel(
    f: StepFunction,
    g: StepFunction,
    omega: GridShift,
    spec: ShiftFamilySpec,
) -> Fraction:
    """<S f, g> computed from the kernel: sum of g(a) f(b) K(a, b) over
    cell-corner pairs, weighted by the cell measure squared.  Exact."""
    w = f.window
    _support_separation(f, g, w)
    meas2 = w.unit**w.dim * w.unit**w.dim
    total = Fraction(0)
    for a in g.support:
        ga = Fraction(g.values[a])
        for b in f.support:
            fb = Fraction(f.values[b])
            total += ga * fb * kernel_omega(a, b, omega, spec, exact=True) * meas2
    return total


def pairing_via_operator(
    f: StepFunction,
    g: StepFunction,
    omega: GridShift,
    spec: ShiftFamilySpec,
) -> Fraction:
    """<S f, g> computed by applying every shift of the family to f.  Exact."""
    w = f.window
    _support_separation(f, g, w)
    total = Fraction(0)
    for m, n in spec.pairs():
        if scale_count(w, m, n) < 1:
            continue
        lam = lambda_value(spec, m, n, omega.digest_int())
        if lam == 0.0:
            continue
        shift = build_shift(spec, m, n, omega)
        sf = apply_shift(shift, f, within=list(g.support), exact=True)
        total += Fraction(lam) * step_inner(sf, g, exact=True)
    return total
