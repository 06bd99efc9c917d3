"""Shift families: coefficient assignments, lambda rules, and shift handles.

A family spec fixes everything needed to reproduce the whole two-parameter
family of shifts on any grid: the decay exponent ``delta`` of the lambda
coefficients, the complexity cap, the lambda sign rule, the Haar-pair
coefficient family, and the seed of the coefficient assignment.  Every
coefficient is a pure function of (seed, term geometry), so shifts never
store tables: equal cubes get equal pairs in every run, process, and
vectorized batch.

Coefficient families
--------------------
``cancellative``    classical mean-zero pairs: a random nonzero sign pattern
                    on children, so each function has sup norm 1 and integral 0.
``random-bounded``  every child coefficient uniform in [-1, 1]; sup norms are
                    at most 1 with no cancellation structure.
``block``           averaging pairs: the input function is +-1 on the whole
                    cube, the output function is its indicator.  Nothing is
                    mean zero; this exercises the generality of the Haar
                    notion used here.

All three keep the product of the two sup norms at most 1.  On top of that,
each shift is scaled by one over its contributing-scale count: every single
scale block of a shift has L2 norm at most 1 (Cauchy-Schwarz over the
children partition), so the scaled operator has norm at most 1 on any
window, which the power-iteration estimate then confirms on probe regions.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .grid import (
    DyadicCube,
    GridShift,
    Point,
    ScaleWindow,
    WindowError,
    cube_at,
    descendants_at_depth,
)
from .haar import HaarFunction, HaarPair, Term
from .prf import (
    TAG_COEFF,
    key64,
    key64_np,
    stable_digest,
    sym_float,
    sym_float_np,
)

FAMILIES = ("cancellative", "random-bounded", "block")
LAMBDA_RULES = ("default", "alternating", "custom")

_FAM_CODE = {name: i + 1 for i, name in enumerate(FAMILIES)}
_PARITY8 = 0x96  # parity lookup for 3-bit values


@dataclass(frozen=True)
class ShiftFamilySpec:
    """Reproducible description of one shift family."""

    delta: float = 0.5
    complexity_cap: int | None = None
    lambda_rule: str = "default"
    coeff_family: str = "cancellative"
    coeff_seed: int = 20102
    lambda_table: tuple[tuple[int, int, float], ...] | None = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.complexity_cap is not None and self.complexity_cap < 0:
            raise ValueError("complexity cap must be nonnegative")
        if self.lambda_rule not in LAMBDA_RULES:
            raise ValueError(f"unknown lambda rule {self.lambda_rule!r}")
        if self.coeff_family not in FAMILIES:
            raise ValueError(f"unknown coefficient family {self.coeff_family!r}")
        if self.lambda_rule == "custom":
            if self.lambda_table is None:
                raise ValueError("custom lambda rule needs a table")
            for m, n, v in self.lambda_table:
                bound = 2.0 ** (-(m + n) * self.delta)
                if abs(v) > bound:
                    raise ValueError(
                        f"lambda[{m},{n}] = {v} exceeds admissible bound {bound}"
                    )

    @property
    def cap(self) -> int:
        if self.complexity_cap is not None:
            return self.complexity_cap
        return 8 if self.delta >= 0.4 else 12

    def pairs(self) -> tuple[tuple[int, int], ...]:
        """Complexities (m, n) with m + n <= cap, ordered by total then m."""
        return tuple(
            (m, s - m) for s in range(self.cap + 1) for m in range(s + 1)
        )

    def to_json(self) -> dict:
        return {
            "delta": self.delta,
            "complexity_cap": self.complexity_cap,
            "lambda_rule": self.lambda_rule,
            "coeff_family": self.coeff_family,
            "coeff_seed": self.coeff_seed,
            "lambda_table": None
            if self.lambda_table is None
            else [[m, n, v] for m, n, v in self.lambda_table],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ShiftFamilySpec":
        table = obj.get("lambda_table")
        return cls(
            delta=float(obj["delta"]),
            complexity_cap=None
            if obj.get("complexity_cap") is None
            else int(obj["complexity_cap"]),
            lambda_rule=obj.get("lambda_rule", "default"),
            coeff_family=obj.get("coeff_family", "cancellative"),
            coeff_seed=int(obj.get("coeff_seed", 20102)),
            lambda_table=None
            if table is None
            else tuple((int(m), int(n), float(v)) for m, n, v in table),
        )

    def digest(self) -> str:
        return stable_digest(self.to_json())


@functools.lru_cache(maxsize=None)
def _custom_table(spec: ShiftFamilySpec) -> dict[tuple[int, int], float]:
    return {(m, n): v for m, n, v in (spec.lambda_table or ())}


def lambda_value(spec: ShiftFamilySpec, m: int, n: int, omega_digest: int = 0) -> float:
    """Coefficient of the (m, n) shift in the family sum.

    The magnitude never exceeds ``2**(-(m+n)*delta)``.  The grid-shift digest
    is accepted so rules may depend on the grid only through it; the built-in
    rules ignore it, which keeps vectorized sampling exact.
    """
    if m + n > spec.cap:
        return 0.0
    if spec.lambda_rule == "custom":
        return _custom_table(spec).get((m, n), 0.0)
    mag = 2.0 ** (-(m + n) * spec.delta)
    if spec.lambda_rule == "alternating" and (m + n) % 2:
        return -mag
    return mag


def scale_count(window: ScaleWindow, m: int, n: int) -> int:
    """Number of scales k with valid (m, n) terms: both Haar functions must
    stay child-representable, so k runs over ``k_min + max(m,n) + 1 .. k_max``."""
    return window.levels - max(m, n)


def min_scale(window: ScaleWindow, m: int, n: int) -> int:
    return window.k_min + max(m, n) + 1


def norm_scale_factor(window: ScaleWindow, m: int, n: int) -> float:
    """Per-shift scaling making the certified operator norm at most 1."""
    return 1.0 / scale_count(window, m, n)


def _pack_rel(child_corner: Point, parent_corner: Point, side_bits: int) -> int:
    rel = 0
    for i, (a, b) in enumerate(zip(child_corner, parent_corner)):
        rel |= ((a - b) >> side_bits) << (16 * i)
    return rel


def _cancellative_coeff(word: int, dim: int, child: int) -> float:
    pattern = 1 if dim == 1 else 1 + ((word >> 8) % ((1 << dim) - 1))
    sign = 1.0 if (word >> 63) == 0 else -1.0
    return sign if not (_PARITY8 >> (pattern & child)) & 1 else -sign


def pair_values_at(
    spec: ShiftFamilySpec,
    rho: float,
    m: int,
    n: int,
    kQ: int,
    qc: Point,
    qpc: Point,
    qppc: Point,
    cx: int,
    cy: int,
    bits_p: int,
    bits_pp: int,
) -> tuple[float, float]:
    """Scalar draw of the two coefficients a kernel evaluation needs.

    Returns (normalized output coefficient at child ``cx`` of Q', raw input
    coefficient at child ``cy`` of Q'').  Must stay bit-identical to
    :func:`pair_values_np`.
    """
    fam = _FAM_CODE[spec.coeff_family]
    base = (
        spec.coeff_seed,
        TAG_COEFF,
        fam,
        (m << 8) | n,
        kQ,
        *qc,
        _pack_rel(qpc, qc, bits_p),
        _pack_rel(qppc, qc, bits_pp),
    )
    if spec.coeff_family == "cancellative":
        dim = len(qc)
        out = _cancellative_coeff(key64(*base, 1, 0), dim, cx)
        inn = _cancellative_coeff(key64(*base, 0, 0), dim, cy)
    elif spec.coeff_family == "random-bounded":
        out = sym_float(key64(*base, 1, cx))
        inn = sym_float(key64(*base, 0, cy))
    else:  # block
        out = 1.0
        inn = 1.0 if (key64(*base, 0, 0) >> 63) == 0 else -1.0
    return rho * out, inn


def _cancellative_coeff_np(word: np.ndarray, dim: int, child: np.ndarray) -> np.ndarray:
    if dim == 1:
        pattern = np.uint64(1)
    else:
        pattern = np.uint64(1) + (word >> np.uint64(8)) % np.uint64((1 << dim) - 1)
    sign = np.where((word >> np.uint64(63)) == 0, 1.0, -1.0)
    masked = (pattern & child.astype(np.uint64)).astype(np.int64)
    parity = (_PARITY8 >> masked) & 1
    return np.where(parity == 0, sign, -sign)


def pair_values_np(
    spec: ShiftFamilySpec,
    rho: float,
    m: int,
    n: int,
    kQ: int,
    qc: np.ndarray,
    qpc: np.ndarray,
    qppc: np.ndarray,
    cx: np.ndarray,
    cy: np.ndarray,
    bits_p: int,
    bits_pp: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Vector twin of :func:`pair_values_at` over a batch of grids.

    ``qc``, ``qpc``, ``qppc`` have shape (N, d); ``cx``, ``cy`` shape (N,).
    """
    fam = _FAM_CODE[spec.coeff_family]
    dim = qc.shape[1]
    rel_p = np.zeros(qc.shape[0], dtype=np.int64)
    rel_pp = np.zeros(qc.shape[0], dtype=np.int64)
    for i in range(dim):
        rel_p |= ((qpc[:, i] - qc[:, i]) >> bits_p) << (16 * i)
        rel_pp |= ((qppc[:, i] - qc[:, i]) >> bits_pp) << (16 * i)
    base = [spec.coeff_seed, TAG_COEFF, fam, (m << 8) | n, kQ]
    base += [qc[:, i] for i in range(dim)]
    base += [rel_p, rel_pp]
    if spec.coeff_family == "cancellative":
        out = _cancellative_coeff_np(key64_np(*base, 1, 0), dim, cx)
        inn = _cancellative_coeff_np(key64_np(*base, 0, 0), dim, cy)
    elif spec.coeff_family == "random-bounded":
        out = sym_float_np(key64_np(*base, 1, cx))
        inn = sym_float_np(key64_np(*base, 0, cy))
    else:
        out = np.ones(qc.shape[0])
        inn = np.where((key64_np(*base, 0, 0) >> np.uint64(63)) == 0, 1.0, -1.0)
    return rho * out, inn


@dataclass(frozen=True)
class ShiftOperator:
    """Handle on one shift of a family on one grid.

    Terms are enumerated lazily; coefficient pairs come from the seeded
    assignment and carry the norm scaling on the output side.
    """

    spec: ShiftFamilySpec
    m: int
    n: int
    omega: GridShift
    scale: float

    @property
    def window(self) -> ScaleWindow:
        return self.omega.window

    @property
    def complexity(self) -> tuple[int, int]:
        return self.m, self.n

    def pair_for(self, Q: DyadicCube, Qp: DyadicCube, Qpp: DyadicCube) -> HaarPair:
        """Haar pair of one term: (input function on Q'', output on Q')."""
        w = self.window
        dim = w.dim
        n_children = 1 << dim
        bits_p = Qp.k - w.k_min
        bits_pp = Qpp.k - w.k_min
        out_c = []
        in_c = []
        for c in range(n_children):
            o, i = pair_values_at(
                self.spec, self.scale, self.m, self.n, Q.k,
                Q.corner, Qp.corner, Qpp.corner, c, c, bits_p, bits_pp,
            )
            out_c.append(o)
            in_c.append(i)
        return HaarFunction(Qpp, tuple(in_c)), HaarFunction(Qp, tuple(out_c))

    def iter_terms(
        self,
        support: list[Point] | None = None,
        outputs: list[Point] | None = None,
        region: DyadicCube | None = None,
    ) -> Iterator[Term]:
        """Yield (Q, Q', Q'', pair) terms in deterministic order.

        ``support`` keeps only terms whose input cube meets those cells,
        ``outputs`` only terms whose output cube meets those cells, and
        ``region`` enumerates every term under one cube.  At least one
        filter is required: the full family is unbounded in space.
        """
        w = self.window
        if support is None and region is None:
            raise ValueError("need a support or a region to enumerate terms")
        k_lo = min_scale(w, self.m, self.n)
        for k in range(k_lo, w.k_max + 1):
            if region is not None:
                if k > region.k:
                    continue
                qs = descendants_at_depth(region, region.k - k)
            else:
                seen = {}
                for p in support:
                    q = cube_at(p, k, self.omega)
                    seen[q.corner] = q
                if outputs is not None:
                    for p in outputs:
                        q = cube_at(p, k, self.omega)
                        seen[q.corner] = q
                qs = [seen[c] for c in sorted(seen)]
            for Q in qs:
                if support is not None:
                    pps = {}
                    for p in support:
                        if Q.contains(p):
                            q = cube_at(p, Q.k - self.n, self.omega)
                            pps[q.corner] = q
                    qpps = [pps[c] for c in sorted(pps)]
                else:
                    qpps = descendants_at_depth(Q, self.n)
                if not qpps:
                    continue
                if outputs is not None:
                    ps = {}
                    for p in outputs:
                        if Q.contains(p):
                            q = cube_at(p, Q.k - self.m, self.omega)
                            ps[q.corner] = q
                    qps = [ps[c] for c in sorted(ps)]
                else:
                    qps = descendants_at_depth(Q, self.m)
                for Qp in qps:
                    for Qpp in qpps:
                        yield Q, Qp, Qpp, self.pair_for(Q, Qp, Qpp)


def build_shift(
    spec: ShiftFamilySpec, m: int, n: int, omega: GridShift
) -> ShiftOperator:
    """Construct the (m, n) shift of the family on one grid."""
    if m < 0 or n < 0:
        raise ValueError("complexity must be nonnegative")
    w = omega.window
    if max(m, n) >= w.levels:
        raise WindowError(
            f"window with {w.levels} levels is too shallow for complexity ({m}, {n}):"
            " no scale can host both Haar functions"
        )
    return ShiftOperator(spec, m, n, omega, norm_scale_factor(w, m, n))
