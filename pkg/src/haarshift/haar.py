"""Haar functions, step functions, and the action of Haar shifts.

A Haar function here is any function constant on the children of its cube
and supported on the cube; no vanishing integral is required.  The only
normalization the package ever imposes is on products of sup norms of the
paired functions, so indicator-type (averaging) pairs are legitimate.

Step functions live on the shared base cells (scale ``k_min``), where every
Haar function within the window is exactly representable.  Inner products
and shift applications are therefore finite sums; with Fraction-valued
inputs they are exact rational arithmetic.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping

import numpy as np

from .grid import DyadicCube, GridShift, Point, ScaleWindow, WindowError, cube_at
from .prf import TAG_NORM, Stream

log = logging.getLogger(__name__)

Number = float | Fraction


@dataclass(frozen=True)
class HaarFunction:
    """Child-wise constant function on a cube: ``coeffs[i]`` on child ``i``."""

    cube: DyadicCube
    coeffs: tuple[Number, ...]

    def __post_init__(self):
        w = self.cube.window
        if self.cube.k - 1 < w.k_min:
            raise WindowError(
                f"Haar function at scale {self.cube.k}: children below base resolution"
            )
        if len(self.coeffs) != 1 << w.dim:
            raise ValueError(f"need {1 << w.dim} coefficients, got {len(self.coeffs)}")

    @property
    def sup_norm(self) -> float:
        return float(max(abs(c) for c in self.coeffs))

    def evaluate(self, x: Point) -> Number:
        """Value at a dyadic point; 0 outside the cube (half-open convention)."""
        if not self.cube.contains(x):
            return type(self.coeffs[0])(0)
        return self.coeffs[self.cube.child_index(x)]


class StepFunction:
    """Finitely supported function, constant on base cells.

    ``values`` maps a base-cell corner (which is its own integer point) to
    the constant the function takes on that cell.  Zero entries are dropped.
    """

    __slots__ = ("window", "values")

    def __init__(self, window: ScaleWindow, values: Mapping[Point, Number]):
        self.window = window
        self.values: dict[Point, Number] = {p: v for p, v in values.items() if v != 0}

    def evaluate(self, x: Point) -> Number:
        return self.values.get(x, 0)

    @property
    def support(self) -> list[Point]:
        return sorted(self.values)

    def cell_measure(self, exact: bool = False) -> Number:
        d, k = self.window.dim, self.window.k_min
        return Fraction(2) ** (k * d) if exact else 2.0 ** (k * d)

    def l2_norm(self) -> float:
        return float(
            sum(float(v) ** 2 for v in self.values.values()) * float(self.cell_measure())
        ) ** 0.5

    def scaled(self, a: Number) -> "StepFunction":
        return StepFunction(self.window, {p: a * v for p, v in self.values.items()})

    def __add__(self, other: "StepFunction") -> "StepFunction":
        if other.window != self.window:
            raise ValueError("windows differ")
        out = dict(self.values)
        for p, v in other.values.items():
            out[p] = out.get(p, 0) + v
        return StepFunction(self.window, out)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, StepFunction)
            and self.window == other.window
            and self.values == other.values
        )

    def __repr__(self) -> str:
        return f"StepFunction({len(self.values)} cells)"

    def to_json(self) -> list:
        """List of (cell corner, value) pairs; exact values keep numerator
        and denominator so fixtures round-trip without loss."""
        out = []
        for p in self.support:
            v = self.values[p]
            enc = [v.numerator, v.denominator] if isinstance(v, Fraction) else float(v)
            out.append([list(p), enc])
        return out

    @classmethod
    def from_json(cls, window: ScaleWindow, obj: list) -> "StepFunction":
        vals: dict[Point, Number] = {}
        for corner, enc in obj:
            v = Fraction(enc[0], enc[1]) if isinstance(enc, list) else float(enc)
            vals[tuple(int(c) for c in corner)] = v
        return cls(window, vals)


def is_exact(f: StepFunction) -> bool:
    return any(isinstance(v, Fraction) for v in f.values.values())


def inner_product(f: StepFunction, h: HaarFunction, exact: bool | None = None) -> Number:
    """L2 pairing of a step function with a Haar function (finite exact sum)."""
    if exact is None:
        exact = is_exact(f)
    meas = f.cell_measure(exact)
    cube = h.cube
    coeffs = [Fraction(c) for c in h.coeffs] if exact else [float(c) for c in h.coeffs]
    total = Fraction(0) if exact else 0.0
    for p in sorted(f.values):
        if cube.contains(p):
            v = f.values[p]
            total += (Fraction(v) if exact else float(v)) * coeffs[cube.child_index(p)]
    return total * meas


def step_inner(f: StepFunction, g: StepFunction, exact: bool | None = None) -> Number:
    """L2 pairing of two step functions (finite exact sum over shared cells)."""
    if f.window is not g.window and f.window != g.window:
        raise ValueError("step functions live on different windows")
    if exact is None:
        exact = is_exact(f) and is_exact(g)
    meas = f.cell_measure(exact)
    total: Number = Fraction(0) if exact else 0.0
    for p in sorted(set(f.values) & set(g.values)):
        a, b = f.values[p], g.values[p]
        if exact:
            total += Fraction(a) * Fraction(b)
        else:
            total += float(a) * float(b)
    return total * meas


def cells_of(cube: DyadicCube) -> Iterator[Point]:
    """Base-cell corners tiling a cube, lexicographic."""
    side = cube.side_units
    for offs in itertools.product(*(range(side),) * cube.window.dim):
        yield tuple(c + o for c, o in zip(cube.corner, offs))


HaarPair = tuple[HaarFunction, HaarFunction]
"""(input-side function on Q'', output-side function on Q')."""

Term = tuple[DyadicCube, DyadicCube, DyadicCube, HaarPair]
"""(Q, Q', Q'', pair): one summand of a Haar shift."""


def apply_shift_term(
    Q: DyadicCube,
    Qp: DyadicCube,
    Qpp: DyadicCube,
    pair: HaarPair,
    f: StepFunction,
    within: Iterable[Point] | None = None,
    exact: bool | None = None,
) -> StepFunction:
    """One shift summand: ``|Q|^-1 <f, h_in> h_out``.

    ``within`` restricts materialization to the given base cells; the values
    produced are those of the unrestricted output on that set.
    """
    h_in, h_out = pair
    if h_in.cube != Qpp or h_out.cube != Qp:
        raise ValueError("pair cubes do not match (Q', Q'')")
    if exact is None:
        exact = is_exact(f)
    coef = inner_product(f, h_in, exact)
    vol = Fraction(2) ** (Q.k * Q.window.dim) if exact else Q.volume_real
    coef = coef / vol
    out: dict[Point, Number] = {}
    if coef != 0:
        targets = cells_of(Qp) if within is None else (p for p in within if Qp.contains(p))
        h_coeffs = (
            [Fraction(c) for c in h_out.coeffs] if exact else [float(c) for c in h_out.coeffs]
        )
        for p in targets:
            out[p] = coef * h_coeffs[Qp.child_index(p)]
    return StepFunction(f.window, out)


def apply_shift(
    shift,
    f: StepFunction,
    within: Iterable[Point] | None = None,
    exact: bool | None = None,
) -> StepFunction:
    """Apply a Haar shift to a step function.

    ``shift`` is anything exposing ``iter_terms(support, outputs)`` (a family
    shift or an explicit term list).  With ``within`` the output is the exact
    restriction of the full image to those cells, which keeps deep windows
    affordable when only a few output cells are ever read.
    """
    if exact is None:
        exact = is_exact(f)
    support = f.support
    cells = None if within is None else sorted(set(within))
    acc: dict[Point, Number] = {}
    meas = f.cell_measure(exact)
    for Q, Qp, Qpp, (h_in, h_out) in shift.iter_terms(support=support, outputs=cells):
        # Inline inner product over the (small) support for speed.
        total = Fraction(0) if exact else 0.0
        for p in support:
            if Qpp.contains(p):
                v = f.values[p]
                c = h_in.coeffs[Qpp.child_index(p)]
                total += (Fraction(v) * Fraction(c)) if exact else float(v) * float(c)
        if total == 0:
            continue
        vol = Fraction(2) ** (Q.k * Q.window.dim) if exact else Q.volume_real
        coef = total * meas / vol
        targets = cells_of(Qp) if cells is None else (p for p in cells if Qp.contains(p))
        for p in targets:
            c = h_out.coeffs[Qp.child_index(p)]
            inc = coef * (Fraction(c) if exact else float(c))
            acc[p] = acc.get(p, 0) + inc
    return StepFunction(f.window, acc)


@dataclass(frozen=True)
class TermShift:
    """Explicit Haar shift given by a finite term list (test and probe tool)."""

    window: ScaleWindow
    terms: tuple[Term, ...]

    def iter_terms(self, support=None, outputs=None) -> Iterator[Term]:
        for Q, Qp, Qpp, pair in self.terms:
            if support is not None and not any(Qpp.contains(p) for p in support):
                continue
            if outputs is not None and not any(Qp.contains(p) for p in outputs):
                continue
            yield Q, Qp, Qpp, pair


def shift_cell_matrix(shift, region: DyadicCube) -> np.ndarray:
    """Dense matrix of the shift on the base cells of ``region``.

    The base-cell indicators have equal measure, so the L2 operator norm of
    the shift restricted to the region equals the spectral norm of this
    matrix.  Intended for probe regions; guards against absurd sizes.
    """
    w = region.window
    cells = list(cells_of(region))
    n = len(cells)
    if n > 1 << 17:
        raise ValueError(f"probe region has {n} cells; too large for a dense matrix")
    index = {p: i for i, p in enumerate(cells)}
    meas = 2.0 ** (w.k_min * w.dim)
    M = np.zeros((n, n))
    for Q, Qp, Qpp, (h_in, h_out) in shift.iter_terms(support=cells, outputs=cells):
        out_col = np.zeros(n)
        in_row = np.zeros(n)
        for p in cells_of(Qp):
            i = index.get(p)
            if i is not None:
                out_col[i] = float(h_out.coeffs[Qp.child_index(p)])
        for p in cells_of(Qpp):
            j = index.get(p)
            if j is not None:
                in_row[j] = float(h_in.coeffs[Qpp.child_index(p)])
        M += np.outer(out_col, in_row) * (meas / Q.volume_real)
    return M


def estimate_operator_norm(
    shift,
    rng: Stream | int = 0,
    iterations: int = 400,
    region: DyadicCube | None = None,
    tol: float = 1e-10,
) -> float:
    """Largest singular value of the shift on a probe region, by power iteration.

    The probe region defaults to the top-scale cube of the shift's own grid
    containing the origin; the shift never maps functions supported there
    outside of it, so the restriction is a genuine block of the operator.
    The Rayleigh estimate is monotone nondecreasing; non-convergence within
    the iteration budget is reported as a warning, not an error.
    """
    if region is None:
        omega = getattr(shift, "omega", None)
        if omega is None:
            raise ValueError("explicit shifts need a probe region")
        w = omega.window
        region = cube_at((0,) * w.dim, w.k_max, omega)
    M = shift_cell_matrix(shift, region)
    if not M.any():
        return 0.0
    stream = rng if isinstance(rng, Stream) else Stream(int(rng), TAG_NORM)
    n = M.shape[0]
    v = np.array([stream.sym(i) for i in range(n)])
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        v = np.ones(n)
        nv = float(np.linalg.norm(v))
    v /= nv
    est = 0.0
    for it in range(iterations):
        u = M @ v
        new = float(np.linalg.norm(u))  # Rayleigh quotient sqrt(v' M'M v), ||v|| = 1
        v = M.T @ u
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            return new
        v /= nv
        if it > 0 and abs(new - est) <= tol * max(1.0, new):
            return new
        est = new
    log.warning("operator norm estimate did not converge in %d iterations", iterations)
    return est
