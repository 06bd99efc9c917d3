"""Exact geometry of randomly shifted dyadic grids on a finite scale window.

Conventions
-----------
* A window fixes the scale range ``k_min..k_max`` and the dimension ``d``.
  All coordinates are integers in units of ``2**k_min`` (the base-cell side),
  so every geometric predicate in this module is exact integer arithmetic.
* Cubes are half-open, ``[a, a + 2**k)**d``: every point lies in exactly one
  cube per scale and grid, and faces belong to the cube they open.
* A grid shift draws one translation bit vector ``omega_j`` in ``{0,1}**d``
  per scale ``j`` in ``[k_min, k_max)``.  The lattice of scale-``k`` cubes is
  the standard lattice translated by ``s_k = sum_{j<k} omega_j * 2**j``;
  the translations accumulate from the bottom of the window, so ``s_k_min``
  is zero and every shifted grid shares the same base cells.  Cubes of one
  shifted grid are nested across scales.

Base cells at scale ``k_min`` have side 1 in integer units, hence a point is
the corner of its own base cell.  Step functions and Haar functions elsewhere
in the package rely on exactly this identification.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

from .prf import Stream, stable_digest

Point = tuple[int, ...]
"""A dyadic point: integer coordinates in units of ``2**k_min``."""


class WindowError(ValueError):
    """A scale or complexity does not fit inside the window."""


@dataclass(frozen=True)
class ScaleWindow:
    """Truncation window: scales ``k_min..k_max`` in dimension ``dim``."""

    k_min: int
    k_max: int
    dim: int

    def __post_init__(self):
        if self.k_min >= self.k_max:
            raise ValueError(f"empty window: k_min={self.k_min} >= k_max={self.k_max}")
        if self.dim < 1:
            raise ValueError(f"dimension must be positive, got {self.dim}")

    @property
    def levels(self) -> int:
        return self.k_max - self.k_min

    def scales(self) -> range:
        return range(self.k_min, self.k_max + 1)

    @property
    def unit(self) -> Fraction:
        """Base-cell side as an exact rational."""
        return Fraction(2) ** self.k_min

    def side_units(self, k: int) -> int:
        if not self.k_min <= k <= self.k_max:
            raise WindowError(f"scale {k} outside window [{self.k_min}, {self.k_max}]")
        return 1 << (k - self.k_min)

    def to_real(self, units: int) -> float:
        return units * 2.0**self.k_min

    def point(self, *coords: float | Fraction | int) -> Point:
        """Convert real coordinates to integer units; rejects non-dyadic input."""
        if len(coords) != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {len(coords)}")
        out = []
        for c in coords:
            q = Fraction(c) / self.unit
            if q.denominator != 1:
                raise ValueError(f"{c} is not a multiple of 2**{self.k_min}")
            out.append(int(q))
        return tuple(out)

    def to_json(self) -> dict:
        return {"k_min": self.k_min, "k_max": self.k_max, "dim": self.dim}

    @classmethod
    def from_json(cls, obj: dict) -> "ScaleWindow":
        return cls(int(obj["k_min"]), int(obj["k_max"]), int(obj["dim"]))


@dataclass(frozen=True)
class GridShift:
    """One realization of the random translation, truncated to a window.

    ``omega[j - k_min][i]`` is the bit for scale ``j``, coordinate ``i``.
    ``cumulative[k - k_min]`` holds ``s_k`` in integer units; the invariant
    ``0 <= s_k < 2**(k - k_min)`` per coordinate follows from the binary
    expansion and is asserted in tests rather than rechecked here.
    """

    window: ScaleWindow
    omega: tuple[tuple[int, ...], ...]
    cumulative: tuple[tuple[int, ...], ...] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        w = self.window
        if len(self.omega) != w.levels:
            raise ValueError(f"need {w.levels} bit vectors, got {len(self.omega)}")
        cum = [(0,) * w.dim]
        for j_rel, bits in enumerate(self.omega):
            if len(bits) != w.dim or any(b not in (0, 1) for b in bits):
                raise ValueError(f"bad bit vector at scale {w.k_min + j_rel}: {bits}")
            prev = cum[-1]
            cum.append(tuple(p + (b << j_rel) for p, b in zip(prev, bits)))
        object.__setattr__(self, "cumulative", tuple(cum))

    def s_units(self, k: int) -> tuple[int, ...]:
        """Lattice translation at scale ``k``, in integer units."""
        if not self.window.k_min <= k <= self.window.k_max:
            raise WindowError(f"scale {k} outside window")
        return self.cumulative[k - self.window.k_min]

    def bit(self, j: int, i: int) -> int:
        return self.omega[j - self.window.k_min][i]

    def to_json(self) -> dict:
        return {
            "k_min": self.window.k_min,
            "k_max": self.window.k_max,
            "d": self.window.dim,
            "omega": [list(b) for b in self.omega],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GridShift":
        window = ScaleWindow(int(obj["k_min"]), int(obj["k_max"]), int(obj["d"]))
        return cls(
            window,
            tuple(tuple(int(b) for b in bits) for bits in obj["omega"]),
        )

    def digest(self) -> str:
        return stable_digest(self.to_json())

    def digest_int(self) -> int:
        return int(self.digest(), 16)


def zero_shift(window: ScaleWindow) -> GridShift:
    """The standard (untranslated) grid."""
    return GridShift(window, ((0,) * window.dim,) * window.levels)


def sample_shift(stream: Stream, window: ScaleWindow) -> GridShift:
    """Draw a grid shift: one word per scale, coordinate bits from its low end."""
    omega = []
    for j_rel in range(window.levels):
        w = stream.word(j_rel)
        omega.append(tuple((w >> i) & 1 for i in range(window.dim)))
    return GridShift(window, tuple(omega))


@dataclass(frozen=True)
class DyadicCube:
    """Half-open cube ``[corner, corner + side)`` at scale ``k`` of one grid.

    Equality and hashing use the window, scale, and corner; the shift handle
    rides along (excluded from comparison) so that parent lookups know which
    lattice the cube came from.
    """

    window: ScaleWindow
    k: int
    corner: Point
    shift: GridShift = field(compare=False, repr=False)

    @property
    def side_units(self) -> int:
        return 1 << (self.k - self.window.k_min)

    @property
    def side_real(self) -> float:
        return 2.0**self.k

    @property
    def volume_real(self) -> float:
        return 2.0 ** (self.k * self.window.dim)

    @property
    def diameter_real(self) -> float:
        return self.window.dim**0.5 * 2.0**self.k

    def contains(self, x: Point) -> bool:
        s = self.side_units
        return all(c <= xi < c + s for c, xi in zip(self.corner, x))

    def child_index(self, x: Point) -> int:
        """Index of the child holding ``x``: bit ``i`` set iff upper half in coordinate ``i``."""
        half = self.side_units >> 1
        if half < 1:
            raise WindowError(f"cube at scale {self.k} has no representable children")
        idx = 0
        for i, (c, xi) in enumerate(zip(self.corner, x)):
            if xi >= c + half:
                idx |= 1 << i
        return idx

    def corner_real(self) -> tuple[float, ...]:
        return tuple(self.window.to_real(c) for c in self.corner)


def locate_units(x: int, s: int, side_bits: int) -> int:
    """Corner (in units) of the half-open interval of side ``2**side_bits``
    from the lattice translated by ``s`` that contains ``x``."""
    return s + (((x - s) >> side_bits) << side_bits)


def cube_at(x: Point, k: int, shift: GridShift) -> DyadicCube:
    """The unique scale-``k`` cube of the shifted grid containing ``x``."""
    w = shift.window
    if len(x) != w.dim:
        raise ValueError(f"point has {len(x)} coordinates, window has {w.dim}")
    s = shift.s_units(k)
    b = k - w.k_min
    corner = tuple(locate_units(xi, si, b) for xi, si in zip(x, s))
    return DyadicCube(w, k, corner, shift)


def children(cube: DyadicCube) -> list[DyadicCube]:
    """The ``2**d`` children, ordered by child index."""
    w = cube.window
    if cube.k - 1 < w.k_min:
        raise WindowError(f"children of scale {cube.k} fall below base resolution")
    half = cube.side_units >> 1
    out = []
    for idx in range(1 << w.dim):
        corner = tuple(
            c + (half if (idx >> i) & 1 else 0) for i, c in enumerate(cube.corner)
        )
        out.append(DyadicCube(w, cube.k - 1, corner, cube.shift))
    return out


def parent(cube: DyadicCube) -> DyadicCube:
    """The scale ``k+1`` cube of the same grid containing this cube."""
    w = cube.window
    if cube.k + 1 > w.k_max:
        raise WindowError(f"parent of scale {cube.k} exceeds window top {w.k_max}")
    return cube_at(cube.corner, cube.k + 1, cube.shift)


def descendants_at_depth(cube: DyadicCube, depth: int) -> list[DyadicCube]:
    """All ``2**(depth*d)`` descendants ``depth`` levels down, lexicographic by offset."""
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    w = cube.window
    k = cube.k - depth
    if k < w.k_min:
        raise WindowError(
            f"descendants at depth {depth} of scale {cube.k} fall below base resolution"
        )
    step = 1 << (k - w.k_min)
    ranges = [range(0, cube.side_units, step)] * w.dim
    out = []
    for offs in itertools.product(*ranges):
        corner = tuple(c + o for c, o in zip(cube.corner, offs))
        out.append(DyadicCube(w, k, corner, cube.shift))
    return out


def boundary_distance(x: Point, cube: DyadicCube) -> Fraction:
    """Exact distance from ``x`` to the cube boundary (sup of face distances
    is not needed: the nearest face gives the distance)."""
    if not cube.contains(x):
        raise ValueError("point lies outside the cube")
    s = cube.side_units
    d_units = min(
        min(xi - c, c + s - xi) for c, xi in zip(cube.corner, x)
    )
    return d_units * cube.window.unit


def euclidean_distance(x: Point, y: Point, window: ScaleWindow) -> float:
    """Real Euclidean distance between two dyadic points."""
    return float(sum((a - b) ** 2 for a, b in zip(x, y)) ** 0.5) * 2.0**window.k_min


def distance_squared_units(x: Point, y: Point) -> int:
    """Exact squared Euclidean distance in integer units."""
    return sum((a - b) ** 2 for a, b in zip(x, y))
