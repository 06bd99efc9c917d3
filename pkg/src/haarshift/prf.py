"""Counter-based 64-bit randomness for replayable sampling.

Every random draw in the package is a deterministic mix of an integer key
path (seed, site tag, counters): there is no sequential generator state, so
any single sample can be recomputed in isolation, chunks of work can be
handed to worker processes in any order, and scalar spot checks can replay
values produced by the vectorized paths bit for bit.

The scalar functions use plain Python integers; the ``*_np`` twins apply the
same mixing to uint64 arrays.  Their bit equality is asserted in the tests.
"""
from __future__ import annotations

import hashlib
import json
from typing import Any

import numpy as np

MASK64 = (1 << 64) - 1

_GOLDEN = 0x9E3779B97F4A7C15
_INIT = 0x84242F96ECA9C41D
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB

# Key-path tags: one namespace per drawing site.
TAG_OMEGA = 0x4F4D47   # grid-shift bits
TAG_COEFF = 0x434F46   # Haar pair coefficients
TAG_NORM = 0x4E4F52    # power-iteration start vectors
TAG_SWEEP = 0x535750   # experiment-level draws (instance generation)


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def key64(*parts: int) -> int:
    """Mix an integer key path into one 64-bit word."""
    h = _INIT
    for p in parts:
        h = mix64((h ^ (p & MASK64)) + _GOLDEN)
    return h


def unit_float(word: int) -> float:
    """Map a word to [0, 1) with 53 uniform bits."""
    return (word >> 11) * 2.0**-53


def sym_float(word: int) -> float:
    """Map a word to [-1, 1)."""
    return (word >> 11) * 2.0**-52 - 1.0


_U = np.uint64
_GOLDEN_U = _U(_GOLDEN)
_INIT_U = _U(_INIT)
_MUL1_U = _U(_MUL1)
_MUL2_U = _U(_MUL2)
_S30 = _U(30)
_S27 = _U(27)
_S31 = _U(31)
_S11 = _U(11)


def mix64_np(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):  # wraparound is the point
        z = (z ^ (z >> _S30)) * _MUL1_U
        z = (z ^ (z >> _S27)) * _MUL2_U
        return z ^ (z >> _S31)


def _as_u64(p: Any) -> np.ndarray | np.uint64:
    if isinstance(p, int):
        return _U(p & MASK64)
    a = np.asarray(p)
    if a.dtype != np.uint64:
        a = a.astype(np.int64).astype(np.uint64)
    return a


def key64_np(*parts: Any) -> np.ndarray:
    """Vector twin of :func:`key64`; parts may be ints or integer arrays."""
    h: np.ndarray | np.uint64 = _INIT_U
    with np.errstate(over="ignore"):
        for p in parts:
            h = mix64_np((h ^ _as_u64(p)) + _GOLDEN_U)
    return h


def unit_float_np(word: np.ndarray) -> np.ndarray:
    return (word >> _S11).astype(np.float64) * 2.0**-53


def sym_float_np(word: np.ndarray) -> np.ndarray:
    return (word >> _S11).astype(np.float64) * 2.0**-52 - 1.0


def _text_part(s: str) -> int:
    return int.from_bytes(hashlib.sha256(s.encode()).digest()[:8], "big")


class Stream:
    """Immutable handle on a key path.

    ``word(*suffix)`` draws are independent across suffixes and across
    derived streams; nothing is consumed, so a Stream can be shared freely.
    """

    __slots__ = ("_key",)

    def __init__(self, *parts: int | str):
        self._key = tuple(
            _text_part(p) if isinstance(p, str) else int(p) for p in parts
        )

    @property
    def key(self) -> tuple[int, ...]:
        return self._key

    def derive(self, *parts: int | str) -> "Stream":
        child = Stream()
        child._key = self._key + tuple(
            _text_part(p) if isinstance(p, str) else int(p) for p in parts
        )
        return child

    def word(self, *suffix: int | str) -> int:
        parts = tuple(
            _text_part(p) if isinstance(p, str) else int(p) for p in suffix
        )
        return key64(*self._key, *parts)

    def unit(self, *suffix: int | str) -> float:
        return unit_float(self.word(*suffix))

    def sym(self, *suffix: int | str) -> float:
        return sym_float(self.word(*suffix))

    def __repr__(self) -> str:
        return f"Stream{self._key!r}"


def canonical_json(obj: Any) -> str:
    """Canonical serialization used for digests: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def stable_digest(obj: Any, length: int = 16) -> str:
    """Hex digest of an object's canonical JSON form."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:length]
