"""Relaxed signal sets: every data symbol owns a set of representation points.

The default point set is the Tomlinson-Harashima integer lattice truncated to
its ``L`` smallest-magnitude points, ``B_0 = {+1, -3, +5, -7, ...}`` and
``B_1 = -B_0``. Four families are built from it:

========================  =====================================================
``OneDimLattice``         real lattice, ``S = {0, 1}``
``QuadratureLattice``     Gray-mapped QPSK, the 1-D lattice in both components
``CheckerboardLattice``   quadrature sets rotated by 45 deg and scaled 1/sqrt 2
``SemiDiscrete``          1-D lattice real part, unconstrained imaginary part
========================  =====================================================

Point lists returned by :func:`enumerate_points` are ordered by the tie-break
rule used everywhere in the package: smaller ``|x|`` first, then larger real
part, then larger imaginary part. Exact solvers resolve ties by the index
into this list, so they agree with :func:`nearest_point`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, TooFewPoints, UnsupportedKind

# relative tolerance under which two distances count as a tie
TIE_RTOL = 1e-12

_ROT45 = (1 + 1j) / 2  # rotate by +45 deg and scale by 1/sqrt(2)


class Kind(str, Enum):
    ONE_DIM = "1d"
    QUADRATURE = "quadrature"
    CHECKERBOARD = "checkerboard"
    SEMI_DISCRETE = "semidiscrete"


def lattice_points(L: int) -> np.ndarray:
    """The first ``L`` points of ``{+1, -3, +5, -7, ...}`` (the set ``B_0``)."""
    if L < 1:
        raise DomainError(f"L must be positive, got {L}")
    i = np.arange(L)
    return np.where(i % 2 == 0, 1.0, -1.0) * (2 * i + 1)


def resolve_points(points: Sequence[float]) -> np.ndarray:
    """Base set ``B_0`` from a user point list.

    A list of positive numbers is read as the magnitudes of the alternating
    lattice, so ``[1, 3, 5]`` means ``{+1, -3, +5}``. Any list containing a
    negative entry is taken as the signed set itself. A set and its mirror
    image give the same energies, so every signed set stays expressible.
    """
    c = np.asarray(points, dtype=float).ravel()
    if c.size == 0:
        raise DomainError("need at least one lattice point")
    if not np.all(np.isfinite(c)):
        raise DomainError("lattice points must be finite")
    if np.all(c > 0):
        c = np.sort(c)
        c = np.where(np.arange(c.size) % 2 == 0, 1.0, -1.0) * c
    return c


def _tie_order(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=complex)
    order = np.lexsort((-pts.imag, -pts.real, np.round(np.abs(pts), 12)))
    return pts[order]


@dataclass(frozen=True)
class Alphabet:
    """A relaxed alphabet ``{B_s : s in S}``.

    ``points`` is the sorted real set ``c_1 < ... < c_L`` describing ``B_1``
    (for the lattice-based kinds, ``B_0 = -B_1`` is the per-dimension base
    set). ``symbols`` lists the data symbols in a fixed order.
    """

    kind: Kind
    L: int
    points: tuple[float, ...]
    symbols: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        pts = tuple(sorted(float(c) for c in self.points))
        if len(pts) != self.L:
            raise DomainError(f"expected {self.L} points, got {len(pts)}")
        if len(set(pts)) != len(pts):
            raise DomainError("points must be distinct")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "symbols", tuple(str(s) for s in self.symbols))

    # -- constructors -----------------------------------------------------

    @classmethod
    def build(cls, kind: Kind | str, L: int, points: Sequence[float] | None = None) -> "Alphabet":
        """Alphabet of the given kind; ``points`` is the ``B_0`` base set.

        Without ``points`` the integer lattice of :func:`lattice_points` is
        used; see :func:`resolve_points` for how positive lists are read.
        """
        kind = Kind(kind)
        base = lattice_points(L) if points is None else resolve_points(points)
        if len(base) != L:
            raise DomainError(f"expected {L} points, got {len(base)}")
        symbols = ("00", "01", "10", "11") if kind is Kind.QUADRATURE else ("0", "1")
        return cls(kind, L, tuple(-base), symbols)

    @classmethod
    def one_dim(cls, L: int, points=None) -> "Alphabet":
        return cls.build(Kind.ONE_DIM, L, points)

    @classmethod
    def quadrature(cls, L: int, points=None) -> "Alphabet":
        return cls.build(Kind.QUADRATURE, L, points)

    @classmethod
    def checkerboard(cls, L: int, points=None) -> "Alphabet":
        return cls.build(Kind.CHECKERBOARD, L, points)

    @classmethod
    def semi_discrete(cls, L: int, points=None) -> "Alphabet":
        return cls.build(Kind.SEMI_DISCRETE, L, points)

    # -- geometry ---------------------------------------------------------

    @property
    def base(self) -> np.ndarray:
        """Real base set ``B_0`` (symbol-0 points of one real dimension)."""
        return -np.asarray(self.points)

    @property
    def is_finite(self) -> bool:
        return self.kind is not Kind.SEMI_DISCRETE

    @property
    def bits_per_symbol(self) -> float:
        return math.log2(len(self.symbols))

    def symbol_index(self, s) -> int:
        if isinstance(s, (int, np.integer)) and not isinstance(s, bool):
            if not 0 <= s < len(self.symbols):
                raise DomainError(f"symbol index {s} out of range")
            return int(s)
        try:
            return self.symbols.index(str(s))
        except ValueError:
            raise DomainError(f"unknown data symbol {s!r}; have {self.symbols}") from None

    def real_axis_sets(self, s) -> tuple[np.ndarray | None, np.ndarray | None]:
        """Per-axis point sets when ``B_s`` is a Cartesian product.

        Returns ``(real_set, imag_set)`` with ``None`` marking an
        unconstrained coordinate. Raises :class:`UnsupportedKind` for the
        checkerboard, which does not factorize along the axes.
        """
        i = self.symbol_index(s)
        base = self.base
        if self.kind is Kind.ONE_DIM:
            return (base if i == 0 else -base), np.zeros(1)
        if self.kind is Kind.SEMI_DISCRETE:
            return (base if i == 0 else -base), None
        if self.kind is Kind.QUADRATURE:
            label = self.symbols[i]
            re = base if label[0] == "0" else -base
            im = base if label[1] == "0" else -base
            return re, im
        raise UnsupportedKind(f"{self.kind.value} sets are not axis-separable")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "L": self.L, "points": list(self.points),
                "symbols": list(self.symbols)}

    @classmethod
    def from_dict(cls, d: dict) -> "Alphabet":
        return cls(Kind(d["kind"]), int(d["L"]), tuple(d["points"]), tuple(d["symbols"]))


@dataclass(frozen=True)
class DataPrior:
    """Distribution of the data symbols, as ``(symbol, probability)`` pairs."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        entries = tuple((str(s), float(p)) for s, p in self.entries)
        probs = np.array([p for _, p in entries])
        if len(entries) == 0 or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise DomainError("prior probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def uniform(cls, alphabet: Alphabet) -> "DataPrior":
        n = len(alphabet.symbols)
        return cls(tuple((s, 1.0 / n) for s in alphabet.symbols))

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(s for s, _ in self.entries)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.entries])


# ---------------------------------------------------------------------------


def enumerate_points(a: Alphabet, s) -> np.ndarray:
    """All points of ``B_s`` in tie-break order, as a complex array."""
    i = a.symbol_index(s)
    if a.kind is Kind.SEMI_DISCRETE:
        raise UnsupportedKind("semi-discrete sets are continuous in the imaginary part")
    if a.kind is Kind.CHECKERBOARD:
        # B_0 comes from quadrature symbol 01, B_1 = j B_0 from symbol 00
        quad = Alphabet.quadrature(a.L, a.base)
        src = "01" if i == 0 else "00"
        pts = _ROT45 * enumerate_points(quad, src)
        return _tie_order(pts)
    re, im = a.real_axis_sets(i)
    pts = (re[:, None] + 1j * im[None, :]).ravel()
    return _tie_order(pts)


def voronoi_boundaries(points: Sequence[float]) -> np.ndarray:
    """Midpoints ``(c_i + c_{i-1}) / 2`` between consecutive sorted points."""
    c = np.asarray(points, dtype=float)
    if c.size < 2:
        raise TooFewPoints("need at least two points for a Voronoi boundary")
    if np.any(np.diff(c) <= 0):
        raise DomainError("points must be strictly increasing")
    return (c[1:] + c[:-1]) / 2.0


def _nearest_in(points: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Nearest element of ``points`` (already in tie order) to each ``y``."""
    d = np.abs(y[..., None] - points)
    dmin = d.min(axis=-1, keepdims=True)
    tied = d <= dmin * (1.0 + TIE_RTOL) + 1e-300
    return points[np.argmax(tied, axis=-1)]


def _nearest_real(points: np.ndarray, y: np.ndarray) -> np.ndarray:
    return _nearest_in(_tie_order(points).real.copy(), np.asarray(y, dtype=float))


def nearest_points(a: Alphabet, s, y) -> np.ndarray:
    """Vectorized :func:`nearest_point` over an array of targets ``y``."""
    y = np.asarray(y, dtype=complex)
    if a.kind is Kind.SEMI_DISCRETE:
        re, _ = a.real_axis_sets(s)
        return _nearest_real(re, y.real) + 1j * y.imag
    return _nearest_in(enumerate_points(a, s), y)


def nearest_point(a: Alphabet, s, y: complex) -> complex:
    """Point of ``B_s`` closest to ``y`` (imaginary part kept for semi-discrete)."""
    return complex(nearest_points(a, s, np.asarray([y]))[0])


def union_points(a: Alphabet) -> list[np.ndarray]:
    return [enumerate_points(a, s) for s in a.symbols]


def check_disjoint(sets: Iterable[np.ndarray]) -> bool:
    seen: set = set()
    for pts in sets:
        keys = {(round(z.real, 9), round(z.imag, 9)) for z in np.asarray(pts, dtype=complex)}
        if seen & keys:
            return False
        seen |= keys
    return True
