"""Array geometry, steering vectors, DFT dictionary and interval algebra over angles.

Directions are handled in two coordinates:

* azimuth (radians) in the horizontal plane, used by the blockage geometry;
* spatial frequency ``u = cos(azimuth)`` in ``[-1, 1]``, used by codebooks.

For a linear array along the x axis, ``u`` is the direction cosine onto the array
axis, so a half-wavelength ULA has steering entries ``exp(j*pi*m*u)/sqrt(M)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ArrayLayout:
    """Positions of ``M`` movable antennas (meters) plus the reference point.

    ``region`` is the movement box ``(lo, hi)``, each a length-3 array.  When not
    given it is the bounding box of ``positions``.
    """

    positions: np.ndarray
    wavelength: float
    reference_point: np.ndarray | None = None
    region: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.shape[1] == 2:
            pos = np.column_stack([pos, np.zeros(len(pos))])
        if pos.ndim != 2 or pos.shape[1] != 3 or len(pos) < 1:
            raise ValueError("positions must be an (M, 3) array with M >= 1")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        ref = pos[0] if self.reference_point is None else np.asarray(self.reference_point, float)
        if self.region is None:
            region = (pos.min(axis=0), pos.max(axis=0))
        else:
            region = (np.asarray(self.region[0], float), np.asarray(self.region[1], float))
        tol = 1e-12
        if np.any(pos < region[0] - tol) or np.any(pos > region[1] + tol):
            raise ValueError("antenna positions leave the movement region")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "reference_point", ref)
        object.__setattr__(self, "region", region)

    @property
    def element_count(self) -> int:
        return len(self.positions)

    @classmethod
    def ula(cls, M: int, wavelength: float, spacing: float | None = None,
            origin=(0.0, 0.0, 0.0), region=None) -> "ArrayLayout":
        """Uniform linear array along +x starting at ``origin``."""
        d = wavelength / 2 if spacing is None else spacing
        origin = np.asarray(origin, float)
        pos = origin + np.outer(np.arange(M) * d, [1.0, 0.0, 0.0])
        return cls(pos, wavelength, reference_point=origin, region=region)

    def moved(self, positions) -> "ArrayLayout":
        """Same array and movement region with new antenna positions."""
        return ArrayLayout(positions, self.wavelength, self.reference_point, self.region)


def direction_from_u(u):
    """Unit direction vectors (front half-plane, y >= 0) for spatial frequencies."""
    u = np.clip(np.asarray(u, float), -1.0, 1.0)
    return np.stack([u, np.sqrt(1.0 - u**2), np.zeros_like(u)], axis=-1)


def steering_matrix(layout: ArrayLayout, u) -> np.ndarray:
    """Unit-norm steering vectors as columns, shape ``(M, len(u))``."""
    u = np.atleast_1d(np.asarray(u, float))
    rel = layout.positions - layout.reference_point
    k = TWO_PI / layout.wavelength
    phase = k * rel @ direction_from_u(u).T
    return np.exp(1j * phase) / math.sqrt(layout.element_count)


def steering_vector(layout: ArrayLayout, u: float) -> np.ndarray:
    """Unit-norm array response toward spatial frequency ``u``."""
    return steering_matrix(layout, [u])[:, 0]


def steering_from_azimuth(layout: ArrayLayout, azimuth: float) -> np.ndarray:
    return steering_vector(layout, math.cos(azimuth))


def ula_steering_matrix(M: int, u) -> np.ndarray:
    """Half-wavelength ULA steering columns ``exp(j*pi*m*u)/sqrt(M)``."""
    u = np.atleast_1d(np.asarray(u, float))
    return np.exp(1j * math.pi * np.outer(np.arange(M), u)) / math.sqrt(M)


def ula_steering(M: int, u: float) -> np.ndarray:
    return ula_steering_matrix(M, [u])[:, 0]


def dft_directions(M: int) -> np.ndarray:
    """Bin centres ``-1 + (2i + 1)/M`` that tile ``[-1, 1]`` with width ``2/M``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    return -1.0 + (2.0 * np.arange(M) + 1.0) / M


def dft_codebook(M: int, layout: ArrayLayout | None = None) -> np.ndarray:
    """``M`` mutually orthogonal unit-norm steering vectors (columns).

    Orthogonality is exact only for the half-wavelength ULA; with a general
    ``layout`` the same directions are used and orthogonality is approximate.
    """
    u = dft_directions(M)
    if layout is None:
        return ula_steering_matrix(M, u)
    return steering_matrix(layout, u)


# ---------------------------------------------------------------------------
# interval algebra


@dataclass(frozen=True, order=True)
class AngularInterval:
    """Half-open interval ``[lo, hi)``."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"interval lo > hi: {self.lo} > {self.hi}")

    @property
    def measure(self) -> float:
        return self.hi - self.lo

    def contains(self, x):
        x = np.asarray(x)
        return (x >= self.lo) & (x < self.hi)


def _merge(pairs: Iterable[tuple[float, float]]) -> tuple[AngularInterval, ...]:
    out: list[list[float]] = []
    for lo, hi in sorted(p for p in pairs if p[1] > p[0]):
        if out and lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return tuple(AngularInterval(lo, hi) for lo, hi in out)


@dataclass(frozen=True)
class AngularSet:
    """Sorted, pairwise-disjoint union of half-open intervals.

    Touching intervals are merged, so consecutive intervals satisfy
    ``prev.hi < next.lo``.  Empty intervals are dropped.
    """

    intervals: tuple[AngularInterval, ...] = field(default=())

    def __post_init__(self):
        merged = _merge((iv.lo, iv.hi) for iv in self.intervals)
        object.__setattr__(self, "intervals", merged)

    @classmethod
    def of(cls, *pairs: Sequence[float]) -> "AngularSet":
        return cls(tuple(AngularInterval(float(a), float(b)) for a, b in pairs))

    @classmethod
    def empty(cls) -> "AngularSet":
        return cls(())

    def is_empty(self) -> bool:
        return not self.intervals

    @property
    def measure(self) -> float:
        return float(sum(iv.measure for iv in self.intervals))

    @property
    def bounds(self) -> tuple[float, float]:
        if not self.intervals:
            raise ValueError("empty set has no bounds")
        return self.intervals[0].lo, self.intervals[-1].hi

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if not self.intervals:
            return np.zeros(x.shape, bool)
        los = np.array([iv.lo for iv in self.intervals])
        his = np.array([iv.hi for iv in self.intervals])
        idx = np.searchsorted(los, x, side="right") - 1
        ok = idx >= 0
        idx = np.clip(idx, 0, None)
        return ok & (x < his[idx])

    def union(self, other: "AngularSet") -> "AngularSet":
        return AngularSet(self.intervals + other.intervals)

    def intersect(self, other: "AngularSet") -> "AngularSet":
        out = []
        i = j = 0
        a, b = self.intervals, other.intervals
        while i < len(a) and j < len(b):
            lo = max(a[i].lo, b[j].lo)
            hi = min(a[i].hi, b[j].hi)
            if hi > lo:
                out.append(AngularInterval(lo, hi))
            if a[i].hi < b[j].hi:
                i += 1
            else:
                j += 1
        return AngularSet(tuple(out))

    def subtract(self, other: "AngularSet") -> "AngularSet":
        out = []
        for iv in self.intervals:
            pieces = [(iv.lo, iv.hi)]
            for cut in other.intervals:
                if cut.lo >= iv.hi:
                    break
                nxt = []
                for lo, hi in pieces:
                    if cut.hi <= lo or cut.lo >= hi:
                        nxt.append((lo, hi))
                        continue
                    if cut.lo > lo:
                        nxt.append((lo, cut.lo))
                    if cut.hi < hi:
                        nxt.append((cut.hi, hi))
                pieces = nxt
            out.extend(AngularInterval(lo, hi) for lo, hi in pieces)
        return AngularSet(tuple(out))

    def expand(self, guard: float) -> "AngularSet":
        """Grow every interval by ``guard`` on both sides."""
        if guard == 0:
            return self
        return AngularSet(tuple(AngularInterval(iv.lo - guard, iv.hi + guard)
                                for iv in self.intervals))

    def to_pairs(self) -> list[tuple[float, float]]:
        return [(iv.lo, iv.hi) for iv in self.intervals]

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)


def set_union(intervals: Iterable[AngularInterval]) -> AngularSet:
    return AngularSet(tuple(intervals))


def set_subtract(fov: AngularSet, blocked: AngularSet) -> AngularSet:
    return fov.subtract(blocked)


def azimuth_to_u(azimuths: AngularSet) -> AngularSet:
    """Map an azimuth set inside ``[0, pi]`` to spatial frequency via ``u = cos``.

    ``cos`` is decreasing on ``[0, pi]`` so each ``[a, b)`` maps onto
    ``(cos b, cos a]``; endpoints are measure-zero and stored half-open.
    Parts outside ``[0, pi]`` are clipped (the linear array cannot tell the
    back half-plane from the front).
    """
    clipped = azimuths.intersect(AngularSet.of((0.0, math.pi)))
    return AngularSet(tuple(AngularInterval(math.cos(iv.hi), math.cos(iv.lo))
                            for iv in clipped))


def u_to_azimuth(us: AngularSet) -> AngularSet:
    clipped = us.intersect(AngularSet.of((-1.0, 1.0)))
    return AngularSet(tuple(AngularInterval(math.acos(iv.hi), math.acos(iv.lo))
                            for iv in clipped))


# ---------------------------------------------------------------------------
# sampling grids

IN_SECTOR, BLOCKED, SIDELOBE = 0, 1, 2
TAG_NAMES = {IN_SECTOR: "in_sector", BLOCKED: "blocked", SIDELOBE: "sidelobe"}


@dataclass(frozen=True)
class AngularGrid:
    samples: np.ndarray
    tags: np.ndarray

    def indices(self, tag: int) -> np.ndarray:
        return np.flatnonzero(self.tags == tag)

    @property
    def size(self) -> int:
        return len(self.samples)


def uniform_samples(region: AngularSet, density: float) -> np.ndarray:
    """Cell-midpoint samples, ``round(density * length)`` per interval (at least one)."""
    if density <= 0:
        raise ValueError("density must be positive")
    chunks = []
    for iv in region:
        n = max(1, int(round(density * iv.measure)))
        chunks.append(iv.lo + (np.arange(n) + 0.5) * iv.measure / n)
    return np.concatenate(chunks) if chunks else np.empty(0)


def grid_sample(sector: AngularSet, blocked: AngularSet, fov: AngularSet,
                density: float) -> AngularGrid:
    """Tag a uniform grid over ``fov``; blocked takes precedence over in-sector."""
    if fov.is_empty():
        raise ValueError("field of view is empty")
    u = uniform_samples(fov, density)
    tags = np.full(u.shape, SIDELOBE, dtype=np.int8)
    tags[sector.contains(u)] = IN_SECTOR
    tags[blocked.contains(u)] = BLOCKED
    return AngularGrid(u, tags)
