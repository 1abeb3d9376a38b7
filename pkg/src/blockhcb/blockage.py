"""Blocked angular intervals from circular obstacles, and the available-angle set.

Occlusion is modelled in the horizontal plane: a disc of radius ``r`` blocks
every ray from an antenna whose azimuth lies within ``asin(r / dist)`` of the
disc centre direction.  Heights are carried but only used by the optional
elevation gate on individual antenna-to-RIS links.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .angular import AngularSet, ArrayLayout, azimuth_to_u

FRONT_FOV = AngularSet.of((0.0, math.pi))


@dataclass(frozen=True)
class Blockage:
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in self.center)
        if len(c) == 2:
            c = c + (0.0,)
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise ValueError("blockage radius must be positive")


@dataclass(frozen=True)
class BlockageScene:
    blockages: tuple[Blockage, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "blockages", tuple(self.blockages))

    @property
    def count(self) -> int:
        return len(self.blockages)

    @classmethod
    def from_dicts(cls, items) -> "BlockageScene":
        return cls(tuple(Blockage(tuple(d["center"]), float(d["radius"])) for d in items))

    def to_dicts(self) -> list[dict]:
        return [{"center": list(b.center), "radius": b.radius} for b in self.blockages]


@dataclass(frozen=True)
class RisGeometry:
    element_positions: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.element_positions, float))
        if len(pos) < 1 or pos.shape[1] != 3:
            raise ValueError("RIS needs at least one 3D element position")
        pos.setflags(write=False)
        object.__setattr__(self, "element_positions", pos)

    @property
    def element_count(self) -> int:
        return len(self.element_positions)

    @property
    def center(self) -> np.ndarray:
        return self.element_positions.mean(axis=0)

    @classmethod
    def ula(cls, N: int, center, wavelength: float, axis=(1.0, 0.0, 0.0)) -> "RisGeometry":
        axis = np.asarray(axis, float)
        axis = axis / np.linalg.norm(axis)
        offs = (np.arange(N) - (N - 1) / 2) * wavelength / 2
        return cls(np.asarray(center, float) + np.outer(offs, axis))


class DegenerateGeometryError(ValueError):
    pass


def perpendicular_distance(ma, ris_elem, blk: Blockage) -> float:
    """Distance from the disc centre to the MA-RIS line in the horizontal plane."""
    mx, my = ma[0], ma[1]
    rx, ry = ris_elem[0], ris_elem[1]
    ox, oy = blk.center[0], blk.center[1]
    den = math.hypot(ry - my, rx - mx)
    if den == 0:
        raise DegenerateGeometryError("MA and RIS element coincide in the horizontal plane")
    return abs((ry - my) * ox - (rx - mx) * oy + rx * my - mx * ry) / den


def link_blocked(ma, ris_elem, blk: Blockage, elevation_gate: bool = False) -> bool:
    """True when the MA-to-RIS-element segment passes through the disc.

    With ``elevation_gate`` the disc is a cylinder of height ``center[2]``
    standing on the ground; it only blocks if the link height at the closest
    approach is below the top.
    """
    d = perpendicular_distance(ma, ris_elem, blk)
    if d >= blk.radius:
        return False
    a = np.asarray(ma[:2], float)
    b = np.asarray(ris_elem[:2], float)
    c = np.asarray(blk.center[:2], float)
    ab = b - a
    t = float(np.dot(c - a, ab) / np.dot(ab, ab))
    # chord of the disc along the line: [t - half, t + half] in segment units
    half = math.sqrt(blk.radius**2 - d**2) / math.sqrt(float(np.dot(ab, ab)))
    if t + half < 0 or t - half > 1:
        return False
    if elevation_gate:
        tc = min(max(t, 0.0), 1.0)
        z = ma[2] + (ris_elem[2] - ma[2]) * tc
        return z <= blk.center[2]
    return True


def link_blocked_matrix(ma_positions, ris_positions, scene: BlockageScene,
                        elevation_gate: bool = False) -> np.ndarray:
    """Vectorised :func:`link_blocked` over all (antenna, element, obstacle) triples."""
    A = np.atleast_2d(np.asarray(ma_positions, float))
    R = np.atleast_2d(np.asarray(ris_positions, float))
    out = np.zeros((len(A), len(R), scene.count), bool)
    if scene.count == 0 or len(R) == 0:
        return out
    a = A[:, None, :2]
    ab = R[None, :, :2] - a
    L2 = np.sum(ab**2, axis=-1)
    if np.any(L2 == 0):
        raise DegenerateGeometryError("MA and RIS element coincide in the horizontal plane")
    for o, blk in enumerate(scene.blockages):
        c = np.asarray(blk.center[:2])
        ac = c - a
        cross = ab[..., 0] * ac[..., 1] - ab[..., 1] * ac[..., 0]
        d2 = cross**2 / L2
        t = np.sum(ac * ab, axis=-1) / L2
        inside = d2 < blk.radius**2
        half = np.sqrt(np.where(inside, blk.radius**2 - d2, 0.0) / L2)
        hit = inside & (t + half >= 0) & (t - half <= 1)
        if elevation_gate:
            tc = np.clip(t, 0.0, 1.0)
            z = A[:, None, 2] + (R[None, :, 2] - A[:, None, 2]) * tc
            hit &= z <= blk.center[2]
        out[:, :, o] = hit
    return out


def blocked_interval(ma, blk: Blockage, fov: AngularSet = FRONT_FOV,
                     guard: float = 0.0) -> AngularSet:
    """Azimuth cone ``[alpha - delta, alpha + delta]`` subtended by the disc, clipped to ``fov``.

    An antenna inside the disc sees the whole field of view blocked.  The
    result is a set because the cone may wrap across ``+-pi``.
    """
    dx = blk.center[0] - ma[0]
    dy = blk.center[1] - ma[1]
    dist = math.hypot(dx, dy)
    if dist <= blk.radius:
        return fov
    alpha = math.atan2(dy, dx)
    delta = math.asin(blk.radius / dist) + guard
    lo, hi = alpha - delta, alpha + delta
    pieces = [(lo + k * 2 * math.pi, hi + k * 2 * math.pi) for k in (-1, 0, 1)]
    return AngularSet.of(*pieces).intersect(fov)


def available_angles(ma, fov: AngularSet, scene: BlockageScene,
                     guard: float = 0.0) -> AngularSet:
    """``fov`` minus the union of blocked cones; may be empty (outage)."""
    blocked = AngularSet.empty()
    for blk in scene.blockages:
        blocked = blocked.union(blocked_interval(ma, blk, fov, guard))
    return fov.subtract(blocked)


def oracle_is_blocked(ma, direction: float, scene: BlockageScene) -> bool:
    """Ray-disc intersection test for a ray from ``ma`` at azimuth ``direction``."""
    d = np.array([math.cos(direction), math.sin(direction)])
    p = np.asarray(ma[:2], float)
    for blk in scene.blockages:
        c = np.asarray(blk.center[:2], float)
        f = p - c
        b = float(np.dot(f, d))
        cc = float(np.dot(f, f)) - blk.radius**2
        if cc <= 0:
            return True
        disc = b * b - cc
        if disc < 0:
            continue
        # nearest root of t^2 + 2bt + cc = 0 must be ahead of the origin
        if -b - math.sqrt(disc) >= 0:
            return True
    return False


@dataclass
class BlockageReport:
    """Result of running detection over a whole array.

    ``available_u``/``blocked_u`` are in spatial frequency; the azimuth sets
    are kept for inspection.  ``link_blocked`` has shape ``(M, N, O)``.
    """

    available: AngularSet
    blocked: AngularSet
    available_u: AngularSet
    blocked_u: AngularSet
    link_blocked: np.ndarray
    predicate_evaluations: int = 0
    merge_operations: int = 0
    outage: bool = field(init=False)

    def __post_init__(self):
        self.outage = self.available.is_empty()

    @property
    def blocked_fraction(self) -> float:
        fov = self.available.measure + self.blocked.measure
        return self.blocked.measure / fov if fov > 0 else 0.0

    @property
    def blocked_fraction_u(self) -> float:
        tot = self.available_u.measure + self.blocked_u.measure
        return self.blocked_u.measure / tot if tot > 0 else 0.0


def detect_blockage(layout: ArrayLayout, ris, scene: BlockageScene,
                    fov: AngularSet = FRONT_FOV, guard: float = 0.0,
                    elevation_gate: bool = False) -> BlockageReport:
    """Blocked directions as seen by every antenna of the array.

    The blocked set is the union over all antennas (a direction is unusable if
    any element's path is occluded).  Per-link predicates over all
    (antenna, RIS element, obstacle) triples are evaluated as well.
    """
    M = layout.element_count
    ris_pos = np.zeros((0, 3)) if ris is None else ris.element_positions
    O = scene.count
    links = link_blocked_matrix(layout.positions, ris_pos, scene, elevation_gate)
    predicates = M * len(ris_pos) * O
    blocked = AngularSet.empty()
    merges = 0
    for ma in layout.positions:
        cones = [blocked_interval(ma, blk, fov, guard) for blk in scene.blockages]
        for cone in cones:
            blocked = blocked.union(cone)
        # sort-and-sweep cost per antenna
        merges += int(O * max(1.0, math.log2(O))) if O else 0
    blocked = blocked.intersect(fov)
    available = fov.subtract(blocked)
    return BlockageReport(available, blocked, azimuth_to_u(available), azimuth_to_u(blocked),
                          links, predicates, merges)


def blocked_interval_u(points, blk: Blockage) -> AngularSet:
    """Union over ``points`` of one obstacle's blocked cone, in spatial frequency."""
    pts = np.atleast_2d(np.asarray(points, float))
    out = AngularSet.empty()
    for p in pts:
        out = out.union(blocked_interval(p, blk, FRONT_FOV))
    return azimuth_to_u(out)


def place_blockages(points, target_fraction: float, rng, *, tol: float = 0.01,
                    radius_range=(0.2, 1.5), distance_range=(2.0, 8.0),
                    max_tries: int = 10_000, protect=None) -> BlockageScene:
    """Drop random discs in front of the array until the blocked share of the
    spatial-frequency field of view is within ``tol`` of ``target_fraction``.

    ``points`` are the antenna positions (or a single point); the blocked set
    is the union of cones over them, as in :func:`detect_blockage`.  Discs that
    would overshoot are shrunk or rejected.  ``target_fraction >= 1`` places
    one disc enclosing the array.  ``protect`` lists points no disc may cover.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    ref = pts.mean(axis=0)
    if target_fraction >= 1.0 - tol / 2:
        span = float(np.max(np.linalg.norm(pts[:, :2] - ref[:2], axis=1)))
        return BlockageScene((Blockage((ref[0], ref[1], 3.0), span + 0.5),))
    if target_fraction <= 0:
        return BlockageScene()
    discs: list[Blockage] = []
    blocked_u = AngularSet.empty()
    protect = [] if protect is None else [np.asarray(p, float) for p in protect]
    for _ in range(max_tries):
        frac = blocked_u.measure / 2.0
        if frac >= target_fraction - tol:
            break
        az = rng.uniform(0.05, math.pi - 0.05)
        dist = rng.uniform(*distance_range)
        r = rng.uniform(*radius_range)
        need = target_fraction - frac
        for _shrink in range(12):
            c = (ref[0] + dist * math.cos(az), ref[1] + dist * math.sin(az), 3.0)
            blk = Blockage(c, min(r, 0.9 * dist))
            if any(math.hypot(p[0] - c[0], p[1] - c[1]) <= blk.radius for p in protect):
                r *= 0.5
                continue
            cand = blocked_u.union(blocked_interval_u(pts, blk))
            gain = cand.measure / 2.0 - frac
            if gain <= need + tol:
                discs.append(blk)
                blocked_u = cand
                break
            r *= 0.6
    return BlockageScene(tuple(discs))
