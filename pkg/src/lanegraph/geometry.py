"""Planar geometry shared by every stage: polylines, lane pairs, rigid
transforms and the hexagonal tiling used to cut the world into minimaps.

All coordinates are local Cartesian meters. Points are handled as numpy
arrays of shape ``(2,)`` and point sets as ``(N, 2)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

DUPLICATE_TOL = 1e-9
HEX_TILE_AREA = 18000.0
# apothem of a hexagon with area HEX_TILE_AREA (area = 2*sqrt(3)*a^2)
DEFAULT_APOTHEM = math.sqrt(HEX_TILE_AREA / (2.0 * math.sqrt(3.0)))


class GeometryError(ValueError):
    pass


class PolylineKind(str, enum.Enum):
    TRACE = "trace"
    BOUNDARY = "boundary"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def as_point(p) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(2)
    if not np.all(np.isfinite(p)):
        raise GeometryError(f"non-finite point {p}")
    return p


def cross2(a, b):
    """z-component of the 2D cross product (broadcasts over leading axes)."""
    a = np.asarray(a)
    b = np.asarray(b)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def left_normal(direction) -> np.ndarray:
    d = np.asarray(direction, dtype=float)
    return np.stack([-d[..., 1], d[..., 0]], axis=-1)


@dataclass(frozen=True, eq=False)
class Polyline:
    """Ordered point sequence tagged as a driven trace or an observed boundary."""

    points: np.ndarray
    kind: PolylineKind = PolylineKind.BOUNDARY

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise GeometryError(f"polyline needs >= 2 points of shape (N, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("polyline contains non-finite coordinates")
        steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(steps <= DUPLICATE_TOL):
            raise GeometryError("polyline contains consecutive duplicate points")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "kind", PolylineKind(self.kind))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def reversed(self) -> "Polyline":
        return Polyline(self.points[::-1], self.kind)

    def with_points(self, points) -> "Polyline":
        return Polyline(points, self.kind)


@dataclass(frozen=True, eq=False)
class LanePair:
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        left = as_point(self.left)
        right = as_point(self.right)
        if np.array_equal(left, right):
            raise GeometryError("lane pair boundary points coincide")
        object.__setattr__(self, "left", _frozen(left))
        object.__setattr__(self, "right", _frozen(right))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.left, self.right])


@dataclass(frozen=True, eq=False)
class CenterPoint:
    position: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        pos = as_point(self.position)
        d = as_point(self.direction)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-9:
            raise GeometryError(f"center direction must be a unit vector, |d|={n}")
        object.__setattr__(self, "position", _frozen(pos))
        object.__setattr__(self, "direction", _frozen(d))

    @classmethod
    def from_heading(cls, position, direction) -> "CenterPoint":
        d = np.asarray(direction, dtype=float)
        return cls(position, d / np.linalg.norm(d))


@dataclass(frozen=True, eq=False)
class LaneGraph:
    pairs: list
    adjacency: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.pairs)
        adj = np.zeros((n, n), dtype=np.int8) if self.adjacency is None else np.asarray(self.adjacency)
        if adj.shape != (n, n):
            raise GeometryError(f"adjacency shape {adj.shape} does not match {n} lane pairs")
        if not np.all((adj == 0) | (adj == 1)):
            raise GeometryError("adjacency entries must be 0 or 1")
        if np.any(np.diag(adj) != 0):
            raise GeometryError("adjacency diagonal must be zero")
        object.__setattr__(self, "pairs", list(self.pairs))
        adj = adj.astype(np.int8)
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    def edges(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.adjacency))]


@dataclass(frozen=True)
class RigidTransform2:
    """Rotation about the origin followed by a translation: ``p' = R p + t``."""

    rotation: float = 0.0
    translation: tuple = (0.0, 0.0)

    def __post_init__(self):
        t = tuple(float(v) for v in np.asarray(self.translation, dtype=float).reshape(2))
        object.__setattr__(self, "rotation", float(self.rotation))
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform2":
        return cls(0.0, (0.0, 0.0))

    @property
    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return np.array([[c, -s], [s, c]])

    def apply_points(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.matrix.T + np.asarray(self.translation)

    def apply_vectors(self, vecs) -> np.ndarray:
        return np.asarray(vecs, dtype=float) @ self.matrix.T

    def compose(self, other: "RigidTransform2") -> "RigidTransform2":
        """``self ∘ other``: apply ``other`` first."""
        t = self.matrix @ np.asarray(other.translation) + np.asarray(self.translation)
        return RigidTransform2(wrap_angle(self.rotation + other.rotation), t)

    def inverse(self) -> "RigidTransform2":
        t = -(self.matrix.T @ np.asarray(self.translation))
        return RigidTransform2(-self.rotation, t)


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def apply_rigid(transform: RigidTransform2, geometry):
    """Apply a rigid transform to a point, polyline, center point or lane pair."""
    if isinstance(geometry, Polyline):
        return Polyline(transform.apply_points(geometry.points), geometry.kind)
    if isinstance(geometry, CenterPoint):
        d = transform.apply_vectors(geometry.direction)
        return CenterPoint(transform.apply_points(geometry.position), d / np.linalg.norm(d))
    if isinstance(geometry, LanePair):
        return LanePair(transform.apply_points(geometry.left), transform.apply_points(geometry.right))
    return transform.apply_points(geometry)


def lane_width(pair: LanePair) -> float:
    return float(np.linalg.norm(pair.left - pair.right))


def side_of(direction, origin, points) -> np.ndarray:
    """Signed side test: >0 left of the driving direction, <0 right."""
    return cross2(np.asarray(direction), np.asarray(points) - np.asarray(origin))


# ---------------------------------------------------------------------------
# polyline utilities


def arc_lengths(pts: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def _circle_segment_hit(center, a, b, radius, t_min):
    """Smallest t >= t_min on segment a->b with |a + t(b-a) - center| = radius."""
    d = b - a
    f = a - center
    qa = d @ d
    qb = 2.0 * (f @ d)
    qc = f @ f - radius * radius
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0.0:
        return None
    root = math.sqrt(disc)
    for t in ((-qb - root) / (2.0 * qa), (-qb + root) / (2.0 * qa)):
        if t_min - 1e-12 <= t <= 1.0 + 1e-12:
            return min(max(t, t_min), 1.0)
    return None


def resample_points(pts, spacing: float) -> np.ndarray:
    """Walk the polyline emitting points exactly ``spacing`` apart (chord
    distance); both endpoints are kept. Because every emitted step equals the
    spacing, resampling the output again reproduces it."""
    pts = np.asarray(pts, dtype=float)
    if spacing <= 0:
        raise GeometryError("spacing must be positive")
    if len(pts) < 2 or arc_lengths(pts)[-1] <= DUPLICATE_TOL:
        raise GeometryError("cannot resample a degenerate polyline")
    out = [pts[0]]
    cur = pts[0]
    seg, t = 0, 0.0
    n = len(pts)
    while seg < n - 1:
        a, b = pts[seg], pts[seg + 1]
        if np.linalg.norm(b - cur) < spacing:
            seg, t = seg + 1, 0.0
            continue
        hit = _circle_segment_hit(cur, a, b, spacing, t)
        if hit is None:
            seg, t = seg + 1, 0.0
            continue
        cur = a + hit * (b - a)
        out.append(cur)
        t = hit
    end = pts[-1]
    if np.linalg.norm(end - out[-1]) > DUPLICATE_TOL:
        out.append(end)
    else:
        out[-1] = end
    if len(out) < 2:
        out = [pts[0], end]
    return np.array(out)


def resample_polyline(p: Polyline, spacing: float) -> Polyline:
    return Polyline(resample_points(p.points, spacing), p.kind)


def dedupe_points(pts, tol: float = 1e-6) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if len(pts) == 0:
        return pts.reshape(0, 2)
    keep = [0]
    for i in range(1, len(pts)):
        if np.linalg.norm(pts[i] - pts[keep[-1]]) > tol:
            keep.append(i)
    return pts[keep]


def project_to_segments(points, seg_a, seg_b):
    """Closest points of every query point on every segment.

    Returns ``(closest, dist, t)`` each shaped ``(P, S[, 2])``.
    """
    points = np.asarray(points, dtype=float)[:, None, :]
    d = seg_b - seg_a
    denom = np.einsum("ij,ij->i", d, d)
    t = np.einsum("psk,sk->ps", points - seg_a[None], d) / np.where(denom > 0, denom, 1.0)
    t = np.clip(t, 0.0, 1.0)
    closest = seg_a[None] + t[..., None] * d[None]
    dist = np.linalg.norm(points - closest, axis=-1)
    return closest, dist, t


def segments_of(polylines: Sequence) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack all segments of the given polylines (``Polyline`` or arrays)."""
    starts, ends, owner = [], [], []
    for k, p in enumerate(polylines):
        pts = p.points if isinstance(p, Polyline) else np.asarray(p, dtype=float)
        if len(pts) < 2:
            continue
        starts.append(pts[:-1])
        ends.append(pts[1:])
        owner.append(np.full(len(pts) - 1, k))
    if not starts:
        return np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0, dtype=int)
    return np.concatenate(starts), np.concatenate(ends), np.concatenate(owner)


def point_to_polyline(point, pts: np.ndarray) -> tuple[float, float, np.ndarray]:
    """Distance, arc-length station and foot point of ``point`` on ``pts``."""
    closest, dist, t = project_to_segments(np.asarray(point)[None], pts[:-1], pts[1:])
    k = int(np.argmin(dist[0]))
    s = arc_lengths(pts)
    seg_len = s[k + 1] - s[k]
    return float(dist[0, k]), float(s[k] + t[0, k] * seg_len), closest[0, k]


def interpolate_at(pts: np.ndarray, stations) -> np.ndarray:
    s = arc_lengths(pts)
    stations = np.clip(np.asarray(stations, dtype=float), 0.0, s[-1])
    x = np.interp(stations, s, pts[:, 0])
    y = np.interp(stations, s, pts[:, 1])
    return np.stack([x, y], axis=-1)


def tangent_at(pts: np.ndarray, station: float) -> np.ndarray:
    s = arc_lengths(pts)
    k = int(np.clip(np.searchsorted(s, station, side="right") - 1, 0, len(pts) - 2))
    d = pts[k + 1] - pts[k]
    return d / np.linalg.norm(d)


def clip_runs(pts: np.ndarray, inside: np.ndarray) -> list[np.ndarray]:
    """Split a point sequence into maximal runs where ``inside`` holds."""
    runs, cur = [], []
    for p, ok in zip(pts, inside):
        if ok:
            cur.append(p)
        elif cur:
            runs.append(np.array(cur))
            cur = []
    if cur:
        runs.append(np.array(cur))
    return [r for r in runs if len(r) >= 2]


# ---------------------------------------------------------------------------
# hexagonal tiling (pointy-top axial coordinates)


class TileId(NamedTuple):
    q: int
    r: int


def _hex_round(qf: np.ndarray, rf: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sf = -qf - rf
    q, r, s = np.round(qf), np.round(rf), np.round(sf)
    dq, dr, ds = np.abs(q - qf), np.abs(r - rf), np.abs(s - sf)
    fix_q = (dq > dr) & (dq > ds)
    fix_r = ~fix_q & (dr > ds)
    q = np.where(fix_q, -r - s, q)
    r = np.where(fix_r, -q - s, r)
    return q.astype(int), r.astype(int)


def tile_assign_many(points, apothem: float = DEFAULT_APOTHEM) -> np.ndarray:
    if apothem <= 0:
        raise GeometryError("apothem must be positive")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    size = 2.0 * apothem / math.sqrt(3.0)
    qf = (math.sqrt(3.0) / 3.0 * pts[:, 0] - pts[:, 1] / 3.0) / size
    rf = (2.0 / 3.0 * pts[:, 1]) / size
    q, r = _hex_round(qf, rf)
    return np.stack([q, r], axis=-1)


def tile_assign(p, apothem: float = DEFAULT_APOTHEM) -> TileId:
    q, r = tile_assign_many(as_point(p)[None], apothem)[0]
    return TileId(int(q), int(r))


def tile_center(tile: TileId, apothem: float = DEFAULT_APOTHEM) -> np.ndarray:
    size = 2.0 * apothem / math.sqrt(3.0)
    q, r = tile
    return np.array([size * math.sqrt(3.0) * (q + r / 2.0), size * 1.5 * r])


def hex_area(apothem: float) -> float:
    return 2.0 * math.sqrt(3.0) * apothem * apothem


def hex_corners(apothem: float = DEFAULT_APOTHEM, center=(0.0, 0.0)) -> np.ndarray:
    size = 2.0 * apothem / math.sqrt(3.0)
    ang = np.radians(60.0 * np.arange(6) + 30.0)
    return np.asarray(center) + size * np.stack([np.cos(ang), np.sin(ang)], axis=-1)


def spiral_tiles(n: int) -> list[TileId]:
    """First ``n`` tiles of an outward spiral starting at the origin tile."""
    dirs = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)]
    out = [TileId(0, 0)]
    ring = 1
    while len(out) < n:
        q, r = -ring, ring  # start at direction 4 scaled by ring
        for d in range(6):
            for _ in range(ring):
                out.append(TileId(q, r))
                q, r = q + dirs[d][0], r + dirs[d][1]
        ring += 1
    return out[:n]
