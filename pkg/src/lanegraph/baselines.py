"""Geometric reference methods for lane pairs and connectivity.

B1 places boundaries at a constant half width, B2 snaps to the nearest
observed boundary point per side, B3 intersects the perpendicular through the
center with the observations, and B4 links each center to the nearest center
ahead within an angular window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CenterPoint, LanePair, Polyline, cross2, left_normal, resample_points, segments_of

POINT_SPACING = 0.25


@dataclass(frozen=True)
class BaselineParams:
    half_width: float = 1.6
    fallback_radius: float = 5.0
    angle_window: tuple = (80.0, 100.0)
    point_spacing: float = POINT_SPACING

    def __post_init__(self):
        object.__setattr__(self, "angle_window", tuple(float(a) for a in self.angle_window))
        lo, hi = self.angle_window
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.fallback_radius <= 0:
            raise ValueError("fallback_radius must be positive")
        if not 0.0 < lo <= hi < 180.0:
            raise ValueError(f"angle window {self.angle_window} must lie inside (0, 180)")


def baseline_constant_width(c: CenterPoint, params: BaselineParams | None = None) -> LanePair:
    params = params or BaselineParams()
    n = left_normal(c.direction)
    return LanePair(c.position + params.half_width * n, c.position - params.half_width * n)


def observation_points(obs, spacing: float = POINT_SPACING) -> np.ndarray:
    """All observations resampled at ``spacing``, stacked into one array."""
    pts = [resample_points(p.points if isinstance(p, Polyline) else p, spacing) for p in obs]
    return np.concatenate(pts) if pts else np.zeros((0, 2))


def baseline_nearest_observation(c: CenterPoint, obs, params: BaselineParams | None = None,
                                 points: np.ndarray | None = None) -> LanePair:
    """Nearest resampled observation point on each side, else the B1 point.

    ``points`` may carry pre-resampled observation points to avoid repeating
    the resampling for every center of a minimap.
    """
    params = params or BaselineParams()
    fb = baseline_constant_width(c, params)
    pts = observation_points(obs, params.point_spacing) if points is None else points
    if len(pts) == 0:
        return fb
    side = cross2(c.direction, pts - c.position)
    dist = np.linalg.norm(pts - c.position, axis=1)
    out = []
    for mask, fallback in ((side > 0, fb.left), (side < 0, fb.right)):
        d = np.where(mask, dist, np.inf)
        j = int(np.argmin(d))
        out.append(pts[j] if d[j] <= params.fallback_radius else fallback)
    return LanePair(out[0], out[1])


def perpendicular_hits(c: CenterPoint, seg_a: np.ndarray, seg_b: np.ndarray) -> np.ndarray:
    """Signed offsets (along the left normal) where the line through ``c``
    perpendicular to its direction crosses each segment; NaN when it misses."""
    if len(seg_a) == 0:
        return np.zeros(0)
    n = left_normal(c.direction)
    d = seg_b - seg_a
    # solve c + u n = a + t d
    den = cross2(n, d)
    rel = seg_a - c.position
    ok = np.abs(den) > 1e-12
    safe = np.where(ok, den, 1.0)
    t = -cross2(n, rel) / safe
    u = cross2(rel, d) / safe
    hit = ok & (t >= 0.0) & (t <= 1.0)
    return np.where(hit, u, np.nan)


def baseline_perpendicular(c: CenterPoint, obs, params: BaselineParams | None = None,
                           segments: tuple | None = None) -> LanePair:
    """Nearest crossing of the perpendicular line with the observations per
    side within the fallback radius, else the B1 point for that side."""
    params = params or BaselineParams()
    fb = baseline_constant_width(c, params)
    a, b = segments if segments is not None else segments_of(obs)[:2]
    u = perpendicular_hits(c, a, b)
    n = left_normal(c.direction)
    out = []
    for sign, fallback in ((1.0, fb.left), (-1.0, fb.right)):
        cand = np.where(np.isfinite(u) & (sign * u > 0), sign * u, np.inf)
        if len(cand) and cand.min() <= params.fallback_radius:
            out.append(c.position + sign * cand.min() * n)
        else:
            out.append(fallback)
    return LanePair(out[0], out[1])


def _ccw_angle(v, w) -> np.ndarray:
    """Counter-clockwise angle from v to each row of w, in degrees [0, 360)."""
    ang = np.degrees(np.arctan2(cross2(v, w), w @ v))
    return np.mod(ang, 360.0)


def baseline_forward_connectivity(centers, pairs, params: BaselineParams | None = None) -> np.ndarray:
    """Edge i -> j to the nearest center whose offset from i lies within the
    angle window measured counter-clockwise from the left-boundary-to-center
    vector (90 degrees is straight ahead, 270 straight behind)."""
    params = params or BaselineParams()
    n = len(centers)
    if len(pairs) != n:
        raise ValueError("one lane pair per center is required")
    adj = np.zeros((n, n), dtype=np.int8)
    if n < 2:
        return adj
    pos = np.array([c.position for c in centers])
    lo, hi = params.angle_window
    for i in range(n):
        v = pos[i] - np.asarray(pairs[i].left)
        w = pos - pos[i]
        ang = _ccw_angle(v, w)
        dist = np.linalg.norm(w, axis=1)
        ok = (ang >= lo) & (ang <= hi) & (dist > 0)
        ok[i] = False
        if ok.any():
            j = int(np.argmin(np.where(ok, dist, np.inf)))
            adj[i, j] = 1
    return adj


def run_baseline(method: str, centers, observations, params: BaselineParams | None = None,
                 pair_method: str = "b3"):
    """Lane pairs (B1-B3) or adjacency (B4) for one minimap.

    Returns ``(pairs, adjacency)``; the member not produced by the method is
    ``None``. B4 forms its vectors from the pairs of ``pair_method``.
    """
    params = params or BaselineParams()
    method = method.lower()
    if method == "b1":
        return [baseline_constant_width(c, params) for c in centers], None
    if method == "b2":
        pts = observation_points(observations, params.point_spacing)
        return [baseline_nearest_observation(c, observations, params, pts) for c in centers], None
    if method == "b3":
        segs = segments_of(observations)[:2]
        return [baseline_perpendicular(c, observations, params, segs) for c in centers], None
    if method == "b4":
        pairs, _ = run_baseline(pair_method, centers, observations, params)
        return pairs, baseline_forward_connectivity(centers, pairs, params)
    raise ValueError(f"unknown baseline {method!r}; expected one of b1, b2, b3, b4")
