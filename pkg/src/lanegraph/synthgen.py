"""Procedural road scenarios and simulated fleet observations.

A scenario is a handful of lanes (dense centerlines plus successor links)
and the painted boundaries between them. Each simulated drive follows one
lane, yields a sparse GNSS-like trace, observes nearby markings, and is
misaligned as a whole by its own rigid transform.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .geometry import (
    DEFAULT_APOTHEM,
    CenterPoint,
    LaneGraph,
    LanePair,
    Polyline,
    PolylineKind,
    RigidTransform2,
    arc_lengths,
    clip_runs,
    interpolate_at,
    left_normal,
    project_to_segments,
    spiral_tiles,
    tile_assign_many,
)
from .records import GTLane, Minimap, save_dataset

log = logging.getLogger(__name__)

DENSE_STEP = 0.5
NODE_SPACING = 10.0
JUNCTION_TURN_RADIUS = 6.0
OBS_PIECE_LENGTH = 9.0
MIN_OBSERVED_LENGTH = 2.0


class ScenarioKind(str, enum.Enum):
    STRAIGHT_HIGHWAY = "straight_highway"
    CURVED_HIGHWAY = "curved_highway"
    RAMP_MERGE = "ramp_merge"
    RAMP_FORK = "ramp_fork"
    TWO_LANE_RURAL = "two_lane_rural"
    T_INTERSECTION = "t_intersection"

    @property
    def odd(self) -> str:
        if self in (ScenarioKind.TWO_LANE_RURAL, ScenarioKind.T_INTERSECTION):
            return "non-highway"
        return "highway"


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    kind: ScenarioKind
    lane_count: int = 2
    lane_width: float = 3.5
    length: float = 100.0
    curvature: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        if self.lane_count < 1:
            raise ScenarioError("lane_count must be >= 1")
        if not 2.5 <= self.lane_width <= 4.5:
            raise ScenarioError(f"lane_width {self.lane_width} outside [2.5, 4.5]")
        if self.length < 50.0:
            raise ScenarioError(f"length {self.length} < 50 m")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


@dataclass(frozen=True)
class NoiseSpec:
    trace_lateral_sigma: float = 0.25
    boundary_point_sigma: float = 0.15
    max_rotation: float = math.radians(1.0)
    max_translation: float = 1.0
    boundary_dropout_prob: float = 0.2
    false_positive_rate: float = 0.5  # spurious segments per 100 m of marking
    traces_per_lane: tuple = (5, 10)
    sensor_range: float = 8.0
    segment_length: tuple = (10.0, 30.0)

    def __post_init__(self):
        object.__setattr__(self, "traces_per_lane", tuple(int(v) for v in self.traces_per_lane))
        object.__setattr__(self, "segment_length", tuple(float(v) for v in self.segment_length))
        if not 0.0 <= self.boundary_dropout_prob <= 1.0:
            raise ValueError("boundary_dropout_prob must be in [0, 1]")
        for name in ("trace_lateral_sigma", "boundary_point_sigma", "max_rotation",
                     "max_translation", "false_positive_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        lo, hi = self.traces_per_lane
        if lo < 1 or hi < lo:
            raise ValueError("traces_per_lane must be a range [lo, hi] with lo >= 1")

    @classmethod
    def zero(cls, **overrides) -> "NoiseSpec":
        base = dict(trace_lateral_sigma=0.0, boundary_point_sigma=0.0, max_rotation=0.0,
                    max_translation=0.0, boundary_dropout_prob=0.0, false_positive_rate=0.0)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["traces_per_lane"] = list(self.traces_per_lane)
        d["segment_length"] = list(self.segment_length)
        return d


@dataclass
class GroundTruth:
    spec: ScenarioSpec | None
    lanes: list  # GTLane
    boundaries: list  # Polyline(kind=BOUNDARY)
    lane_graph: LaneGraph
    centers: list  # CenterPoint per lane-graph node
    node_lane: list

    @property
    def centerlines(self) -> list:
        return [Polyline(l.points, PolylineKind.TRACE) for l in self.lanes]


# ---------------------------------------------------------------------------
# geometry builders (road frame: x along the road, y to the left)


def _arc(start, heading, curvature, length, step=DENSE_STEP):
    n = max(2, int(math.ceil(length / step)) + 1)
    s = np.linspace(0.0, length, n)
    if abs(curvature) < 1e-12:
        x = s * math.cos(heading)
        y = s * math.sin(heading)
        h = np.full(n, heading)
    else:
        h = heading + curvature * s
        x = (np.sin(h) - math.sin(heading)) / curvature
        y = (math.cos(heading) - np.cos(h)) / curvature
    return np.asarray(start, dtype=float) + np.stack([x, y], axis=-1), h


def _offset(pts, headings, d):
    n = np.stack([-np.sin(headings), np.cos(headings)], axis=-1)
    return pts + d * n


def _carriageway(length, curvature, n_lanes, width):
    ref, h = _arc((-length / 2.0, 0.0), 0.0, curvature, length)
    if abs(curvature) > 1e-12:
        # re-center the arc so the road midpoint sits at the origin
        mid = ref[len(ref) // 2]
        ref = ref - mid
    lanes = [_offset(ref, h, (n_lanes / 2.0 - k - 0.5) * width) for k in range(n_lanes)]
    bounds = [_offset(ref, h, (n_lanes / 2.0 - k) * width) for k in range(n_lanes + 1)]
    return lanes, bounds


def _check_curvature(curvature, half_extent):
    if abs(curvature) * half_extent >= 0.5:
        raise ScenarioError(
            f"curvature {curvature:.4f} too high for a cross-section of half-width {half_extent:.2f} m")


def _fork_layout(spec: ScenarioSpec, rng):
    n, w, L = spec.lane_count, spec.lane_width, spec.length
    ramp_k = -abs(spec.curvature) if spec.curvature else -1.0 / 150.0
    _check_curvature(ramp_k, 1.5 * w)
    s_f = float(rng.uniform(-L / 6.0, L / 6.0))
    lanes_pts, bounds = _carriageway(L, 0.0, n, w)
    right = lanes_pts[-1]
    cut = int(np.searchsorted(right[:, 0], s_f))
    cut = min(max(cut, 2), len(right) - 2)
    lanes = []
    for k, pts in enumerate(lanes_pts[:-1]):
        lanes.append(GTLane(k, pts, w, [], True))
    a1 = GTLane(n - 1, right[: cut + 1], w, [], True)
    a2 = GTLane(n, right[cut:], w, [], True)
    d_r = (n / 2.0 - n + 0.5) * w
    start = (right[cut, 0], d_r - w)
    b_pts, b_h = _arc(start, 0.0, ramp_k, L / 2.0 - right[cut, 0])
    b = GTLane(n + 1, b_pts, w, [], True)
    a1.successors = [a2.id, b.id]
    lanes += [a1, a2, b]
    bounds = list(bounds) + [_offset(b_pts, b_h, w / 2.0), _offset(b_pts, b_h, -w / 2.0)]
    return lanes, bounds


def _mirror(lanes, bounds):
    flip = np.array([-1.0, 1.0])
    by_id = {l.id: l for l in lanes}
    preds = {l.id: [] for l in lanes}
    for l in lanes:
        for s in l.successors:
            preds[s].append(l.id)
    out = [GTLane(l.id, (l.points * flip)[::-1].copy(), l.width, sorted(preds[l.id]), l.marked)
           for l in by_id.values()]
    return out, [(b * flip)[::-1].copy() for b in bounds]


def _rural_layout(spec: ScenarioSpec):
    if spec.lane_count != 2:
        raise ScenarioError("two_lane_rural requires lane_count == 2")
    w = spec.lane_width
    _check_curvature(spec.curvature, w)
    lanes_pts, bounds = _carriageway(spec.length, spec.curvature, 2, w)
    # lanes_pts[0] is the left lane (+y); it carries the opposite direction
    lanes = [GTLane(0, lanes_pts[1], w, [], True), GTLane(1, lanes_pts[0][::-1].copy(), w, [], True)]
    return lanes, bounds


def _t_junction_layout(spec: ScenarioSpec):
    if spec.lane_count != 2:
        raise ScenarioError("t_intersection requires lane_count == 2 (one lane per direction)")
    if spec.curvature != 0.0:
        raise ScenarioError("t_intersection does not support curvature")
    w, L = spec.lane_width, spec.length
    J = w / 2.0 + JUNCTION_TURN_RADIUS
    half = L / 2.0

    def line(a, b):
        a, b = np.asarray(a, float), np.asarray(b, float)
        n = max(2, int(math.ceil(np.linalg.norm(b - a) / DENSE_STEP)) + 1)
        return a + np.linspace(0.0, 1.0, n)[:, None] * (b - a)

    def quarter(start, h0, turn, radius):
        pts, _ = _arc(start, h0, turn / radius, radius * math.pi / 2.0)
        return pts

    e_in = line((-half, -w / 2), (-J, -w / 2))
    e_out = line((J, -w / 2), (half, -w / 2))
    w_in = line((half, w / 2), (J, w / 2))
    w_out = line((-J, w / 2), (-half, w / 2))
    s_in = line((w / 2, -half), (w / 2, -J))
    s_out = line((-w / 2, -J), (-w / 2, -half))
    e_str = line((-J, -w / 2), (J, -w / 2))
    w_str = line((J, w / 2), (-J, w / 2))
    e_right = quarter((-J, -w / 2), 0.0, -1.0, J - w / 2)
    w_left = quarter((J, w / 2), math.pi, 1.0, J + w / 2)
    s_right = quarter((w / 2, -J), math.pi / 2, -1.0, J - w / 2)
    s_left = quarter((w / 2, -J), math.pi / 2, 1.0, J + w / 2)
    pts = [e_in, e_out, w_in, w_out, s_in, s_out, e_str, w_str, e_right, w_left, s_right, s_left]
    succ = {0: [6, 8], 2: [7, 9], 4: [10, 11], 6: [1], 7: [3], 8: [5], 9: [5], 10: [1], 11: [3]}
    lanes = [GTLane(k, p, w, succ.get(k, []), k < 6) for k, p in enumerate(pts)]
    bounds = [
        line((-half, w), (half, w)),
        line((-half, 0.0), (-J, 0.0)), line((J, 0.0), (half, 0.0)),
        line((-half, -w), (-J, -w)), line((J, -w), (half, -w)),
        line((-w, -J), (-w, -half)), line((0.0, -J), (0.0, -half)), line((w, -J), (w, -half)),
    ]
    return lanes, bounds


def _layout(spec: ScenarioSpec, rng):
    kind = spec.kind
    if kind in (ScenarioKind.STRAIGHT_HIGHWAY, ScenarioKind.CURVED_HIGHWAY):
        k = spec.curvature if kind is ScenarioKind.CURVED_HIGHWAY else 0.0
        if kind is ScenarioKind.CURVED_HIGHWAY and k == 0.0:
            raise ScenarioError("curved_highway needs a non-zero curvature")
        _check_curvature(k, spec.lane_count * spec.lane_width / 2.0)
        lanes_pts, bounds = _carriageway(spec.length, k, spec.lane_count, spec.lane_width)
        return [GTLane(i, p, spec.lane_width, [], True) for i, p in enumerate(lanes_pts)], bounds
    if kind is ScenarioKind.RAMP_FORK:
        return _fork_layout(spec, rng)
    if kind is ScenarioKind.RAMP_MERGE:
        return _mirror(*_fork_layout(spec, rng))
    if kind is ScenarioKind.TWO_LANE_RURAL:
        return _rural_layout(spec)
    if kind is ScenarioKind.T_INTERSECTION:
        return _t_junction_layout(spec)
    raise ScenarioError(f"unsupported scenario kind {kind}")


# ---------------------------------------------------------------------------
# lane graph


def lane_nodes(lane: GTLane, spacing: float = NODE_SPACING):
    """Node stations along one lane; the end is only a node for dead ends."""
    s = arc_lengths(lane.points)
    total = s[-1]
    stations = list(np.arange(0.0, total - 1e-9, spacing))
    if not stations:
        stations = [0.0]
    if not lane.successors and total - stations[-1] > 0.5 * spacing:
        stations.append(total)
    return np.array(stations)


def _direction_at(pts, station):
    total = arc_lengths(pts)[-1]
    h = min(DENSE_STEP, total / 2.0)
    a = interpolate_at(pts, max(station - h, 0.0))
    b = interpolate_at(pts, min(station + h, total))
    d = b - a
    return d / np.linalg.norm(d)


def build_lane_graph(lanes: list, spacing: float = NODE_SPACING):
    """Nodes every ``spacing`` meters along each lane; edges link consecutive
    nodes and the last node of a lane to the first node of each successor."""
    centers, pairs, node_lane = [], [], []
    first, last = {}, {}
    edges = []
    for lane in lanes:
        stations = lane_nodes(lane, spacing)
        pos = interpolate_at(lane.points, stations)
        ids = []
        for st, p in zip(stations, pos):
            d = _direction_at(lane.points, st)
            n = left_normal(d)
            centers.append(CenterPoint(p, d))
            pairs.append(LanePair(p + 0.5 * lane.width * n, p - 0.5 * lane.width * n))
            node_lane.append(lane.id)
            ids.append(len(centers) - 1)
        first[lane.id], last[lane.id] = ids[0], ids[-1]
        edges += list(zip(ids[:-1], ids[1:]))
    for lane in lanes:
        for s in lane.successors:
            if s in first:
                edges.append((last[lane.id], first[s]))
    adj = np.zeros((len(centers), len(centers)), dtype=np.int8)
    for i, j in edges:
        if i != j:
            adj[i, j] = 1
    return LaneGraph(pairs, adj), centers, node_lane


def _placement(rng, max_offset=15.0) -> RigidTransform2:
    heading = float(rng.uniform(0.0, 2.0 * math.pi))
    r = max_offset * math.sqrt(float(rng.uniform()))
    a = float(rng.uniform(0.0, 2.0 * math.pi))
    return RigidTransform2(heading, (r * math.cos(a), r * math.sin(a)))


def gen_ground_truth(spec: ScenarioSpec, spacing: float = NODE_SPACING) -> GroundTruth:
    """Build lanes, boundaries and the node-level lane graph for one scenario.

    The scenario is placed with a seeded random heading and a small offset
    from the origin (the future tile center).
    """
    rng = np.random.default_rng([spec.seed, 101])
    lanes, bounds = _layout(spec, rng)
    place = _placement(rng)
    lanes = [GTLane(l.id, place.apply_points(l.points), l.width, list(l.successors), l.marked) for l in lanes]
    boundaries = [Polyline(place.apply_points(b), PolylineKind.BOUNDARY) for b in bounds]
    graph, centers, node_lane = build_lane_graph(lanes, spacing)
    return GroundTruth(spec, lanes, boundaries, graph, centers, node_lane)


def clip_ground_truth(gt: GroundTruth, apothem: float = DEFAULT_APOTHEM,
                      spacing: float = NODE_SPACING) -> GroundTruth:
    """Restrict a scenario to the origin hex tile (no margins)."""

    def inside(pts):
        return np.all(tile_assign_many(pts, apothem) == 0, axis=1)

    lanes, first_piece, last_piece = [], {}, {}
    next_id = 0
    for lane in gt.lanes:
        ins = inside(lane.points)
        runs = clip_runs(lane.points, ins)
        runs = [r for r in runs if arc_lengths(r)[-1] >= 1.0]
        ids = []
        for r in runs:
            lanes.append(GTLane(next_id, r, lane.width, [], lane.marked))
            ids.append(next_id)
            next_id += 1
        if ids:
            if ins[0] and np.allclose(runs[0][0], lane.points[0]):
                first_piece[lane.id] = ids[0]
            if ins[-1] and np.allclose(runs[-1][-1], lane.points[-1]):
                last_piece[lane.id] = ids[-1]
    by_id = {l.id: l for l in lanes}
    for lane in gt.lanes:
        if lane.id in last_piece:
            by_id[last_piece[lane.id]].successors = [first_piece[s] for s in lane.successors if s in first_piece]
    bounds = []
    for b in gt.boundaries:
        for r in clip_runs(b.points, inside(b.points)):
            if arc_lengths(r)[-1] >= 1.0:
                bounds.append(Polyline(r, PolylineKind.BOUNDARY))
    graph, centers, node_lane = build_lane_graph(lanes, spacing)
    return GroundTruth(gt.spec, lanes, bounds, graph, centers, node_lane)


# ---------------------------------------------------------------------------
# fleet simulation


@dataclass
class Fleet:
    traces: list
    observations: list
    trace_drive: list
    trace_lane: list
    obs_drive: list
    transforms: dict  # drive id -> injected RigidTransform2
    segments_total: int = 0
    segments_kept: int = 0


def _split_segments(pts, rng, seg_len):
    s = arc_lengths(pts)
    cuts = [0.0]
    while cuts[-1] < s[-1]:
        cuts.append(cuts[-1] + float(rng.uniform(*seg_len)))
    cuts[-1] = s[-1]
    if len(cuts) > 2 and cuts[-1] - cuts[-2] < MIN_OBSERVED_LENGTH:
        # fold a short remainder into the previous segment
        del cuts[-2]
    out = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a < 1.0:
            continue
        inner = s[(s > a) & (s < b)]
        stations = np.concatenate([[a], inner, [b]])
        out.append(interpolate_at(pts, stations))
    return out


def world_markings(gt: GroundTruth, noise: NoiseSpec, rng):
    """Split boundaries into segments and drop whole segments (markings no
    drive can see). Spurious detections are parallel offsets of retained
    segments, so they persist across drives like real ghost markings.

    Returns ``(markings, n_segments, n_retained)``.
    """
    kept, total = [], 0
    for b in gt.boundaries:
        for seg in _split_segments(b.points, rng, noise.segment_length):
            total += 1
            if rng.uniform() >= noise.boundary_dropout_prob:
                kept.append(seg)
    n_real = len(kept)
    lengths = np.array([arc_lengths(k)[-1] for k in kept])
    n_fp = int(rng.poisson(noise.false_positive_rate * lengths.sum() / 100.0)) if n_real else 0
    for _ in range(n_fp):
        base_seg = kept[int(rng.choice(n_real, p=lengths / lengths.sum()))]
        s = arc_lengths(base_seg)
        ln = min(float(rng.uniform(5.0, 15.0)), s[-1])
        s0 = float(rng.uniform(0.0, s[-1] - ln))
        st = np.linspace(s0, s0 + ln, max(2, int(ln / DENSE_STEP) + 1))
        base = interpolate_at(base_seg, st)
        tang = np.gradient(base, axis=0)
        tang /= np.linalg.norm(tang, axis=1, keepdims=True)
        off = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.4, 1.2))
        kept.append(base + off * left_normal(tang))
    return kept, total, n_real


def _drive_transform(noise: NoiseSpec, rng) -> RigidTransform2:
    rot = float(rng.uniform(-noise.max_rotation, noise.max_rotation)) if noise.max_rotation > 0 else 0.0
    mag = float(rng.uniform(0.0, noise.max_translation)) if noise.max_translation > 0 else 0.0
    ang = float(rng.uniform(0.0, 2.0 * math.pi))
    return RigidTransform2(rot, (mag * math.cos(ang), mag * math.sin(ang)))


def _observe(path, markings, sensor_range):
    """Parts of each marking within sensor range of the driven path."""
    runs = []
    a, b = path[:-1], path[1:]
    for seg in markings:
        _, dist, _ = project_to_segments(seg, a, b)
        d = dist.min(axis=1)
        for r in clip_runs(seg, d <= sensor_range):
            if arc_lengths(r)[-1] >= MIN_OBSERVED_LENGTH:
                runs.append(r)
    return runs


def simulate_fleet(gt: GroundTruth, noise: NoiseSpec, seed) -> Fleet:
    rng = np.random.default_rng([int(seed), 202])
    markings, total, n_real = world_markings(gt, noise, rng)
    fleet = Fleet([], [], [], [], [], {}, total, n_real)
    drive = 0
    lo, hi = noise.traces_per_lane
    for lane in gt.lanes:
        s = arc_lengths(lane.points)
        length = s[-1]
        for _ in range(int(rng.integers(lo, hi + 1))):
            trim = min(3.0, 0.2 * length)
            s0 = float(rng.uniform(0.0, trim))
            s1 = length - float(rng.uniform(0.0, trim))
            n_pts = int(rng.integers(4, 7))
            stations = np.linspace(s0, s1, n_pts)
            pts = interpolate_at(lane.points, stations)
            tang = np.stack([_direction_at(lane.points, st) for st in stations])
            if noise.trace_lateral_sigma > 0:
                pts = pts + rng.normal(0.0, noise.trace_lateral_sigma, n_pts)[:, None] * left_normal(tang)
            t = _drive_transform(noise, rng)
            fleet.transforms[drive] = t
            fleet.traces.append(Polyline(t.apply_points(pts), PolylineKind.TRACE))
            fleet.trace_drive.append(drive)
            fleet.trace_lane.append(lane.id)
            inner = (s > s0) & (s < s1)
            path = np.concatenate([interpolate_at(lane.points, [s0]), lane.points[inner],
                                   interpolate_at(lane.points, [s1])])
            pieces = []
            for run in _observe(path, markings, noise.sensor_range):
                rl = arc_lengths(run)[-1]
                # perception reports short pieces of about 10 points, 1 m apart
                n_pieces = int(math.ceil(rl / OBS_PIECE_LENGTH))
                bounds = np.linspace(0.0, rl, n_pieces + 1)
                for a, b in zip(bounds[:-1], bounds[1:]):
                    n_obs = int(min(10, max(2, math.ceil(b - a) + 1)))
                    pieces.append(interpolate_at(run, np.linspace(a, b, n_obs)))
            for obs in pieces:
                if noise.boundary_point_sigma > 0:
                    obs = obs + rng.normal(0.0, noise.boundary_point_sigma, obs.shape)
                fleet.observations.append(Polyline(t.apply_points(obs), PolylineKind.BOUNDARY))
                fleet.obs_drive.append(drive)
            drive += 1
    return fleet


def simulate_drives(gt: GroundTruth, noise: NoiseSpec, seed) -> list:
    return simulate_fleet(gt, noise, seed).traces


def simulate_observations(gt: GroundTruth, noise: NoiseSpec, seed) -> list:
    return simulate_fleet(gt, noise, seed).observations


# ---------------------------------------------------------------------------
# dataset generation


@dataclass(frozen=True)
class MixEntry:
    kind: ScenarioKind
    weight: float
    lanes: tuple
    width: tuple
    length: tuple
    curvature: tuple = (0.0, 0.0)


DEFAULT_MIX = (
    MixEntry(ScenarioKind.STRAIGHT_HIGHWAY, 0.25, (1, 3), (3.25, 3.75), (50.0, 70.0)),
    MixEntry(ScenarioKind.CURVED_HIGHWAY, 0.19, (1, 3), (3.25, 3.75), (50.0, 70.0), (1 / 1500, 1 / 500)),
    MixEntry(ScenarioKind.RAMP_FORK, 0.115, (1, 2), (3.25, 3.75), (50.0, 80.0), (1 / 200, 1 / 100)),
    MixEntry(ScenarioKind.RAMP_MERGE, 0.115, (1, 2), (3.25, 3.75), (50.0, 80.0), (1 / 200, 1 / 100)),
    MixEntry(ScenarioKind.TWO_LANE_RURAL, 0.2, (2, 2), (2.75, 3.25), (50.0, 85.0), (0.0, 1 / 250)),
    MixEntry(ScenarioKind.T_INTERSECTION, 0.13, (2, 2), (2.75, 3.25), (50.0, 70.0)),
)


def sample_scenario(mix, rng, seed: int) -> ScenarioSpec:
    weights = np.array([m.weight for m in mix], dtype=float)
    entry = mix[int(rng.choice(len(mix), p=weights / weights.sum()))]
    lanes = int(rng.integers(entry.lanes[0], entry.lanes[1] + 1))
    width = float(rng.uniform(*entry.width))
    length = float(rng.uniform(*entry.length))
    k = float(rng.uniform(*entry.curvature)) if entry.curvature[1] > 0 else 0.0
    if entry.kind in (ScenarioKind.CURVED_HIGHWAY, ScenarioKind.TWO_LANE_RURAL) and rng.uniform() < 0.5:
        k = -k
    return ScenarioSpec(entry.kind, lanes, width, length, k, seed)


def make_minimap(spec: ScenarioSpec, noise: NoiseSpec, seed: int, tile=(0, 0),
                 apothem: float = DEFAULT_APOTHEM, spacing: float = NODE_SPACING) -> Minimap:
    gt = clip_ground_truth(gen_ground_truth(spec, spacing), apothem, spacing)
    fleet = simulate_fleet(gt, noise, seed)
    polylines = fleet.traces + fleet.observations
    return Minimap(
        tile_id=tuple(tile),
        odd=spec.kind.odd,
        polylines=polylines,
        centers=gt.centers,
        gt_pairs=list(gt.lane_graph.pairs),
        gt_adjacency=np.array(gt.lane_graph.adjacency),
        stage="raw",
        drive_ids=fleet.trace_drive + fleet.obs_drive,
        lane_ids=fleet.trace_lane + [-1] * len(fleet.observations),
        gt_boundaries=gt.boundaries,
        gt_lanes=gt.lanes,
        drive_transforms=fleet.transforms,
        provenance={"seed": int(seed), "scenario": spec.to_dict(), "noise": noise.to_dict()},
    )


def gen_dataset(n_minimaps: int, seed: int, noise: NoiseSpec | None = None, mix=DEFAULT_MIX,
                path=None, apothem: float = DEFAULT_APOTHEM) -> list:
    """Generate ``n_minimaps`` raw minimaps; optionally persist them as JSONL."""
    if n_minimaps < 1:
        raise ValueError("n_minimaps must be >= 1")
    noise = noise or NoiseSpec()
    tiles = spiral_tiles(n_minimaps)
    out = []
    for i in range(n_minimaps):
        rng = np.random.default_rng([int(seed), i])
        mseed = int(rng.integers(2**31 - 1))
        for attempt in range(20):
            spec = sample_scenario(mix, rng, mseed + attempt)
            m = make_minimap(spec, noise, mseed + attempt, tiles[i], apothem)
            if len(m.centers) >= 2 and m.traces():
                break
        out.append(m)
    if path is not None:
        save_dataset(Path(path), out)
    return out
