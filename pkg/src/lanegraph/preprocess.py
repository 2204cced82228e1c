"""Turn raw fleet data into model-ready minimaps.

Stages: align every drive to the consensus of the other drives (ICP), merge
the aligned boundary observations into single polylines, bundle traces per
lane, slice bundles into center-point queries and attach GT labels.
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import (
    CenterPoint,
    LanePair,
    Polyline,
    PolylineKind,
    RigidTransform2,
    apply_rigid,
    arc_lengths,
    cross2,
    dedupe_points,
    interpolate_at,
    left_normal,
    point_to_polyline,
    project_to_segments,
    resample_points,
    segments_of,
    tangent_at,
)
from .records import Minimap

log = logging.getLogger(__name__)


class AlignmentError(RuntimeError):
    pass


@dataclass
class PreprocessConfig:
    icp_max_iters: int = 50
    icp_tol: float = 1e-5
    icp_gate: float = 5.0
    icp_trim: float = 2.0
    align_rounds: int = 2
    agg_spacing: float = 1.0
    agg_radius: float = 0.5
    agg_min_support: int = 2
    obs_chunk_points: int = 10
    bundle_radius: float = 1.2
    center_spacing: float = 10.0
    match_radius: float = 5.0
    max_centers: int = 50


# ---------------------------------------------------------------------------
# ICP


@dataclass
class AlignmentResult:
    transform: RigidTransform2
    residual: float
    history: list = field(default_factory=list)
    iterations: int = 0


class _SegmentIndex:
    """Nearest-segment lookup over reference polylines split into short pieces.

    A point whose nearest reference location is an open polyline end (it
    overhangs the reference) gets no correspondence: partial overlap between
    a drive and the reference must not pull the drive along the marking.
    """

    def __init__(self, polylines=None, piece=0.5, segments=None):
        if segments is None:
            segments = _split_pieces(*segments_of(polylines)[:2], piece)
        a, b = segments[0], segments[1]
        if len(a) == 0:
            raise AlignmentError("unalignable: empty reference")
        if len(segments) > 2:
            open_a, open_b = segments[2], segments[3]
        else:
            open_a = np.ones(len(a), dtype=bool)
            open_b = np.ones(len(a), dtype=bool)
            open_a[1:] = np.linalg.norm(a[1:] - b[:-1], axis=1) > 1e-12
            open_b[:-1] = open_a[1:]
        self.a, self.b, self.open_a, self.open_b = a, b, open_a, open_b
        self.tree = cKDTree(0.5 * (a + b))
        self.k = min(4, len(a))

    def nearest(self, pts):
        _, cand = self.tree.query(pts, k=self.k)
        cand = cand.reshape(len(pts), -1)
        a, b = self.a[cand], self.b[cand]
        d = b - a
        denom = np.einsum("pkj,pkj->pk", d, d)
        t_raw = np.einsum("pkj,pkj->pk", pts[:, None] - a, d) / denom
        t = np.clip(t_raw, 0.0, 1.0)
        foot = a + t[..., None] * d
        dist = np.linalg.norm(pts[:, None] - foot, axis=-1)
        # overhang beyond 1e-9 m; rounding at an exact end point is not one
        slack = 1e-9 / np.sqrt(denom)
        over = ((t_raw < -slack) & self.open_a[cand]) | ((t_raw > 1.0 + slack) & self.open_b[cand])
        # on ties prefer a segment the point projects onto
        j = np.argmin(dist + np.where(over, 1e-7, 0.0), axis=1)
        r = np.arange(len(pts))
        seg_dir = d[r, j] / np.sqrt(denom[r, j])[:, None]
        return foot[r, j], dist[r, j], seg_dir, ~over[r, j]


def _split_pieces(a, b, piece):
    """Cut segments into pieces of at most ``piece`` meters. Also returns
    flags marking piece starts/ends that are open polyline ends."""
    if len(a) == 0:
        return a, b, np.zeros(0, dtype=bool), np.zeros(0, dtype=bool)
    first = np.ones(len(a), dtype=bool)
    first[1:] = np.linalg.norm(a[1:] - b[:-1], axis=1) > 1e-12
    last = np.ones(len(a), dtype=bool)
    last[:-1] = first[1:]
    ln = np.linalg.norm(b - a, axis=1)
    reps = np.maximum(1, np.ceil(ln / piece).astype(int))
    idx = np.repeat(np.arange(len(a)), reps)
    offs = np.arange(len(idx)) - np.repeat(np.cumsum(reps) - reps, reps)
    d = b - a
    return (a[idx] + (offs / reps[idx])[:, None] * d[idx],
            a[idx] + ((offs + 1) / reps[idx])[:, None] * d[idx],
            first[idx] & (offs == 0),
            last[idx] & (offs == reps[idx] - 1))


def _sample_geometry(polylines, spacing=1.0):
    pts = []
    for p in polylines:
        q = p.points if isinstance(p, Polyline) else np.asarray(p)
        if len(q) >= 2 and arc_lengths(q)[-1] > 1e-9:
            pts.append(resample_points(q, spacing))
    if not pts:
        raise AlignmentError("unalignable: empty drive geometry")
    return np.concatenate(pts)


def _icp_objective(pts, index, trim):
    """Truncated RMS distance; overhanging points cost the truncation value."""
    foot, dist, seg_dir, ok = index.nearest(pts)
    dist = np.where(ok, dist, np.inf)
    clipped = np.minimum(dist, trim)
    return math.sqrt(float(np.mean(clipped**2))), foot, dist, seg_dir


def icp_align(drive_geometry, reference, max_iters: int = 50, tol: float = 1e-6,
              gate: float = 5.0, init: RigidTransform2 | None = None,
              index: _SegmentIndex | None = None, trim: float = 2.0) -> AlignmentResult:
    """Rigidly align a drive's polylines onto reference polylines.

    Correspondences are the nearest points on reference segments. A drive
    with no point within ``gate`` meters is unalignable. The objective is the
    RMS of distances truncated at ``trim``, so stretches that no reference
    covers do not drag the drive toward a neighbouring marking; each
    iteration solves the linearized point-to-line least-squares problem over
    the points within ``trim`` in closed form. Steps that would increase the
    residual are halved, so the residual sequence never increases.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    src = _sample_geometry(drive_geometry)
    index = index or _SegmentIndex(reference)
    return _icp(src, index, max_iters, tol, gate, init or RigidTransform2.identity(), trim)


def _icp(src, index, max_iters, tol, gate, T, trim=2.0) -> AlignmentResult:
    trim = min(trim, gate)
    pts = T.apply_points(src)
    res, foot, dist, seg_dir = _icp_objective(pts, index, trim)
    if not np.any(dist <= gate):
        raise AlignmentError("unalignable: no correspondences within gating distance")
    history = [res]
    it = 0
    for it in range(1, max_iters + 1):
        inl = dist <= trim
        if inl.sum() < 2:
            break
        q, c = pts[inl], foot[inl]
        off = q - c
        nrm = left_normal(seg_dir[inl])
        # beyond a segment end the foot is the endpoint; use the offset direction there
        dn = np.linalg.norm(off, axis=1)
        along = np.abs(np.einsum("ij,ij->i", off, seg_dir[inl]))
        use_off = (dn > 1e-12) & (along > 1e-9 * np.maximum(dn, 1.0))
        nrm = np.where(use_off[:, None], off / np.where(dn > 0, dn, 1.0)[:, None], nrm)
        c0 = q.mean(axis=0)
        rel = q - c0
        # d(n . R q)/dtheta at theta = 0 is n . perp(q)
        A = np.column_stack([nrm[:, 1] * rel[:, 0] - nrm[:, 0] * rel[:, 1], nrm[:, 0], nrm[:, 1]])
        b = -np.einsum("ij,ij->i", nrm, off)
        H = A.T @ A
        H += np.eye(3) * 1e-9 * max(np.trace(H), 1.0)
        x = np.linalg.solve(H, A.T @ b)
        accepted = False
        scale = 1.0
        for _ in range(12):
            dth, dt = x[0] * scale, x[1:] * scale
            R = RigidTransform2(dth, (0.0, 0.0)).matrix
            step = RigidTransform2(dth, c0 - R @ c0 + dt)
            T_new = step.compose(T)
            pts_new = T_new.apply_points(src)
            res_new, foot_n, dist_n, dir_n = _icp_objective(pts_new, index, trim)
            if res_new <= res:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break
        improvement = res - res_new
        T, pts, res, foot, dist, seg_dir = T_new, pts_new, res_new, foot_n, dist_n, dir_n
        history.append(res)
        if improvement < tol:
            break
    return AlignmentResult(T, res, history, it)


def _procrustes(src, dst) -> RigidTransform2:
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - cs, dst - cd
    num = float(np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]))
    den = float(np.sum(a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1]))
    th = math.atan2(num, den)
    R = RigidTransform2(th, (0.0, 0.0)).matrix
    return RigidTransform2(th, cd - R @ cs)


def align_drives(obs_by_drive: dict, cfg: PreprocessConfig | None = None) -> dict:
    """Consensus alignment of all drives of one minimap.

    Every drive is registered against the union of the other drives'
    observations for a few rounds. The common drift of the consensus frame is
    removed afterwards by the best rigid fit of corrected onto raw points.
    """
    cfg = cfg or PreprocessConfig()
    drives = sorted(obs_by_drive)
    T = {d: RigidTransform2.identity() for d in drives}
    with_obs = [d for d in drives if obs_by_drive[d]]
    if len(with_obs) < 2:
        return T
    src = {d: _sample_geometry(obs_by_drive[d]) for d in with_obs}
    pieces = {d: _split_pieces(*segments_of(obs_by_drive[d])[:2], 0.5) for d in with_obs}
    for _ in range(cfg.align_rounds):
        for d in with_obs:
            others = [e for e in with_obs if e != d]
            a = np.concatenate([T[e].apply_points(pieces[e][0]) for e in others])
            b = np.concatenate([T[e].apply_points(pieces[e][1]) for e in others])
            oa = np.concatenate([pieces[e][2] for e in others])
            ob = np.concatenate([pieces[e][3] for e in others])
            try:
                res = _icp(src[d], _SegmentIndex(segments=(a, b, oa, ob)), cfg.icp_max_iters,
                           cfg.icp_tol, cfg.icp_gate, T[d], cfg.icp_trim)
            except AlignmentError:
                continue
            T[d] = res.transform
    raw = np.concatenate([p.points for d in with_obs for p in obs_by_drive[d]])
    cor = np.concatenate([T[d].apply_points(p.points) for d in with_obs for p in obs_by_drive[d]])
    drift = _procrustes(raw, cor).inverse()
    return {d: drift.compose(t) for d, t in T.items()}


# ---------------------------------------------------------------------------
# boundary aggregation


class _Track:
    def __init__(self, spine):
        self.spine = np.asarray(spine, dtype=float)
        self.members = []  # (obs index, points)

    def station(self, pts):
        _, dist, t = project_to_segments(pts, self.spine[:-1], self.spine[1:])
        k = np.argmin(dist, axis=1)
        s = arc_lengths(self.spine)
        r = np.arange(len(pts))
        return s[k] + t[r, k] * (s[k + 1] - s[k]), dist[r, k]


def _overlap_order(samples, reach):
    """Breadth-first order over the graph of observations that come within
    ``reach`` of each other, starting each component at its longest member.
    Every observation after the first of a component touches an earlier one."""
    ids = [i for i, s in enumerate(samples) if s is not None]
    if not ids:
        return []
    length = {i: arc_lengths(samples[i])[-1] for i in ids}
    pts = np.concatenate([samples[i] for i in ids])
    owner = np.concatenate([np.full(len(samples[i]), i) for i in ids])
    tree = cKDTree(pts)
    nbrs = defaultdict(set)
    pairs = tree.query_pairs(reach, output_type="ndarray")
    links = np.unique(np.sort(owner[pairs], axis=1), axis=0) if len(pairs) else np.zeros((0, 2), int)
    for a, b in links:
        if a != b:
            nbrs[int(a)].add(int(b))
            nbrs[int(b)].add(int(a))
    by_len = sorted(ids, key=lambda i: (-length[i], i))
    seen, order = set(), []
    for root in by_len:
        if root in seen:
            continue
        seen.add(root)
        queue = deque([root])
        while queue:
            i = queue.popleft()
            order.append(i)
            for j in sorted(nbrs[i] - seen, key=lambda j: (-length[j], j)):
                seen.add(j)
                queue.append(j)
    return order


def aggregate_boundaries(aligned_obs, spacing: float = 1.0, radius: float = 0.5,
                         min_support: int = 2) -> list:
    """Merge overlapping boundary observations into one polyline per marking.

    Observations are resampled at ``spacing``; every point joins the marking
    track whose spine passes within ``radius``, or starts/extends one. Each
    track is then binned along its spine; a bin survives when at least
    ``min_support`` distinct observations contribute, and its vertex is the
    mean over observations of their per-bin centroids.
    """
    samples = []
    for p in aligned_obs:
        q = p.points if isinstance(p, Polyline) else np.asarray(p, dtype=float)
        if len(q) >= 2 and arc_lengths(q)[-1] > 1e-9:
            samples.append(resample_points(q, spacing))
        else:
            samples.append(None)
    order = _overlap_order(samples, radius + 0.5 * spacing)
    tracks: list[_Track] = []
    end_tol = 2.0 * radius + spacing
    for oi in order:
        P = samples[oi]
        label = np.full(len(P), -1)
        st = np.zeros(len(P))
        if tracks:
            a, b, owner = segments_of([t.spine for t in tracks])
            _, dist, t_ = project_to_segments(P, a, b)
            j = np.argmin(dist, axis=1)
            hit = dist[np.arange(len(P)), j] <= radius
            label[hit] = owner[j[hit]]
            for tid in np.unique(label[hit]):
                sel = label == tid
                st[sel] = tracks[tid].station(P[sel])[0]
        # unmatched runs: fill interior glitches, extend track ends, or seed new tracks
        k = 0
        while k < len(P):
            if label[k] >= 0:
                k += 1
                continue
            e = k
            while e < len(P) and label[e] < 0:
                e += 1
            prev_t = label[k - 1] if k > 0 else -1
            next_t = label[e] if e < len(P) else -1
            run = P[k:e]
            if prev_t >= 0 and prev_t == next_t:
                label[k:e] = prev_t
            else:
                placed = False
                for tid, anchor, forward in ((prev_t, k - 1, True), (next_t, e, False)):
                    if tid < 0:
                        continue
                    tr = tracks[tid]
                    L = arc_lengths(tr.spine)[-1]
                    s_a = st[anchor]
                    seq = run if forward else run[::-1]
                    if s_a >= L - end_tol:
                        tr.spine = np.concatenate([tr.spine, dedupe_points(seq)])
                    elif s_a <= end_tol:
                        tr.spine = np.concatenate([dedupe_points(seq)[::-1], tr.spine])
                    else:
                        continue
                    tr.spine = dedupe_points(tr.spine)
                    label[k:e] = tid
                    placed = True
                    break
                if not placed and len(run) >= 2:
                    tracks.append(_Track(run))
                    label[k:e] = len(tracks) - 1
            k = e
        for tid in np.unique(label[label >= 0]):
            tracks[tid].members.append((oi, P[label == tid]))
    out = []
    for tr in tracks:
        if len(tr.spine) < 2:
            continue
        bins = defaultdict(dict)
        lo_pt, hi_pt = defaultdict(dict), defaultdict(dict)
        for oi, pts in tr.members:
            s, _ = tr.station(pts)
            keys = np.round(s / spacing).astype(int)
            for key in np.unique(keys):
                sel = np.nonzero(keys == key)[0]
                bins[int(key)][oi] = pts[sel].mean(axis=0)
                lo_pt[int(key)][oi] = pts[sel[np.argmin(s[sel])]]
                hi_pt[int(key)][oi] = pts[sel[np.argmax(s[sel])]]
        good = sorted(k for k, v in bins.items() if len(v) >= min_support)
        runs, cur = [], []
        for key in good:
            if cur and key != cur[-1] + 1:
                runs.append(cur)
                cur = []
            cur.append(key)
        if cur:
            runs.append(cur)
        for r in runs:
            verts = [np.mean([bins[key][o] for o in sorted(bins[key])], axis=0) for key in r]
            # reach the actual extent of the marking, not just the end bin centroid
            first = np.mean([lo_pt[r[0]][o] for o in sorted(bins[r[0]])], axis=0)
            last = np.mean([hi_pt[r[-1]][o] for o in sorted(bins[r[-1]])], axis=0)
            verts = dedupe_points(np.array([first] + verts + [last]), 1e-9)
            if len(verts) >= 2:
                out.append(Polyline(verts, PolylineKind.BOUNDARY))
    return out


def chunk_polyline(p: Polyline, max_points: int) -> list:
    """Split into pieces of at most ``max_points`` sharing their end vertices."""
    pts = p.points
    if len(pts) <= max_points:
        return [p]
    out = []
    start = 0
    while start < len(pts) - 1:
        stop = min(start + max_points, len(pts))
        out.append(Polyline(pts[start:stop], p.kind))
        start = stop - 1
    return out


# ---------------------------------------------------------------------------
# trace bundles and center points


@dataclass
class Bundle:
    traces: list
    representative: Polyline
    members: list = field(default_factory=list)  # indices into the input trace list


def _one_sided_distance(a: np.ndarray, b: np.ndarray):
    """Mean lateral distance of a's points to polyline b over the overlap."""
    sb = arc_lengths(b)
    _, dist, t = project_to_segments(a, b[:-1], b[1:])
    k = np.argmin(dist, axis=1)
    r = np.arange(len(a))
    s = sb[k] + t[r, k] * (sb[k + 1] - sb[k])
    inside = (s > 1e-9) & (s < sb[-1] - 1e-9)
    if inside.sum() < max(1, int(math.ceil(0.5 * len(a)))):
        return None
    da = np.gradient(a, axis=0)
    db = (b[1:] - b[:-1])[k]
    cos = np.einsum("ij,ij->i", da, db) / (np.linalg.norm(da, axis=1) * np.linalg.norm(db, axis=1))
    if np.mean(cos[inside]) < 0.5:
        return None
    return float(dist[r, k][inside].mean())


def mutual_lateral_distance(a: np.ndarray, b: np.ndarray):
    d1, d2 = _one_sided_distance(a, b), _one_sided_distance(b, a)
    vals = [d for d in (d1, d2) if d is not None]
    if not vals:
        return None
    return float(np.mean(vals))


def mean_polyline(members, n: int | None = None) -> np.ndarray:
    """Pointwise mean of polylines resampled at equal normalized arc length."""
    n = n or max(len(m) for m in members) * 2
    acc = np.zeros((n, 2))
    for m in members:
        s = arc_lengths(m)
        acc += interpolate_at(m, np.linspace(0.0, s[-1], n))
    return dedupe_points(acc / len(members), 1e-9)


def bundle_traces(traces, bundle_radius: float = 1.2) -> list:
    """Greedy proximity grouping of traces (same direction, overlapping)."""
    if bundle_radius <= 0:
        raise ValueError("bundle_radius must be positive")
    order = sorted(range(len(traces)), key=lambda i: (-traces[i].length, i))
    bundles: list[Bundle] = []
    for i in order:
        tr = traces[i]
        best, best_d = None, None
        for bi, b in enumerate(bundles):
            d = mutual_lateral_distance(tr.points, b.representative.points)
            if d is not None and d < bundle_radius and (best_d is None or d < best_d):
                best, best_d = bi, d
        if best is None:
            bundles.append(Bundle([tr], tr, [i]))
        else:
            b = bundles[best]
            b.traces.append(tr)
            b.members.append(i)
            if len(b.traces) > 1:
                rep = mean_polyline([t.points for t in b.traces])
                b.representative = Polyline(rep, PolylineKind.TRACE)
    return bundles


def _local_direction(pts, origin, fallback):
    """Tangent at ``origin`` of a quadratic (or linear) fit through ``pts``
    expressed in the frame of the ``fallback`` direction."""
    t = fallback
    n = left_normal(t)
    u = (pts - origin) @ t
    v = (pts - origin) @ n
    span = np.ptp(u) if len(u) else 0.0
    if len(u) >= 4 and span > 2.0 and len(np.unique(np.round(u, 6))) >= 3:
        slope = np.polyfit(u, v, 2)[1]
    elif len(u) >= 2 and span > 1.0:
        slope = np.polyfit(u, v, 1)[0]
    else:
        return fallback
    if abs(slope) > math.tan(math.radians(20.0)):
        return fallback
    d = t + slope * n
    return d / np.linalg.norm(d)


def derive_center_points(bundle: Bundle, spacing: float = 10.0, with_windows: bool = False):
    """Slice the bundle into ``spacing``-long windows along its representative.

    Position is the centroid of all member trace points in the window; the
    direction is the tangent of a local polynomial fit through member points
    around that centroid. Empty windows yield no center.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    rep = bundle.representative.points
    pts = np.concatenate([t.points for t in bundle.traces])
    sr = arc_lengths(rep)
    _, dist, t = project_to_segments(pts, rep[:-1], rep[1:])
    k = np.argmin(dist, axis=1)
    r = np.arange(len(pts))
    s = sr[k] + t[r, k] * (sr[k + 1] - sr[k])
    win = np.floor(np.clip(s, 0.0, sr[-1]) / spacing).astype(int)
    last = int(np.floor(sr[-1] / spacing))
    win = np.minimum(win, max(last - 1, 0)) if sr[-1] % spacing < 1e-9 and last > 0 else win
    out, windows = [], []
    for w in np.unique(win):
        sel = win == w
        centroid = pts[sel].mean(axis=0)
        _, s_c, _ = point_to_polyline(centroid, rep)
        fallback = tangent_at(rep, s_c)
        gap = np.abs(s - s_c)
        near = gap <= 1.5 * spacing
        if np.ptp(s[near]) < spacing:
            # too little support around an end window: take the closest points until it spans a window
            by_gap = np.argsort(gap, kind="stable")
            span = [np.ptp(s[by_gap[: k + 1]]) for k in range(len(by_gap))]
            k = next((k for k, sp in enumerate(span) if sp >= spacing), len(by_gap) - 1)
            near = np.zeros(len(s), dtype=bool)
            near[by_gap[: k + 1]] = True
            near |= gap <= gap[by_gap[k]]
        d = _local_direction(pts[near], centroid, fallback)
        out.append(CenterPoint(centroid, d))
        windows.append(pts[sel])
    return (out, windows) if with_windows else out


# ---------------------------------------------------------------------------
# GT lane pairs and connectivity labels


def _side_nearest(c, d, a, b, sign):
    """Nearest point on each segment restricted to one closed half-plane."""
    sa = sign * cross2(d, a - c)
    sb = sign * cross2(d, b - c)
    lo = np.zeros(len(a))
    hi = np.ones(len(a))
    valid = (sa >= 0) | (sb >= 0)
    cross_pt = np.where(sa != sb, sa / np.where(sa != sb, sa - sb, 1.0), 0.0)
    lo = np.where((sa < 0) & (sb >= 0), cross_pt, lo)
    hi = np.where((sa >= 0) & (sb < 0), cross_pt, hi)
    seg = b - a
    denom = np.einsum("ij,ij->i", seg, seg)
    tp = np.einsum("ij,ij->i", c - a, seg) / denom
    tp = np.clip(tp, lo, hi)
    foot = a + tp[:, None] * seg
    dist = np.linalg.norm(foot - c, axis=1)
    dist = np.where(valid, dist, np.inf)
    return foot, dist


def match_gt_lane_pairs(centers, gt_boundaries, max_dist: float = 5.0) -> list:
    """Nearest annotated boundary point strictly left and right of each center.

    Returns one ``LanePair`` per center, or ``None`` when either side has no
    boundary within ``max_dist`` (unlabeled).
    """
    if not gt_boundaries:
        raise ValueError("match_gt_lane_pairs needs at least one GT boundary")
    a, b, _ = segments_of(gt_boundaries)
    out = []
    for c in centers:
        sides = []
        for sign in (1.0, -1.0):
            foot, dist = _side_nearest(c.position, c.direction, a, b, sign)
            j = int(np.argmin(dist))
            sides.append(foot[j] if dist[j] <= max_dist else None)
        if sides[0] is None or sides[1] is None or np.array_equal(sides[0], sides[1]):
            out.append(None)
        else:
            out.append(LanePair(sides[0], sides[1]))
    return out


def assign_lanes(centers, gt_lanes, hint=None) -> list:
    """GT lane id per center: ``hint`` when given, else the nearest lane whose
    direction agrees (within 45 degrees) and that is within one lane width."""
    out = []
    for i, c in enumerate(centers):
        if hint is not None and hint[i] is not None and hint[i] >= 0:
            out.append(int(hint[i]))
            continue
        best, best_d = -1, None
        for lane in gt_lanes:
            dist, s, _ = point_to_polyline(c.position, lane.points)
            if dist > lane.width:
                continue
            if tangent_at(lane.points, s) @ c.direction < math.cos(math.radians(45.0)):
                continue
            if best_d is None or dist < best_d:
                best, best_d = lane.id, dist
        out.append(best)
    return out


def label_adjacency(centers, center_lane, gt_lanes, max_hops: int = 3) -> np.ndarray:
    """Connectivity labels for derived centers from annotated lane succession.

    Centers on the same lane are chained in station order; the last center of
    a lane links to the first center of each successor lane (skipping
    successors without centers, up to ``max_hops``).
    """
    n = len(centers)
    adj = np.zeros((n, n), dtype=np.int8)
    lanes = {l.id: l for l in gt_lanes}
    per_lane = defaultdict(list)
    for i, (c, lid) in enumerate(zip(centers, center_lane)):
        if lid in lanes:
            _, s, _ = point_to_polyline(c.position, lanes[lid].points)
            per_lane[lid].append((s, i))
    chain = {lid: [i for _, i in sorted(v)] for lid, v in per_lane.items()}
    for ids in chain.values():
        for i, j in zip(ids[:-1], ids[1:]):
            adj[i, j] = 1

    def first_centers(lid, hops):
        if lid in chain:
            return [chain[lid][0]]
        if hops >= max_hops or lid not in lanes:
            return []
        return [c for s in lanes[lid].successors for c in first_centers(s, hops + 1)]

    for lid, ids in chain.items():
        for s in lanes[lid].successors:
            for j in first_centers(s, 1):
                if j != ids[-1]:
                    adj[ids[-1], j] = 1
    np.fill_diagonal(adj, 0)
    return adj


# ---------------------------------------------------------------------------
# per-minimap pipeline


def preprocess_minimap(raw: Minimap, cfg: PreprocessConfig | None = None) -> Minimap:
    cfg = cfg or PreprocessConfig()
    drive_ids = raw.drive_ids or [-1] * len(raw.polylines)
    lane_ids = raw.lane_ids or [-1] * len(raw.polylines)
    obs_by_drive = defaultdict(list)
    for p, d in zip(raw.polylines, drive_ids):
        if p.kind is PolylineKind.BOUNDARY and d >= 0:
            obs_by_drive[d].append(p)
    for d in set(drive_ids):
        if d >= 0:
            obs_by_drive.setdefault(d, [])
    T = align_drives(dict(obs_by_drive), cfg)

    def moved(p, d):
        return apply_rigid(T[d], p) if d in T else p

    traces, trace_lane, observations = [], [], []
    for p, d, lid in zip(raw.polylines, drive_ids, lane_ids):
        q = moved(p, d)
        if p.kind is PolylineKind.TRACE:
            traces.append(q)
            trace_lane.append(lid)
        else:
            observations.append(q)

    agg = aggregate_boundaries(observations, cfg.agg_spacing, cfg.agg_radius, cfg.agg_min_support) if observations else []
    obs_in = [piece for p in agg for piece in chunk_polyline(p, cfg.obs_chunk_points)]

    centers, hints = [], []
    for b in bundle_traces(traces, cfg.bundle_radius):
        votes = Counter(trace_lane[i] for i in b.members)
        lane, _ = max(votes.items(), key=lambda kv: (kv[1], -kv[0]))
        cs = derive_center_points(b, cfg.center_spacing)
        centers += cs
        hints += [lane] * len(cs)
    pairs = match_gt_lane_pairs(centers, raw.gt_boundaries, cfg.match_radius) if raw.gt_boundaries else [None] * len(centers)
    if raw.gt_lanes:
        lanes_of = assign_lanes(centers, raw.gt_lanes, hints if raw.lane_ids else None)
        adj = label_adjacency(centers, lanes_of, raw.gt_lanes)
    else:
        adj = np.zeros((len(centers), len(centers)), dtype=np.int8)
    return Minimap(
        tile_id=raw.tile_id,
        odd=raw.odd,
        polylines=obs_in + traces,
        centers=centers,
        gt_pairs=pairs,
        gt_adjacency=adj,
        stage="processed",
        gt_boundaries=raw.gt_boundaries,
        gt_lanes=raw.gt_lanes,
        provenance=dict(raw.provenance),
    )


def preprocess_dataset(raws, cfg: PreprocessConfig | None = None) -> list:
    """Preprocess every raw minimap; minimaps whose query count falls outside
    [2, max_centers] are dropped (and logged)."""
    cfg = cfg or PreprocessConfig()
    out, dropped = [], 0
    for raw in raws:
        m = preprocess_minimap(raw, cfg)
        if 2 <= len(m.centers) <= cfg.max_centers:
            out.append(m)
        else:
            dropped += 1
    if dropped:
        log.warning("dropped %d minimaps with query counts outside [2, %d]", dropped, cfg.max_centers)
    return out
