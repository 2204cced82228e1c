"""Minimap -> tensor encoding, batching and rotation augmentation."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch

from ..geometry import CenterPoint, LanePair, Polyline, PolylineKind, RigidTransform2
from ..records import GTLane, Minimap
from .network import FEATURE_DIM, KIND_INDEX, build_point_features

ALLOWED_ANGLES = (90, 180, 270)
# exact rotation matrices for quarter turns, indexed by the number of turns
_QUARTER = [np.array(m, dtype=float) for m in ([[1, 0], [0, 1]], [[0, -1], [1, 0]],
                                               [[-1, 0], [0, -1]], [[0, 1], [-1, 0]])]


@dataclass
class EncodedMinimap:
    seg_feats: list  # per polyline (S_i, 6)
    kinds: np.ndarray  # (P,)
    centers: np.ndarray  # (Q, 2)
    target_pairs: np.ndarray | None = None  # (Q, 4), zeros where unlabeled
    labeled: np.ndarray | None = None  # (Q,)
    adjacency: np.ndarray | None = None  # (Q, Q)


def encode_inputs(polylines, centers) -> EncodedMinimap:
    pos = np.array([c.position if isinstance(c, CenterPoint) else c for c in centers], dtype=float).reshape(-1, 2)
    return EncodedMinimap(
        seg_feats=[build_point_features(p) for p in polylines],
        kinds=np.array([KIND_INDEX[PolylineKind(p.kind)] for p in polylines], dtype=np.int64),
        centers=pos,
    )


def encode_minimap(m: Minimap) -> EncodedMinimap:
    """Inputs plus training targets of a processed minimap."""
    item = encode_inputs(m.polylines, m.centers)
    q = len(m.centers)
    item.labeled = m.labeled.copy()
    item.target_pairs = np.zeros((q, 4))
    for i, p in enumerate(m.gt_pairs):
        if p is not None:
            item.target_pairs[i] = p.as_array()
    item.adjacency = np.asarray(m.gt_adjacency, dtype=float).reshape(q, q)
    return item


def rotate_encoded(item: EncodedMinimap, turns: int) -> EncodedMinimap:
    """Quarter-turn rotation of an encoded minimap about the tile center."""
    turns %= 4
    if turns == 0:
        return item
    R = _QUARTER[turns]
    feats = []
    for f in item.seg_feats:
        g = f.copy()
        g[:, 0:2] = f[:, 0:2] @ R.T
        g[:, 2:4] = f[:, 2:4] @ R.T
        feats.append(g)
    tp = None
    if item.target_pairs is not None:
        tp = np.concatenate([item.target_pairs[:, :2] @ R.T, item.target_pairs[:, 2:] @ R.T], axis=1)
    return replace(item, seg_feats=feats, centers=item.centers @ R.T, target_pairs=tp)


def collate(items, dtype=torch.float32) -> dict:
    """Pad a list of encoded minimaps into one batch.

    Polylines of all minimaps are stacked along one axis for the polyline
    encoder; ``poly_batch``/``poly_slot`` scatter them back into a padded
    (B, P) memory. Masks are True on real entries.
    """
    B = len(items)
    P = max(len(it.seg_feats) for it in items)
    Q = max(len(it.centers) for it in items)
    S = max(len(f) for it in items for f in it.seg_feats)
    N = sum(len(it.seg_feats) for it in items)
    seg = np.zeros((N, S, FEATURE_DIM))
    seg_mask = np.zeros((N, S), dtype=bool)
    kinds, pb, ps = [], [], []
    poly_mask = np.zeros((B, P), dtype=bool)
    centers = np.zeros((B, Q, 2))
    query_mask = np.zeros((B, Q), dtype=bool)
    k = 0
    for b, it in enumerate(items):
        for j, f in enumerate(it.seg_feats):
            seg[k, :len(f)] = f
            seg_mask[k, :len(f)] = True
            k += 1
        n = len(it.seg_feats)
        kinds.append(it.kinds)
        pb.append(np.full(n, b))
        ps.append(np.arange(n))
        poly_mask[b, :n] = True
        centers[b, :len(it.centers)] = it.centers
        query_mask[b, :len(it.centers)] = True
    batch = {
        "seg_feats": torch.as_tensor(seg, dtype=dtype),
        "seg_mask": torch.as_tensor(seg_mask),
        "poly_kind": torch.as_tensor(np.concatenate(kinds)),
        "poly_batch": torch.as_tensor(np.concatenate(pb)),
        "poly_slot": torch.as_tensor(np.concatenate(ps)),
        "poly_mask": torch.as_tensor(poly_mask),
        "centers": torch.as_tensor(centers, dtype=dtype),
        "query_mask": torch.as_tensor(query_mask),
    }
    if all(it.target_pairs is not None for it in items):
        tp = np.zeros((B, Q, 4))
        lab = np.zeros((B, Q), dtype=bool)
        adj = np.zeros((B, Q, Q))
        for b, it in enumerate(items):
            q = len(it.centers)
            tp[b, :q] = it.target_pairs
            lab[b, :q] = it.labeled
            adj[b, :q, :q] = it.adjacency
        batch["target_pairs"] = torch.as_tensor(tp, dtype=dtype)
        batch["pair_mask"] = torch.as_tensor(lab)
        batch["target_adj"] = torch.as_tensor(adj, dtype=dtype)
    return batch


def _rot_points(R, pts):
    return np.asarray(pts, dtype=float) @ R.T


def augment_rotate(minimap: Minimap, angle: int) -> Minimap:
    """Copy of ``minimap`` rotated by 90, 180 or 270 degrees about the tile
    center. Adjacency and labels are unchanged."""
    if angle not in ALLOWED_ANGLES:
        raise ValueError(f"rotation angle must be one of {ALLOWED_ANGLES}, got {angle!r}")
    R = _QUARTER[angle // 90]

    def pair(p):
        return None if p is None else LanePair(_rot_points(R, p.left), _rot_points(R, p.right))

    transforms = {}
    for d, t in minimap.drive_transforms.items():
        # same drive error expressed in the rotated frame
        transforms[d] = RigidTransform2(t.rotation, _rot_points(R, t.translation))
    return replace(
        minimap,
        polylines=[Polyline(_rot_points(R, p.points), p.kind) for p in minimap.polylines],
        centers=[CenterPoint(_rot_points(R, c.position), _rot_points(R, c.direction)) for c in minimap.centers],
        gt_pairs=[pair(p) for p in minimap.gt_pairs],
        gt_adjacency=np.array(minimap.gt_adjacency, copy=True),
        gt_boundaries=[Polyline(_rot_points(R, p.points), p.kind) if isinstance(p, Polyline)
                       else _rot_points(R, p) for p in minimap.gt_boundaries],
        gt_lanes=[GTLane(l.id, _rot_points(R, l.points), l.width, list(l.successors), l.marked)
                  for l in minimap.gt_lanes],
        drive_transforms=transforms,
        provenance={**minimap.provenance, "rotation_deg": angle},
    )
