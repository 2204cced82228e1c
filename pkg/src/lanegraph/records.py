"""Minimap records and their line-delimited JSON persistence.

One minimap per line. Floats go through ``json`` which writes the shortest
repr that round-trips, so save/load is bit exact.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .geometry import CenterPoint, GeometryError, LanePair, Polyline, PolylineKind, RigidTransform2, TileId

SCHEMA_VERSION = 1


class RecordError(ValueError):
    pass


@dataclass
class GTLane:
    """Annotated lane centerline used to label connectivity of derived centers."""

    id: int
    points: np.ndarray
    width: float
    successors: list = field(default_factory=list)
    marked: bool = True


@dataclass
class Minimap:
    tile_id: TileId
    odd: str
    polylines: list
    centers: list
    gt_pairs: list  # LanePair or None for unlabeled centers
    gt_adjacency: np.ndarray
    stage: str = "processed"
    drive_ids: list | None = None  # per polyline, -1 when not tied to a drive
    lane_ids: list | None = None  # GT lane of each trace (generator provenance, never a model input)
    gt_boundaries: list = field(default_factory=list)
    gt_lanes: list = field(default_factory=list)
    drive_transforms: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def labeled(self) -> np.ndarray:
        return np.array([p is not None for p in self.gt_pairs], dtype=bool)

    def traces(self) -> list:
        return [p for p in self.polylines if p.kind is PolylineKind.TRACE]

    def observations(self) -> list:
        return [p for p in self.polylines if p.kind is PolylineKind.BOUNDARY]


def _pts(arr) -> list:
    return [[float(x), float(y)] for x, y in np.asarray(arr, dtype=float)]


def to_record(m: Minimap) -> dict:
    edges = [[int(i), int(j)] for i, j in zip(*np.nonzero(m.gt_adjacency))]
    rec = {
        "schema_version": SCHEMA_VERSION,
        "stage": m.stage,
        "tile_id": [int(m.tile_id[0]), int(m.tile_id[1])],
        "odd_label": m.odd,
        "polylines": [
            {"kind": p.kind.value, "points": _pts(p.points)}
            for p in m.polylines
        ],
        "centers": [
            {"x": float(c.position[0]), "y": float(c.position[1]),
             "dx": float(c.direction[0]), "dy": float(c.direction[1])}
            for c in m.centers
        ],
        "gt_pairs": [
            {"bl": None, "br": None, "labeled": False} if p is None else
            {"bl": _pts(p.left[None])[0], "br": _pts(p.right[None])[0], "labeled": True}
            for p in m.gt_pairs
        ],
        "gt_adjacency": edges,
        "gt_boundaries": [_pts(b.points) for b in m.gt_boundaries],
        "gt_lanes": [
            {"id": int(l.id), "points": _pts(l.points), "width": float(l.width),
             "successors": [int(s) for s in l.successors], "marked": bool(l.marked)}
            for l in m.gt_lanes
        ],
        "provenance": m.provenance,
    }
    if m.drive_ids is not None:
        rec["drive_ids"] = [int(d) for d in m.drive_ids]
    if m.lane_ids is not None:
        rec["lane_ids"] = [int(d) for d in m.lane_ids]
    if m.drive_transforms:
        rec["drive_transforms"] = {
            str(k): [t.rotation, list(t.translation)] for k, t in sorted(m.drive_transforms.items())
        }
    return rec


def from_record(rec: dict) -> Minimap:
    version = rec.get("schema_version")
    if version != SCHEMA_VERSION:
        raise RecordError(f"schema version mismatch: file has {version}, reader expects {SCHEMA_VERSION}")
    polylines = [Polyline(np.array(p["points"], dtype=float), PolylineKind(p["kind"])) for p in rec["polylines"]]
    centers = [CenterPoint(np.array([c["x"], c["y"]]), np.array([c["dx"], c["dy"]])) for c in rec["centers"]]
    n = len(centers)
    pairs = []
    for p in rec["gt_pairs"]:
        pairs.append(LanePair(np.array(p["bl"]), np.array(p["br"])) if p["labeled"] else None)
    if len(pairs) != n:
        raise RecordError(f"{len(pairs)} gt_pairs for {n} centers")
    adj = np.zeros((n, n), dtype=np.int8)
    for i, j in rec["gt_adjacency"]:
        if not (0 <= i < n and 0 <= j < n):
            raise RecordError(f"adjacency edge ({i}, {j}) out of range for {n} centers")
        if i == j:
            raise RecordError(f"adjacency self-edge at {i}")
        adj[i, j] = 1
    transforms = {
        int(k): RigidTransform2(v[0], v[1]) for k, v in rec.get("drive_transforms", {}).items()
    }
    drive_ids = rec.get("drive_ids")
    if drive_ids is not None and len(drive_ids) != len(polylines):
        raise RecordError("drive_ids length does not match polylines")
    return Minimap(
        tile_id=TileId(*rec["tile_id"]),
        odd=rec["odd_label"],
        polylines=polylines,
        centers=centers,
        gt_pairs=pairs,
        gt_adjacency=adj,
        stage=rec.get("stage", "processed"),
        drive_ids=drive_ids,
        lane_ids=rec.get("lane_ids"),
        gt_boundaries=[Polyline(np.array(b, dtype=float)) for b in rec.get("gt_boundaries", [])],
        gt_lanes=[
            GTLane(l["id"], np.array(l["points"], dtype=float), l["width"], list(l["successors"]), l["marked"])
            for l in rec.get("gt_lanes", [])
        ],
        drive_transforms=transforms,
        provenance=rec.get("provenance", {}),
    )


def dumps(m: Minimap) -> str:
    return json.dumps(to_record(m), sort_keys=True, separators=(",", ":"), allow_nan=False)


def save_dataset(path, minimaps: Iterable[Minimap]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            for m in minimaps:
                fh.write(dumps(m))
                fh.write("\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"failed to write dataset {path}: {exc}") from exc
    return path


def load_dataset(path) -> list[Minimap]:
    path = Path(path)
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(from_record(json.loads(line)))
            except RecordError as exc:
                raise RecordError(f"{path}:{lineno}: {exc}") from exc
            except (KeyError, TypeError, ValueError, GeometryError) as exc:
                raise RecordError(f"{path}:{lineno}: malformed record ({exc})") from exc
    return out
