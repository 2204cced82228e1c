"""Boundary-point, lane-width and connectivity metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    pass


def _stack(pairs) -> np.ndarray:
    """(N, 4) array [xl, yl, xr, yr] from LanePairs or array rows."""
    rows = [p.as_array() if hasattr(p, "as_array") else np.asarray(p, dtype=float).reshape(4) for p in pairs]
    return np.array(rows, dtype=float).reshape(-1, 4)


def _check(pred, gt):
    P, G = _stack(pred), _stack(gt)
    if len(P) != len(G):
        raise MetricError(f"{len(P)} predicted pairs vs {len(G)} GT pairs")
    if len(P) == 0:
        raise MetricError("metrics need at least one lane pair")
    return P, G


def boundary_errors(pred, gt) -> np.ndarray:
    """Per-point Euclidean errors, shape (N, 2) for (left, right)."""
    P, G = _check(pred, gt)
    return np.stack([np.linalg.norm(P[:, :2] - G[:, :2], axis=1),
                     np.linalg.norm(P[:, 2:] - G[:, 2:], axis=1)], axis=1)


def width_errors(pred, gt) -> np.ndarray:
    P, G = _check(pred, gt)
    wp = np.linalg.norm(P[:, :2] - P[:, 2:], axis=1)
    wg = np.linalg.norm(G[:, :2] - G[:, 2:], axis=1)
    return np.abs(wp - wg)


def mbpe(pred, gt) -> float:
    """Mean boundary point error over all left and right points."""
    return float(boundary_errors(pred, gt).mean())


def mlwe(pred, gt) -> float:
    """Mean absolute lane width error."""
    return float(width_errors(pred, gt).mean())


@dataclass
class ConnCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConnCounts") -> "ConnCounts":
        return ConnCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 1.0

    def f1(self) -> tuple[float, bool]:
        """F1 with connected as the positive class.

        With no positives in either prediction or GT the score is defined
        as 1.0 and the returned flag is set.
        """
        if self.tp + self.fp + self.fn == 0:
            return 1.0, True
        return 2 * self.tp / (2 * self.tp + self.fp + self.fn), False


def connectivity_counts(pred_adj, gt_adj) -> ConnCounts:
    P = np.asarray(pred_adj).astype(bool)
    G = np.asarray(gt_adj).astype(bool)
    if P.shape != G.shape or P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise MetricError(f"adjacency shapes differ or are not square: {P.shape} vs {G.shape}")
    off = ~np.eye(len(P), dtype=bool)
    P, G = P[off], G[off]
    return ConnCounts(int(np.sum(P & G)), int(np.sum(P & ~G)), int(np.sum(~P & G)), int(np.sum(~P & ~G)))


def connectivity_metrics(pred_adj, gt_adj, with_flag: bool = False):
    """Accuracy and F1 over ordered off-diagonal pairs.

    Returns ``(accuracy, f1)`` or ``(accuracy, f1, zero_positive_flag)``.
    """
    c = connectivity_counts(pred_adj, gt_adj)
    f1, flag = c.f1()
    return (c.accuracy(), f1, flag) if with_flag else (c.accuracy(), f1)
