"""Joint lane-pair / connectivity objective and edge thresholding."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .network import LOGIT_CLAMP

# slack for the inclusive threshold comparison; sigmoid(logit(0.8)) may round below 0.8
THRESHOLD_EPS = 1e-12


class LossError(ValueError):
    pass


def _batched(x, dims):
    return (x.unsqueeze(0), True) if x.dim() == dims else (x, False)


def joint_loss(pred_pairs, gt_pairs, conn_logits, gt_adjacency, alpha: float = 1.0,
               pair_mask=None, query_mask=None):
    """Returns ``(total, boundary, connectivity)``.

    boundary: squared Euclidean error of both boundary points, averaged over
    the two sides and every labeled query of the batch.
    connectivity: binary cross-entropy averaged over all ordered query pairs
    of a minimap (diagonal included), then over minimaps.

    Unbatched (Q, 4) / (Q, Q) inputs are accepted. ``pair_mask`` selects
    labeled queries; ``query_mask`` marks real (non-padded) query slots.
    """
    pred_pairs, _ = _batched(pred_pairs, 2)
    gt_pairs, _ = _batched(gt_pairs, 2)
    conn_logits, _ = _batched(conn_logits, 2)
    gt_adjacency, _ = _batched(gt_adjacency, 2)
    B, Q = pred_pairs.shape[:2]
    if gt_pairs.shape != pred_pairs.shape or conn_logits.shape != (B, Q, Q) or gt_adjacency.shape != (B, Q, Q):
        raise LossError(f"shape mismatch: pairs {tuple(pred_pairs.shape)} vs {tuple(gt_pairs.shape)}, "
                        f"logits {tuple(conn_logits.shape)} vs adjacency {tuple(gt_adjacency.shape)}")
    qm = torch.ones(B, Q, dtype=torch.bool) if query_mask is None else _batched(query_mask, 1)[0].bool()
    pm = qm if pair_mask is None else (_batched(pair_mask, 1)[0].bool() & qm)
    n_b = int(pm.sum())
    if n_b == 0:
        raise LossError("no labeled pairs")
    diff = (pred_pairs - gt_pairs)[pm]
    sq = diff[:, :2].pow(2).sum(-1) + diff[:, 2:].pow(2).sum(-1)
    boundary = sq.sum() / (2 * n_b)

    logits = conn_logits.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
    bce = F.binary_cross_entropy_with_logits(logits, gt_adjacency.to(logits.dtype), reduction="none")
    valid = (qm[:, :, None] & qm[:, None, :]).to(bce.dtype)
    per_map = (bce * valid).sum(dim=(1, 2)) / valid.sum(dim=(1, 2))
    connectivity = per_map.mean()
    return boundary + alpha * connectivity, boundary, connectivity


def predict_adjacency(conn_logits, threshold: float = 0.8) -> np.ndarray:
    """Edge i -> j iff sigmoid(logit) >= threshold; no self loops."""
    if isinstance(conn_logits, torch.Tensor):
        conn_logits = conn_logits.detach().cpu().double().numpy()
    z = np.asarray(conn_logits, dtype=float)
    if z.ndim != 2 or z.shape[0] != z.shape[1]:
        raise ValueError(f"logits must be a square matrix, got shape {z.shape}")
    with np.errstate(over="ignore"):
        p = 1.0 / (1.0 + np.exp(-z))
    adj = (p >= threshold - THRESHOLD_EPS).astype(np.int8)
    np.fill_diagonal(adj, 0)
    return adj
