"""Training loop, inference and checkpoints."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..geometry import LaneGraph, LanePair
from ..records import Minimap
from .config import ModelConfig, TrainConfig
from .data import collate, encode_minimap, rotate_encoded
from .losses import joint_loss, predict_adjacency
from .network import LMTNet

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class TrainResult:
    model: LMTNet
    history: list = field(default_factory=list)  # one dict per epoch
    skipped: int = 0  # minimaps left out (query count out of range or nothing labeled)


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate in effect during ``epoch`` (1-based)."""
    if epoch < 1:
        raise ValueError("epochs are counted from 1")
    return cfg.learning_rate * cfg.lr_decay_gamma ** ((epoch - 1) // cfg.lr_decay_epoch)


def trainable(m: Minimap, mc: ModelConfig) -> bool:
    return (mc.min_queries <= len(m.centers) <= mc.max_queries and bool(m.labeled.any())
            and len(m.polylines) > 0)


def _batches(items, order, batch_size):
    for i in range(0, len(order), batch_size):
        yield [items[j] for j in order[i:i + batch_size]]


def _batch_loss(model, batch, alpha):
    pairs, logits, _ = model(batch)
    return joint_loss(pairs, batch["target_pairs"], logits, batch["target_adj"], alpha,
                      pair_mask=batch["pair_mask"], query_mask=batch["query_mask"])


def evaluate_loss(model, items, alpha=1.0, batch_size=30, dtype=torch.float32) -> dict:
    """Sample-weighted mean of the loss terms over encoded minimaps."""
    model.eval()
    tot = np.zeros(3)
    with torch.no_grad():
        for chunk in _batches(items, list(range(len(items))), batch_size):
            parts = _batch_loss(model, collate(chunk, dtype), alpha)
            tot += len(chunk) * np.array([float(p) for p in parts])
    tot /= max(len(items), 1)
    return {"loss": tot[0], "boundary": tot[1], "connectivity": tot[2]}


def train_model(train_set, model_config: ModelConfig, train_config: TrainConfig,
                val_set=None, dtype=torch.float32, progress=None) -> TrainResult:
    """Adam on the joint objective with a step learning-rate decay.

    The data order and the quarter-turn augmentation of every epoch are drawn
    from a generator seeded with ``train_config.seed``; with a fixed thread
    count two runs give identical parameters.
    """
    tc = train_config
    usable = [m for m in train_set if trainable(m, model_config)]
    skipped = len(train_set) - len(usable)
    if not usable:
        raise ValueError("no trainable minimaps in the training split")
    if skipped:
        log.info("skipping %d minimaps (query count out of range or no labeled centers)", skipped)
    val = [encode_minimap(m) for m in (val_set or []) if trainable(m, model_config)]
    items = [encode_minimap(m) for m in usable]

    torch.set_num_threads(tc.num_threads)
    torch.manual_seed(tc.seed)
    rng = np.random.default_rng(tc.seed)
    model = LMTNet(model_config).to(dtype)
    opt = torch.optim.Adam(model.parameters(), lr=tc.learning_rate)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=tc.lr_decay_epoch, gamma=tc.lr_decay_gamma)
    history = []
    step = 0
    for epoch in range(1, tc.epochs + 1):
        model.train()
        order = rng.permutation(len(items))
        turns = rng.integers(0, 4, size=len(items)) if tc.augment else np.zeros(len(items), dtype=int)
        sums, n_seen = np.zeros(3), 0
        lr = opt.param_groups[0]["lr"]
        for idx in _batches(list(range(len(items))), order, tc.batch_size):
            batch = collate([rotate_encoded(items[j], int(turns[j])) for j in idx], dtype)
            total, boundary, conn = _batch_loss(model, batch, tc.alpha)
            step += 1
            if not torch.isfinite(total):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, step {step}: boundary={boundary.item()}, "
                    f"connectivity={conn.item()}, lr={lr}")
            opt.zero_grad()
            total.backward()
            if tc.grad_clip is not None:
                torch.nn.utils.clip_grad_norm_(model.parameters(), tc.grad_clip)
            opt.step()
            sums += len(idx) * np.array([total.item(), boundary.item(), conn.item()])
            n_seen += len(idx)
        sched.step()
        row = {"epoch": epoch, "lr": lr, "train_loss": sums[0] / n_seen,
               "train_boundary": sums[1] / n_seen, "train_connectivity": sums[2] / n_seen}
        if val:
            v = evaluate_loss(model, val, tc.alpha, tc.batch_size, dtype)
            row.update(val_loss=v["loss"], val_boundary=v["boundary"], val_connectivity=v["connectivity"])
        history.append(row)
        if progress is not None:
            progress(row)
    model.eval()
    return TrainResult(model, history, skipped)


def predict_minimaps(model: LMTNet, minimaps, batch_size: int = 30):
    """Batched inference. Returns ``(pairs (Q, 4), logits (Q, Q))`` numpy
    arrays per minimap, or ``None`` where the query count is out of range."""
    from .data import encode_inputs

    cfg = model.config
    dtype = next(model.parameters()).dtype
    out = [None] * len(minimaps)
    ok = [i for i, m in enumerate(minimaps)
          if cfg.min_queries <= len(m.centers) <= cfg.max_queries and m.polylines]
    model.eval()
    with torch.no_grad():
        for i in range(0, len(ok), batch_size):
            idx = ok[i:i + batch_size]
            batch = collate([encode_inputs(minimaps[j].polylines, minimaps[j].centers) for j in idx], dtype)
            pairs, logits, _ = model(batch)
            for b, j in enumerate(idx):
                q = len(minimaps[j].centers)
                out[j] = (pairs[b, :q].double().numpy(), logits[b, :q, :q].double().numpy())
    return out


def infer_lane_graph(minimap: Minimap, model: LMTNet, threshold: float | None = None) -> LaneGraph:
    """One lane pair per query plus thresholded connectivity."""
    model.eval()
    with torch.no_grad():
        pairs, logits, _ = model.forward_minimap(minimap.polylines, minimap.centers)
    thr = model.config.connectivity_threshold if threshold is None else threshold
    p = pairs.double().numpy()
    return LaneGraph([LanePair(r[:2], r[2:]) for r in p], predict_adjacency(logits, thr))


def save_checkpoint(path, model: LMTNet, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"format_version": CHECKPOINT_VERSION, "model_config": model.config.to_dict(),
               "state_dict": model.state_dict(), "extra": extra or {}}
    tmp = path.with_name(path.name + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    return path


def load_checkpoint(path, expected_config: ModelConfig | None = None) -> LMTNet:
    """Rebuild a model from a checkpoint. A format version or configuration
    different from the expected one is rejected."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint {path} not found; run `lanegraph train` first")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(payload, dict) or payload.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format "
                              f"{payload.get('format_version') if isinstance(payload, dict) else None!r}")
    cfg = ModelConfig.from_dict(payload["model_config"])
    if expected_config is not None and cfg != expected_config:
        diff = {k: (v, expected_config.to_dict()[k]) for k, v in cfg.to_dict().items()
                if expected_config.to_dict()[k] != v}
        raise CheckpointError(f"{path}: model config mismatch (checkpoint, expected): {diff}")
    model = LMTNet(cfg)
    sd = payload["state_dict"]
    dtype = next(iter(sd.values())).dtype
    model.to(dtype)
    try:
        model.load_state_dict(sd)
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: parameters do not fit the stored config: {exc}") from exc
    model.eval()
    return model


__all__ = [
    "CHECKPOINT_VERSION", "CheckpointError", "TrainResult", "TrainingDiverged", "evaluate_loss",
    "infer_lane_graph", "load_checkpoint", "lr_at_epoch", "predict_minimaps", "save_checkpoint",
    "train_model", "trainable",
]
