"""LMT-Net: polyline encoders, transformer encoder-decoder and prediction heads."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from ..geometry import Polyline, PolylineKind
from .config import EncoderSharing, ModelConfig

FEATURE_DIM = 6
KIND_INDEX = {PolylineKind.TRACE: 0, PolylineKind.BOUNDARY: 1}
# logits are kept inside [-LOGIT_CLAMP, LOGIT_CLAMP]; the diagonal is pinned to the lower end
LOGIT_CLAMP = 100.0


class QueryCountError(ValueError):
    pass


def build_point_features(p: Polyline) -> np.ndarray:
    """Segment rows ``[x_i, y_i, x_i+1, y_i+1, is_trace, is_boundary]``."""
    pts = np.asarray(p.points, dtype=float)
    if len(pts) < 2:
        raise ValueError("a polyline needs at least two points")
    onehot = np.zeros(2)
    onehot[KIND_INDEX[PolylineKind(p.kind)]] = 1.0
    rows = np.concatenate([pts[:-1], pts[1:], np.broadcast_to(onehot, (len(pts) - 1, 2))], axis=1)
    return rows


def mlp(dims, out_dim) -> nn.Sequential:
    """Linear layers with the given input sizes, ReLU in between."""
    layers = []
    for a, b in zip(dims, list(dims[1:]) + [out_dim]):
        layers += [nn.Linear(a, b), nn.ReLU()]
    return nn.Sequential(*layers[:-1])


class PolylineEncoder(nn.Module):
    """Point-wise linear, self-attention over the points, max-pool."""

    def __init__(self, embed_dim: int, heads: int, dropout: float = 0.0):
        super().__init__()
        self.proj = nn.Linear(FEATURE_DIM, embed_dim)
        self.mhsa = nn.MultiheadAttention(embed_dim, heads, dropout=dropout, batch_first=True)

    def forward(self, feats: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        # feats: (N, S, 6); mask: (N, S), True on real rows
        h = self.proj(feats)
        pad = None if mask is None else ~mask
        h, _ = self.mhsa(h, h, h, key_padding_mask=pad, need_weights=False)
        if mask is not None:
            h = h.masked_fill(pad[..., None], float("-inf"))
        return h.max(dim=1).values


class LMTNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.embed_dim
        n_enc = 1 if config.encoder_sharing is EncoderSharing.SHARED else 2
        self.polyline_encoders = nn.ModuleList(
            PolylineEncoder(d, config.polyline_mhsa_heads, config.dropout) for _ in range(n_enc))
        self.center_encoder = nn.Linear(2, d)
        enc_layer = nn.TransformerEncoderLayer(d, config.transformer_heads, config.ffn_dim,
                                               config.dropout, batch_first=True)
        self.encoder = nn.TransformerEncoder(enc_layer, config.encoder_layers, enable_nested_tensor=False)
        dec_layer = nn.TransformerDecoderLayer(d, config.transformer_heads, config.ffn_dim,
                                               config.dropout, batch_first=True)
        self.decoder = nn.TransformerDecoder(dec_layer, config.decoder_layers)
        self.pair_head = mlp(config.pair_head_dims, 4)
        self.conn_head = mlp(config.conn_head_dims, 1)

    # -- pieces -------------------------------------------------------------

    def encode_polylines(self, feats, seg_mask, kinds) -> torch.Tensor:
        """(N, S, 6) segment features of N polylines -> (N, d)."""
        feats = feats.clone()
        feats[..., :4] = feats[..., :4] * self.config.coord_scale
        if len(self.polyline_encoders) == 1:
            return self.polyline_encoders[0](feats, seg_mask)
        out = feats.new_zeros(feats.shape[0], self.config.embed_dim)
        for k, enc in enumerate(self.polyline_encoders):
            sel = kinds == k
            if bool(sel.any()):
                out[sel] = enc(feats[sel], seg_mask[sel])
        return out

    def encode_centers(self, centers: torch.Tensor) -> torch.Tensor:
        return self.center_encoder(centers * self.config.coord_scale)

    def connectivity_logits(self, tokens: torch.Tensor) -> torch.Tensor:
        B, Q, d = tokens.shape
        pair = torch.cat([tokens[:, :, None, :].expand(B, Q, Q, d),
                          tokens[:, None, :, :].expand(B, Q, Q, d)], dim=-1)
        logits = self.conn_head(pair).squeeze(-1).clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
        eye = torch.eye(Q, dtype=torch.bool, device=tokens.device)
        return logits.masked_fill(eye, -LOGIT_CLAMP)

    # -- forward ------------------------------------------------------------

    def forward(self, batch: dict):
        """Run a collated batch (see ``data.collate``).

        Returns ``(pairs (B, Q, 4), logits (B, Q, Q), tokens (B, Q, d))``.
        """
        poly = self.encode_polylines(batch["seg_feats"], batch["seg_mask"], batch["poly_kind"])
        B, P = batch["poly_mask"].shape
        memory = poly.new_zeros(B, P, self.config.embed_dim)
        memory[batch["poly_batch"], batch["poly_slot"]] = poly
        mem_pad = ~batch["poly_mask"]
        memory = self.encoder(memory, src_key_padding_mask=mem_pad)
        centers = batch["centers"]
        q_pad = ~batch["query_mask"]
        queries = self.encode_centers(centers)
        tokens = self.decoder(queries, memory, tgt_key_padding_mask=q_pad, memory_key_padding_mask=mem_pad)
        raw = self.pair_head(tokens) / self.config.coord_scale
        pairs = raw + centers.repeat(1, 1, 2) if self.config.pair_residual else raw
        return pairs, self.connectivity_logits(tokens), tokens

    def forward_minimap(self, polylines, centers):
        """Single minimap: returns ``(pairs (Q, 4), logits (Q, Q), tokens (Q, d))``."""
        from .data import collate, encode_inputs

        q = len(centers)
        if not self.config.min_queries <= q <= self.config.max_queries:
            raise QueryCountError(
                f"{q} center points; the model accepts {self.config.min_queries}..{self.config.max_queries}")
        if not polylines:
            raise ValueError("at least one polyline is required")
        dtype = next(self.parameters()).dtype
        batch = collate([encode_inputs(polylines, centers)], dtype=dtype)
        pairs, logits, tokens = self(batch)
        return pairs[0], logits[0], tokens[0]


def count_parameters(config_or_model) -> int:
    model = config_or_model if isinstance(config_or_model, nn.Module) else LMTNet(config_or_model)
    return int(sum(p.numel() for p in model.parameters() if p.requires_grad))
