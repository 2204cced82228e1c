"""Architecture and optimization settings."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, fields, replace


class EncoderSharing(str, enum.Enum):
    SHARED = "shared"
    TYPE_SPECIFIC = "type_specific"


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 256
    polyline_mhsa_heads: int = 2
    transformer_heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 4
    ffn_dim: int = 128
    pair_head_dims: tuple = (256, 32, 16)  # input sizes of the three linear layers
    conn_head_dims: tuple = (512, 256)
    encoder_sharing: EncoderSharing = EncoderSharing.TYPE_SPECIFIC
    connectivity_threshold: float = 0.8
    dropout: float = 0.0
    # predict boundary points as offsets from the query position
    pair_residual: bool = True
    # multiplies every coordinate entering the network; 1.0 keeps meters
    coord_scale: float = 1.0
    min_queries: int = 2
    max_queries: int = 50

    def __post_init__(self):
        object.__setattr__(self, "encoder_sharing", EncoderSharing(self.encoder_sharing))
        object.__setattr__(self, "pair_head_dims", tuple(int(v) for v in self.pair_head_dims))
        object.__setattr__(self, "conn_head_dims", tuple(int(v) for v in self.conn_head_dims))
        for name in ("polyline_mhsa_heads", "transformer_heads"):
            if self.embed_dim % getattr(self, name):
                raise ValueError(f"embed_dim {self.embed_dim} not divisible by {name}={getattr(self, name)}")
        if not 0.0 < self.connectivity_threshold < 1.0:
            raise ValueError("connectivity_threshold must lie in (0, 1)")
        if self.pair_head_dims[0] != self.embed_dim:
            raise ValueError("pair head input size must equal embed_dim")
        if self.conn_head_dims[0] != 2 * self.embed_dim:
            raise ValueError("connectivity head input size must equal 2 * embed_dim")
        if min(self.encoder_layers, self.decoder_layers) < 1:
            raise ValueError("need at least one encoder and one decoder layer")
        if self.coord_scale <= 0:
            raise ValueError("coord_scale must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_sharing"] = self.encoder_sharing.value
        d["pair_head_dims"] = list(self.pair_head_dims)
        d["conn_head_dims"] = list(self.conn_head_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown ModelConfig keys: {sorted(unknown)}")
        return cls(**d)

    def with_embed(self, embed_dim: int, ffn_dim: int) -> "ModelConfig":
        return replace(self, embed_dim=embed_dim, ffn_dim=ffn_dim,
                       pair_head_dims=(embed_dim,) + tuple(self.pair_head_dims[1:]),
                       conn_head_dims=(2 * embed_dim,) + tuple(self.conn_head_dims[1:]))


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 30
    learning_rate: float = 1e-4
    lr_decay_gamma: float = 0.1
    lr_decay_epoch: int = 30
    epochs: int = 60
    alpha: float = 1.0
    seed: int = 0
    augment: bool = True
    num_threads: int = 1
    # max global gradient norm per step; None disables clipping
    grad_clip: float | None = 1.0

    def __post_init__(self):
        for name in ("batch_size", "learning_rate", "lr_decay_gamma", "lr_decay_epoch", "epochs", "alpha"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive or None")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**d)


def paper_config(**overrides) -> ModelConfig:
    return replace(ModelConfig(), **overrides)


def toy_config(**overrides) -> ModelConfig:
    """Small profile for CPU runs: embed 64, feed-forward 32."""
    return replace(ModelConfig().with_embed(64, 32), **overrides)


def ablation_configs(base: ModelConfig | None = None) -> list:
    """The five rows of the encoder-sharing / decoder-depth ablation."""
    base = base or ModelConfig()
    rows = [(EncoderSharing.SHARED, 4)] + [(EncoderSharing.TYPE_SPECIFIC, k) for k in (1, 2, 4, 6)]
    return [(f"{s.value}/{k}", replace(base, encoder_sharing=s, decoder_layers=k)) for s, k in rows]
