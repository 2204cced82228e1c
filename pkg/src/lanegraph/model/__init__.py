"""Transformer lane-graph model: configuration, network, loss and training."""

from .config import EncoderSharing, ModelConfig, TrainConfig, ablation_configs, paper_config, toy_config
from .data import augment_rotate, collate, encode_inputs, encode_minimap
from .losses import LossError, joint_loss, predict_adjacency
from .network import LMTNet, QueryCountError, build_point_features, count_parameters
from .train import (
    CheckpointError,
    TrainingDiverged,
    infer_lane_graph,
    load_checkpoint,
    lr_at_epoch,
    predict_minimaps,
    save_checkpoint,
    train_model,
)
