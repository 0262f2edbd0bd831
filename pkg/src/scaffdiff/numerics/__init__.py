"""Float64 tensors with reverse-mode gradients, graph layers, Adam and RNG."""

from . import tensor as ops
from .layers import (
    EgnnLayerConfig,
    MlpSpec,
    cross_attention,
    egnn_layer,
    init_cross_attention,
    init_egnn_layer,
    init_mlp,
    mlp_forward,
    radius_edges,
)
from .optim import AdamConfig, AdamState, adam_step, global_norm
from .params import CheckpointError, ModelParams, load_checkpoint, save_checkpoint
from .rng import Rng, RngState, gaussian
from .tensor import ShapeError, Tensor, backward

__all__ = [
    "AdamConfig",
    "AdamState",
    "CheckpointError",
    "EgnnLayerConfig",
    "MlpSpec",
    "ModelParams",
    "Rng",
    "RngState",
    "ShapeError",
    "Tensor",
    "adam_step",
    "backward",
    "cross_attention",
    "egnn_layer",
    "gaussian",
    "global_norm",
    "init_cross_attention",
    "init_egnn_layer",
    "init_mlp",
    "load_checkpoint",
    "mlp_forward",
    "ops",
    "radius_edges",
    "save_checkpoint",
]
