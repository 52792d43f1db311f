from .model import (
    DcmConfig,
    NetworkWeights,
    adaptive_avg_pool,
    dcm_forward,
    init_weights,
    load_weights,
    multiscale_fuse,
    network_forward,
    save_weights,
)
from .train import TrainConfig, TrainResult, loss_and_gradients, predict_mask, train

__all__ = [
    "DcmConfig",
    "NetworkWeights",
    "TrainConfig",
    "TrainResult",
    "adaptive_avg_pool",
    "dcm_forward",
    "init_weights",
    "load_weights",
    "loss_and_gradients",
    "multiscale_fuse",
    "network_forward",
    "predict_mask",
    "save_weights",
    "train",
]
