"""Multimodal traversability segmentation toolkit.

LiDAR-to-camera projection, sparse depth completion, chromaticity fusion,
a dynamic multiscale fusion network with a hand-written backward pass,
illumination-binned evaluation, dataset sync/split tooling, and a
superpixel annotation service.
"""

__version__ = "0.1.0"

from .depth_completion import CompletionParams, complete_depth, remove_depth_noise
from .errors import ToolkitError
from .fusion import FusionInput, FusionMode, assemble_fusion_input, rg_chromaticity
from .geometry import (
    CameraModel,
    DepthMap,
    ExtrinsicCalibration,
    PointCloud,
    project_to_sparse_depth,
    transform_points,
)
from .metrics import ConfusionCounts, bin_by_lux, compute_metrics, confusion, evaluate
from .network import (
    DcmConfig,
    NetworkWeights,
    TrainConfig,
    dcm_forward,
    init_weights,
    loss_and_gradients,
    multiscale_fuse,
    network_forward,
    predict_mask,
    train,
)
from .slic import SuperpixelMap, labels_to_mask, slic_superpixels

__all__ = [
    "CameraModel",
    "CompletionParams",
    "ConfusionCounts",
    "DcmConfig",
    "DepthMap",
    "ExtrinsicCalibration",
    "FusionInput",
    "FusionMode",
    "NetworkWeights",
    "PointCloud",
    "SuperpixelMap",
    "ToolkitError",
    "TrainConfig",
    "__version__",
    "assemble_fusion_input",
    "bin_by_lux",
    "complete_depth",
    "compute_metrics",
    "confusion",
    "dcm_forward",
    "evaluate",
    "init_weights",
    "labels_to_mask",
    "loss_and_gradients",
    "multiscale_fuse",
    "network_forward",
    "predict_mask",
    "project_to_sparse_depth",
    "remove_depth_noise",
    "rg_chromaticity",
    "slic_superpixels",
    "train",
    "transform_points",
]
