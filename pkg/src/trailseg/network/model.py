"""Dynamic multiscale fusion network: config, weights, forward and backward.

Topology: per-modality 1x1 stems map each input stream to a common channel
width, a shared conv backbone (two stride-2 blocks, then dilated blocks)
produces F1 and F2, parallel dynamic-convolution modules fuse them at one
site, and a small decoder upsamples back to input resolution as 1-channel
logits.

Each dynamic module at scale k computes

    O_k = conv1x1( f_k(F1) (*) g_k(F2) )

where f_k is a 1x1 conv to the reduced width, g_k is a 1x1 conv applied to
the k x k adaptive average pool of F2 (yielding a per-sample k x k filter
bank), and (*) is depthwise cross-correlation of f_k(F1) with that bank.
The module outputs are concatenated over scales and merged by a 1x1 conv.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DimensionMismatch, MissingModality, ShapeMismatch
from ..fusion import TAG_CHANNELS, FusionInput
from . import layers as L

WEIGHTS_MANIFEST = "manifest.json"
WEIGHTS_BLOB = "weights.bin"


@dataclass
class DcmConfig:
    """Architecture hyperparameters.

    scales: odd dynamic-filter sizes, one parallel module per entry.
    reduced_channels: width inside each module (must stay below
    backbone_channels). stem_channels maps modality tag -> input channels;
    every listed tag gets its own stem so one weight set serves any mode.
    """

    scales: tuple[int, ...] = (1, 3, 5)
    reduced_channels: int = 8
    backbone_channels: int = 32
    backbone_depth: int = 4
    stem_channels: dict[str, int] = field(default_factory=lambda: dict(TAG_CHANNELS))

    def __post_init__(self):
        scales = tuple(sorted(set(int(k) for k in self.scales)))
        if not scales:
            raise ValueError("at least one scale is required")
        for k in scales:
            if k < 1 or k % 2 == 0:
                raise ValueError(f"scales must be odd and >= 1, got {k}")
        self.scales = scales
        if self.reduced_channels < 1 or self.backbone_channels < 1:
            raise ValueError("channel counts must be positive")
        if not self.reduced_channels < self.backbone_channels:
            raise ValueError(
                f"reduced_channels {self.reduced_channels} must be < "
                f"backbone_channels {self.backbone_channels}"
            )
        if self.backbone_depth < 1:
            raise ValueError("backbone_depth must be >= 1")
        if not self.stem_channels:
            raise ValueError("stem_channels must name at least one modality")
        for tag, c in self.stem_channels.items():
            if c < 1:
                raise ValueError(f"stem {tag!r} has non-positive channels {c}")

    def to_dict(self) -> dict:
        return {
            "scales": list(self.scales),
            "reduced_channels": self.reduced_channels,
            "backbone_channels": self.backbone_channels,
            "backbone_depth": self.backbone_depth,
            "stem_channels": dict(self.stem_channels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DcmConfig":
        kwargs = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if "scales" in kwargs:
            kwargs["scales"] = tuple(kwargs["scales"])
        return cls(**kwargs)


@dataclass
class NetworkWeights:
    """Named parameter tensors plus the config they were built for."""

    params: dict[str, np.ndarray]
    config: DcmConfig
    mode: str | None = None

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def copy(self) -> "NetworkWeights":
        return NetworkWeights(
            {k: v.copy() for k, v in self.params.items()}, self.config, self.mode
        )


def _backbone_plan(config: DcmConfig) -> list[tuple[int, int]]:
    """(stride, dilation) per block: two stride-2 blocks, then dilation 2."""
    plan = []
    for i in range(config.backbone_depth):
        plan.append((2, 1) if i < 2 else (1, 2))
    return plan


def parameter_names(config: DcmConfig) -> list[str]:
    """Canonical tensor order; serialization and init both follow it."""
    names = []
    for tag in sorted(config.stem_channels):
        names += [f"stem/{tag}/w", f"stem/{tag}/b"]
    for i in range(config.backbone_depth):
        names += [f"backbone/{i}/w", f"backbone/{i}/b"]
    for k in config.scales:
        for part in ("f", "g", "post"):
            names += [f"dcm/{k}/{part}/w", f"dcm/{k}/{part}/b"]
    names += ["merge/w", "merge/b", "decoder/w", "decoder/b", "head/w", "head/b"]
    return names


def _shape_table(config: DcmConfig) -> dict[str, tuple[int, ...]]:
    c, cr = config.backbone_channels, config.reduced_channels
    shapes: dict[str, tuple[int, ...]] = {}
    for tag, cin in sorted(config.stem_channels.items()):
        shapes[f"stem/{tag}/w"] = (1, 1, cin, c)
        shapes[f"stem/{tag}/b"] = (c,)
    for i in range(config.backbone_depth):
        shapes[f"backbone/{i}/w"] = (3, 3, c, c)
        shapes[f"backbone/{i}/b"] = (c,)
    for k in config.scales:
        shapes[f"dcm/{k}/f/w"] = (1, 1, c, cr)
        shapes[f"dcm/{k}/f/b"] = (cr,)
        shapes[f"dcm/{k}/g/w"] = (1, 1, c, cr)
        shapes[f"dcm/{k}/g/b"] = (cr,)
        shapes[f"dcm/{k}/post/w"] = (1, 1, cr, cr)
        shapes[f"dcm/{k}/post/b"] = (cr,)
    shapes["merge/w"] = (1, 1, len(config.scales) * cr, c)
    shapes["merge/b"] = (c,)
    shapes["decoder/w"] = (3, 3, c, c)
    shapes["decoder/b"] = (c,)
    shapes["head/w"] = (1, 1, c, 1)
    shapes["head/b"] = (1,)
    return shapes


def init_weights(
    config: DcmConfig | None = None,
    seed: int = 0,
    dtype=np.float32,
    mode: str | None = None,
) -> NetworkWeights:
    """He fan-in initialization from a seeded generator; biases zero."""
    config = config or DcmConfig()
    rng = np.random.default_rng(seed)
    shapes = _shape_table(config)
    params: dict[str, np.ndarray] = {}
    for name in parameter_names(config):
        shape = shapes[name]
        if name.endswith("/b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = shape[0] * shape[1] * shape[2]
            std = math.sqrt(2.0 / fan_in)
            params[name] = (rng.standard_normal(shape) * std).astype(dtype)
    return NetworkWeights(params, config, mode)


# ---------------------------------------------------------------------------
# Forward / backward over batched NHWC arrays. Public single-sample ops wrap
# these with a leading batch axis of 1.


def _run_backbone(x, params, config):
    caches = []
    for i, (stride, dilation) in enumerate(_backbone_plan(config)):
        x, c_conv = L.conv2d_forward(
            x, params[f"backbone/{i}/w"], params[f"backbone/{i}/b"],
            stride=stride, dilation=dilation, padding=dilation,
        )
        x, neg = L.elu_forward(x)
        caches.append((c_conv, neg))
    return x, caches


def _backbone_backward(dx, caches, config, grads):
    for i in reversed(range(config.backbone_depth)):
        c_conv, neg = caches[i]
        dx = L.elu_backward(dx, neg)
        dx, dw, db = L.conv2d_backward(dx, c_conv)
        grads[f"backbone/{i}/w"] += dw
        grads[f"backbone/{i}/b"] += db
    return dx


def _dcm_block_forward(f1, f2, k, params):
    p = lambda part, t: params[f"dcm/{k}/{part}/{t}"]
    a, c_f = L.conv2d_forward(f1, p("f", "w"), p("f", "b"))
    pooled, c_pool = L.adaptive_avg_pool_forward(f2, k)
    filters, c_g = L.conv2d_forward(pooled, p("g", "w"), p("g", "b"))
    dyn, c_dw = L.dynamic_depthwise_forward(a, filters)
    out, c_post = L.conv2d_forward(dyn, p("post", "w"), p("post", "b"))
    return out, (k, c_f, c_pool, c_g, c_dw, c_post)


def _dcm_block_backward(dout, cache, grads):
    k, c_f, c_pool, c_g, c_dw, c_post = cache
    ddyn, dw, db = L.conv2d_backward(dout, c_post)
    grads[f"dcm/{k}/post/w"] += dw
    grads[f"dcm/{k}/post/b"] += db
    da, dfilters = L.dynamic_depthwise_backward(ddyn, c_dw)
    dpooled, dw, db = L.conv2d_backward(dfilters, c_g)
    grads[f"dcm/{k}/g/w"] += dw
    grads[f"dcm/{k}/g/b"] += db
    df2 = L.adaptive_avg_pool_backward(dpooled, c_pool)
    df1, dw, db = L.conv2d_backward(da, c_f)
    grads[f"dcm/{k}/f/w"] += dw
    grads[f"dcm/{k}/f/b"] += db
    return df1, df2


def _fuse_forward(f1, f2, params, config):
    outs, caches = [], []
    for k in config.scales:
        out, cache = _dcm_block_forward(f1, f2, k, params)
        outs.append(out)
        caches.append(cache)
    concat = np.concatenate(outs, axis=-1)
    merged, c_merge = L.conv2d_forward(concat, params["merge/w"], params["merge/b"])
    return merged, (caches, c_merge, config.reduced_channels)


def _fuse_backward(dout, cache, grads):
    caches, c_merge, cr = cache
    dconcat, dw, db = L.conv2d_backward(dout, c_merge)
    grads["merge/w"] += dw
    grads["merge/b"] += db
    df1 = None
    df2 = None
    for i, block_cache in enumerate(caches):
        d1, d2 = _dcm_block_backward(dconcat[..., i * cr : (i + 1) * cr], block_cache, grads)
        df1 = d1 if df1 is None else df1 + d1
        df2 = d2 if df2 is None else df2 + d2
    return df1, df2


def _forward_batch(x1, x2, tags, weights: NetworkWeights):
    """Batched forward pass; returns (logits, tape) with tape for backward."""
    params, config = weights.params, weights.config
    t1, t2 = tags
    for t in (t1, t2):
        if f"stem/{t}/w" not in params:
            raise MissingModality(f"weights carry no stem for modality {t!r}")
    if x1.shape[:3] != x2.shape[:3]:
        raise ShapeMismatch(f"stream shapes differ: {x1.shape} vs {x2.shape}")
    s1, c_stem1 = L.conv2d_forward(x1, params[f"stem/{t1}/w"], params[f"stem/{t1}/b"])
    s2, c_stem2 = L.conv2d_forward(x2, params[f"stem/{t2}/w"], params[f"stem/{t2}/b"])
    f1, bb1 = _run_backbone(s1, params, config)
    f2, bb2 = _run_backbone(s2, params, config)
    fused, c_fuse = _fuse_forward(f1, f2, params, config)
    act0, neg0 = L.elu_forward(fused)
    dec, c_dec = L.conv2d_forward(act0, params["decoder/w"], params["decoder/b"], padding=1)
    act1, neg1 = L.elu_forward(dec)
    up, c_up = L.bilinear_resize_forward(act1, x1.shape[1], x1.shape[2])
    logits, c_head = L.conv2d_forward(up, params["head/w"], params["head/b"])
    tape = {
        "tags": (t1, t2),
        "stem": (c_stem1, c_stem2),
        "backbone": (bb1, bb2),
        "fuse": c_fuse,
        "decoder": (neg0, c_dec, neg1, c_up, c_head),
    }
    return logits, tape


def _backward_batch(dlogits, tape, weights: NetworkWeights):
    """Gradients for every parameter given d(loss)/d(logits)."""
    config = weights.config
    grads = {name: np.zeros_like(p) for name, p in weights.params.items()}
    neg0, c_dec, neg1, c_up, c_head = tape["decoder"]
    dz, dw, db = L.conv2d_backward(dlogits, c_head)
    grads["head/w"] += dw
    grads["head/b"] += db
    dz = L.bilinear_resize_backward(dz, c_up)
    dz = L.elu_backward(dz, neg1)
    dz, dw, db = L.conv2d_backward(dz, c_dec)
    grads["decoder/w"] += dw
    grads["decoder/b"] += db
    dz = L.elu_backward(dz, neg0)
    df1, df2 = _fuse_backward(dz, tape["fuse"], grads)
    bb1, bb2 = tape["backbone"]
    ds1 = _backbone_backward(df1, bb1, config, grads)
    ds2 = _backbone_backward(df2, bb2, config, grads)
    t1, t2 = tape["tags"]
    c_stem1, c_stem2 = tape["stem"]
    _, dw, db = L.conv2d_backward(ds1, c_stem1)
    grads[f"stem/{t1}/w"] += dw
    grads[f"stem/{t1}/b"] += db
    _, dw, db = L.conv2d_backward(ds2, c_stem2)
    grads[f"stem/{t2}/w"] += dw
    grads[f"stem/{t2}/b"] += db
    return grads


def _as_feature_batch(f, name):
    f = np.asarray(f)
    if f.ndim != 3:
        raise DimensionMismatch(f"{name} must be h x w x c, got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name} contains non-finite values")
    return f[None]


def adaptive_avg_pool(feature: np.ndarray, k: int) -> np.ndarray:
    """k x k adaptive average pool of a single h x w x c feature map."""
    out, _ = L.adaptive_avg_pool_forward(_as_feature_batch(feature, "feature"), k)
    return out[0]


def dcm_forward(f1: np.ndarray, f2: np.ndarray, k: int, weights: NetworkWeights) -> np.ndarray:
    """One dynamic-convolution module at scale k on h x w x c features."""
    b1 = _as_feature_batch(f1, "F1")
    b2 = _as_feature_batch(f2, "F2")
    if b1.shape != b2.shape:
        raise DimensionMismatch(f"F1 {f1.shape} and F2 {f2.shape} must match")
    out, _ = _dcm_block_forward(b1, b2, k, weights.params)
    return out[0]


def multiscale_fuse(
    f1: np.ndarray, f2: np.ndarray, config: DcmConfig, weights: NetworkWeights
) -> np.ndarray:
    """Concatenate all scale outputs and merge back to backbone width."""
    b1 = _as_feature_batch(f1, "F1")
    b2 = _as_feature_batch(f2, "F2")
    if b1.shape != b2.shape:
        raise DimensionMismatch(f"F1 {f1.shape} and F2 {f2.shape} must match")
    out, _ = _fuse_forward(b1, b2, weights.params, config)
    return out[0]


def network_forward(sample: FusionInput, weights: NetworkWeights) -> np.ndarray:
    """Full forward pass on one sample; returns H x W x 1 logits."""
    dtype = weights.dtype
    x1 = sample.input1[None].astype(dtype, copy=False)
    x2 = sample.input2[None].astype(dtype, copy=False)
    logits, _ = _forward_batch(x1, x2, sample.tags, weights)
    return logits[0]


# ---------------------------------------------------------------------------
# Weights directory: manifest.json (tensor table + config) and weights.bin
# holding little-endian float32 data concatenated in manifest order.


def save_weights(weights: NetworkWeights, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tensors = {}
    offset = 0
    blob_tmp = out_dir / (WEIGHTS_BLOB + ".tmp")
    with open(blob_tmp, "wb") as fh:
        for name, arr in weights.params.items():
            data = np.ascontiguousarray(arr, dtype="<f4")
            tensors[name] = {
                "shape": list(arr.shape),
                "dtype": "float32",
                "offset": offset,
            }
            fh.write(data.tobytes())
            offset += data.nbytes
    os.replace(blob_tmp, out_dir / WEIGHTS_BLOB)
    manifest = {
        "tensors": tensors,
        "config": weights.config.to_dict(),
        "mode": weights.mode,
    }
    with open(out_dir / WEIGHTS_MANIFEST, "w") as fh:
        json.dump(manifest, fh, indent=2)


def load_weights(weights_dir: str | Path, dtype=np.float32) -> NetworkWeights:
    weights_dir = Path(weights_dir)
    with open(weights_dir / WEIGHTS_MANIFEST) as fh:
        manifest = json.load(fh)
    blob = (weights_dir / WEIGHTS_BLOB).read_bytes()
    params: dict[str, np.ndarray] = {}
    for name, meta in manifest["tensors"].items():
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=meta["offset"])
        params[name] = arr.reshape(shape).astype(dtype)
    config = DcmConfig.from_dict(manifest["config"])
    return NetworkWeights(params, config, manifest.get("mode"))
