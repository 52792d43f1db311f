"""Chromaticity computation and two-stream fusion input assembly.

The network always consumes two streams. Depending on the fusion mode the
streams carry raw RGB, a normalized depth plane, or the rg-chromaticity +
depth stack; the mode/tag combinations match the supported input matrix:

    na     (m, m)          single modality duplicated
    early  (rgD, rgD)      chromaticity + depth stacked, duplicated
    cross  (RGB, D)        color in one stream, depth in the other
    mixed  (RGB, rgD)      color plus the early-fused stack
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, MissingModality
from .geometry import DepthMap

DEFAULT_MAX_DEPTH = 100.0


class FusionMode(str, Enum):
    NA = "na"
    EARLY = "early"
    CROSS = "cross"
    MIXED = "mixed"

    @classmethod
    def parse(cls, value: "FusionMode | str") -> "FusionMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"unknown fusion mode {value!r}") from None

    @property
    def label(self) -> str:
        # Display name used in report tables.
        return "N/A" if self is FusionMode.NA else self.value.capitalize()


# Channel counts per modality tag.
TAG_CHANNELS = {"RGB": 3, "D_s": 1, "D_d": 1, "rgD_s": 3, "rgD_d": 3}


@dataclass
class FusionInput:
    """A two-stream network sample with per-stream modality tags."""

    input1: np.ndarray  # (H, W, C1) float32
    input2: np.ndarray  # (H, W, C2) float32
    mode: FusionMode
    tags: tuple[str, str]

    def __post_init__(self):
        self.mode = FusionMode.parse(self.mode)
        for i, (arr, tag) in enumerate(zip((self.input1, self.input2), self.tags), 1):
            if tag not in TAG_CHANNELS:
                raise ValueError(f"unknown modality tag {tag!r}")
            if arr.ndim != 3 or arr.shape[2] != TAG_CHANNELS[tag]:
                raise DimensionMismatch(
                    f"input{i} tagged {tag} needs {TAG_CHANNELS[tag]} channels, "
                    f"got shape {arr.shape}"
                )
        if self.input1.shape[:2] != self.input2.shape[:2]:
            raise DimensionMismatch(
                f"stream sizes differ: {self.input1.shape[:2]} vs {self.input2.shape[:2]}"
            )

    @property
    def height(self) -> int:
        return self.input1.shape[0]

    @property
    def width(self) -> int:
        return self.input1.shape[1]


def rg_chromaticity(image: np.ndarray) -> np.ndarray:
    """Intensity-normalized (r, g) planes of an RGB image.

    r = R / (R+G+B) and g = G / (R+G+B); pixels whose channel sum is zero
    map to (0, 0). The b coordinate is redundant because r + g + b = 1.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionMismatch(f"expected an RGB image, got shape {img.shape}")
    if np.any(img < 0):
        raise ValueError("channel values must be non-negative")
    total = img.sum(axis=2)
    out = np.zeros(img.shape[:2] + (2,), dtype=np.float64)
    np.divide(img[:, :, 0], total, out=out[:, :, 0], where=total > 0)
    np.divide(img[:, :, 1], total, out=out[:, :, 1], where=total > 0)
    return out


def normalize_depth(depth: DepthMap, max_depth: float = DEFAULT_MAX_DEPTH) -> np.ndarray:
    """Depth plane scaled to [0, 1] by max_depth; invalid pixels stay 0."""
    return np.clip(depth.values / max_depth, 0.0, 1.0)


def _rgd_stack(rgb: np.ndarray, depth: DepthMap, max_depth: float) -> np.ndarray:
    rg = rg_chromaticity(rgb)
    d = normalize_depth(depth, max_depth)
    return np.dstack([rg, d])


def assemble_fusion_input(
    mode: FusionMode | str,
    rgb: np.ndarray | None = None,
    depth: DepthMap | None = None,
    max_depth: float = DEFAULT_MAX_DEPTH,
) -> FusionInput:
    """Build the two input streams for a fusion mode.

    RGB planes are scaled to [0, 1]; the depth plane is divided by
    ``max_depth``. Mode ``na`` takes exactly one modality and duplicates
    it; the other modes need both.
    """
    mode = FusionMode.parse(mode)
    if rgb is not None:
        rgb = np.asarray(rgb)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise DimensionMismatch(f"expected an RGB image, got shape {rgb.shape}")
        if depth is not None and rgb.shape[:2] != depth.values.shape:
            raise DimensionMismatch(
                f"image is {rgb.shape[:2]}, depth map is {depth.values.shape}"
            )
    d_tag = None if depth is None else ("D_s" if depth.kind == "sparse" else "D_d")

    if mode is FusionMode.NA:
        if (rgb is None) == (depth is None):
            raise MissingModality("mode 'na' takes exactly one of rgb or depth")
        if rgb is not None:
            plane = (rgb.astype(np.float64) / 255.0).astype(np.float32)
            return FusionInput(plane, plane.copy(), mode, ("RGB", "RGB"))
        plane = normalize_depth(depth, max_depth)[:, :, None].astype(np.float32)
        return FusionInput(plane, plane.copy(), mode, (d_tag, d_tag))

    if rgb is None or depth is None:
        raise MissingModality(f"mode {mode.value!r} needs both rgb and depth")

    if mode is FusionMode.EARLY:
        stack = _rgd_stack(rgb, depth, max_depth).astype(np.float32)
        return FusionInput(stack, stack.copy(), mode, (f"rg{d_tag}",) * 2)

    color = (rgb.astype(np.float64) / 255.0).astype(np.float32)
    if mode is FusionMode.CROSS:
        plane = normalize_depth(depth, max_depth)[:, :, None].astype(np.float32)
        return FusionInput(color, plane, mode, ("RGB", d_tag))

    stack = _rgd_stack(rgb, depth, max_depth).astype(np.float32)
    return FusionInput(color, stack, mode, ("RGB", f"rg{d_tag}"))


# Mode specs extend the mode names with the modality choice for "na".
MODE_SPECS = ("na-rgb", "na-depth", "early", "cross", "mixed")


def assemble_from_spec(
    spec: str,
    rgb: np.ndarray | None = None,
    depth: DepthMap | None = None,
    max_depth: float = DEFAULT_MAX_DEPTH,
) -> FusionInput:
    """assemble_fusion_input keyed by a CLI-style mode spec string."""
    spec = spec.lower()
    if spec == "na-rgb":
        return assemble_fusion_input(FusionMode.NA, rgb=rgb)
    if spec == "na-depth":
        return assemble_fusion_input(FusionMode.NA, depth=depth, max_depth=max_depth)
    if spec not in MODE_SPECS:
        raise ValueError(f"unknown mode spec {spec!r}; expected one of {MODE_SPECS}")
    return assemble_fusion_input(spec, rgb=rgb, depth=depth, max_depth=max_depth)


# ---------------------------------------------------------------------------
# Sample container format: one JSON header line, then the two streams as
# little-endian float32 planes in stream order.


def write_sample(sample: FusionInput, path: str | Path) -> None:
    header = {
        "height": sample.height,
        "width": sample.width,
        "mode": sample.mode.value,
        "tags": list(sample.tags),
        "channels": [sample.input1.shape[2], sample.input2.shape[2]],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(sample.input1, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(sample.input2, dtype="<f4").tobytes())


def read_sample(path: str | Path) -> FusionInput:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        h, w = header["height"], header["width"]
        c1, c2 = header["channels"]
        buf1 = fh.read(h * w * c1 * 4)
        buf2 = fh.read(h * w * c2 * 4)
    input1 = np.frombuffer(buf1, dtype="<f4").reshape(h, w, c1)
    input2 = np.frombuffer(buf2, dtype="<f4").reshape(h, w, c2)
    return FusionInput(input1.copy(), input2.copy(), header["mode"], tuple(header["tags"]))
