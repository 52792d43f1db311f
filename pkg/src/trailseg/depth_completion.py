"""Sparse-to-dense depth completion via multi-scale morphological dilation.

The pipeline runs on an inverted copy of the depth map so that grayscale
dilation favors near surfaces: invert, dilate with a small diamond kernel,
close small holes, fill larger holes by dilation, extend to the full image,
smooth with a median and a Gaussian, and invert back. A relative-median
noise-removal pass runs first so stray LiDAR returns do not get smeared by
the dilations.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .errors import DepthOutOfRange, EmptyDepth
from .geometry import DepthMap

# Row band height for the windowed median; bounds peak memory on large frames.
_NOISE_BAND_ROWS = 128


@dataclass(frozen=True)
class CompletionParams:
    """Kernel sizes (pixels) and thresholds for the completion pipeline."""

    max_depth: float = 100.0
    small_kernel: int = 5
    large_kernel: int = 7
    hole_fill_kernel: int = 9
    median_kernel: int = 5
    blur_kernel: int = 5
    noise_median_kernel: int = 5
    noise_rel_threshold: float = 0.3

    def __post_init__(self):
        for f in fields(self):
            if f.name.endswith("_kernel"):
                k = getattr(self, f.name)
                if k < 1 or k % 2 == 0:
                    raise ValueError(f"{f.name} must be odd and >= 1, got {k}")
        if self.max_depth <= 0:
            raise ValueError("max_depth must be positive")
        if not 0 < self.noise_rel_threshold < 1:
            raise ValueError("noise_rel_threshold must lie in (0, 1)")

    @classmethod
    def from_json(cls, path: str | Path) -> "CompletionParams":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(**json.load(fh))

    def to_json(self, path: str | Path) -> None:
        obj = {f.name: getattr(self, f.name) for f in fields(self)}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2)
            fh.write("\n")


def diamond_footprint(size: int) -> np.ndarray:
    """Boolean diamond (L1 ball) footprint of the given odd size."""
    r = size // 2
    y, x = np.mgrid[-r : r + 1, -r : r + 1]
    return np.abs(y) + np.abs(x) <= r


def _neighbor_median(values: np.ndarray, valid: np.ndarray, size: int) -> np.ndarray:
    """Median over valid neighbors in a size x size window, center excluded.

    Returns NaN where the window holds no valid neighbor.
    """
    h, w = values.shape
    r = size // 2
    padded = np.full((h + 2 * r, w + 2 * r), np.nan)
    padded[r : r + h, r : r + w] = np.where(valid, values, np.nan)
    out = np.empty((h, w))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN windows
        for y0 in range(0, h, _NOISE_BAND_ROWS):
            y1 = min(y0 + _NOISE_BAND_ROWS, h)
            win = sliding_window_view(padded[y0 : y1 + 2 * r], (size, size)).copy()
            win[:, :, r, r] = np.nan
            out[y0:y1] = np.nanmedian(win, axis=(2, 3))
    return out


def remove_depth_noise(sparse: DepthMap, params: CompletionParams) -> DepthMap:
    """Invalidate pixels that deviate from their local valid-neighbor median.

    A pixel is dropped iff a valid neighbor median m exists and
    |d - m| / m exceeds ``noise_rel_threshold``. Isolated pixels with no
    valid neighbors are kept.
    """
    values = sparse.values
    valid = sparse.valid_mask
    median = _neighbor_median(values, valid, params.noise_median_kernel)
    has_median = np.isfinite(median) & valid
    deviation = np.zeros_like(values)
    np.divide(np.abs(values - median), median, out=deviation, where=has_median)
    keep = ~(has_median & (deviation > params.noise_rel_threshold))
    return DepthMap(np.where(keep, values, 0.0), "sparse")


def complete_depth(
    sparse: DepthMap,
    params: CompletionParams | None = None,
    trace: list | None = None,
) -> DepthMap:
    """Densify a sparse depth map; every output pixel is a positive depth.

    All produced values stay within the [min, max] range of the surviving
    input pixels. Pass ``trace`` (a list) to record (stage, valid-pixel
    count) tuples as the pipeline runs.
    """
    params = params or CompletionParams()
    values = sparse.values
    if np.any(values > params.max_depth):
        raise DepthOutOfRange(
            f"input contains depth {values.max():.3f} m > max_depth {params.max_depth} m"
        )
    cleaned = remove_depth_noise(sparse, params)
    valid = cleaned.valid_mask
    if not valid.any():
        raise EmptyDepth("no valid pixel survives noise removal")

    def record(stage: str, arr: np.ndarray) -> None:
        if trace is not None:
            trace.append((stage, int(np.count_nonzero(arr > 0))))

    # Work on inverted depth: dilation then prefers the nearest surface.
    inversion = params.max_depth + 1.0
    inv = np.where(valid, inversion - cleaned.values, 0.0)
    record("invert", inv)

    inv = ndimage.grey_dilation(inv, footprint=diamond_footprint(params.small_kernel))
    record("dilate", inv)

    inv = ndimage.grey_closing(inv, footprint=np.ones((params.large_kernel,) * 2, bool))
    record("close", inv)

    hole_fp = np.ones((params.hole_fill_kernel,) * 2, bool)
    dilated = ndimage.grey_dilation(inv, footprint=hole_fp)
    inv = np.where(inv > 0, inv, dilated)
    record("fill", inv)

    empty = inv == 0
    if empty.any():
        # Extend to the full image: each remaining hole takes its nearest
        # valid value (ties resolved deterministically by the transform).
        _, (iy, ix) = ndimage.distance_transform_edt(empty, return_indices=True)
        inv = inv[iy, ix]
    record("extend", inv)

    inv = ndimage.median_filter(inv, size=params.median_kernel, mode="reflect")
    record("median", inv)

    inv = ndimage.gaussian_filter(
        inv,
        sigma=params.blur_kernel / 6.0,
        radius=params.blur_kernel // 2,
        mode="reflect",
    )
    record("blur", inv)

    dense = inversion - inv
    # Reflected-border filtering can nudge values past the envelope by a few
    # ulps; clamp back to the surviving input range.
    src = cleaned.values[valid]
    dense = np.clip(dense, src.min(), src.max())
    record("reinvert", dense)
    return DepthMap(dense, "dense")
