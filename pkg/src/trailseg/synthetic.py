"""Synthetic band-scene corpus for end-to-end runs without field data.

Each scene is a small square image crossed by a random band. Pixels inside
the band look traversable on both modalities at once: depth is shallow and
smooth, color is green-shifted. Outside, depth is deep and rough, color is
a brightness-matched brown, so chromaticity separates the classes while
total intensity does not. A low-light variant divides the color signal by
10 *before* sensor noise, drowning chromaticity but leaving depth intact
— RGB-only models should degrade there while fused ones should not.

Scenes can stay in memory (for training/eval runs) or be materialized as
an on-disk sequence: images, point clouds back-projected so that camera
projection reproduces the sparse depth exactly, 16-bit depth PNGs, masks,
lux log, calibration, and a manifest with split tags.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .dataset import FrameRecord, split_dataset, write_manifest, write_mask_png
from .depth_completion import CompletionParams, complete_depth
from .fusion import assemble_from_spec
from .geometry import (
    CameraModel,
    DepthMap,
    ExtrinsicCalibration,
    PointCloud,
    save_calibration,
    write_depth_png,
    write_image,
    write_point_cloud,
)

INSIDE_COLOR = (60.0, 110.0, 45.0)  # green-shifted, sum 215
OUTSIDE_COLOR = (100.0, 75.0, 40.0)  # brown, sum 215 (no brightness cue)
COLOR_NOISE = 10.0
DEPTH_NOISE = 0.1
LOW_LIGHT_ATTENUATION = 10.0
# Scenes top out around 18 m, so normalizing by 20 m (not the field-scale
# 100 m) keeps the depth plane in a numerically useful range.
SYNTHETIC_MAX_DEPTH = 20.0
# Completion kernels shrunk to match the tiny frames: the field-scale
# defaults would dilate the near band several pixels past its true edge.
SYNTHETIC_COMPLETION = CompletionParams(
    max_depth=SYNTHETIC_MAX_DEPTH,
    small_kernel=3,
    large_kernel=3,
    hole_fill_kernel=3,
    median_kernel=3,
    blur_kernel=3,
    noise_median_kernel=3,
)


@dataclass
class Scene:
    rgb: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) true dense depth, meters
    sparse: DepthMap  # LiDAR-like subsampling of depth
    mask: np.ndarray  # (H, W) bool, True = traversable
    lux: float


def _smooth_field(rng: np.random.Generator, size: int, cells: int = 4) -> np.ndarray:
    """Low-frequency [0,1] field: bilinear zoom of a coarse random grid."""
    grid = rng.random((cells, cells))
    return ndimage.zoom(grid, size / cells, order=1, mode="nearest")


def _band_mask(rng: np.random.Generator, size: int) -> np.ndarray:
    theta = rng.uniform(0, np.pi)
    offset = rng.uniform(-size / 6, size / 6)
    half_width = rng.uniform(size * 0.20, size * 0.30)
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2
    dist = (xx - c) * np.cos(theta) + (yy - c) * np.sin(theta) + offset
    return np.abs(dist) < half_width


def _sparse_pattern(rng: np.random.Generator, size: int) -> np.ndarray:
    """Scanline-ish validity mask: every other row, ~60% of columns."""
    keep = np.zeros((size, size), dtype=bool)
    keep[::2] = rng.random((size // 2 + size % 2, size)) < 0.6
    return keep


def generate_scene(
    rng: np.random.Generator, size: int = 32, low_light: bool = False
) -> Scene:
    mask = _band_mask(rng, size)

    depth = np.where(
        mask,
        3.0 + 2.0 * _smooth_field(rng, size),
        10.0 + 8.0 * rng.random((size, size)),
    )
    depth = np.clip(depth + rng.normal(0.0, DEPTH_NOISE, (size, size)), 0.5, 60.0)
    depth = np.rint(depth * 1000.0) / 1000.0  # millimeter grid, matches PNG storage

    color = np.where(
        mask[..., None],
        np.asarray(INSIDE_COLOR),
        np.asarray(OUTSIDE_COLOR),
    ).astype(np.float64)
    # Illumination effects are multiplicative, so chromaticity ignores them:
    # smooth shadow field, per-frame exposure, mild white-balance wobble.
    color *= (0.6 + 0.8 * _smooth_field(rng, size))[..., None]
    color *= rng.uniform(0.9, 1.1)
    color *= rng.uniform(0.9, 1.1, size=3)
    if low_light:
        color /= LOW_LIGHT_ATTENUATION
    color += rng.normal(0.0, COLOR_NOISE, color.shape)  # sensor noise after attenuation
    rgb = np.clip(np.rint(color), 0, 255).astype(np.uint8)

    keep = _sparse_pattern(rng, size)
    sparse = DepthMap(values=np.where(keep, depth, 0.0), kind="sparse")

    lux = rng.uniform(1.0, 99.0) if low_light else (
        rng.uniform(200.0, 9000.0) if rng.random() < 0.7 else rng.uniform(10001.0, 30000.0)
    )
    return Scene(rgb=rgb, depth=depth, sparse=sparse, mask=mask, lux=float(lux))


def generate_corpus(
    n_frames: int = 200, seed: int = 0, size: int = 32, low_light: bool = False
) -> list[Scene]:
    rng = np.random.default_rng(seed)
    return [generate_scene(rng, size=size, low_light=low_light) for _ in range(n_frames)]


def scene_dense_depth(scene: Scene, params: CompletionParams | None = None) -> DepthMap:
    """Densified sparse depth — the map the network actually consumes."""
    return complete_depth(scene.sparse, params if params is not None else SYNTHETIC_COMPLETION)


def corpus_pairs(
    scenes,
    mode_spec: str,
    params: CompletionParams | None = None,
    max_depth: float = SYNTHETIC_MAX_DEPTH,
):
    """(FusionInput, float mask) training pairs from in-memory scenes."""
    pairs = []
    for s in scenes:
        depth = None if mode_spec == "na-rgb" else scene_dense_depth(s, params)
        rgb = None if mode_spec == "na-depth" else s.rgb
        sample = assemble_from_spec(mode_spec, rgb=rgb, depth=depth, max_depth=max_depth)
        pairs.append((sample, s.mask.astype(np.float32)))
    return pairs


def corpus_split(
    scenes, seed: int = 0, ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
) -> tuple[list, list, list]:
    """Deterministic (train, val, test) scene lists under the floor rule."""
    n = len(scenes)
    n_train = int(ratios[0] * n)
    n_val = int(ratios[1] * n)
    perm = np.random.default_rng(seed).permutation(n)
    train = [scenes[i] for i in perm[:n_train]]
    val = [scenes[i] for i in perm[n_train : n_train + n_val]]
    test = [scenes[i] for i in perm[n_train + n_val :]]
    return train, val, test


def synthetic_camera(size: int) -> CameraModel:
    k = np.array([[float(size), 0.0, size / 2.0],
                  [0.0, float(size), size / 2.0],
                  [0.0, 0.0, 1.0]])
    return CameraModel(intrinsics=k, width=size, height=size)


def backproject_sparse(depth: DepthMap, cam: CameraModel) -> PointCloud:
    """Camera-frame points whose projection reproduces the sparse map.

    The projector maps a point at depth z through u = round(fx*x/z + cx) - 1,
    so each valid pixel (u, v) lifts to z * K^-1 * (u+1, v+1, 1)^T.
    """
    v, u = np.nonzero(depth.valid_mask)
    z = depth.values[v, u]
    k_inv = np.linalg.inv(cam.intrinsics)
    pix = np.stack([u + 1.0, v + 1.0, np.ones_like(z)], axis=0)
    pts = (k_inv @ pix) * z
    return PointCloud(points=pts.T.astype(np.float64))


def materialize_corpus(
    out_dir: str | Path,
    n_frames: int = 200,
    seed: int = 0,
    size: int = 32,
    low_light: bool = False,
    split_seed: int = 0,
    completion: CompletionParams | None = None,
) -> Path:
    """Write a full sequence directory + manifest; returns the manifest path."""
    out = Path(out_dir)
    for sub in ("images", "clouds", "depth_sparse", "depth_dense", "masks"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    cam = synthetic_camera(size)
    ext = ExtrinsicCalibration(np.eye(3), np.zeros(3))
    save_calibration(cam, ext, out / "calibration.json")

    scenes = generate_corpus(n_frames, seed=seed, size=size, low_light=low_light)
    records = []
    lux_rows = []
    for i, scene in enumerate(scenes):
        ts = 100_000_000 * (i + 1)  # 10 Hz master clock
        name = f"{ts}.png"
        write_image(scene.rgb, out / "images" / name)
        write_point_cloud(backproject_sparse(scene.sparse, cam), out / "clouds" / f"{ts}.bin")
        write_depth_png(scene.sparse, out / "depth_sparse" / name)
        dense = scene_dense_depth(scene, completion)
        write_depth_png(dense, out / "depth_dense" / name)
        write_mask_png(scene.mask, out / "masks" / name)
        lux_rows.append(f"{ts},{scene.lux:.3f}")
        records.append(
            FrameRecord(
                frame_id=f"{i:06d}",
                timestamp_ns=ts,
                image_path=f"images/{name}",
                cloud_path=f"clouds/{ts}.bin",
                lux=scene.lux,
                mask_path=f"masks/{name}",
                depth_sparse_path=f"depth_sparse/{name}",
                depth_dense_path=f"depth_dense/{name}",
            )
        )
    (out / "lux.csv").write_text("timestamp_ns,lux\n" + "\n".join(lux_rows) + "\n")
    records = split_dataset(records, seed=split_seed)
    manifest = out / "manifest.jsonl"
    write_manifest(records, manifest)
    return manifest
