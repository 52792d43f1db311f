"""LiDAR-to-camera geometry: rigid transforms, perspective projection, depth map I/O.

Coordinate conventions follow the usual computer-vision setup: the camera
frame is right-handed with Z forward along the optical axis, the image
origin is the top-left pixel, u grows right and v grows down.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DimensionMismatch, InvalidRotation

logger = logging.getLogger(__name__)

ROTATION_TOL = 1e-6
# Points closer to the image plane than this are treated as behind the camera.
MIN_CAMERA_DEPTH = 1e-6
# 16-bit millimeter PNGs saturate at 65.535 m; deeper values are clipped on write.
MAX_PNG_DEPTH_MM = np.iinfo(np.uint16).max


def validate_rotation(rotation: np.ndarray) -> None:
    """Raise InvalidRotation unless ``rotation`` is a proper rotation matrix."""
    r = np.asarray(rotation, dtype=np.float64)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        raise InvalidRotation(f"rotation must be a finite 3x3 matrix, got shape {r.shape}")
    residual = np.max(np.abs(r.T @ r - np.eye(3)))
    if residual >= ROTATION_TOL:
        raise InvalidRotation(f"R^T R deviates from identity by {residual:.3e}")
    det = np.linalg.det(r)
    if abs(det - 1.0) >= 1e-5:
        raise InvalidRotation(f"det(R) = {det:.6f}, expected +1 (reflection or scaling)")


@dataclass
class ExtrinsicCalibration:
    """Rigid transform taking LiDAR-frame points into the camera frame."""

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,), meters

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        validate_rotation(self.rotation)
        if not np.all(np.isfinite(self.translation)):
            raise ValueError("translation must be finite")

    def inverse(self) -> "ExtrinsicCalibration":
        rt = self.rotation.T
        return ExtrinsicCalibration(rt, -rt @ self.translation)


@dataclass
class CameraModel:
    """Pinhole intrinsics plus the valid image bounds."""

    intrinsics: np.ndarray  # (3, 3), pixels
    width: int
    height: int

    def __post_init__(self):
        k = np.asarray(self.intrinsics, dtype=np.float64)
        if k.shape != (3, 3) or not np.all(np.isfinite(k)):
            raise ValueError(f"intrinsics must be a finite 3x3 matrix, got shape {k.shape}")
        lower = np.array([k[1, 0], k[2, 0], k[2, 1]])
        if np.max(np.abs(lower)) > 1e-9 or abs(k[2, 2] - 1.0) > 1e-9:
            raise ValueError("intrinsics must be upper-triangular with K[2] = [0, 0, 1]")
        if k[0, 0] <= 0 or k[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image bounds must be positive")
        self.intrinsics = k
        self.width = int(self.width)
        self.height = int(self.height)


@dataclass
class PointCloud:
    """Unordered 3D points in meters with an optional per-point intensity."""

    points: np.ndarray  # (N, 3)
    intensity: np.ndarray | None = None  # (N,)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        self.points = pts
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=np.float64).reshape(-1)
            if inten.shape[0] != pts.shape[0]:
                raise DimensionMismatch(
                    f"{inten.shape[0]} intensities for {pts.shape[0]} points"
                )
            self.intensity = inten

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class DepthMap:
    """Per-pixel range image in meters; 0 marks an invalid pixel."""

    values: np.ndarray  # (H, W)
    kind: str  # "sparse" | "dense"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise DimensionMismatch(f"depth map must be 2D, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("depth values must be finite and non-negative")
        if self.kind not in ("sparse", "dense"):
            raise ValueError(f"kind must be 'sparse' or 'dense', got {self.kind!r}")
        if self.kind == "dense" and not np.all(vals > 0):
            raise ValueError("dense depth map contains invalid (zero) pixels")
        self.values = vals

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def valid_mask(self) -> np.ndarray:
        return self.values > 0


@dataclass(frozen=True)
class ProjectionStats:
    """Bookkeeping for points discarded during projection."""

    total: int
    kept: int
    behind_camera: int
    out_of_bounds: int

    @property
    def dropped(self) -> int:
        return self.behind_camera + self.out_of_bounds


def transform_points(cloud: PointCloud, ext: ExtrinsicCalibration) -> PointCloud:
    """Apply the rigid transform p' = R p + t to every point.

    Point order is preserved and intensity, when present, is carried through
    unchanged.
    """
    validate_rotation(ext.rotation)
    pts = cloud.points @ ext.rotation.T + ext.translation
    inten = None if cloud.intensity is None else cloud.intensity.copy()
    return PointCloud(pts, inten)


def project_to_sparse_depth(
    cloud: PointCloud,
    cam: CameraModel,
    duplicate_rule: str = "nearest_depth",
    return_stats: bool = False,
):
    """Project a camera-frame cloud into a sparse depth image.

    Each point with Z > 0 lands on pixel (u, v) = round(K p / Z) - (1, 1),
    the offset converting the 1-based pixel convention to array indices.
    Points behind the camera or outside the image are silently dropped.

    duplicate_rule resolves points that share a pixel:
      * "nearest_depth"  -- keep the minimum Z (occlusion-correct z-buffer).
      * "nearest_center" -- keep the point whose continuous projection is
        closest to the pixel center, ties broken by minimum Z.

    Returns the DepthMap, or (DepthMap, ProjectionStats) when
    ``return_stats`` is set.
    """
    if duplicate_rule not in ("nearest_depth", "nearest_center"):
        raise ValueError(f"unknown duplicate rule {duplicate_rule!r}")
    pts = cloud.points
    total = pts.shape[0]
    z = pts[:, 2]
    front = z > MIN_CAMERA_DEPTH
    behind = total - int(np.count_nonzero(front))

    p = pts[front]
    zf = z[front]
    proj = p @ cam.intrinsics.T
    u_f = proj[:, 0] / zf
    v_f = proj[:, 1] / zf
    u = np.rint(u_f).astype(np.int64) - 1
    v = np.rint(v_f).astype(np.int64) - 1
    inside = (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    oob = int(np.count_nonzero(front)) - int(np.count_nonzero(inside))

    u, v, zf = u[inside], v[inside], zf[inside]
    values = np.zeros((cam.height, cam.width), dtype=np.float64)
    if u.size:
        flat = v * cam.width + u
        if duplicate_rule == "nearest_depth":
            order = np.lexsort((zf, flat))
        else:
            center_d2 = (u_f[inside] - 1 - u) ** 2 + (v_f[inside] - 1 - v) ** 2
            order = np.lexsort((zf, center_d2, flat))
        flat, zf = flat[order], zf[order]
        first = np.ones(flat.shape[0], dtype=bool)
        first[1:] = flat[1:] != flat[:-1]
        values.ravel()[flat[first]] = zf[first]

    stats = ProjectionStats(total, int(u.size), behind, oob)
    if stats.dropped:
        logger.debug("projection dropped %d of %d points (%d behind, %d out of bounds)",
                     stats.dropped, total, behind, oob)
    depth = DepthMap(values, "sparse")
    return (depth, stats) if return_stats else depth


# Near-to-far ramp endpoints for projection overlays (warm red to cold blue).
OVERLAY_NEAR_COLOR = (255, 64, 0)
OVERLAY_FAR_COLOR = (0, 96, 255)


def overlay_projection(image: np.ndarray, depth: DepthMap) -> np.ndarray:
    """Recolor valid depth pixels over an RGB image with a near-to-far ramp.

    The input image is left untouched; a recolored copy is returned.
    """
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionMismatch(f"expected an RGB image, got shape {img.shape}")
    if img.shape[:2] != depth.values.shape:
        raise DimensionMismatch(
            f"image is {img.shape[:2]}, depth map is {depth.values.shape}"
        )
    out = img.copy()
    mask = depth.valid_mask
    if not mask.any():
        return out
    d = depth.values[mask]
    dmin, dmax = d.min(), d.max()
    t = np.zeros_like(d) if dmax == dmin else (d - dmin) / (dmax - dmin)
    near = np.array(OVERLAY_NEAR_COLOR, dtype=np.float64)
    far = np.array(OVERLAY_FAR_COLOR, dtype=np.float64)
    colors = near[None, :] * (1.0 - t)[:, None] + far[None, :] * t[:, None]
    out[mask] = np.clip(np.rint(colors), 0, 255).astype(out.dtype)
    return out


# ---------------------------------------------------------------------------
# File formats


def load_calibration(path: str | Path) -> tuple[CameraModel, ExtrinsicCalibration]:
    """Read the calibration JSON {K, R, t, width, height}."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    cam = CameraModel(np.array(obj["K"], dtype=np.float64), obj["width"], obj["height"])
    ext = ExtrinsicCalibration(np.array(obj["R"], dtype=np.float64),
                               np.array(obj["t"], dtype=np.float64))
    return cam, ext


def save_calibration(cam: CameraModel, ext: ExtrinsicCalibration, path: str | Path) -> None:
    obj = {
        "K": cam.intrinsics.tolist(),
        "R": ext.rotation.tolist(),
        "t": ext.translation.tolist(),
        "width": cam.width,
        "height": cam.height,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def read_point_cloud(path: str | Path) -> PointCloud:
    """Read consecutive little-endian float32 (x, y, z, intensity) records."""
    raw = np.fromfile(path, dtype="<f4")
    if raw.size % 4 != 0:
        raise ValueError(f"{path}: byte length is not a multiple of 16")
    rec = raw.reshape(-1, 4)
    return PointCloud(rec[:, :3].astype(np.float64), rec[:, 3].astype(np.float64))


def write_point_cloud(cloud: PointCloud, path: str | Path) -> None:
    inten = cloud.intensity
    if inten is None:
        inten = np.zeros(len(cloud), dtype=np.float64)
    rec = np.hstack([cloud.points, inten[:, None]]).astype("<f4")
    rec.tofile(path)


def read_depth_png(path: str | Path, kind: str = "sparse") -> DepthMap:
    """Read a 16-bit single-channel PNG holding depth in millimeters."""
    arr = np.array(Image.open(path))
    if arr.ndim != 2:
        raise DimensionMismatch(f"{path}: expected a single-channel PNG, got shape {arr.shape}")
    return DepthMap(arr.astype(np.float64) / 1000.0, kind)


def write_depth_png(depth: DepthMap, path: str | Path) -> None:
    mm = np.clip(np.rint(depth.values * 1000.0), 0, MAX_PNG_DEPTH_MM).astype(np.uint16)
    Image.fromarray(mm).save(path, format="PNG")


def read_image(path: str | Path) -> np.ndarray:
    """Read an image file as an (H, W, 3) uint8 RGB array."""
    return np.array(Image.open(path).convert("RGB"))


def write_image(image: np.ndarray, path: str | Path) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path, format="PNG")
