"""Dataset tooling: sensor streams, timestamp sync, manifests, splits.

A capture sequence arrives as extracted files (images/<ts>.png,
clouds/<ts>.bin, lux.csv, optional gnss/imu/teleop CSV sidecars) with
nanosecond timestamps. The LiDAR stream is the master clock: each LiDAR
sweep becomes one frame, other sensors contribute their nearest reading
within a tolerance, and frames missing a required stream are dropped.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import EmptyDataset, EmptyMaster, ParseError
from .fusion import DEFAULT_MAX_DEPTH, assemble_from_spec
from .geometry import DepthMap, read_depth_png, read_image

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE_NS = 50_000_000  # half the 10 Hz master period
SPLIT_TAGS = ("train", "val", "test", "none")


@dataclass
class SensorStream:
    sensor_id: str
    readings: list[tuple[int, str]]  # (timestamp_ns, payload locator)
    rate_hz: float | None = None

    def __post_init__(self):
        ts = [t for t, _ in self.readings]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"stream {self.sensor_id!r} timestamps must strictly increase")

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([t for t, _ in self.readings], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.readings)


@dataclass
class FrameRecord:
    frame_id: str
    timestamp_ns: int
    image_path: str
    cloud_path: str
    lux: float
    gnss: tuple[float, float, float] | None = None
    imu: str | None = None
    teleop: str | None = None
    split: str = "none"
    keyframe: bool = False
    # Derived artifacts attached by later pipeline stages.
    mask_path: str | None = None
    depth_sparse_path: str | None = None
    depth_dense_path: str | None = None

    def __post_init__(self):
        if self.lux < 0:
            raise ValueError(f"frame {self.frame_id}: lux must be >= 0, got {self.lux}")
        if self.split not in SPLIT_TAGS:
            raise ValueError(f"frame {self.frame_id}: unknown split tag {self.split!r}")
        if self.gnss is not None:
            self.gnss = tuple(float(v) for v in self.gnss)


def _nearest_within(timestamps: np.ndarray, target: int, tolerance: int) -> int | None:
    """Index of the reading nearest to target within tolerance; ties -> earlier."""
    pos = int(np.searchsorted(timestamps, target))
    best = None
    for idx in (pos - 1, pos):
        if 0 <= idx < len(timestamps):
            dt = abs(int(timestamps[idx]) - target)
            if dt <= tolerance and (best is None or dt < best[0]):
                best = (dt, idx)
    return None if best is None else best[1]


def synchronize(
    streams: dict[str, SensorStream],
    master_id: str = "lidar",
    tolerance_ns: int = DEFAULT_TOLERANCE_NS,
) -> list[FrameRecord]:
    """One frame per master (LiDAR) timestamp, nearest-match everything else.

    Frames missing the required image or lux reading inside the tolerance
    are dropped; the drop count is logged. Optional sidecar streams (gnss,
    imu, teleop) attach when available and never cause drops.
    """
    master = streams.get(master_id)
    if master is None or len(master) == 0:
        raise EmptyMaster(f"master stream {master_id!r} is missing or empty")
    # An absent required stream drops every frame rather than raising.
    required = ("image", "lux")
    empty = SensorStream("empty", [])
    cached = {
        sid: (s.timestamps, s.readings)
        for sid, s in streams.items()
        if sid != master_id
    }
    for sid in required:
        cached.setdefault(sid, (empty.timestamps, empty.readings))

    records: list[FrameRecord] = []
    dropped = 0
    for i, (ts, cloud_loc) in enumerate(master.readings):
        matched: dict[str, str] = {}
        ok = True
        for sid in required:
            stamps, readings = cached[sid]
            idx = _nearest_within(stamps, ts, tolerance_ns)
            if idx is None:
                ok = False
                break
            matched[sid] = readings[idx][1]
        if not ok:
            dropped += 1
            continue
        extras: dict[str, object] = {}
        for sid in ("gnss", "imu", "teleop"):
            if sid in cached:
                idx = _nearest_within(cached[sid][0], ts, tolerance_ns)
                if idx is not None:
                    payload = cached[sid][1][idx][1]
                    if sid == "gnss":
                        extras[sid] = tuple(float(v) for v in payload.split(","))
                    else:
                        extras[sid] = payload
        records.append(
            FrameRecord(
                frame_id=f"{len(records):06d}",
                timestamp_ns=int(ts),
                image_path=matched["image"],
                cloud_path=cloud_loc,
                lux=float(matched["lux"]),
                **extras,
            )
        )
    if dropped:
        log.info("synchronize: dropped %d of %d master frames", dropped, len(master))
    return records


def select_keyframes(records: list[FrameRecord], stride: int) -> list[FrameRecord]:
    """Flag every stride-th record (0, stride, 2*stride, ...) as a keyframe."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    return [replace(r, keyframe=(i % stride == 0)) for i, r in enumerate(records)]


def split_dataset(
    records: list[FrameRecord],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> list[FrameRecord]:
    """Shuffle under a seeded generator and tag train/val/test.

    Sizes: n_train = floor(r_train*N), n_val = floor(r_val*N), the test
    split takes the remainder. Order of the returned list is unchanged;
    only tags differ.
    """
    if not records:
        raise EmptyDataset("cannot split an empty record list")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    n = len(records)
    n_train = int(ratios[0] * n)
    n_val = int(ratios[1] * n)
    perm = np.random.default_rng(seed).permutation(n)
    tags = [""] * n
    for rank, idx in enumerate(perm):
        if rank < n_train:
            tags[idx] = "train"
        elif rank < n_train + n_val:
            tags[idx] = "val"
        else:
            tags[idx] = "test"
    return [replace(r, split=tags[i]) for i, r in enumerate(records)]


# ---------------------------------------------------------------------------
# Manifest: one UTF-8 JSON object per line. Parsing is pure (no path checks)
# so write -> load is an exact round trip; resolve paths separately.

_REQUIRED_FIELDS = ("frame_id", "timestamp_ns", "image_path", "cloud_path", "lux")
_RECORD_FIELDS = {f.name for f in fields(FrameRecord)}


def load_manifest(path: str | Path) -> list[FrameRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
            if not isinstance(obj, dict):
                raise ParseError("manifest line is not an object", lineno)
            for key in _REQUIRED_FIELDS:
                if key not in obj:
                    raise ParseError(f"missing required field {key!r}", lineno, key)
            unknown = set(obj) - _RECORD_FIELDS
            if unknown:
                raise ParseError(f"unknown fields {sorted(unknown)}", lineno, sorted(unknown)[0])
            try:
                records.append(FrameRecord(**obj))
            except (TypeError, ValueError) as exc:
                raise ParseError(str(exc), lineno) from None
    return records


def write_manifest(records: list[FrameRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {
                "frame_id": r.frame_id,
                "timestamp_ns": r.timestamp_ns,
                "image_path": r.image_path,
                "cloud_path": r.cloud_path,
                "lux": r.lux,
                "split": r.split,
                "keyframe": r.keyframe,
            }
            for key in ("gnss", "imu", "teleop", "mask_path", "depth_sparse_path",
                        "depth_dense_path"):
                value = getattr(r, key)
                if value is not None:
                    obj[key] = list(value) if key == "gnss" else value
            fh.write(json.dumps(obj) + "\n")


def resolve_path(base: str | Path, p: str) -> Path:
    """Manifest paths are relative to the manifest's directory unless absolute."""
    path = Path(p)
    return path if path.is_absolute() else Path(base) / path


def validate_paths(records: list[FrameRecord], base: str | Path) -> list[str]:
    """Names of frames whose referenced files are missing."""
    bad = []
    for r in records:
        for p in (r.image_path, r.cloud_path, r.mask_path, r.depth_sparse_path,
                  r.depth_dense_path):
            if p is not None and not resolve_path(base, p).exists():
                bad.append(r.frame_id)
                break
    return bad


# ---------------------------------------------------------------------------
# Sequence directory scanning.


def _scan_timestamped(directory: Path, suffix: str) -> list[tuple[int, str]]:
    out = []
    if directory.is_dir():
        for p in directory.iterdir():
            if p.suffix == suffix and p.stem.isdigit():
                out.append((int(p.stem), str(p)))
    return sorted(out)


def _read_csv_stream(path: Path) -> list[tuple[int, str]]:
    """CSV rows `timestamp_ns,payload...` -> (ts, payload) readings."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#") or line.lower().startswith("timestamp"):
                continue
            ts_str, _, payload = line.partition(",")
            try:
                out.append((int(ts_str), payload))
            except ValueError:
                raise ParseError(f"bad timestamp {ts_str!r}", lineno, "timestamp_ns") from None
    return sorted(out)


def scan_sequence(seq_dir: str | Path) -> dict[str, SensorStream]:
    """Build sensor streams from a sequence directory layout.

    Expected: images/<ts>.png, clouds/<ts>.bin, lux.csv; optional gnss.csv,
    imu.csv, teleop.csv sidecars.
    """
    seq = Path(seq_dir)
    streams: dict[str, SensorStream] = {}
    images = _scan_timestamped(seq / "images", ".png")
    clouds = _scan_timestamped(seq / "clouds", ".bin")
    if images:
        streams["image"] = SensorStream("image", images)
    if clouds:
        streams["lidar"] = SensorStream("lidar", clouds, rate_hz=10.0)
    for sid in ("lux", "gnss", "imu", "teleop"):
        csv_path = seq / f"{sid}.csv"
        if csv_path.is_file():
            streams[sid] = SensorStream(sid, _read_csv_stream(csv_path))
    return streams


# ---------------------------------------------------------------------------
# Loading records into network-ready samples.


def read_mask_png(path: str | Path) -> np.ndarray:
    """8-bit annotation mask -> boolean array (255 = traversable)."""
    from PIL import Image

    return np.asarray(Image.open(path).convert("L")) > 127


def write_mask_png(mask: np.ndarray, path: str | Path) -> None:
    """Boolean mask -> 8-bit 0/255 PNG (the annotation format)."""
    from PIL import Image

    Image.fromarray(np.asarray(mask, dtype=bool) * np.uint8(255), mode="L").save(path)


def _frame_depth(record: FrameRecord, base: Path) -> DepthMap | None:
    if record.depth_dense_path is not None:
        return read_depth_png(resolve_path(base, record.depth_dense_path), kind="dense")
    if record.depth_sparse_path is not None:
        return read_depth_png(resolve_path(base, record.depth_sparse_path), kind="sparse")
    return None


def load_sample(
    record: FrameRecord,
    base: str | Path,
    mode_spec: str,
    max_depth: float = DEFAULT_MAX_DEPTH,
):
    """(FusionInput, mask or None) for one manifest record."""
    base = Path(base)
    rgb = read_image(resolve_path(base, record.image_path))
    depth = _frame_depth(record, base)
    sample = assemble_from_spec(mode_spec, rgb=rgb, depth=depth, max_depth=max_depth)
    mask = None
    if record.mask_path is not None:
        mask = read_mask_png(resolve_path(base, record.mask_path)).astype(np.float32)
    return sample, mask


def load_split_pairs(
    records: list[FrameRecord],
    base: str | Path,
    mode_spec: str,
    split: str,
    max_depth: float = DEFAULT_MAX_DEPTH,
) -> list[tuple]:
    """(FusionInput, mask) pairs for every record tagged with the split."""
    pairs = []
    for r in records:
        if r.split != split:
            continue
        sample, mask = load_sample(r, base, mode_spec, max_depth)
        if mask is None:
            raise EmptyDataset(f"frame {r.frame_id} has no mask; cannot supervise")
        pairs.append((sample, mask))
    return pairs


def load_eval_frames(
    records: list[FrameRecord],
    base: str | Path,
    split: str | None = None,
    max_depth: float = DEFAULT_MAX_DEPTH,
) -> list:
    """EvalFrame list (raw modalities + truth + lux) for metric runs."""
    from .metrics import EvalFrame

    base = Path(base)
    frames = []
    for r in records:
        if split is not None and r.split != split:
            continue
        if r.mask_path is None:
            continue
        frames.append(
            EvalFrame(
                rgb=read_image(resolve_path(base, r.image_path)),
                depth=_frame_depth(r, base),
                mask=read_mask_png(resolve_path(base, r.mask_path)),
                lux=r.lux,
            )
        )
    if not frames:
        raise EmptyDataset("no annotated frames matched the requested split")
    return frames
