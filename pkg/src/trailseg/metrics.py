"""Binary-segmentation metrics, illumination-binned evaluation, FPS timing.

Traversable is the positive class everywhere. Aggregation is micro: pixel
counts are pooled per illumination bin before any ratio is taken, so the
overall row always equals the metrics of the summed counts.
"""

from __future__ import annotations

import csv
import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptyDataset, EmptyEvaluation, MissingLux
from .fusion import DEFAULT_MAX_DEPTH, FusionInput, FusionMode, assemble_from_spec
from .geometry import DepthMap
from .network.layers import sigmoid
from .network.model import NetworkWeights, _forward_batch

LUX_BINS = ("low", "medium", "high")
REPORT_BINS = LUX_BINS + ("overall",)
REPORT_COLUMNS = ("mode", "input1", "input2", "bin", "accuracy", "iou", "f1", "frames")


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


def confusion(pred: np.ndarray, truth: np.ndarray) -> ConfusionCounts:
    """Per-pixel confusion counts between two binary masks."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise DimensionMismatch(f"mask shapes differ: {pred.shape} vs {truth.shape}")
    for name, m in (("pred", pred), ("truth", truth)):
        if m.dtype != bool and not np.isin(m, (0, 1)).all():
            raise ValueError(f"{name} mask must be binary")
    p = pred.astype(bool)
    t = truth.astype(bool)
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & t)),
        fp=int(np.count_nonzero(p & ~t)),
        fn=int(np.count_nonzero(~p & t)),
        tn=int(np.count_nonzero(~p & ~t)),
    )


def compute_metrics(c: ConfusionCounts) -> tuple[float, float, float]:
    """(accuracy, IoU, F1); empty union of prediction and truth counts as perfect."""
    if c.total == 0:
        raise EmptyEvaluation("no pixels to evaluate")
    accuracy = (c.tp + c.tn) / c.total
    union = c.tp + c.fp + c.fn
    if union == 0:
        return accuracy, 1.0, 1.0
    iou = c.tp / union
    f1 = 2 * c.tp / (2 * c.tp + c.fp + c.fn)
    return accuracy, iou, f1


def lux_bin(lux: float) -> str:
    """low = [0, 100), medium = [100, 10000], high = (10000, inf)."""
    if lux is None:
        raise MissingLux("frame has no lux reading")
    if lux < 0:
        raise ValueError(f"lux must be non-negative, got {lux}")
    if lux < 100:
        return "low"
    if lux <= 10000:
        return "medium"
    return "high"


def _lux_of(frame) -> float:
    lux = frame.get("lux") if isinstance(frame, dict) else getattr(frame, "lux", None)
    if lux is None:
        raise MissingLux(f"frame {frame!r} has no lux reading")
    return float(lux)


def bin_by_lux(frames) -> dict[str, list]:
    """Partition frames into the three illumination bins (disjoint, exhaustive)."""
    out: dict[str, list] = {b: [] for b in LUX_BINS}
    for frame in frames:
        out[lux_bin(_lux_of(frame))].append(frame)
    return out


@dataclass
class EvalFrame:
    """One evaluation unit: raw modalities, ground truth, and illuminance."""

    rgb: np.ndarray | None
    depth: DepthMap | None
    mask: np.ndarray
    lux: float


@dataclass
class ReportRow:
    mode: str  # display label, e.g. "Mixed" or "N/A"
    input1: str
    input2: str
    bin: str
    accuracy: float | None
    iou: float | None
    f1: float | None
    frames: int


@dataclass
class FpsResult:
    fps: float
    timed_frames: int
    seconds: float
    machine: str


@dataclass
class MetricsReport:
    rows: list[ReportRow] = field(default_factory=list)
    fps: FpsResult | None = None

    def row(self, mode_label: str, bin_name: str) -> ReportRow | None:
        for r in self.rows:
            if r.mode == mode_label and r.bin == bin_name:
                return r
        return None


def machine_descriptor() -> str:
    return (
        f"{platform.node()} {platform.system().lower()}-{platform.machine()}"
        f" {os.cpu_count()}cpu py{platform.python_version()}"
    )


def evaluate(
    weights,
    frames,
    threshold: float = 0.5,
    max_depth: float = DEFAULT_MAX_DEPTH,
    batch_size: int = 16,
) -> MetricsReport:
    """Per-bin micro-averaged metrics for one or more fusion modes.

    weights: a NetworkWeights (its recorded mode is used) or a mapping of
    mode spec ("mixed", "na-rgb", ...) to NetworkWeights. frames: EvalFrame
    sequence; every frame is scored by every mode.
    """
    frames = list(frames)
    if not frames:
        raise EmptyDataset("no frames to evaluate")
    if isinstance(weights, NetworkWeights):
        if weights.mode is None:
            raise ValueError("weights carry no mode; pass a {mode: weights} mapping")
        weights = {weights.mode: weights}

    rows: list[ReportRow] = []
    for spec, w in weights.items():
        counts = {b: ConfusionCounts() for b in LUX_BINS}
        n_frames = {b: 0 for b in LUX_BINS}
        tags = None
        for lo in range(0, len(frames), batch_size):
            chunk = frames[lo : lo + batch_size]
            samples = [
                assemble_from_spec(spec, rgb=f.rgb, depth=f.depth, max_depth=max_depth)
                for f in chunk
            ]
            tags = samples[0].tags
            x1 = np.stack([s.input1 for s in samples])
            x2 = np.stack([s.input2 for s in samples])
            logits, _ = _forward_batch(x1, x2, tags, w)
            preds = sigmoid(logits[..., 0]) >= threshold
            for f, pred in zip(chunk, preds):
                b = lux_bin(f.lux)
                counts[b] = counts[b] + confusion(pred, f.mask)
                n_frames[b] += 1
        counts["overall"] = sum((counts[b] for b in LUX_BINS), ConfusionCounts())
        n_frames["overall"] = len(frames)
        label = FusionMode.parse(spec.split("-")[0]).label
        for b in REPORT_BINS:
            if counts[b].total == 0:
                rows.append(ReportRow(label, tags[0], tags[1], b, None, None, None, 0))
            else:
                acc, iou, f1 = compute_metrics(counts[b])
                rows.append(ReportRow(label, tags[0], tags[1], b, acc, iou, f1, n_frames[b]))
    return MetricsReport(rows)


def measure_fps(weights: NetworkWeights, samples, warmup: int = 5) -> FpsResult:
    """Wall-clock throughput of forward + thresholding on pre-loaded samples.

    Warmup passes are excluded from both the frame count and the clock; no
    file I/O happens inside the timed region.
    """
    samples = list(samples)
    if not samples:
        raise EmptyDataset("no samples to time")
    from .network.model import network_forward
    from .network.train import predict_mask

    for s in samples[: min(warmup, len(samples))]:
        predict_mask(network_forward(s, weights))
    start = time.perf_counter()
    for s in samples:
        predict_mask(network_forward(s, weights))
    seconds = time.perf_counter() - start
    return FpsResult(
        fps=len(samples) / seconds,
        timed_frames=len(samples),
        seconds=seconds,
        machine=machine_descriptor(),
    )


def _fmt(x: float | None) -> str:
    return "-" if x is None else f"{x:.4f}"


def write_report_csv(report: MetricsReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for r in report.rows:
            writer.writerow(
                [
                    r.mode,
                    r.input1,
                    r.input2,
                    r.bin,
                    "" if r.accuracy is None else f"{r.accuracy:.6f}",
                    "" if r.iou is None else f"{r.iou:.6f}",
                    "" if r.f1 is None else f"{r.f1:.6f}",
                    r.frames,
                ]
            )


def format_report_text(report: MetricsReport) -> str:
    """Fixed-width table, one row per (mode, bin), FPS footer when measured."""
    header = ("Mode", "Input1", "Input2", "Bin", "Accuracy", "IoU", "F1", "Frames")
    body = [
        (r.mode, r.input1, r.input2, r.bin, _fmt(r.accuracy), _fmt(r.iou), _fmt(r.f1), str(r.frames))
        for r in report.rows
    ]
    widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h)
              for i, h in enumerate(header)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for row in body:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    if report.fps is not None:
        lines.append("")
        lines.append(
            f"FPS: {report.fps.fps:.2f} over {report.fps.timed_frames} frames "
            f"({report.fps.seconds:.3f} s) on {report.fps.machine}"
        )
    return "\n".join(lines) + "\n"
