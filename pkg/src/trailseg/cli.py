"""tomd — command-line front end for the traversability pipeline."""

from __future__ import annotations

import functools
import json
from pathlib import Path

import click
import numpy as np

from . import dataset as ds
from .depth_completion import CompletionParams, complete_depth
from .errors import ToolkitError
from .fusion import MODE_SPECS, assemble_from_spec, read_sample, write_sample
from .geometry import (
    load_calibration,
    overlay_projection,
    project_to_sparse_depth,
    read_depth_png,
    read_image,
    read_point_cloud,
    transform_points,
    write_depth_png,
    write_image,
)

TRAIN_META = "train_meta.json"


def friendly_errors(fn):
    """Turn domain errors into clean CLI failures instead of tracebacks."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ToolkitError, FileNotFoundError, ValueError) as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


@click.group()
def main():
    """Traversability segmentation toolkit: projection, depth completion,
    fusion training/evaluation, dataset sync, and annotation serving."""


@main.command()
@click.option("--cloud", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--calib", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--rule", type=click.Choice(["nearest_depth", "nearest_center"]),
              default="nearest_depth", show_default=True)
@click.option("--image", type=click.Path(exists=True, dir_okay=False),
              help="RGB frame for an optional projection overlay.")
@click.option("--overlay", "overlay_path", type=click.Path(dir_okay=False),
              help="Where to write the overlay PNG (requires --image).")
@friendly_errors
def project(cloud, calib, out_path, rule, image, overlay_path):
    """Project a LiDAR cloud through the calibration into a sparse depth PNG."""
    cam, ext = load_calibration(calib)
    pts = transform_points(read_point_cloud(cloud), ext)
    depth, stats = project_to_sparse_depth(pts, cam, duplicate_rule=rule, return_stats=True)
    write_depth_png(depth, out_path)
    click.echo(
        f"projected {stats.kept}/{stats.total} points "
        f"({stats.behind_camera} behind camera, {stats.out_of_bounds} out of bounds) "
        f"-> {out_path}"
    )
    if overlay_path:
        if not image:
            raise click.UsageError("--overlay requires --image")
        write_image(overlay_projection(read_image(image), depth), overlay_path)
        click.echo(f"overlay -> {overlay_path}")


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON file mirroring the completion parameter names.")
@friendly_errors
def complete(in_path, out_path, params_path):
    """Densify a sparse depth PNG by multi-scale dilation."""
    params = CompletionParams.from_json(params_path) if params_path else CompletionParams()
    dense = complete_depth(read_depth_png(in_path, kind="sparse"), params)
    write_depth_png(dense, out_path)
    click.echo(f"completed {in_path} -> {out_path}")


@main.command()
@click.option("--mode", required=True,
              type=click.Choice(["na", "na-rgb", "na-depth", "early", "cross", "mixed"]))
@click.option("--rgb", "rgb_path", default="none", show_default=True,
              help="RGB PNG path, or 'none'.")
@click.option("--depth", "depth_path", default="none", show_default=True,
              help="Depth PNG path, or 'none'.")
@click.option("--depth-kind", type=click.Choice(["sparse", "dense"]), default="dense",
              show_default=True)
@click.option("--max-depth", type=float, default=100.0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@friendly_errors
def fuse(mode, rgb_path, depth_path, depth_kind, max_depth, out_path):
    """Assemble the two network input streams and write a sample container."""
    rgb = None if rgb_path == "none" else read_image(rgb_path)
    depth = None if depth_path == "none" else read_depth_png(depth_path, kind=depth_kind)
    if mode == "na":
        mode = "na-rgb" if depth is None else "na-depth"
    sample = assemble_from_spec(mode, rgb=rgb, depth=depth, max_depth=max_depth)
    write_sample(sample, out_path)
    click.echo(f"{sample.mode.value} sample {sample.tags} "
               f"{sample.height}x{sample.width} -> {out_path}")


def _mode_of(weights_dir: Path) -> str:
    from .network import load_weights

    weights = load_weights(weights_dir)
    if weights.mode is None:
        raise click.ClickException(f"{weights_dir} records no fusion mode")
    return weights.mode


@main.command()
@click.option("--data", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", "mode_spec", required=True, type=click.Choice(list(MODE_SPECS)))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Architecture JSON (scales, channel widths, depth).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--steps", type=int, default=200, show_default=True)
@click.option("--lr", type=float, default=0.001, show_default=True)
@click.option("--momentum", type=float, default=0.9, show_default=True)
@click.option("--batch", type=int, default=8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--val-every", type=int, default=10, show_default=True)
@click.option("--max-depth", type=float, default=100.0, show_default=True)
@friendly_errors
def train(manifest_path, mode_spec, config_path, out_dir, steps, lr, momentum, batch,
          seed, threshold, val_every, max_depth):
    """Train on a manifest's train/val splits; write weights, log, and curves."""
    from .network import DcmConfig, TrainConfig, save_weights
    from .network import train as run_training
    from .plots import save_training_curves

    manifest_path = Path(manifest_path)
    records = ds.load_manifest(manifest_path)
    base = manifest_path.parent
    train_pairs = ds.load_split_pairs(records, base, mode_spec, "train", max_depth)
    val_pairs = ds.load_split_pairs(records, base, mode_spec, "val", max_depth)
    if not train_pairs:
        raise click.ClickException(
            "no records tagged 'train' — run `tomd split --manifest ...` first"
        )
    config = None
    if config_path:
        with open(config_path) as fh:
            config = DcmConfig.from_dict(json.load(fh))
    train_cfg = TrainConfig(
        learning_rate=lr, momentum=momentum, batch_size=batch, max_steps=steps,
        seed=seed, threshold=threshold, val_every=val_every,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_training(train_pairs, val_pairs, train_cfg, config,
                          log_path=out / "log.csv")
    result.weights.mode = mode_spec
    save_weights(result.weights, out)
    save_training_curves(result.log, out / "curves.png")
    with open(out / TRAIN_META, "w") as fh:
        json.dump(
            {
                "manifest": str(manifest_path.resolve()),
                "mode": mode_spec,
                "threshold": threshold,
                "max_depth": max_depth,
            },
            fh,
            indent=2,
        )
    click.echo(
        f"trained {mode_spec} for {steps} steps on {len(train_pairs)} frames; "
        f"best val IoU {result.best_val_iou:.4f} at step {result.best_step} -> {out}"
    )


def _default_manifest(weights_dir: Path) -> Path:
    meta_path = weights_dir / TRAIN_META
    if not meta_path.is_file():
        raise click.ClickException(
            f"{weights_dir} has no recorded source manifest; pass --data"
        )
    with open(meta_path) as fh:
        return Path(json.load(fh)["manifest"])


@main.command()
@click.option("--weights", "weights_dir", required=True, type=click.Path(file_okay=False))
@click.option("--frame", "frame_id", required=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--data", "manifest_path", type=click.Path(exists=True, dir_okay=False),
              help="Manifest to resolve the frame in (default: the training manifest).")
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--max-depth", type=float, default=100.0, show_default=True)
@friendly_errors
def predict(weights_dir, frame_id, out_path, manifest_path, threshold, max_depth):
    """Run one frame through trained weights and write the binary mask PNG."""
    from .network import load_weights, network_forward, predict_mask

    weights_dir = Path(weights_dir)
    weights = load_weights(weights_dir)
    if weights.mode is None:
        raise click.ClickException(f"{weights_dir} records no fusion mode")
    manifest = Path(manifest_path) if manifest_path else _default_manifest(weights_dir)
    records = {r.frame_id: r for r in ds.load_manifest(manifest)}
    if frame_id not in records:
        raise click.ClickException(f"frame {frame_id!r} not in {manifest}")
    sample, _ = ds.load_sample(records[frame_id], manifest.parent, weights.mode, max_depth)
    mask = predict_mask(network_forward(sample, weights), threshold)
    ds.write_mask_png(mask, out_path)
    click.echo(f"frame {frame_id}: {int(mask.sum())} traversable pixels -> {out_path}")


@main.command(name="eval")
@click.option("--weights", "weights_dirs", required=True, multiple=True,
              type=click.Path(file_okay=False),
              help="Weights directory; repeat to compare several modes.")
@click.option("--data", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--split", type=click.Choice(["train", "val", "test", "none"]),
              default="test", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--max-depth", type=float, default=100.0, show_default=True)
@click.option("--fps/--no-fps", "with_fps", default=True, show_default=True,
              help="Also time network throughput on the evaluated frames.")
@friendly_errors
def eval_cmd(weights_dirs, manifest_path, split, out_path, threshold, max_depth, with_fps):
    """Evaluate weights per illumination bin; write CSV, text, and figure."""
    from .metrics import evaluate, format_report_text, measure_fps, write_report_csv
    from .network import load_weights
    from .plots import save_metrics_figure

    manifest_path = Path(manifest_path)
    records = ds.load_manifest(manifest_path)
    frames = ds.load_eval_frames(records, manifest_path.parent, split, max_depth)
    weights_map = {}
    for d in weights_dirs:
        w = load_weights(d)
        if w.mode is None:
            raise click.ClickException(f"{d} records no fusion mode")
        weights_map[w.mode] = w
    report = evaluate(weights_map, frames, threshold=threshold, max_depth=max_depth)
    if with_fps:
        first_mode, first_weights = next(iter(weights_map.items()))
        samples = [
            assemble_from_spec(first_mode, rgb=f.rgb, depth=f.depth, max_depth=max_depth)
            for f in frames
        ]
        report.fps = measure_fps(first_weights, samples)
    out = Path(out_path)
    write_report_csv(report, out)
    text = format_report_text(report)
    out.with_suffix(".txt").write_text(text)
    save_metrics_figure(report, out.with_suffix(".png"))
    click.echo(text, nl=False)
    click.echo(f"report -> {out}, {out.with_suffix('.txt')}, {out.with_suffix('.png')}")


@main.command()
@click.option("--seq", "seq_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--tolerance-ms", type=float, default=50.0, show_default=True)
@click.option("--stride", type=int, default=1, show_default=True,
              help="Keyframe stride (1 flags every frame).")
@friendly_errors
def sync(seq_dir, out_path, tolerance_ms, stride):
    """Synchronize a sequence directory to its LiDAR clock; write a manifest."""
    streams = ds.scan_sequence(seq_dir)
    records = ds.synchronize(streams, tolerance_ns=int(tolerance_ms * 1e6))
    records = ds.select_keyframes(records, stride)
    ds.write_manifest(records, out_path)
    click.echo(f"{len(records)} synchronized frames -> {out_path}")


@main.command()
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--ratios", default="0.8,0.1,0.1", show_default=True)
@friendly_errors
def split(manifest_path, seed, ratios):
    """Tag manifest records train/val/test in place (seeded shuffle)."""
    parts = tuple(float(v) for v in ratios.split(","))
    if len(parts) != 3:
        raise click.UsageError("--ratios needs three comma-separated numbers")
    records = ds.split_dataset(ds.load_manifest(manifest_path), parts, seed)
    ds.write_manifest(records, manifest_path)
    sizes = {tag: sum(r.split == tag for r in records) for tag in ("train", "val", "test")}
    click.echo(f"split {len(records)} records -> {sizes}")


@main.command()
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--slic-k", type=int, default=600, show_default=True)
@click.option("--slic-m", type=float, default=10.0, show_default=True)
@click.option("--slic-iters", type=int, default=10, show_default=True)
@click.option("--sessions", "sessions_dir", type=click.Path(file_okay=False),
              help="Session store directory (default: sessions/ next to the manifest).")
@click.option("--static", "static_dir", type=click.Path(file_okay=False),
              help="Optional built UI directory to serve at /.")
@friendly_errors
def serve(manifest_path, port, host, slic_k, slic_m, slic_iters, sessions_dir, static_dir):
    """Serve the annotation HTTP API (and optionally the built UI)."""
    from .service import serve as run_service

    run_service(
        manifest_path,
        port=port,
        host=host,
        sessions_dir=sessions_dir,
        slic_k=slic_k,
        slic_m=slic_m,
        slic_iterations=slic_iters,
        static_dir=static_dir,
    )


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--frames", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--size", type=int, default=32, show_default=True)
@click.option("--low-light", is_flag=True,
              help="Attenuate the color signal 10x before sensor noise.")
@click.option("--split-seed", type=int, default=0, show_default=True)
@friendly_errors
def synth(out_dir, frames, seed, size, low_light, split_seed):
    """Materialize a synthetic band-scene corpus with a split manifest."""
    from .synthetic import materialize_corpus

    manifest = materialize_corpus(
        out_dir, n_frames=frames, seed=seed, size=size,
        low_light=low_light, split_seed=split_seed,
    )
    click.echo(f"{frames} synthetic frames -> {manifest}")


@main.command()
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--frame", "frame_id", required=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--sessions", "sessions_dir", type=click.Path(file_okay=False))
@click.option("--slic-k", type=int, default=600, show_default=True)
@click.option("--slic-m", type=float, default=10.0, show_default=True)
@click.option("--slic-iters", type=int, default=10, show_default=True)
@friendly_errors
def mask(manifest_path, frame_id, out_path, sessions_dir, slic_k, slic_m, slic_iters):
    """Export a frame's annotation session as a 0/255 mask PNG."""
    from .service import AnnotationStore

    store = AnnotationStore(
        manifest_path, sessions_dir=sessions_dir,
        slic_k=slic_k, slic_m=slic_m, slic_iterations=slic_iters,
    )
    if store.frame(frame_id) is None:
        raise click.ClickException(f"unknown frame {frame_id!r}")
    Path(out_path).write_bytes(store.mask_png(frame_id))
    click.echo(f"mask for frame {frame_id} -> {out_path}")


if __name__ == "__main__":
    main()
