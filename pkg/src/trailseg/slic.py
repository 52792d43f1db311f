"""Superpixel segmentation for annotation guidance.

Localized k-means over CIELAB color + position: seeds sit on a centered
grid with step S = sqrt(N/K), each iteration assigns pixels inside a 2S x
2S window around every cluster center using

    D^2 = d_lab^2 + (d_xy / S)^2 * m^2

and recomputes centers from their members. A post-pass enforces
4-connectivity by absorbing fragments smaller than a quarter of the mean
segment size into their largest adjacent segment. Everything is
deterministic for fixed inputs: cluster order breaks assignment ties and
merges process fragments in raster order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from skimage import measure
from skimage.color import rgb2lab

from .errors import DimensionMismatch, TooManySegments, UnknownSegmentId


@dataclass
class SuperpixelMap:
    labels: np.ndarray  # (H, W) int32, ids in [0, n_segments)
    n_segments: int
    params: dict
    _boundaries: dict | None = field(default=None, repr=False, compare=False)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def boundaries(self) -> dict[int, list[list[list[float]]]]:
        """Per-id boundary polylines as [x, y] vertex lists (lazily built)."""
        if self._boundaries is None:
            self._boundaries = _trace_boundaries(self.labels, self.n_segments)
        return self._boundaries


def _seed_grid(h: int, w: int, step: float) -> tuple[np.ndarray, np.ndarray]:
    ny = max(1, round(h / step))
    nx = max(1, round(w / step))
    # Pixel i spans [i-0.5, i+0.5], so a grid centered in the image extent
    # lands at (i+0.5)*(h/ny) - 0.5; when the step is 1 the seeds coincide
    # with pixel centers and the degenerate K = pixel-count case stays exact.
    ys = (np.arange(ny) + 0.5) * (h / ny) - 0.5
    xs = (np.arange(nx) + 0.5) * (w / nx) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return yy.ravel(), xx.ravel()


def slic_superpixels(
    image: np.ndarray, k: int = 600, m: float = 10.0, iterations: int = 10
) -> SuperpixelMap:
    """Segment an RGB uint8 image into roughly k compact superpixels."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionMismatch(f"expected an RGB image, got shape {img.shape}")
    h, w = img.shape[:2]
    n = h * w
    if k < 1:
        raise ValueError(f"segment count must be >= 1, got {k}")
    if k > n:
        raise TooManySegments(f"requested {k} segments for {n} pixels")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")

    lab = rgb2lab(img.astype(np.float64) / 255.0)
    step = math.sqrt(n / k)
    cy, cx = _seed_grid(h, w, step)
    n_seeds = len(cy)
    # Cluster state: position + Lab color sampled at the (rounded) seed.
    centers_pos = np.stack([cy, cx], axis=1)
    iy = np.clip(np.rint(cy).astype(int), 0, h - 1)
    ix = np.clip(np.rint(cx).astype(int), 0, w - 1)
    centers_lab = lab[iy, ix].copy()

    ys = np.arange(h)[:, None]
    xs = np.arange(w)[None, :]
    labels = np.full((h, w), -1, dtype=np.int32)
    inv_s2 = (m / step) ** 2

    for _ in range(iterations):
        dist = np.full((h, w), np.inf)
        labels.fill(-1)
        for c in range(n_seeds):
            y0 = max(0, int(centers_pos[c, 0] - step))
            y1 = min(h, int(centers_pos[c, 0] + step) + 1)
            x0 = max(0, int(centers_pos[c, 1] - step))
            x1 = min(w, int(centers_pos[c, 1] + step) + 1)
            patch = lab[y0:y1, x0:x1]
            d_lab = ((patch - centers_lab[c]) ** 2).sum(axis=2)
            d_pos = (ys[y0:y1] - centers_pos[c, 0]) ** 2 + (xs[:, x0:x1] - centers_pos[c, 1]) ** 2
            d = d_lab + d_pos * inv_s2
            win_dist = dist[y0:y1, x0:x1]
            better = d < win_dist  # strict: ties keep the earlier cluster
            win_dist[better] = d[better]
            labels[y0:y1, x0:x1][better] = c
        # Stragglers outside every window (rare): nearest center by position.
        missing = labels < 0
        if missing.any():
            my, mx = np.nonzero(missing)
            d2 = (my[:, None] - centers_pos[:, 0]) ** 2 + (mx[:, None] - centers_pos[:, 1]) ** 2
            labels[my, mx] = np.argmin(d2, axis=1)
        # Update centers; empty clusters keep their previous state.
        flat = labels.ravel()
        count = np.bincount(flat, minlength=n_seeds)
        nonempty = count > 0
        sums_y = np.bincount(flat, weights=np.broadcast_to(ys, (h, w)).ravel(), minlength=n_seeds)
        sums_x = np.bincount(flat, weights=np.broadcast_to(xs, (h, w)).ravel(), minlength=n_seeds)
        centers_pos[nonempty, 0] = sums_y[nonempty] / count[nonempty]
        centers_pos[nonempty, 1] = sums_x[nonempty] / count[nonempty]
        for ch in range(3):
            s = np.bincount(flat, weights=lab[:, :, ch].ravel(), minlength=n_seeds)
            centers_lab[nonempty, ch] = s[nonempty] / count[nonempty]

    labels = _enforce_connectivity(labels, min_size=(n / n_seeds) / 4.0)
    k_realized = int(labels.max()) + 1
    return SuperpixelMap(
        labels=labels,
        n_segments=k_realized,
        params={"k": k, "m": m, "iterations": iterations},
    )


def _enforce_connectivity(labels: np.ndarray, min_size: float) -> np.ndarray:
    """Absorb small 4-connected fragments into their largest adjacent segment.

    Fragments are processed in raster order of first appearance; the
    surviving components are renumbered 0..K'-1 in raster order.
    """
    cc = measure.label(labels + 1, connectivity=1)  # ids 1..M, raster order
    m_comp = int(cc.max())
    sizes = np.bincount(cc.ravel(), minlength=m_comp + 1).astype(np.int64)

    # Adjacency over 4-neighbor transitions.
    pairs = np.concatenate(
        [
            np.stack([cc[:, :-1].ravel(), cc[:, 1:].ravel()], axis=1),
            np.stack([cc[:-1, :].ravel(), cc[1:, :].ravel()], axis=1),
        ]
    )
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    uniq = np.unique(np.stack([lo, hi], axis=1), axis=0)
    neighbors: dict[int, set[int]] = {c: set() for c in range(1, m_comp + 1)}
    for a, b in uniq:
        neighbors[int(a)].add(int(b))
        neighbors[int(b)].add(int(a))

    parent = np.arange(m_comp + 1)

    def find(c: int) -> int:
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return int(c)

    for c in range(1, m_comp + 1):
        root = find(c)
        if sizes[root] >= min_size:
            continue
        candidate_roots = {find(nb) for nb in neighbors[c]} - {root}
        if not candidate_roots:
            continue
        # Largest adjacent segment wins; ties go to the smaller id.
        target = min(candidate_roots, key=lambda r: (-sizes[r], r))
        parent[root] = target
        sizes[target] += sizes[root]

    roots = np.array([find(c) for c in range(m_comp + 1)])
    comp_roots = roots[cc]
    # Renumber surviving roots by raster order of first appearance.
    flat = comp_roots.ravel()
    first_pos: dict[int, int] = {}
    for pos, r in enumerate(flat):
        if r not in first_pos:
            first_pos[r] = pos
    order = sorted(first_pos, key=first_pos.get)
    remap = np.zeros(m_comp + 1, dtype=np.int32)
    for new_id, r in enumerate(order):
        remap[r] = new_id
    return remap[comp_roots].astype(np.int32)


def labels_to_mask(sp: SuperpixelMap, selected) -> np.ndarray:
    """uint8 mask: 255 where the pixel's superpixel id is selected, else 0."""
    ids = sorted(set(int(s) for s in selected))
    for s in ids:
        if not 0 <= s < sp.n_segments:
            raise UnknownSegmentId(f"superpixel id {s} outside [0, {sp.n_segments})")
    mask = np.isin(sp.labels, ids)
    return (mask * np.uint8(255)).astype(np.uint8)


def _trace_boundaries(labels: np.ndarray, n_segments: int) -> dict[int, list]:
    """Boundary polylines per id via marching squares on each segment's bbox."""
    out: dict[int, list] = {i: [] for i in range(n_segments)}
    for region in measure.regionprops(labels + 1):
        seg_id = region.label - 1
        y0, x0, y1, x1 = region.bbox
        mask = np.pad(region.image.astype(float), 1)
        for contour in measure.find_contours(mask, 0.5):
            poly = [
                [float(x + x0 - 1), float(y + y0 - 1)]  # [x, y] vertex order
                for y, x in contour
            ]
            out[seg_id].append(poly)
    return out


def encode_rle(labels: np.ndarray) -> dict:
    """Row-major run-length encoding: {height, width, values, counts}."""
    flat = labels.ravel()
    if flat.size == 0:
        return {"height": 0, "width": 0, "values": [], "counts": []}
    change = np.nonzero(np.diff(flat))[0] + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [flat.size]])
    return {
        "height": int(labels.shape[0]),
        "width": int(labels.shape[1]),
        "values": [int(v) for v in flat[starts]],
        "counts": [int(e - s) for s, e in zip(starts, ends)],
    }


def decode_rle(obj: dict) -> np.ndarray:
    h, w = obj["height"], obj["width"]
    total = sum(obj["counts"])
    if total != h * w:
        raise ValueError(f"run lengths sum to {total}, expected {h * w}")
    flat = np.repeat(np.asarray(obj["values"], dtype=np.int32), obj["counts"])
    return flat.reshape(h, w)
