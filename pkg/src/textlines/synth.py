"""Synthetic labeled scenes for training and end-to-end checks.

Scenes are glyph blobs (filled rectangles and ellipses) laid out along a
straight line at a sampled orientation, over a low-frequency gradient
background with Gaussian noise. All ground truth (line boxes, character
centroids and heights, word boxes) is recorded exactly as constructed, so
downstream metrics computed against it carry no annotation error.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .filtering import NORMALIZED_HEIGHT, normalize_box, normalized_width
from .geometry import OrientedRect, rect_intersection_area
from .imaging import GrayImage, ProbabilityMap, save_image, save_probability_map
from .saliency import make_block_gt, make_centroid_gt

_PLACEMENT_ATTEMPTS = 100
_WORD_GAP_FACTOR = 3.2
_WORD_SPLIT_PROB = 0.25


@dataclass(frozen=True)
class SynthSpec:
    """Sampling ranges for scene generation; endpoints are inclusive."""

    image_size: tuple[int, int] = (240, 180)
    line_count: tuple[int, int] = (1, 3)
    chars_per_line: tuple[int, int] = (3, 7)
    char_height: tuple[int, int] = (12, 18)
    orientation: tuple[float, float] = (-math.pi / 3, math.pi / 3)
    noise_stddev: float = 6.0
    min_clearance: float = 5.0
    seed: int = 0

    def __post_init__(self):
        w, h = self.image_size
        if w < 16 or h < 16:
            raise ValueError("image_size too small")
        for name in ("line_count", "chars_per_line", "char_height", "orientation"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is empty")
        if self.line_count[0] < 0:
            raise ValueError("line_count must be non-negative")
        if self.chars_per_line[0] < 1:
            raise ValueError("chars_per_line must be positive")
        if self.char_height[0] < 6:
            raise ValueError("char_height must be at least 6 px")
        lo, hi = self.orientation
        if lo < -math.pi / 2 or hi >= math.pi / 2:
            raise ValueError("orientation range must lie in [-pi/2, pi/2)")
        if self.noise_stddev < 0:
            raise ValueError("noise_stddev must be non-negative")
        if self.min_clearance < 0:
            raise ValueError("min_clearance must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class SynthScene:
    image: GrayImage
    line_boxes: tuple[OrientedRect, ...]
    chars: tuple[tuple[tuple[float, float], float], ...]
    words: tuple[OrientedRect, ...]

    def __post_init__(self):
        w, h = self.image.width, self.image.height
        for box in self.line_boxes + self.words:
            c = box.corners()
            if (
                c[:, 0].min() < -0.5
                or c[:, 1].min() < -0.5
                or c[:, 0].max() > w - 0.5
                or c[:, 1].max() > h - 0.5
            ):
                raise ValueError("box extends outside the image")
        if self.chars:
            pts = np.array([c for c, _ in self.chars], dtype=np.float64)
            inside = np.zeros(len(self.chars), dtype=bool)
            for box in self.line_boxes:
                inside |= box.contains_points(pts)
            if not inside.all():
                raise ValueError("character centroid outside every line box")


def _sample_line(rng, spec: SynthSpec):
    """Draw one line's layout: orientation, sizes, per-char offsets."""
    o_lo, o_hi = spec.orientation
    theta = float(rng.uniform(o_lo, o_hi))
    hc = int(rng.integers(spec.char_height[0], spec.char_height[1] + 1))
    k = int(rng.integers(spec.chars_per_line[0], spec.chars_per_line[1] + 1))
    widths = rng.uniform(0.55, 0.8, size=k) * hc
    gaps = rng.uniform(0.45, 0.7, size=max(k - 1, 0)) * hc
    word_break = rng.uniform(size=max(k - 1, 0)) < _WORD_SPLIT_PROB
    gaps = np.where(word_break, gaps * _WORD_GAP_FACTOR, gaps)
    jitter = rng.uniform(-0.05, 0.05, size=k) * hc
    shapes = rng.integers(0, 2, size=k)
    ink = float(rng.uniform(20, 80))
    margin = 0.35 * hc
    length = float(widths.sum() + gaps.sum() + 2 * margin)
    thickness = 1.3 * hc
    # char center offsets along the line axis, relative to the box center
    starts = np.concatenate(([0.0], np.cumsum(widths[:-1] + gaps)))
    centers = starts + widths / 2
    centers += margin - length / 2
    return theta, hc, widths, centers, jitter, shapes, ink, word_break, length, thickness


def _place_box(rng, spec: SynthSpec, length, thickness, theta, placed):
    w, h = spec.image_size
    ex = (length / 2) * abs(math.cos(theta)) + (thickness / 2) * abs(math.sin(theta))
    ey = (length / 2) * abs(math.sin(theta)) + (thickness / 2) * abs(math.cos(theta))
    x_lo, x_hi = ex + 2.0, w - 1 - ex - 2.0
    y_lo, y_hi = ey + 2.0, h - 1 - ey - 2.0
    if x_lo > x_hi or y_lo > y_hi:
        return None
    cx = float(rng.uniform(x_lo, x_hi))
    cy = float(rng.uniform(y_lo, y_hi))
    box = OrientedRect((cx, cy), (length, thickness), theta)
    gap = spec.min_clearance
    fat = OrientedRect((cx, cy), (length + gap, thickness + gap), theta)
    for other in placed:
        if rect_intersection_area(fat, other) > 0.0:
            return None
    return box, fat


def _paint_glyph(canvas, cx, cy, width, height, theta, shape, ink):
    h, w = canvas.shape
    reach = math.hypot(width, height) / 2 + 1
    x0, x1 = max(0, int(cx - reach)), min(w, int(cx + reach) + 2)
    y0, y1 = max(0, int(cy - reach)), min(h, int(cy + reach) + 2)
    ys, xs = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    dx, dy = xs - cx, ys - cy
    a = dx * math.cos(theta) + dy * math.sin(theta)
    b = -dx * math.sin(theta) + dy * math.cos(theta)
    if shape == 0:
        mask = (np.abs(a) <= width / 2) & (np.abs(b) <= height / 2)
    else:
        mask = (a / (width / 2)) ** 2 + (b / (height / 2)) ** 2 <= 1.0
    canvas[y0:y1, x0:x1][mask] = ink


def generate_scene(spec: SynthSpec, index: int = 0) -> SynthScene:
    """Render one scene; deterministic in (spec.seed, index)."""
    rng = np.random.default_rng([spec.seed, index])
    w, h = spec.image_size
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    base = float(rng.uniform(120, 190))
    gx, gy = rng.uniform(-0.15, 0.15, size=2)
    canvas = base + gx * xs + gy * ys
    n_lines = int(rng.integers(spec.line_count[0], spec.line_count[1] + 1))
    placed_fat: list[OrientedRect] = []
    line_boxes: list[OrientedRect] = []
    chars: list[tuple[tuple[float, float], float]] = []
    words: list[OrientedRect] = []
    for _ in range(n_lines):
        for _attempt in range(_PLACEMENT_ATTEMPTS):
            (theta, hc, widths, centers, jitter, shapes, ink, word_break,
             length, thickness) = _sample_line(rng, spec)
            hit = _place_box(rng, spec, length, thickness, theta, placed_fat)
            if hit is not None:
                break
        else:
            raise ValueError("spec too dense")
        box, fat = hit
        placed_fat.append(fat)
        line_boxes.append(box)
        u, v = box.axes()
        pad = 0.3 * hc
        run_start = 0
        for i in range(len(centers)):
            gcx = box.center[0] + centers[i] * u[0] + jitter[i] * v[0]
            gcy = box.center[1] + centers[i] * u[1] + jitter[i] * v[1]
            _paint_glyph(canvas, gcx, gcy, widths[i], hc, theta, int(shapes[i]), ink)
            chars.append(((gcx, gcy), float(hc)))
            last = i + 1 == len(centers)
            if last or word_break[i]:
                lo = centers[run_start] - widths[run_start] / 2 - pad
                hi = centers[i] + widths[i] / 2 + pad
                mid = (lo + hi) / 2
                words.append(
                    OrientedRect(
                        (box.center[0] + mid * u[0], box.center[1] + mid * u[1]),
                        (hi - lo, thickness),
                        theta,
                    )
                )
                run_start = i + 1
    if spec.noise_stddev > 0:
        canvas = canvas + rng.normal(0.0, spec.noise_stddev, size=canvas.shape)
    image = GrayImage(np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8))
    return SynthScene(image, tuple(line_boxes), tuple(chars), tuple(words))


def generate_corpus(
    spec: SynthSpec, count: int
) -> list[tuple[GrayImage, ProbabilityMap, ProbabilityMap]]:
    """Scene images paired with block and centroid ground-truth maps."""
    if count < 1:
        raise ValueError("count must be positive")
    out = []
    for i in range(count):
        scene = generate_scene(spec, i)
        block = make_block_gt(spec.image_size, list(scene.line_boxes))
        centroid = make_centroid_gt(spec.image_size, list(scene.chars))
        out.append((scene.image, block, centroid))
    return out


def patch_ground_truth(scene: SynthScene, box: OrientedRect):
    """Char centroids and heights mapped into the box's rectified raster."""
    width = normalized_width(box)
    length, thickness = box.size
    scale_x = width / length
    scale_y = NORMALIZED_HEIGHT / thickness
    out = []
    pts = np.array([c for c, _ in scene.chars], dtype=np.float64).reshape(-1, 2)
    if pts.size == 0:
        return out
    inside = box.contains_points(pts)
    local = box.to_local(pts)
    for k in range(pts.shape[0]):
        if not inside[k]:
            continue
        x = (local[k, 0] + length / 2) * scale_x - 0.5
        y = (local[k, 1] + thickness / 2) * scale_y - 0.5
        out.append(((float(x), float(y)), float(scene.chars[k][1] * scale_y)))
    return out


def write_corpus(spec: SynthSpec, count: int, out_dir) -> list[SynthScene]:
    """Write paired training files, per-scene box files and a manifest.

    Layout under `out_dir`: block/NNNN.pgm + NNNN.gt.pgm hold each scene
    and its block map; centroid/NNNN.pgm + NNNN.gt.pgm hold rectified line
    patches and their centroid maps (numbered across scenes); gt/NNNN.txt
    holds the line boxes; scenes.jsonl records everything per scene.
    """
    if count < 1:
        raise ValueError("count must be positive")
    block_dir = os.path.join(out_dir, "block")
    centroid_dir = os.path.join(out_dir, "centroid")
    gt_dir = os.path.join(out_dir, "gt")
    for d in (block_dir, centroid_dir, gt_dir):
        os.makedirs(d, exist_ok=True)
    scenes = []
    patch_index = 0
    manifest_path = os.path.join(out_dir, "scenes.jsonl")
    with open(manifest_path, "w", encoding="utf-8") as manifest:
        for i in range(count):
            scene = generate_scene(spec, i)
            scenes.append(scene)
            name = f"{i:04d}"
            save_image(scene.image, os.path.join(block_dir, f"{name}.pgm"))
            save_probability_map(
                make_block_gt(spec.image_size, list(scene.line_boxes)),
                os.path.join(block_dir, f"{name}.gt.pgm"),
            )
            for box in scene.line_boxes:
                patch = normalize_box(scene.image, box)
                gt = make_centroid_gt(
                    (patch.width, patch.height), patch_ground_truth(scene, box)
                )
                pname = f"{patch_index:04d}"
                save_image(patch, os.path.join(centroid_dir, f"{pname}.pgm"))
                save_probability_map(gt, os.path.join(centroid_dir, f"{pname}.gt.pgm"))
                patch_index += 1
            with open(os.path.join(gt_dir, f"{name}.txt"), "w", encoding="utf-8") as fh:
                for box in scene.line_boxes:
                    fh.write(
                        f"{box.center[0]!r} {box.center[1]!r} {box.length!r} "
                        f"{box.thickness!r} {box.angle!r} 0\n"
                    )
            record = {
                "index": i,
                "image": f"block/{name}.pgm",
                "gt": f"gt/{name}.txt",
                "line_boxes": [
                    [b.center[0], b.center[1], b.length, b.thickness, b.angle]
                    for b in scene.line_boxes
                ],
                "chars": [[c[0], c[1], hgt] for (c, hgt) in scene.chars],
                "words": [
                    [b.center[0], b.center[1], b.length, b.thickness, b.angle]
                    for b in scene.words
                ],
            }
            manifest.write(json.dumps(record) + "\n")
    return scenes
