"""Candidate scoring and rejection.

Each line candidate is rectified to a horizontal raster of fixed height,
scored by a centroid predictor, and kept only when its centroids look like
a row of characters: enough of them, confident on average, and arranged
along a near-horizontal line. Surviving detections go through rotated-box
non-maximum suppression and, optionally, a gap-based word partition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from .candidates import LineCandidate
from .geometry import OrientedRect, rotated_iou
from .imaging import BinaryMask, GrayImage, ProbabilityMap, _readonly, connected_components
from .saliency import PixelNet, make_centroid_gt, predict

NORMALIZED_HEIGHT = 32
MIN_NORMALIZED_WIDTH = 8


@dataclass(frozen=True)
class FilterParams:
    """Thresholds used by the candidate filter."""

    min_centroids: int = 2
    min_avg_score: float = 0.6
    max_mu: float = math.pi / 32
    max_sigma: float = math.pi / 16
    nms_overlap: float = 0.5
    peak_floor: float = 0.3
    peak_radius_fraction: float = 0.25

    def __post_init__(self):
        for name in (
            "min_centroids",
            "min_avg_score",
            "max_mu",
            "max_sigma",
            "peak_floor",
            "peak_radius_fraction",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.nms_overlap < 1.0:
            raise ValueError("nms_overlap must lie in (0, 1)")


@dataclass(frozen=True)
class CentroidSet:
    """Detected character centroids in the normalized raster.

    `points` is an (n, 2) float array of (x, y) raster coordinates sorted
    by x, `scores` the matching map values in [0, 1].
    """

    points: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        sc = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if pts.shape[0] != sc.shape[0]:
            raise ValueError("points and scores must pair up")
        if sc.size and (sc.min() < 0.0 or sc.max() > 1.0):
            raise ValueError("scores must lie in [0, 1]")
        if pts.shape[0] > 1 and np.any(np.diff(pts[:, 0]) < 0):
            raise ValueError("points must be sorted by x")
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "scores", _readonly(sc))

    @property
    def n_c(self) -> int:
        return int(self.scores.size)


@dataclass(frozen=True)
class Detection:
    """A surviving text line: its box, summed centroid score, word boxes."""

    box: OrientedRect
    score: float
    words: Optional[tuple[OrientedRect, ...]] = None

    def __post_init__(self):
        if not (math.isfinite(self.score) and self.score >= 0.0):
            raise ValueError("score must be finite and non-negative")


def _sample_bilinear(data: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear lookup at float coordinates, clamped to the image border."""
    h, w = data.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.minimum(x0, w - 2) if w > 1 else np.zeros_like(x0)
    y0 = np.minimum(y0, h - 2) if h > 1 else np.zeros_like(y0)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = data[y0, x0] * (1.0 - fx) + data[y0, x1] * fx
    bot = data[y1, x0] * (1.0 - fx) + data[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def normalized_width(box: OrientedRect) -> int:
    """Raster width assigned to a box rectified to NORMALIZED_HEIGHT."""
    if box.area <= 0.0:
        raise ValueError("zero-area box")
    return max(
        MIN_NORMALIZED_WIDTH,
        round(box.length * NORMALIZED_HEIGHT / box.thickness),
    )


def normalize_box(image: GrayImage, box: OrientedRect) -> GrayImage:
    """Resample the image under an oriented box into an upright raster.

    The box's long axis maps to the raster's x axis, its thickness to a
    fixed height of NORMALIZED_HEIGHT rows; width is proportional with a
    floor of MIN_NORMALIZED_WIDTH. Sampling is bilinear with border clamp.
    """
    w = normalized_width(box)
    h = NORMALIZED_HEIGHT
    length, thickness = box.size
    u, v = box.axes()
    a = (np.arange(w) + 0.5) * (length / w) - length / 2.0
    b = (np.arange(h) + 0.5) * (thickness / h) - thickness / 2.0
    cx, cy = box.center
    xs = cx + np.add.outer(b * v[0], a * u[0])
    ys = cy + np.add.outer(b * v[1], a * u[1])
    vals = _sample_bilinear(image.data.astype(np.float64), xs, ys)
    return GrayImage(np.clip(np.floor(vals + 0.5), 0, 255).astype(np.uint8))


def normalize_candidate(image: GrayImage, cand: LineCandidate) -> GrayImage:
    return normalize_box(image, cand.box)


def raster_to_local(box: OrientedRect, xs, ys):
    """Map normalized raster coordinates back to box-local (along, across)."""
    w = normalized_width(box)
    length, thickness = box.size
    a = (np.asarray(xs, dtype=np.float64) + 0.5) * (length / w) - length / 2.0
    b = (np.asarray(ys, dtype=np.float64) + 0.5) * (thickness / NORMALIZED_HEIGHT) - thickness / 2.0
    return a, b


def extract_centroids(centroid_map: ProbabilityMap, params: FilterParams = FilterParams()) -> CentroidSet:
    """Collect dominant local maxima of a centroid probability map.

    A pixel is kept when its value reaches `peak_floor` and no pixel within
    a Chebyshev radius of `peak_radius_fraction` times the map height beats
    it; equal-valued pixels inside the window defer to the smallest
    row-major index, so a plateau yields exactly one centroid.
    """
    data = centroid_map.data
    h, w = data.shape
    radius = max(1, round(params.peak_radius_fraction * h))
    footprint = 2 * radius + 1
    window_max = ndimage.maximum_filter(data, size=footprint, mode="constant", cval=0.0)
    cand_rows, cand_cols = np.nonzero((data >= params.peak_floor) & (data == window_max))
    keep_x, keep_y, keep_s = [], [], []
    for r, c in zip(cand_rows.tolist(), cand_cols.tolist()):
        v = data[r, c]
        r0, r1 = max(0, r - radius), min(h, r + radius + 1)
        c0, c1 = max(0, c - radius), min(w, c + radius + 1)
        tie_rows, tie_cols = np.nonzero(data[r0:r1, c0:c1] == v)
        first = np.min((tie_rows + r0) * w + (tie_cols + c0))
        if first == r * w + c:
            keep_x.append(float(c))
            keep_y.append(float(r))
            keep_s.append(float(v))
    if not keep_x:
        return CentroidSet(np.empty((0, 2)), np.empty(0))
    order = np.lexsort((keep_y, keep_x))
    pts = np.column_stack((keep_x, keep_y))[order]
    return CentroidSet(pts, np.asarray(keep_s)[order])


def intensity_criterion(cs: CentroidSet, params: FilterParams = FilterParams()) -> bool:
    """Reject candidates with too few centroids or a weak average score."""
    if cs.n_c < params.min_centroids:
        return False
    return not float(np.mean(cs.scores)) < params.min_avg_score


def _pairwise_angles(points: np.ndarray) -> np.ndarray:
    n = points.shape[0]
    i, j = np.triu_indices(n, k=1)
    d = points[j] - points[i]
    ang = np.arctan2(d[:, 1], d[:, 0])
    ang = (ang + math.pi / 2) % math.pi - math.pi / 2
    return np.abs(ang)


def geometric_criterion(cs: CentroidSet, params: FilterParams = FilterParams()) -> bool:
    """Accept centroid layouts that hug the candidate's own axis.

    Over all unordered centroid pairs the absolute segment angle in the
    rectified frame must have a small mean and a small population spread.
    """
    if cs.n_c < 2:
        raise ValueError("criterion undefined")
    angles = _pairwise_angles(cs.points)
    mu = float(np.mean(angles))
    sigma = float(np.std(angles))
    return mu < params.max_mu and sigma < params.max_sigma


def nms(detections: Sequence[Detection], overlap: float) -> list[Detection]:
    """Greedy suppression of lower-scored boxes that overlap a kept one."""
    if not 0.0 < overlap < 1.0:
        raise ValueError("overlap must lie in (0, 1)")
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    kept: list[Detection] = []
    for i in order:
        det = detections[i]
        if all(rotated_iou(det.box, k.box) <= overlap for k in kept):
            kept.append(det)
    return kept


def word_partition(det: Detection, cs: CentroidSet) -> list[OrientedRect]:
    """Split a detection into word boxes at large centroid gaps.

    Gaps wider than both 1.5 times the median consecutive gap and 8 raster
    pixels separate words; each run of centroids becomes a sub-box padded
    by half the median gap, spanning the full thickness. With a single
    centroid the pad falls back to half the raster height.
    """
    if cs.n_c < 1:
        raise ValueError("word partition needs at least one centroid")
    xs = cs.points[:, 0]
    gaps = np.diff(xs)
    if gaps.size:
        median_gap = float(np.median(gaps))
        pad = median_gap / 2.0
        cut_after = np.nonzero((gaps > 1.5 * median_gap) & (gaps > 8.0))[0]
    else:
        pad = NORMALIZED_HEIGHT / 2.0
        cut_after = np.empty(0, dtype=np.int64)
    box = det.box
    length, thickness = box.size
    w = normalized_width(box)
    scale = length / w
    u, _ = box.axes()
    words = []
    start = 0
    for stop in list(cut_after + 1) + [xs.size]:
        xl = xs[start] - pad
        xr = xs[stop - 1] + pad
        al = max((xl + 0.5) * scale - length / 2.0, -length / 2.0)
        ar = min((xr + 0.5) * scale - length / 2.0, length / 2.0)
        mid = (al + ar) / 2.0
        center = (box.center[0] + mid * u[0], box.center[1] + mid * u[1])
        words.append(OrientedRect(center, (ar - al, thickness), box.angle))
        start = stop
    return words


def dark_blob_scorer(patch: GrayImage, cand: Optional[LineCandidate] = None) -> ProbabilityMap:
    """Net-free centroid maps: unit disks at the centroids of dark blobs.

    Thresholds the rectified patch at mid-gray, treats each connected dark
    region as a character and stamps the same disk ground truth the
    centroid net would be trained on. Useful for running the geometric
    pipeline without any trained model.
    """
    mask = patch.data < 128
    chars = []
    for region in connected_components(BinaryMask(mask), 8):
        _, y0, _, y1 = region.bbox
        pix = region.pixels
        centroid = (float(pix[:, 0].mean()), float(pix[:, 1].mean()))
        chars.append((centroid, float(y1 - y0 + 1)))
    return make_centroid_gt((patch.width, patch.height), chars)


Scorer = Union[PixelNet, Callable[[GrayImage, LineCandidate], ProbabilityMap]]


def filter_pipeline(
    image: GrayImage,
    candidates: Sequence[LineCandidate],
    centroid_net: Scorer,
    params: FilterParams = FilterParams(),
    *,
    partition_words: bool = False,
) -> list[Detection]:
    """Score, filter and deduplicate line candidates.

    `centroid_net` is either a trained net applied to each rectified patch
    or a callable `(patch, candidate) -> ProbabilityMap` supplying maps
    from elsewhere (precomputed or ground-truth derived).
    """
    if isinstance(centroid_net, PixelNet):
        net = centroid_net
        scorer = lambda patch, cand: predict(net, patch)
    elif callable(centroid_net):
        scorer = centroid_net
    else:
        raise TypeError("centroid_net must be a PixelNet or a callable")
    scored: list[Detection] = []
    sets: dict[int, CentroidSet] = {}
    for cand in candidates:
        patch = normalize_candidate(image, cand)
        cs = extract_centroids(scorer(patch, cand), params)
        if not intensity_criterion(cs, params):
            continue
        if not geometric_criterion(cs, params):
            continue
        det = Detection(box=cand.box, score=float(np.sum(cs.scores)))
        scored.append(det)
        sets[id(det)] = cs
    kept = nms(scored, params.nms_overlap)
    if partition_words:
        kept = [
            replace(det, words=tuple(word_partition(det, sets[id(det)])))
            for det in kept
        ]
    return kept
