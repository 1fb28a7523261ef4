"""Detection scoring against ground truth.

Two protocols: a rotated-box protocol that gates matches on both the
rotated-rectangle overlap and the orientation difference, and an
axis-aligned protocol that only looks at the overlap of the boxes'
axis-aligned hulls. Matching is greedy by detection score and one-to-one.
Ground-truth entries flagged difficult are excluded from the recall
denominator; a detection matching one still counts toward precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .filtering import Detection
from .geometry import OrientedRect, axis_aligned_iou, rotated_iou, wrap_half_pi

ROTATED_MIN_OVERLAP = 0.5
ROTATED_MAX_ANGLE_DIFF = math.pi / 8
AXIS_MIN_IOU = 0.5


@dataclass(frozen=True)
class GroundTruthEntry:
    box: OrientedRect
    difficult: bool = False


@dataclass(frozen=True)
class ImageMatches:
    """Matching outcome for one image: (det, gt) index pairs plus counts."""

    pairs: tuple[tuple[int, int], ...]
    det_count: int
    gt_count: int
    difficult: tuple[bool, ...]

    def __post_init__(self):
        if self.det_count < 0 or self.gt_count < 0:
            raise ValueError("counts must be non-negative")
        if len(self.difficult) != self.gt_count:
            raise ValueError("one difficult flag per ground-truth entry")
        dets = [i for i, _ in self.pairs]
        gts = [j for _, j in self.pairs]
        if len(set(dets)) != len(dets) or len(set(gts)) != len(gts):
            raise ValueError("matches must be one-to-one")
        if any(not 0 <= i < self.det_count for i in dets):
            raise ValueError("detection index out of range")
        if any(not 0 <= j < self.gt_count for j in gts):
            raise ValueError("ground-truth index out of range")

    @property
    def matched_plain(self) -> int:
        return sum(1 for _, j in self.pairs if not self.difficult[j])

    @property
    def plain_gt_count(self) -> int:
        return sum(1 for d in self.difficult if not d)


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f_measure: float
    images: tuple[ImageMatches, ...]


def angle_difference(a: float, b: float) -> float:
    """Distance between two line orientations, in [0, pi/2]."""
    return abs(wrap_half_pi(a - b))


def _greedy_match(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthEntry],
    qualifies,
) -> ImageMatches:
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    taken = set()
    pairs = []
    for i in order:
        best, best_iou = None, -1.0
        for j, gt in enumerate(gts):
            if j in taken:
                continue
            ok, iou = qualifies(dets[i].box, gt.box)
            if ok and iou > best_iou:
                best, best_iou = j, iou
        if best is not None:
            taken.add(best)
            pairs.append((i, best))
    return ImageMatches(
        pairs=tuple(sorted(pairs)),
        det_count=len(dets),
        gt_count=len(gts),
        difficult=tuple(g.difficult for g in gts),
    )


def match_rotated(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthEntry],
    min_overlap: float = ROTATED_MIN_OVERLAP,
    max_angle_diff: float = ROTATED_MAX_ANGLE_DIFF,
) -> ImageMatches:
    """One-to-one matches under the rotated overlap + orientation gate."""

    def qualifies(d: OrientedRect, g: OrientedRect):
        iou = rotated_iou(d, g)
        ok = iou > min_overlap and angle_difference(d.angle, g.angle) < max_angle_diff
        return ok, iou

    return _greedy_match(dets, gts, qualifies)


def match_axis_aligned(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthEntry],
    min_iou: float = AXIS_MIN_IOU,
) -> ImageMatches:
    """One-to-one matches on axis-aligned hull overlap only."""

    def qualifies(d: OrientedRect, g: OrientedRect):
        iou = axis_aligned_iou(d, g)
        return iou > min_iou, iou

    return _greedy_match(dets, gts, qualifies)


def report(matches: Iterable[ImageMatches]) -> EvalReport:
    """Aggregate precision, recall and F-measure over per-image matches."""
    images = tuple(matches)
    det_total = sum(m.det_count for m in images)
    matched_total = sum(len(m.pairs) for m in images)
    plain_total = sum(m.plain_gt_count for m in images)
    matched_plain = sum(m.matched_plain for m in images)
    precision = matched_total / det_total if det_total else 0.0
    recall = matched_plain / plain_total if plain_total else 0.0
    if precision + recall > 0.0:
        f_measure = 2.0 * precision * recall / (precision + recall)
    else:
        f_measure = 0.0
    return EvalReport(precision, recall, f_measure, images)


# ---------------------------------------------------------------------------
# ground-truth files


def load_ground_truth(path) -> list[GroundTruthEntry]:
    """Read one box per line: x y length thickness angle [difficult]."""
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) not in (5, 6):
                raise ValueError(f"line {lineno}: expected 5 or 6 fields")
            try:
                x, y, length, thickness, angle = (float(v) for v in fields[:5])
                difficult = bool(int(fields[5])) if len(fields) == 6 else False
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
            entries.append(
                GroundTruthEntry(OrientedRect((x, y), (length, thickness), angle), difficult)
            )
    return entries


def save_ground_truth(entries: Iterable[GroundTruthEntry], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(
                f"{e.box.center[0]!r} {e.box.center[1]!r} {e.box.length!r} "
                f"{e.box.thickness!r} {e.box.angle!r} {int(e.difficult)}\n"
            )
