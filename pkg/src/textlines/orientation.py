"""Dominant orientation of a text block via line-crossing profiles.

For a grid of angles theta and integer perpendicular offsets h (relative
to the block bounding-box center), the profile counts how many component
bounding boxes the line with direction theta at offset h crosses. The
block's orientation estimate is the angle whose best line crosses the
most components, preferring horizontal on ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blocks import TextBlock
from .mser import Component


@dataclass(frozen=True)
class ProjectionProfile:
    angles: np.ndarray  # sampled theta grid, radians
    offsets: np.ndarray  # signed integer perpendicular offsets
    counts: np.ndarray  # (len(angles), len(offsets)) crossing counts

    def __post_init__(self):
        if self.counts.shape != (len(self.angles), len(self.offsets)):
            raise ValueError("counts table does not match the angle/offset grids")
        if (self.counts < 0).any():
            raise ValueError("crossing counts must be non-negative")

    @property
    def offsets_per_angle(self) -> int:
        return len(self.offsets)


def build_profile(
    components: list[Component], block: TextBlock, angle_step: float = math.pi / 180
) -> ProjectionProfile:
    """Count component-bbox crossings for every (angle, offset) line."""
    if not components:
        raise ValueError("empty component list")
    if angle_step <= 0:
        raise ValueError("angle_step must be positive")
    n_angles = int(round(math.pi / angle_step))
    angles = (np.arange(n_angles) - n_angles // 2) * angle_step

    x0, y0, x1, y1 = block.bbox
    center = np.array([(x0 + x1) / 2.0, (y0 + y1) / 2.0])
    half_diag = math.hypot(x1 - x0 + 1, y1 - y0 + 1) / 2.0
    reach = int(math.ceil(half_diag))
    offsets = np.arange(-reach, reach + 1)

    boxes = np.array([c.bbox for c in components], dtype=np.float64)
    centers = np.column_stack(((boxes[:, 0] + boxes[:, 2]) / 2, (boxes[:, 1] + boxes[:, 3]) / 2))
    extents = np.column_stack(((boxes[:, 2] - boxes[:, 0] + 1) / 2, (boxes[:, 3] - boxes[:, 1] + 1) / 2))

    counts = np.zeros((n_angles, offsets.size), dtype=np.int64)
    rel = centers - center
    for ti, theta in enumerate(angles):
        s, c = math.sin(theta), math.cos(theta)
        proj = rel[:, 0] * -s + rel[:, 1] * c  # offset of each bbox center
        radius = extents[:, 0] * abs(s) + extents[:, 1] * abs(c)
        lo = np.ceil(proj - radius).astype(np.int64)
        hi = np.floor(proj + radius).astype(np.int64)
        lo = np.maximum(lo, -reach)
        hi = np.minimum(hi, reach)
        diff = np.zeros(offsets.size + 1, dtype=np.int64)
        keep = lo <= hi
        np.add.at(diff, lo[keep] + reach, 1)
        np.add.at(diff, hi[keep] + reach + 1, -1)
        counts[ti] = np.cumsum(diff[:-1])
    return ProjectionProfile(angles=angles, offsets=offsets, counts=counts)


def estimate_orientation(profile: ProjectionProfile) -> float:
    """Angle of the line crossing the most components.

    Ties prefer the angle closest to horizontal, then the smaller angle.
    """
    peaks = profile.counts.max(axis=1)
    best = peaks.max()
    tied = np.nonzero(peaks == best)[0]
    order = sorted(tied, key=lambda i: (abs(profile.angles[i]), profile.angles[i]))
    return float(profile.angles[order[0]])
