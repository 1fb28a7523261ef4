"""Text-line candidate construction from grouped components.

Components that look like characters of one line (similar heights,
centroid pairs aligned with the block orientation) are merged by
transitive closure. Each group yields an oriented box: the minimum-area
rectangle over the members' pixel corners plus anchor points where the
orientation line through the group center meets the block boundary.
The anchors stretch a candidate across gaps where the component
extractor missed characters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blocks import TextBlock, extract_blocks
from .geometry import OrientedRect, line_box_intersections, min_area_oriented_rect, wrap_half_pi
from .imaging import GrayImage, ProbabilityMap
from .mser import Component, MserParams, extract_components
from .orientation import build_profile, estimate_orientation

HEIGHT_RATIO_LOW = 2.0 / 3.0
HEIGHT_RATIO_HIGH = 3.0 / 2.0
PAIR_ANGLE_GATE = math.pi / 12


@dataclass(frozen=True)
class ComponentPair:
    a: int
    b: int
    pair_orientation: float

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("a pair needs two distinct components")
        if not -math.pi / 2 <= self.pair_orientation < math.pi / 2:
            raise ValueError("pair orientation must be canonical")


@dataclass(frozen=True)
class LineGroup:
    members: tuple[int, ...]
    center: tuple[float, float]
    block_id: int

    def __post_init__(self):
        if not self.members:
            raise ValueError("a group needs at least one member")


@dataclass(frozen=True)
class LineCandidate:
    box: OrientedRect
    group: LineGroup
    anchor_points: np.ndarray


def pair_orientation(a: Component, b: Component) -> float:
    """Canonical angle of the centroid-to-centroid segment."""
    dx = b.centroid[0] - a.centroid[0]
    dy = b.centroid[1] - a.centroid[1]
    return wrap_half_pi(math.atan2(dy, dx))


def pair_compatible(
    a: Component, b: Component, theta_r: float, gate: float = PAIR_ANGLE_GATE
) -> bool:
    """Similar heights and a centroid segment aligned with theta_r."""
    ratio = a.height / b.height
    if not HEIGHT_RATIO_LOW < ratio < HEIGHT_RATIO_HIGH:
        return False
    diff = wrap_half_pi(pair_orientation(a, b) - theta_r)
    return -gate < diff < gate


def group_components(
    components: list[Component],
    theta_r: float,
    block_id: int = 0,
    gate: float = PAIR_ANGLE_GATE,
) -> list[LineGroup]:
    """Connected components of the compatible-pair graph; singletons kept."""
    n = len(components)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if pair_compatible(components[i], components[j], theta_r, gate):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    grouped: dict[int, list[int]] = {}
    for i in range(n):
        grouped.setdefault(find(i), []).append(i)
    out = []
    for root in sorted(grouped):
        members = tuple(sorted(grouped[root]))
        cx = float(np.mean([components[i].centroid[0] for i in members]))
        cy = float(np.mean([components[i].centroid[1] for i in members]))
        out.append(LineGroup(members=members, center=(cx, cy), block_id=block_id))
    return out


def anchor_points(group: LineGroup, theta_r: float, block: TextBlock) -> np.ndarray:
    """Block boundary pixels within half a pixel of the orientation line.

    Falls back to the line's two block-bbox intersections when the band
    catches no boundary pixel (possible for sparse or concave blocks).
    """
    x0, y0, x1, y1 = block.bbox
    cx, cy = group.center
    if not (x0 - 0.5 <= cx <= x1 + 0.5 and y0 - 0.5 <= cy <= y1 + 0.5):
        raise ValueError("group center lies outside the block bounding box")
    normal = np.array([-math.sin(theta_r), math.cos(theta_r)])
    rel = block.boundary.astype(np.float64) - np.array([cx, cy])
    dist = rel @ normal
    hits = block.boundary[np.abs(dist) <= 0.5].astype(np.float64)
    if len(hits):
        return hits
    direction = np.array([math.cos(theta_r), math.sin(theta_r)])
    footprint = (x0 - 0.5, y0 - 0.5, x1 + 0.5, y1 + 0.5)
    return line_box_intersections(np.array([cx, cy]), direction, footprint)


def make_candidate(
    group: LineGroup, anchors: np.ndarray, components: list[Component]
) -> LineCandidate:
    """Minimum-area oriented box over member pixel corners and anchors."""
    pieces = []
    for i in group.members:
        p = components[i].pixels.pixels.astype(np.float64)
        for dx in (-0.5, 0.5):
            for dy in (-0.5, 0.5):
                pieces.append(p + np.array([dx, dy]))
    if len(anchors):
        pieces.append(np.asarray(anchors, dtype=np.float64).reshape(-1, 2))
    box = min_area_oriented_rect(np.vstack(pieces))
    return LineCandidate(box=box, group=group, anchor_points=np.asarray(anchors, dtype=np.float64))


def generate_all(
    image: GrayImage,
    saliency: ProbabilityMap,
    *,
    threshold: float = 0.2,
    min_block_area: int = 20,
    mser_params: MserParams = MserParams(),
    angle_step: float = math.pi / 180,
    area_basis: str = "block",
    pair_angle_gate: float = PAIR_ANGLE_GATE,
) -> list[LineCandidate]:
    """Blocks -> components -> orientation -> groups -> candidate boxes."""
    out = []
    for block in extract_blocks(saliency, threshold=threshold, min_area=min_block_area):
        components = extract_components(image, block, mser_params, area_basis=area_basis)
        if not components:
            continue
        theta_r = estimate_orientation(build_profile(components, block, angle_step))
        for group in group_components(components, theta_r, block_id=block.id, gate=pair_angle_gate):
            anchors = anchor_points(group, theta_r, block)
            out.append(make_candidate(group, anchors, components))
    return out
