"""Maximally stable extremal regions inside a text block.

The extractor sweeps intensity levels of the block's image crop (both
polarities: the crop itself for dark-on-light, its inversion for
light-on-dark) and builds the component tree of the sub-level sets
{p : I(p) <= g}. Every tree branch is identified by its canonical seed,
the pixel with the smallest (intensity, row-major index) pair in the
region; a branch runs from the seed's own level until its region is
absorbed into one with a smaller seed.

For a branch region R at integer level g, the stability ratio is

    q(g) = (|R_up| - |R_down|) / |R(g)|

where R_up is the region containing the seed at level min(g + delta,
255) and R_down is the branch's own region at g - delta (empty below
the seed's level). Regions at non-strict local minima of q along the
branch are emitted, the size/aspect/containment filters are applied,
and the most stable survivor (smallest q, then smallest g) of each
branch is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .blocks import TextBlock
from .imaging import GrayImage, PixelRegion

DARK_ON_LIGHT = "dark-on-light"
LIGHT_ON_DARK = "light-on-dark"

_STRUCT8 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class MserParams:
    delta: int = 5
    t1_min_area_ratio: float = 0.005
    t2_max_aspect: float = 3.0
    max_area_ratio: float = 0.25

    def __post_init__(self):
        if self.delta < 1:
            raise ValueError("delta must be >= 1")
        if not 0.0 < self.t1_min_area_ratio < 1.0:
            raise ValueError("t1_min_area_ratio must lie in (0, 1)")
        if self.t2_max_aspect <= 1.0:
            raise ValueError("t2_max_aspect must exceed 1")
        if not 0.0 < self.max_area_ratio <= 1.0:
            raise ValueError("max_area_ratio must lie in (0, 1]")


@dataclass(frozen=True)
class Component:
    pixels: PixelRegion
    bbox: tuple[int, int, int, int]
    height: int
    centroid: tuple[float, float]
    polarity: str

    @property
    def area(self) -> int:
        return self.pixels.area


@dataclass
class _Branch:
    birth: int
    levels: list = field(default_factory=list)
    sizes: list = field(default_factory=list)
    death: int = 256  # first level at which the seed is no longer canonical
    parent: int = -1


def _build_branches(work: np.ndarray) -> dict[int, _Branch]:
    """Component-tree branches of the sub-level sets, keyed by seed index."""
    h, w = work.shape
    flat = work.ravel()
    order = np.argsort(flat, kind="stable")  # (intensity, row-major) order
    branches: dict[int, _Branch] = {}
    prev_alive: list[int] = []
    for g in np.unique(flat):
        labels, n = ndimage.label(flat.reshape(h, w) <= g, structure=_STRUCT8)
        lab_flat = labels.ravel()
        sizes = np.bincount(lab_flat, minlength=n + 1)
        ordered_labels = lab_flat[order]
        nz = ordered_labels > 0
        uniq, first = np.unique(ordered_labels[nz], return_index=True)
        seed_of_label = np.zeros(n + 1, dtype=np.int64)
        seed_of_label[uniq] = order[nz][first]
        for lab in range(1, n + 1):
            seed = int(seed_of_label[lab])
            br = branches.get(seed)
            if br is None:
                br = _Branch(birth=int(g))
                branches[seed] = br
            br.levels.append(int(g))
            br.sizes.append(int(sizes[lab]))
        alive = [int(s) for s in seed_of_label[1:]]
        for seed in prev_alive:
            winner = int(seed_of_label[lab_flat[seed]])
            if winner != seed:
                branches[seed].death = int(g)
                branches[seed].parent = winner
        prev_alive = alive
    for br in branches.values():
        br.levels = np.asarray(br.levels)
        br.sizes = np.asarray(br.sizes)
    return branches


def _size_at(branch: _Branch, g: int) -> int:
    i = int(np.searchsorted(branch.levels, g, side="right")) - 1
    return int(branch.sizes[i])


def _containing_size(branches, seed: int, g: int) -> int:
    node = branches[seed]
    while node.death <= g:
        node = branches[node.parent]
    return _size_at(node, g)


def _emit_candidates(branches, seed: int, delta: int):
    """(floor_level, q) for non-strict local minima of q over the branch."""
    br = branches[seed]
    lo, hi = br.birth, min(br.death, 256)
    qs = np.empty(hi - lo, dtype=np.float64)
    for g in range(lo, hi):
        size = _size_at(br, g)
        up = _containing_size(branches, seed, min(g + delta, 255))
        down = _size_at(br, g - delta) if g - delta >= lo else 0
        qs[g - lo] = (up - down) / size
    padded = np.concatenate(([np.inf], qs, [np.inf]))
    minima = (padded[1:-1] <= padded[:-2]) & (padded[1:-1] <= padded[2:])
    best: dict[int, tuple[float, int]] = {}
    for offset in np.nonzero(minima)[0]:
        g = lo + int(offset)
        i = int(np.searchsorted(br.levels, g, side="right")) - 1
        floor_level = int(br.levels[i])
        q = float(qs[offset])
        cur = best.get(floor_level)
        if cur is None or (q, g) < cur:
            best[floor_level] = (q, g)
    return [(level, q, g) for level, (q, g) in best.items()]


def _region_pixels(work: np.ndarray, seed: int, level: int) -> np.ndarray:
    labels, _ = ndimage.label(work <= level, structure=_STRUCT8)
    target = labels.ravel()[seed]
    ys, xs = np.nonzero(labels == target)
    return np.column_stack((xs, ys))


def extract_components(
    image: GrayImage,
    block: TextBlock,
    params: MserParams = MserParams(),
    area_basis: str = "block",
) -> list[Component]:
    """Stable extremal regions of both polarities, filtered per block.

    area_basis selects the denominator of the area-ratio tests: the
    block's bounding-box area ("block") or the whole image ("image").
    """
    x0, y0, x1, y1 = block.bbox
    h, w = image.data.shape
    if x0 < 0 or y0 < 0 or x1 >= w or y1 >= h:
        raise ValueError("block lies outside the image")
    if area_basis == "block":
        denom = float((x1 - x0 + 1) * (y1 - y0 + 1))
    elif area_basis == "image":
        denom = float(w * h)
    else:
        raise ValueError("area_basis must be 'block' or 'image'")
    crop = image.data[y0 : y1 + 1, x0 : x1 + 1]
    inside = block.local_mask()

    out = []
    for polarity, work in ((DARK_ON_LIGHT, crop), (LIGHT_ON_DARK, 255 - crop)):
        branches = _build_branches(work)
        for seed in sorted(branches):
            survivor = None
            for level, q, g in sorted(_emit_candidates(branches, seed, params.delta)):
                size = _size_at(branches[seed], level)
                ratio = size / denom
                if ratio < params.t1_min_area_ratio or ratio > params.max_area_ratio:
                    continue
                pix = _region_pixels(work, seed, level)
                bw = int(pix[:, 0].max() - pix[:, 0].min()) + 1
                bh = int(pix[:, 1].max() - pix[:, 1].min()) + 1
                if max(bw, bh) / min(bw, bh) > params.t2_max_aspect:
                    continue
                if np.mean(inside[pix[:, 1], pix[:, 0]]) < 0.5:
                    continue
                if survivor is None or (q, g) < survivor[:2]:
                    survivor = (q, g, pix)
            if survivor is None:
                continue
            pix = survivor[2] + np.array([x0, y0])
            scan = np.lexsort((pix[:, 0], pix[:, 1]))
            region = PixelRegion(pix[scan])
            bx0, by0, bx1, by1 = region.bbox
            centroid = (float(region.pixels[:, 0].mean()), float(region.pixels[:, 1].mean()))
            out.append(
                Component(
                    pixels=region,
                    bbox=region.bbox,
                    height=by1 - by0 + 1,
                    centroid=centroid,
                    polarity=polarity,
                )
            )
    out.sort(key=lambda c: (c.polarity != DARK_ON_LIGHT, c.pixels.min_row_major_index(w)))
    return out
