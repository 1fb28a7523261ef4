"""Text-block extraction from a saliency map.

A block is an 8-connected region of pixels whose saliency exceeds a
threshold; small regions are dropped as speckle. Each block keeps its
boundary pixels (region pixels touching a non-region pixel or the image
border through a 4-neighbor) for later anchor construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import BinaryMask, PixelRegion, ProbabilityMap, connected_components, region_boundary


@dataclass(frozen=True)
class TextBlock:
    id: int
    pixels: PixelRegion
    boundary: np.ndarray
    bbox: tuple[int, int, int, int]

    def local_mask(self) -> np.ndarray:
        """Boolean membership mask over the block's own bounding box."""
        x0, y0, x1, y1 = self.bbox
        mask = np.zeros((y1 - y0 + 1, x1 - x0 + 1), dtype=bool)
        coords = self.pixels.pixels
        mask[coords[:, 1] - y0, coords[:, 0] - x0] = True
        return mask


def extract_blocks(
    saliency: ProbabilityMap, threshold: float = 0.2, min_area: int = 20
) -> list[TextBlock]:
    """Threshold strictly, group 8-connected, keep regions >= min_area."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    h, w = saliency.data.shape
    mask = saliency.data > threshold
    blocks = []
    for region in connected_components(BinaryMask(mask), connectivity=8):
        if region.area < min_area:
            continue
        boundary = region_boundary(region, w, h)
        blocks.append(TextBlock(id=len(blocks), pixels=region, boundary=boundary, bbox=region.bbox))
    return blocks
