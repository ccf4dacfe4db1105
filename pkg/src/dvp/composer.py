"""Render a slot assignment into the composite raster + binary mask, and
crop the generated canvas region back out of a backend result."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, MissingImage, ZeroSizeCell
from .layout import GridSpec, SlotAssignment
from .raster import resize_cover

CANVAS_GRAY = (128, 128, 128)


@dataclass(frozen=True)
class VisualPrompt:
    composite: np.ndarray  # (H, W, 3) uint8
    mask: np.ndarray  # (H, W) uint8, 255 = generate, 0 = keep
    assignment: SlotAssignment
    grid: GridSpec


def compose(assignment: SlotAssignment, images: dict, grid: GridSpec) -> VisualPrompt:
    """Stitch reference images into the grid around the gray masked canvas.

    Each source image is aspect-preserving resized so its minimum side fits
    the cell, then center-cropped; byte-deterministic for fixed inputs.
    """
    p = grid.cell_px
    if p < 1:
        raise ZeroSizeCell("cell_px must be >= 1")
    composite = np.zeros((grid.height_px, grid.width_px, 3), dtype=np.uint8)
    mask = np.zeros((grid.height_px, grid.width_px), dtype=np.uint8)

    for cell in grid.canvas_cells:
        r, c = cell
        composite[r * p:(r + 1) * p, c * p:(c + 1) * p] = CANVAS_GRAY
        mask[r * p:(r + 1) * p, c * p:(c + 1) * p] = 255

    for cell in grid.reference_cells():
        image_id = assignment.placements.get(cell)
        if image_id is None:
            raise MissingImage(f"no placement for reference cell {cell}")
        if image_id not in images:
            raise MissingImage(f"image {image_id} not provided")
        r, c = cell
        tile = resize_cover(images[image_id], p, p)
        composite[r * p:(r + 1) * p, c * p:(c + 1) * p] = tile

    return VisualPrompt(composite=composite, mask=mask, assignment=assignment, grid=grid)


def crop_canvas(result: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Exact pixel crop of the canvas rectangle out of a full-size result."""
    if result.shape[:2] != (grid.height_px, grid.width_px):
        raise DimensionMismatch(
            f"result is {result.shape[1]}x{result.shape[0]}, "
            f"expected {grid.width_px}x{grid.height_px}"
        )
    left, top, width, height = grid.canvas_rect_px()
    return result[top:top + height, left:left + width].copy()
