"""Grid geometry, attention-prior star cells, arrangement enumeration, and
slot assignment (including user pins).

Element order maps to grid row bands; one arrangement is one permutation of
elements over bands, so three elements yield the six row permutations used
by the search loop. Star cells reorder candidates *within* a band only, so
the arrangement space itself never changes.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    GridTooSmall,
    PinOnCanvas,
    PinOutOfBounds,
    QTooLarge,
    TooManyElements,
)

Cell = tuple  # (row, col)


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int
    cell_px: int = 512
    canvas_cells: frozenset = frozenset({(1, 1)})
    border_px: int = 0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1 or self.cell_px < 1:
            raise ValueError("grid dimensions and cell_px must be positive")
        if not self.canvas_cells:
            raise ValueError("canvas_cells must be non-empty")
        rs = [r for r, _ in self.canvas_cells]
        cs = [c for _, c in self.canvas_cells]
        if min(rs) < 0 or max(rs) >= self.rows or min(cs) < 0 or max(cs) >= self.cols:
            raise ValueError("canvas cells out of bounds")
        # canvas must be a filled rectangle
        expected = {(r, c) for r in range(min(rs), max(rs) + 1) for c in range(min(cs), max(cs) + 1)}
        if set(self.canvas_cells) != expected:
            raise ValueError("canvas cells must form a contiguous rectangle")
        if not self.reference_cells():
            raise ValueError("grid needs at least one reference slot")

    def reference_cells(self) -> list:
        """Non-canvas cells in scan order (row-major)."""
        return [
            (r, c)
            for r in range(self.rows)
            for c in range(self.cols)
            if (r, c) not in self.canvas_cells
        ]

    def reference_rows(self) -> list:
        return sorted({r for r, _ in self.reference_cells()})

    def canvas_rect_px(self) -> tuple:
        """(left, top, width, height) of the canvas region in pixels."""
        rs = [r for r, _ in self.canvas_cells]
        cs = [c for _, c in self.canvas_cells]
        p = self.cell_px
        return (min(cs) * p, min(rs) * p, (max(cs) - min(cs) + 1) * p, (max(rs) - min(rs) + 1) * p)

    @property
    def width_px(self) -> int:
        return self.cols * self.cell_px

    @property
    def height_px(self) -> int:
        return self.rows * self.cell_px


def default_grid(cell_px: int = 512) -> GridSpec:
    """3x3 template with the center cell masked: 8 reference slots."""
    return GridSpec(rows=3, cols=3, cell_px=cell_px, canvas_cells=frozenset({(1, 1)}))


@dataclass(frozen=True)
class AttentionPrior:
    intensities: dict  # (row, col) -> non-negative float
    source: str = ""

    def validate(self, grid: GridSpec) -> None:
        expected = set(grid.reference_cells())
        got = set(self.intensities)
        if got != expected:
            raise ValueError(
                f"attention prior must cover every reference cell exactly once; "
                f"missing={sorted(expected - got)} extra={sorted(got - expected)}"
            )
        if any(v < 0 for v in self.intensities.values()):
            raise ValueError("attention intensities must be non-negative")


def load_attention_prior(path) -> AttentionPrior:
    """Read the sidecar JSON {grid, intensities: [[row, col, value]...], source}."""
    data = json.loads(Path(path).read_text())
    intensities = {(int(r), int(c)): float(v) for r, c, v in data["intensities"]}
    return AttentionPrior(intensities=intensities, source=data.get("source", str(path)))


def star_cells(prior: AttentionPrior, q: int, grid: GridSpec | None = None) -> list:
    """The q highest-intensity cells, descending; ties by (row, col)."""
    if grid is not None:
        prior.validate(grid)
    if q > len(prior.intensities):
        raise QTooLarge(f"q={q} exceeds {len(prior.intensities)} reference cells")
    ranked = sorted(prior.intensities.items(), key=lambda kv: (-kv[1], kv[0]))
    return [cell for cell, _ in ranked[:q]]


def default_star_cells(grid: GridSpec, q: int = 2) -> list:
    """Neutral default: the reference cells horizontally flanking the canvas."""
    refs = set(grid.reference_cells())
    flanks = []
    for r, c in sorted(grid.canvas_cells):
        for cand in ((r, c - 1), (r, c + 1)):
            if cand in refs and cand not in flanks:
                flanks.append(cand)
    return sorted(flanks)[:q]


@dataclass(frozen=True)
class Arrangement:
    id: int
    row_assignment: tuple  # element index -> band index; a permutation

    def __post_init__(self):
        if sorted(self.row_assignment) != list(range(len(self.row_assignment))):
            raise ValueError("row_assignment must be a permutation")


def enumerate_arrangements(n: int) -> list:
    """All n! element-to-band permutations in lexicographic order."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > 5:
        raise TooManyElements(f"n={n} would enumerate {n}! arrangements")
    return [
        Arrangement(id=i, row_assignment=perm)
        for i, perm in enumerate(itertools.permutations(range(n)))
    ]


@dataclass(frozen=True)
class SlotAssignment:
    placements: dict  # (row, col) -> image_id, every reference cell present
    pins: dict = field(default_factory=dict)

    def to_jsonable(self) -> dict:
        return {
            "placements": {f"{r},{c}": v for (r, c), v in sorted(self.placements.items())},
            "pins": {f"{r},{c}": v for (r, c), v in sorted(self.pins.items())},
        }


def row_bands(grid: GridSpec, n: int) -> list:
    """Split the reference rows into n contiguous bands, top to bottom."""
    rows = grid.reference_rows()
    if n > len(rows):
        raise GridTooSmall(f"{n} elements but only {len(rows)} reference rows")
    bands = []
    start = 0
    for i in range(n):
        size = len(rows) // n + (1 if i < len(rows) % n else 0)
        bands.append(rows[start:start + size])
        start += size
    return bands


def _validate_pins(pins: dict, grid: GridSpec) -> None:
    for cell in pins:
        r, c = cell
        if not (0 <= r < grid.rows and 0 <= c < grid.cols):
            raise PinOutOfBounds(f"pin at {cell} outside {grid.rows}x{grid.cols} grid")
        if cell in grid.canvas_cells:
            raise PinOnCanvas(f"cannot pin onto canvas cell {cell}")


def assign_slots(table, arr: Arrangement, grid: GridSpec, stars=None, pins=None) -> SlotAssignment:
    """Place candidate images into reference cells.

    Pins go in first. Each element fills its band's free cells with its
    candidates best-first in scan order, except that starred cells in the
    band receive the element's best candidates ahead of unstarred ones.
    Bands with fewer free cells than candidates drop the lowest-scoring
    ones; bands with more free cells cycle the candidate list.
    """
    pins = dict(pins or {})
    stars = list(stars or [])
    _validate_pins(pins, grid)
    ref_cells = grid.reference_cells()
    star_set = set(stars)

    placements = dict(pins)
    bands = row_bands(grid, table.n)
    for element in range(table.n):
        band_rows = set(bands[arr.row_assignment[element]])
        free = [cell for cell in ref_cells if cell[0] in band_rows and cell not in pins]
        if not free:
            continue
        candidates = [m.image_id for m in table.rows[element]]
        # cycle when the band is wider than K so every cell gets an image
        chosen = [candidates[i % len(candidates)] for i in range(len(free))] \
            if len(free) > len(candidates) else candidates[:len(free)]
        starred = [cell for cell in stars if cell in star_set and cell in free]
        unstarred = [cell for cell in free if cell not in star_set]
        for cell, image_id in zip(starred + unstarred, chosen):
            placements[cell] = image_id

    return SlotAssignment(placements=placements, pins=pins)
