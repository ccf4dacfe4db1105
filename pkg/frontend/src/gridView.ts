import type { GridGeometry, SlotAssignmentView } from "./types.js";

export interface GridCellView {
  row: number;
  col: number;
  isCanvas: boolean;
  starred: boolean;
  pinned: boolean;
  imageId: string | null;
  thumbnailUrl: string | null;
}

export interface GridViewModel {
  rows: number;
  cols: number;
  cells: GridCellView[][];
}

const cellKey = (row: number, col: number) => `${row},${col}`;

/**
 * Mirror a server-side slot assignment onto a renderable grid: one cell per
 * grid position with thumbnail, pin badge, star flag, and the canvas
 * placeholder. Canvas cells never carry an image and are never pinnable.
 */
export function buildGridViewModel(
  grid: GridGeometry,
  assignment: SlotAssignmentView | null,
  stars: [number, number][],
  imageUrl: (imageId: string) => string,
): GridViewModel {
  const canvas = new Set(grid.canvas_cells.map(([r, c]) => cellKey(r, c)));
  const starred = new Set(stars.map(([r, c]) => cellKey(r, c)));
  const placements = assignment?.placements ?? {};
  const pins = assignment?.pins ?? {};

  const cells: GridCellView[][] = [];
  for (let row = 0; row < grid.rows; row += 1) {
    const line: GridCellView[] = [];
    for (let col = 0; col < grid.cols; col += 1) {
      const key = cellKey(row, col);
      const isCanvas = canvas.has(key);
      const imageId = isCanvas ? null : (placements[key] ?? pins[key] ?? null);
      line.push({
        row,
        col,
        isCanvas,
        starred: !isCanvas && starred.has(key),
        pinned: !isCanvas && key in pins,
        imageId,
        thumbnailUrl: imageId === null ? null : imageUrl(imageId),
      });
    }
    cells.push(line);
  }
  return { rows: grid.rows, cols: grid.cols, cells };
}

export function renderGrid(model: GridViewModel): string {
  const rows = model.cells
    .map((line) => {
      const cells = line
        .map((cell) => {
          if (cell.isCanvas) {
            return `<div class="cell canvas" data-cell="${cell.row},${cell.col}">canvas</div>`;
          }
          const classes = ["cell", cell.pinned ? "pinned" : "", cell.starred ? "starred" : ""]
            .filter(Boolean)
            .join(" ");
          const img = cell.thumbnailUrl
            ? `<img src="${cell.thumbnailUrl}" alt="${cell.imageId ?? ""}">`
            : "";
          const badges =
            (cell.pinned ? '<span class="badge badge-pin">pin</span>' : "") +
            (cell.starred ? '<span class="badge badge-star">★</span>' : "");
          return `<div class="${classes}" data-cell="${cell.row},${cell.col}">${img}${badges}</div>`;
        })
        .join("");
      return `<div class="grid-row">${cells}</div>`;
    })
    .join("");
  return `<div class="grid" style="--cols:${model.cols}">${rows}</div>`;
}
