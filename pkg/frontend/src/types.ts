/** Payload shapes of the dvp studio service /v1 API. */

export interface Weights {
  w_text: number;
  w_image: number;
  w_quality: number;
}

export interface GridGeometry {
  rows: number;
  cols: number;
  cell_px: number;
  canvas_cells: [number, number][];
}

export interface MatchScore {
  element: number;
  image_id: string;
  score: number;
}

export interface KeyElement {
  index: number;
  phrase: string;
  source: "llm" | "fallback" | "user";
}

export interface BankView {
  bank_id: string;
  theme: string;
  size: number;
  image_ids: string[];
  warnings: string[];
}

export interface SessionView {
  session_id: string;
  bank_id: string;
  prompt: string;
  n: number;
  elements: KeyElement[];
  candidate_table: MatchScore[][];
  grid: GridGeometry;
  stars: [number, number][];
  pins: Record<string, string>;
}

export interface PinUpdate {
  session_id: string;
  pins: Record<string, string>;
}

export interface SlotAssignmentView {
  placements: Record<string, string>;
  pins: Record<string, string>;
}

export interface ArrangementReport {
  id: number;
  row_assignment: number[];
  assignment: SlotAssignmentView;
  /** Absent on failed arrangements. */
  text_score?: number;
  image_score?: number;
  quality_score?: number;
  combined?: number;
  canvas_digest?: string;
  artifacts?: Record<string, string>;
  error?: string;
}

export interface RunReport {
  version: number;
  run_id: string;
  prompt: string;
  config: { weights: Weights; [key: string]: unknown };
  elements: KeyElement[];
  arrangements: ArrangementReport[];
  selected_arrangement_id: number;
  selected_canvas_digest: string;
  failures: unknown[];
}

export interface RunStatus {
  run_id: string;
  session_id: string;
  status: "pending" | "running" | "done" | "failed";
  report?: RunReport;
  error?: string;
}

export interface ApiError {
  error: { code: string; message: string; retryable: boolean };
}
