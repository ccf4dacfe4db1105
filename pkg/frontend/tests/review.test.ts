import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { buildGridViewModel, renderGrid } from "../src/gridView.js";
import { buildReviewModel, renderReview } from "../src/review.js";
import type { RunStatus, SessionView } from "../src/types.js";

const fixture = <T>(name: string): T =>
  JSON.parse(readFileSync(new URL(`./fixtures/${name}`, import.meta.url), "utf-8"));

const run = fixture<RunStatus>("run_report.json");
const session = fixture<SessionView>("session.json");
const report = run.report!;
const artifactUrl = (p: string) => `http://studio.test${p}`;

describe("six-candidate review from a recorded run", () => {
  it("builds one card per scored arrangement, best first", () => {
    const model = buildReviewModel(report, artifactUrl);
    expect(model.cards).toHaveLength(6);
    expect(new Set(model.cards.map((c) => c.arrangementId))).toEqual(
      new Set([0, 1, 2, 3, 4, 5]),
    );
    for (let i = 1; i < model.cards.length; i += 1) {
      expect(model.cards[i - 1]!.combined).toBeGreaterThanOrEqual(model.cards[i]!.combined);
    }
    expect(model.cards[0]!.arrangementId).toBe(report.selected_arrangement_id);
    expect(model.cards[0]!.isEngineChoice).toBe(true);
    expect(model.cards.filter((c) => c.isEngineChoice)).toHaveLength(1);
  });

  it("cards point at absolute artifact URLs", () => {
    const model = buildReviewModel(report, artifactUrl);
    for (const card of model.cards) {
      expect(card.canvasUrl).toMatch(
        new RegExp(`^http://studio\\.test/v1/runs/${run.run_id}/artifacts/arrangement-${card.arrangementId}/canvas\\.png$`),
      );
      expect(card.compositeUrl).toContain("prompt.composite.png");
    }
  });

  it("renders six cards with score badges and the engine-pick flag", () => {
    const html = renderReview(buildReviewModel(report, artifactUrl));
    expect(html.match(/class="candidate-card/g)).toHaveLength(6);
    expect(html.match(/engine-choice/g)).toHaveLength(1);
    for (const arr of report.arrangements) {
      expect(html).toContain(`data-arrangement="${arr.id}"`);
      expect(html).toContain(`combined ${arr.combined!.toFixed(4)}`);
      expect(html).toContain(`text ${arr.text_score!.toFixed(4)}`);
    }
    expect(html).toContain(report.prompt);
  });

  it("recombined weights re-rank the same cards without regeneration", () => {
    const model = buildReviewModel(report, artifactUrl, {
      w_text: 1,
      w_image: 0,
      w_quality: 0,
    });
    expect(model.cards).toHaveLength(6);
    const byText = [...report.arrangements].sort(
      (a, b) => b.text_score! - a.text_score! || a.id - b.id,
    );
    expect(model.cards.map((c) => c.arrangementId)).toEqual(byText.map((a) => a.id));
  });
});

describe("grid view model", () => {
  it("mirrors the selected arrangement's slot assignment with flags", () => {
    const selected = report.arrangements.find(
      (a) => a.id === report.selected_arrangement_id,
    )!;
    const model = buildGridViewModel(
      session.grid,
      selected.assignment,
      session.stars,
      (id) => `http://studio.test/v1/banks/${session.bank_id}/images/${id}`,
    );
    expect(model.rows).toBe(3);
    expect(model.cols).toBe(3);

    const center = model.cells[1]![1]!;
    expect(center.isCanvas).toBe(true);
    expect(center.thumbnailUrl).toBeNull();
    expect(center.pinned).toBe(false);

    // 8 reference cells, each mirroring the server placement
    let placed = 0;
    for (const line of model.cells) {
      for (const cell of line) {
        if (cell.isCanvas) continue;
        const key = `${cell.row},${cell.col}`;
        expect(cell.imageId).toBe(selected.assignment.placements[key] ?? null);
        if (cell.imageId) placed += 1;
      }
    }
    expect(placed).toBe(8);

    // stars flank the canvas in the default geometry
    expect(model.cells[1]![0]!.starred).toBe(true);
    expect(model.cells[1]![2]!.starred).toBe(true);

    const html = renderGrid(model);
    expect(html.match(/class="cell canvas"/g)).toHaveLength(1);
    expect(html.match(/<img /g)).toHaveLength(8);
  });

  it("marks pinned cells and never the canvas", () => {
    const imageId = session.candidate_table[0]![0]!.image_id;
    const model = buildGridViewModel(
      session.grid,
      { placements: {}, pins: { "0,0": imageId } },
      session.stars,
      (id) => id,
    );
    expect(model.cells[0]![0]!.pinned).toBe(true);
    expect(model.cells[0]![0]!.imageId).toBe(imageId);
    expect(model.cells[1]![1]!.pinned).toBe(false);
    expect(renderGrid(model)).toContain("badge-pin");
  });
});
