import { combineScores, rerank } from "./scores.js";
import type { RunReport, Weights } from "./types.js";

export interface ReviewCard {
  arrangementId: number;
  rowAssignment: number[];
  textScore: number;
  imageScore: number;
  qualityScore: number;
  combined: number;
  canvasUrl: string;
  compositeUrl: string;
  isEngineChoice: boolean;
}

export interface ReviewModel {
  runId: string;
  prompt: string;
  weights: Weights;
  engineArgmaxId: number;
  /** Sorted best-first by combined score. */
  cards: ReviewCard[];
  failedCount: number;
}

/**
 * Six-candidate review: every scored arrangement becomes a card, sorted by
 * combined score. Passing `weights` recombines client-side (no
 * re-generation); omitting it shows the server's scores verbatim.
 */
export function buildReviewModel(
  report: RunReport,
  artifactUrl: (path: string) => string,
  weights?: Weights,
): ReviewModel {
  const effective = weights ?? report.config.weights;
  const order = rerank(report.arrangements, effective);
  const byId = new Map(report.arrangements.map((a) => [a.id, a]));
  const engineArgmaxId = weights ? order[0]!.id : report.selected_arrangement_id;

  const cards = order.map((entry) => {
    const arr = byId.get(entry.id)!;
    return {
      arrangementId: entry.id,
      rowAssignment: arr.row_assignment,
      textScore: entry.text_score,
      imageScore: entry.image_score,
      qualityScore: entry.quality_score,
      combined: weights ? combineScores(effective, entry) : arr.combined!,
      canvasUrl: artifactUrl(arr.artifacts!["canvas"]!),
      compositeUrl: artifactUrl(arr.artifacts!["composite"]!),
      isEngineChoice: entry.id === engineArgmaxId,
    };
  });
  return {
    runId: report.run_id,
    prompt: report.prompt,
    weights: effective,
    engineArgmaxId,
    cards,
    failedCount: report.failures.length,
  };
}

const fmt = (x: number) => x.toFixed(4);

export function renderReview(model: ReviewModel): string {
  const cards = model.cards
    .map(
      (card) => `
  <article class="candidate-card${card.isEngineChoice ? " engine-choice" : ""}" data-arrangement="${card.arrangementId}">
    <img class="candidate-canvas" src="${card.canvasUrl}" alt="arrangement ${card.arrangementId}">
    <div class="candidate-meta">
      <span class="arrangement-id">#${card.arrangementId}</span>
      <span class="score-badge score-text">text ${fmt(card.textScore)}</span>
      <span class="score-badge score-image">image ${fmt(card.imageScore)}</span>
      <span class="score-badge score-combined">combined ${fmt(card.combined)}</span>
      ${card.isEngineChoice ? '<span class="badge badge-argmax">engine pick</span>' : ""}
    </div>
    <button class="select-candidate" data-arrangement="${card.arrangementId}">use this one</button>
  </article>`,
    )
    .join("\n");
  const failed = model.failedCount
    ? `<p class="review-failures">${model.failedCount} arrangement(s) failed and are not shown.</p>`
    : "";
  return `<section class="review" data-run="${model.runId}">
<h2>${model.cards.length} candidates for “${model.prompt}”</h2>
${failed}
<div class="candidate-list">${cards}
</div>
</section>`;
}
