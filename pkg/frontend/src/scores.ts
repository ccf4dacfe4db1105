import type { ArrangementReport, Weights } from "./types.js";

export interface ScoreTriple {
  text_score: number;
  image_score: number;
  quality_score: number;
}

/** Weighted sum, identical to the server's combination rule. */
export function combineScores(weights: Weights, s: ScoreTriple): number {
  return (
    weights.w_text * s.text_score +
    weights.w_image * s.image_score +
    weights.w_quality * s.quality_score
  );
}

export interface RerankedCandidate extends ScoreTriple {
  id: number;
  combined: number;
}

/**
 * Re-rank scored arrangements under new weights without re-generation.
 * Ties break toward the lowest arrangement id, matching the engine.
 */
export function rerank(arrangements: ArrangementReport[], weights: Weights): RerankedCandidate[] {
  const scored = arrangements
    .filter((a) => a.combined !== undefined)
    .map((a) => {
      const triple = {
        text_score: a.text_score ?? 0,
        image_score: a.image_score ?? 0,
        quality_score: a.quality_score ?? 0,
      };
      return { id: a.id, ...triple, combined: combineScores(weights, triple) };
    });
  scored.sort((a, b) => b.combined - a.combined || a.id - b.id);
  return scored;
}

export function argmaxId(arrangements: ArrangementReport[], weights: Weights): number {
  const ranked = rerank(arrangements, weights);
  if (ranked.length === 0) throw new Error("no scored arrangements");
  return ranked[0]!.id;
}
