"""Embedding-space math: cosine similarity, top-K selection, element matching.

Vectors are plain float64/float32 numpy arrays. Banks are scored as a single
matrix product over L2-normalized vectors, so cosine reduces to a dot product.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, KTooLarge, ZeroVector

_NORM_EPS = 1e-12


def as_vector(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected 1-D vector, got shape {v.shape}")
    return v


def normalize(v) -> np.ndarray:
    """L2-normalize; raises ZeroVector on (near-)zero input."""
    v = as_vector(v)
    n = float(np.linalg.norm(v))
    if n < _NORM_EPS:
        raise ZeroVector("cannot normalize a zero vector")
    return v / n


def cosine(a, b) -> float:
    """Cosine similarity dot(a,b) / (|a||b|), in [-1, 1] up to rounding."""
    a = as_vector(a)
    b = as_vector(b)
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"dims differ: {a.shape[0]} vs {b.shape[0]}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < _NORM_EPS or nb < _NORM_EPS:
        raise ZeroVector("cosine undefined for zero vectors")
    return float(np.dot(a, b) / (na * nb))


def top_k(scores, k: int) -> list:
    """Ids of the k largest scores, descending; ties broken by ascending id."""
    scores = list(scores)
    if k < 0 or k > len(scores):
        raise KTooLarge(f"k={k} out of range for {len(scores)} scores")
    ranked = sorted(scores, key=lambda item: (-item[1], item[0]))
    return [item[0] for item in ranked[:k]]


@dataclass(frozen=True)
class MatchScore:
    element_index: int
    image_id: str
    score: float


@dataclass(frozen=True)
class CandidateTable:
    """N rows of exactly K matches each, sorted by descending score."""

    rows: tuple  # tuple of tuples of MatchScore

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def k(self) -> int:
        return len(self.rows[0]) if self.rows else 0

    def row_ids(self, i: int) -> list:
        return [m.image_id for m in self.rows[i]]

    def to_json(self) -> str:
        payload = [
            [
                {"element": m.element_index, "image_id": m.image_id, "score": m.score}
                for m in row
            ]
            for row in self.rows
        ]
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "CandidateTable":
        payload = json.loads(text)
        rows = tuple(
            tuple(
                MatchScore(entry["element"], entry["image_id"], entry["score"])
                for entry in row
            )
            for row in payload
        )
        return cls(rows=rows)


def match_elements(element_vecs, bank_vecs, k: int) -> CandidateTable:
    """Match each element vector to the top-k bank images by cosine.

    ``bank_vecs`` is a sequence of (image_id, vector) pairs. An image may
    appear in multiple rows.
    """
    bank_vecs = list(bank_vecs)
    if k > len(bank_vecs):
        raise KTooLarge(f"k={k} exceeds bank size {len(bank_vecs)}")
    if not element_vecs:
        raise DimensionMismatch("need at least one element vector")

    ids = [image_id for image_id, _ in bank_vecs]
    bank = np.stack([normalize(v) for _, v in bank_vecs])
    elements = np.stack([normalize(v) for v in element_vecs])
    if bank.shape[1] != elements.shape[1]:
        raise DimensionMismatch(
            f"bank dim {bank.shape[1]} != element dim {elements.shape[1]}"
        )

    sims = elements @ bank.T  # (N, M)
    rows = []
    for i in range(sims.shape[0]):
        scored = list(zip(ids, sims[i].tolist()))
        chosen = top_k(scored, k)
        by_id = dict(scored)
        rows.append(
            tuple(MatchScore(i, image_id, float(by_id[image_id])) for image_id in chosen)
        )
    return CandidateTable(rows=tuple(rows))
