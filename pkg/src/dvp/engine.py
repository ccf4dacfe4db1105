"""The full pipeline: extract -> match -> arrange -> generate per arrangement
-> score -> select, plus sessions for iterative refinement and the
desk-scale quantitative evaluation harness.
"""

from __future__ import annotations

import hashlib
import json
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

import numpy as np

from . import bank as bank_mod
from .composer import compose, crop_canvas
from .errors import EmptyInput, PartialRun, UnknownSession
from .generation import GenerationParams
from .intent import ExtractionRequest, extract_elements, override_elements
from .layout import (
    Arrangement,
    GridSpec,
    assign_slots,
    default_grid,
    default_star_cells,
    enumerate_arrangements,
)
from .raster import pixel_digest, save_png
from .similarity import cosine, match_elements, normalize


@dataclass(frozen=True)
class ScoreWeights:
    w_text: float = 0.5
    w_image: float = 0.5
    w_quality: float = 0.0

    def __post_init__(self):
        if min(self.w_text, self.w_image, self.w_quality) < 0:
            raise ValueError("weights must be non-negative")
        if self.w_text + self.w_image + self.w_quality <= 0:
            raise ValueError("at least one weight must be positive")

    def combine(self, text: float, image: float, quality: float) -> float:
        return self.w_text * text + self.w_image * image + self.w_quality * quality


class QualityScorer(Protocol):
    """Pluggable VLM-style visual quality backend; returns a score in [0, 1]."""

    def score(self, image: np.ndarray, prompt: str) -> float: ...


@dataclass(frozen=True)
class ScoredCandidate:
    arrangement_id: int
    image: np.ndarray  # cropped canvas
    text_score: float
    image_score: float
    quality_score: float
    combined: float


def score_image_vectors(image_vec, text_vec, reference_vecs, quality: float,
                        weights: ScoreWeights) -> tuple:
    """(text, image, quality, combined) from precomputed embedding vectors."""
    text_score = cosine(text_vec, image_vec)
    image_score = float(np.mean([cosine(ref, image_vec) for ref in reference_vecs]))
    combined = weights.combine(text_score, image_score, quality)
    return text_score, image_score, quality, combined


def score_candidate(image, prompt: str, reference_images, weights: ScoreWeights,
                    embedder, quality_backend: QualityScorer | None = None) -> dict:
    """Score one generated image against the prompt and the theme references."""
    if not len(reference_images):
        raise EmptyInput("need at least one reference image")
    image_vec = embedder.embed_images([image])[0]
    text_vec = embedder.embed_texts([prompt])[0]
    reference_vecs = embedder.embed_images(list(reference_images))
    quality = quality_backend.score(image, prompt) if quality_backend is not None else 0.0
    text, img, qual, combined = score_image_vectors(image_vec, text_vec, reference_vecs, quality, weights)
    return {
        "text_score": text,
        "image_score": img,
        "quality_score": qual,
        "combined": combined,
    }


@dataclass
class RunConfig:
    n: int = 3
    k: int = 3
    grid: GridSpec = field(default_factory=default_grid)
    stars: list | None = None  # None -> neutral default flanking the canvas
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    seed: int = 0
    guidance_scale: float = 30.0
    steps: int = 50
    seed_per_arrangement: bool = False
    elements: list | None = None  # explicit override, bypasses extraction
    pins: dict = field(default_factory=dict)
    max_concurrency: int = 4

    def to_jsonable(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "grid": {
                "rows": self.grid.rows,
                "cols": self.grid.cols,
                "cell_px": self.grid.cell_px,
                "canvas_cells": sorted(list(c) for c in self.grid.canvas_cells),
            },
            "stars": [list(c) for c in self.stars] if self.stars is not None else None,
            "weights": {
                "w_text": self.weights.w_text,
                "w_image": self.weights.w_image,
                "w_quality": self.weights.w_quality,
            },
            "seed": self.seed,
            "guidance_scale": self.guidance_scale,
            "steps": self.steps,
            "seed_per_arrangement": self.seed_per_arrangement,
            "elements": self.elements,
            "pins": {f"{r},{c}": v for (r, c), v in sorted(self.pins.items())},
        }


@dataclass
class RunResult:
    run_id: str
    selected: ScoredCandidate
    candidates: list
    report: dict
    run_dir: Path | None


def _bank_digest(manifest) -> str:
    h = hashlib.sha256()
    for image_id in sorted(manifest.entry_ids()):
        h.update(bytes.fromhex(image_id))
    return h.hexdigest()


class Backends:
    """Bundle of the pluggable backends one run needs."""

    def __init__(self, embedder, inpaint, llm=None, quality=None):
        self.embedder = embedder
        self.inpaint = inpaint
        self.llm = llm
        self.quality = quality


def generate(bank_dir, prompt: str, config: RunConfig, backends: Backends,
             out_dir=None, run_id: str | None = None) -> RunResult:
    """One full search pass: six arrangements (for N=3), one generation each,
    argmax selection over combined scores."""
    t0 = time.monotonic()
    bank_dir = Path(bank_dir)
    manifest = bank_mod.load_manifest(bank_dir)
    cache = bank_mod.build_cache(bank_dir, manifest, backends.embedder)

    if config.elements is not None:
        elements = override_elements(config.elements)
    else:
        elements = extract_elements(ExtractionRequest(prompt=prompt, n=config.n, backend=backends.llm))
    phrases = [e.phrase for e in elements]

    element_vecs = backends.embedder.embed_texts(phrases)
    bank_vecs = [(e.image_id, cache.records[e.image_id]) for e in manifest.entries]
    table = match_elements(element_vecs, bank_vecs, config.k)

    stars = config.stars if config.stars is not None else default_star_cells(config.grid)
    arrangements = enumerate_arrangements(len(elements))

    images = bank_mod.load_bank_images(bank_dir, manifest)
    reference_vecs = [normalize(cache.records[e.image_id]) for e in manifest.entries]
    text_vec = backends.embedder.embed_texts([prompt])[0]

    def run_one(arr: Arrangement):
        assignment = assign_slots(table, arr, config.grid, stars=stars, pins=config.pins)
        vp = compose(assignment, images, config.grid)
        seed = config.seed + arr.id if config.seed_per_arrangement else config.seed
        params = GenerationParams(
            prompt=prompt, seed=seed,
            guidance_scale=config.guidance_scale, steps=config.steps,
        )
        result = backends.inpaint.inpaint(vp, params)
        canvas = crop_canvas(result, config.grid)
        quality = backends.quality.score(canvas, prompt) if backends.quality is not None else 0.0
        image_vec = backends.embedder.embed_images([canvas])[0]
        text, img, qual, combined = score_image_vectors(
            image_vec, text_vec, reference_vecs, quality, config.weights
        )
        candidate = ScoredCandidate(
            arrangement_id=arr.id, image=canvas,
            text_score=text, image_score=img, quality_score=qual, combined=combined,
        )
        return candidate, assignment, vp, result

    outputs = {}
    failures = {}
    with ThreadPoolExecutor(max_workers=max(1, config.max_concurrency)) as pool:
        futures = {arr.id: pool.submit(run_one, arr) for arr in arrangements}
        for arr in arrangements:
            try:
                outputs[arr.id] = futures[arr.id].result()
            except Exception as exc:
                failures[arr.id] = f"{type(exc).__name__}: {exc}"

    if not outputs:
        raise PartialRun(failures)

    candidates = [outputs[i][0] for i in sorted(outputs)]
    selected = max(candidates, key=lambda c: (c.combined, -c.arrangement_id))

    if run_id is None:
        # deterministic: same bank, prompt, and config always name the same run
        material = json.dumps(
            [_bank_digest(manifest), prompt, config.to_jsonable()], sort_keys=True
        ).encode()
        run_id = hashlib.sha256(material).hexdigest()[:12]
    arrangement_reports = []
    for arr in arrangements:
        if arr.id in outputs:
            cand, assignment, vp, result = outputs[arr.id]
            arrangement_reports.append({
                "id": arr.id,
                "row_assignment": list(arr.row_assignment),
                "assignment": assignment.to_jsonable(),
                "text_score": cand.text_score,
                "image_score": cand.image_score,
                "quality_score": cand.quality_score,
                "combined": cand.combined,
                "canvas_digest": pixel_digest(cand.image),
                "artifacts": {
                    "composite": f"arrangement-{arr.id}/prompt.composite.png",
                    "mask": f"arrangement-{arr.id}/prompt.mask.png",
                    "result": f"arrangement-{arr.id}/result.png",
                    "canvas": f"arrangement-{arr.id}/canvas.png",
                },
            })
        else:
            arrangement_reports.append({
                "id": arr.id,
                "row_assignment": list(arr.row_assignment),
                "error": failures[arr.id],
            })

    report = {
        "version": 1,
        "run_id": run_id,
        "prompt": prompt,
        "theme": manifest.theme_name,
        "bank_digest": _bank_digest(manifest),
        "config": config.to_jsonable(),
        "elements": [{"index": e.index, "phrase": e.phrase, "source": e.source} for e in elements],
        "candidate_table": json.loads(table.to_json()),
        "stars": [list(c) for c in stars],
        "arrangements": arrangement_reports,
        "selected_arrangement_id": selected.arrangement_id,
        "selected_canvas_digest": pixel_digest(selected.image),
        "failures": {str(k): v for k, v in sorted(failures.items())},
    }

    run_dir = None
    if out_dir is not None:
        run_dir = Path(out_dir) / run_id
        from .reporting import write_run_artifacts

        write_run_artifacts(run_dir, report, outputs, elapsed_s=time.monotonic() - t0)

    return RunResult(run_id=run_id, selected=selected, candidates=candidates,
                     report=report, run_dir=run_dir)


# --- sessions ------------------------------------------------------------------

@dataclass
class Session:
    session_id: str
    bank_dir: str
    prompt: str
    config: RunConfig
    history: list = field(default_factory=list)  # append-only run summaries


class SessionStore:
    """File-backed session store; one JSON document per session."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.json"

    def create(self, bank_dir, prompt: str, config: RunConfig) -> Session:
        session = Session(
            session_id=uuid.uuid4().hex[:12],
            bank_dir=str(bank_dir), prompt=prompt, config=config,
        )
        self.save(session)
        return session

    def save(self, session: Session) -> None:
        doc = {
            "session_id": session.session_id,
            "bank_dir": session.bank_dir,
            "prompt": session.prompt,
            "config": session.config.to_jsonable(),
            "history": session.history,
        }
        self._path(session.session_id).write_text(json.dumps(doc, indent=2))

    def load(self, session_id: str) -> Session:
        path = self._path(session_id)
        if not path.exists():
            raise UnknownSession(session_id)
        doc = json.loads(path.read_text())
        return Session(
            session_id=doc["session_id"],
            bank_dir=doc["bank_dir"],
            prompt=doc["prompt"],
            config=config_from_jsonable(doc["config"]),
            history=doc["history"],
        )


def config_from_jsonable(d: dict) -> RunConfig:
    grid = GridSpec(
        rows=d["grid"]["rows"], cols=d["grid"]["cols"], cell_px=d["grid"]["cell_px"],
        canvas_cells=frozenset(tuple(c) for c in d["grid"]["canvas_cells"]),
    )
    return RunConfig(
        n=d["n"], k=d["k"], grid=grid,
        stars=[tuple(c) for c in d["stars"]] if d.get("stars") is not None else None,
        weights=ScoreWeights(**d["weights"]),
        seed=d["seed"], guidance_scale=d["guidance_scale"], steps=d["steps"],
        seed_per_arrangement=d.get("seed_per_arrangement", False),
        elements=d.get("elements"),
        pins={tuple(int(x) for x in key.split(",")): v for key, v in d.get("pins", {}).items()},
    )


def refine(store: SessionStore, session_id: str, backends: Backends, out_dir=None,
           pins: dict | None = None, new_prompt: str | None = None,
           weights: ScoreWeights | None = None) -> RunResult:
    """Re-run the loop for a session with updated pins/prompt/weights; the
    session history grows by one entry."""
    session = store.load(session_id)
    config = session.config
    if pins is not None:
        config = replace(config, pins=dict(pins))
    if weights is not None:
        config = replace(config, weights=weights)
    if new_prompt is not None:
        session.prompt = new_prompt
        config = replace(config, elements=None)  # re-extract for the new intent

    result = generate(session.bank_dir, session.prompt, config, backends, out_dir=out_dir)
    session.config = config
    session.history.append({
        "run_id": result.run_id,
        "prompt": session.prompt,
        "config": config.to_jsonable(),
        "scores": [
            {
                "arrangement_id": c.arrangement_id,
                "text_score": c.text_score,
                "image_score": c.image_score,
                "quality_score": c.quality_score,
                "combined": c.combined,
            }
            for c in result.candidates
        ],
        "selected_arrangement_id": result.selected.arrangement_id,
    })
    store.save(session)
    return result


# --- evaluation harness ----------------------------------------------------------

def evaluate_run(generated, reference_images, embedder) -> dict:
    """Mean pairwise image similarity and mean text similarity.

    ``generated`` is a list of (image, prompt) pairs; image similarity
    averages cosine over every (generated, reference) pair.
    """
    generated = list(generated)
    reference_images = list(reference_images)
    if not generated or not reference_images:
        raise EmptyInput("need at least one generated and one reference image")
    gen_vecs = embedder.embed_images([img for img, _ in generated])
    ref_vecs = embedder.embed_images(reference_images)
    text_vecs = embedder.embed_texts([prompt for _, prompt in generated])

    image_similarity = float(np.mean(
        [[cosine(g, r) for r in ref_vecs] for g in gen_vecs]
    ))
    text_similarity = float(np.mean(
        [cosine(t, g) for t, g in zip(text_vecs, gen_vecs)]
    ))
    return {"image_similarity": image_similarity, "text_similarity": text_similarity}


def evaluate_protocol(bank_dirs, prompts, seeds, config: RunConfig, backends: Backends,
                      out_dir=None) -> dict:
    """Desk-scale version of the themes x prompts x seeds protocol: one full
    generate() per combination, metrics per theme plus overall."""
    per_theme = []
    all_images = 0
    for bank_dir in bank_dirs:
        manifest = bank_mod.load_manifest(bank_dir)
        references = list(bank_mod.load_bank_images(bank_dir, manifest).values())
        generated = []
        for prompt in prompts:
            for seed in seeds:
                run_config = replace(config, seed=int(seed))
                result = generate(bank_dir, prompt, run_config, backends, out_dir=out_dir)
                generated.append((result.selected.image, prompt))
        metrics = evaluate_run(generated, references, backends.embedder)
        per_theme.append({
            "theme": manifest.theme_name,
            "bank_dir": str(bank_dir),
            "images": len(generated),
            **metrics,
        })
        all_images += len(generated)

    return {
        "version": 1,
        "protocol": {
            "themes": len(list(bank_dirs)),
            "prompts": len(list(prompts)),
            "seeds": len(list(seeds)),
            "total_images": all_images,
        },
        "per_theme": per_theme,
        "image_similarity": float(np.mean([t["image_similarity"] for t in per_theme])),
        "text_similarity": float(np.mean([t["text_similarity"] for t in per_theme])),
    }
