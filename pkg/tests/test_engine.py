import json
import math

import numpy as np
import pytest

from dvp.engine import (
    Backends,
    RunConfig,
    ScoreWeights,
    SessionStore,
    evaluate_protocol,
    evaluate_run,
    generate,
    refine,
    score_candidate,
)
from dvp.errors import EmptyInput, PartialRun, UnknownSession
from dvp.generation import MockInpaintBackend
from dvp.layout import GridSpec
from dvp.raster import pixel_digest

SMALL_GRID = GridSpec(rows=3, cols=3, cell_px=32, canvas_cells=frozenset({(1, 1)}))
PROMPT = "Tintin rides a horse on the grassland"


def small_config(**kwargs):
    defaults = dict(grid=SMALL_GRID, seed=7)
    defaults.update(kwargs)
    return RunConfig(**defaults)


class CountingInpaint:
    def __init__(self, inner=None, fail_on=()):
        self.inner = inner or MockInpaintBackend()
        self.calls = 0
        self.fail_on = set(fail_on)

    def inpaint(self, vp, params):
        self.calls += 1
        if self.calls in self.fail_on:
            raise RuntimeError(f"injected failure on call {self.calls}")
        return self.inner.inpaint(vp, params)


# --- score_candidate ------------------------------------------------------------


def solid(color):
    img = np.zeros((8, 8, 3), dtype=np.uint8)
    img[:] = color
    return img


def test_score_image_equals_reference(stub_embedder_cls):
    embedder = stub_embedder_cls(dim=8)
    image = solid((10, 20, 30))
    scores = score_candidate(image, "a prompt", [image], ScoreWeights(), embedder)
    assert scores["image_score"] == pytest.approx(1.0, abs=1e-9)


def test_score_mean_over_references(stub_embedder_cls):
    image = solid((1, 1, 1))
    ref_a = solid((2, 2, 2))
    ref_b = solid((3, 3, 3))
    vecs = {
        pixel_digest(image): [1, 0, 0, 0],
        pixel_digest(ref_a): [0.2, math.sqrt(1 - 0.04), 0, 0],
        pixel_digest(ref_b): [0.8, 0.6, 0, 0],
    }
    embedder = stub_embedder_cls(dim=4, images=vecs)
    scores = score_candidate(image, "p", [ref_a, ref_b], ScoreWeights(), embedder)
    # hand mean of the oracle cosines 0.2 and 0.8
    assert scores["image_score"] == pytest.approx(0.5, abs=1e-9)


def test_combined_weighting_arithmetic():
    w = ScoreWeights(w_text=0.5, w_image=0.5, w_quality=0.0)
    assert w.combine(0.3, 0.5, 0.9) == pytest.approx(0.4)


def test_weights_validation():
    with pytest.raises(ValueError):
        ScoreWeights(w_text=0, w_image=0, w_quality=0)
    with pytest.raises(ValueError):
        ScoreWeights(w_text=-1, w_image=1, w_quality=0)


def test_score_requires_reference(stub_embedder_cls):
    with pytest.raises(EmptyInput):
        score_candidate(solid((1, 1, 1)), "p", [], ScoreWeights(), stub_embedder_cls())


def test_quality_backend_used(stub_embedder_cls):
    class FixedQuality:
        def score(self, image, prompt):
            return 0.75

    image = solid((9, 9, 9))
    scores = score_candidate(image, "p", [image], ScoreWeights(0.0, 0.0, 1.0),
                             stub_embedder_cls(), quality_backend=FixedQuality())
    assert scores["quality_score"] == 0.75
    assert scores["combined"] == pytest.approx(0.75)


# --- generate -------------------------------------------------------------------


def test_generate_runs_six_arrangements(fixture_bank_dir, mock_backends):
    counting = CountingInpaint()
    backends = Backends(embedder=mock_backends.embedder, inpaint=counting)
    result = generate(fixture_bank_dir, PROMPT, small_config(), backends)
    assert counting.calls == 6
    assert len(result.candidates) == 6
    assert [c.arrangement_id for c in result.candidates] == list(range(6))


def test_generate_deterministic_selection(fixture_bank_dir, mock_backends):
    r1 = generate(fixture_bank_dir, PROMPT, small_config(), mock_backends)
    r2 = generate(fixture_bank_dir, PROMPT, small_config(), mock_backends)
    assert r1.selected.arrangement_id == r2.selected.arrangement_id
    assert pixel_digest(r1.selected.image) == pixel_digest(r2.selected.image)
    assert r1.report == r2.report


def test_generate_combined_matches_weights(fixture_bank_dir, mock_backends):
    result = generate(fixture_bank_dir, PROMPT, small_config(), mock_backends)
    for c in result.candidates:
        expected = 0.5 * c.text_score + 0.5 * c.image_score
        assert c.combined == pytest.approx(expected, abs=1e-6)


def test_tie_selects_lowest_arrangement_id(fixture_bank_dir, stub_embedder_cls):
    # constant embedding for every image and text: all six scores identical
    class ConstantEmbedder(stub_embedder_cls):
        def embed_texts(self, texts):
            return [np.array([1.0, 0, 0, 0])] * len(texts)

        def embed_images(self, images):
            return [np.array([1.0, 0, 0, 0])] * len(images)

    backends = Backends(embedder=ConstantEmbedder(dim=4), inpaint=MockInpaintBackend())
    result = generate(fixture_bank_dir, PROMPT, small_config(), backends)
    combined = {c.combined for c in result.candidates}
    assert len(combined) == 1
    assert result.selected.arrangement_id == 0


def test_generate_partial_run_selects_over_successes(fixture_bank_dir, mock_backends):
    counting = CountingInpaint(fail_on={2, 5})
    backends = Backends(embedder=mock_backends.embedder, inpaint=counting)
    result = generate(fixture_bank_dir, PROMPT, small_config(max_concurrency=1), backends)
    assert len(result.candidates) == 4
    assert len(result.report["failures"]) == 2
    assert result.selected.arrangement_id in {c.arrangement_id for c in result.candidates}


def test_generate_all_failed_raises(fixture_bank_dir, mock_backends):
    counting = CountingInpaint(fail_on=set(range(1, 7)))
    backends = Backends(embedder=mock_backends.embedder, inpaint=counting)
    with pytest.raises(PartialRun):
        generate(fixture_bank_dir, PROMPT, small_config(max_concurrency=1), backends)


def test_generate_artifacts_layout(fixture_bank_dir, mock_backends, tmp_path):
    out = tmp_path / "runs"
    result = generate(fixture_bank_dir, PROMPT, small_config(), mock_backends, out_dir=out)
    run_dir = out / result.run_id
    assert (run_dir / "report.json").exists()
    assert (run_dir / "scores.csv").exists()
    assert (run_dir / "scores.png").exists()
    for k in range(6):
        for name in ("prompt.composite.png", "prompt.mask.png", "result.png", "canvas.png"):
            assert (run_dir / f"arrangement-{k}" / name).exists()
    report = json.loads((run_dir / "report.json").read_text())
    assert report["selected_arrangement_id"] == result.selected.arrangement_id


def test_generate_elements_override(fixture_bank_dir, mock_backends):
    config = small_config(elements=["Tintin", "Snowy", "rocket"])
    result = generate(fixture_bank_dir, PROMPT, config, mock_backends)
    assert [e["phrase"] for e in result.report["elements"]] == ["Tintin", "Snowy", "rocket"]
    assert all(e["source"] == "user" for e in result.report["elements"])


def test_selection_invariant_under_embedding_scaling(fixture_bank_dir, mock_backends):
    class ScaledEmbedder:
        def __init__(self, inner, scale):
            self.inner = inner
            self.scale = scale
            self.descriptor = inner.descriptor

        def embed_texts(self, texts):
            return [self.scale * v for v in self.inner.embed_texts(texts)]

        def embed_images(self, images):
            return [self.scale * v for v in self.inner.embed_images(images)]

    base = generate(fixture_bank_dir, PROMPT, small_config(), mock_backends)
    scaled_backends = Backends(
        embedder=ScaledEmbedder(mock_backends.embedder, 37.5),
        inpaint=mock_backends.inpaint,
    )
    scaled = generate(fixture_bank_dir, PROMPT, small_config(), scaled_backends)
    assert base.selected.arrangement_id == scaled.selected.arrangement_id


# --- sessions & refine ------------------------------------------------------------


def test_refine_pins_honored_in_all_arrangements(fixture_bank_dir, mock_backends, tmp_path):
    store = SessionStore(tmp_path / "sessions")
    session = store.create(fixture_bank_dir, PROMPT, small_config())
    from dvp.bank import load_manifest

    pin_image = load_manifest(fixture_bank_dir).entries[0].image_id
    result = refine(store, session.session_id, mock_backends, pins={(0, 0): pin_image})
    for arr in result.report["arrangements"]:
        assert arr["assignment"]["placements"]["0,0"] == pin_image
        assert arr["assignment"]["pins"]["0,0"] == pin_image


def test_refine_unchanged_config_reproduces_digest(fixture_bank_dir, mock_backends, tmp_path):
    store = SessionStore(tmp_path / "sessions")
    session = store.create(fixture_bank_dir, PROMPT, small_config())
    r1 = refine(store, session.session_id, mock_backends)
    r2 = refine(store, session.session_id, mock_backends)
    assert pixel_digest(r1.selected.image) == pixel_digest(r2.selected.image)


def test_refine_new_prompt_grows_history(fixture_bank_dir, mock_backends, tmp_path):
    store = SessionStore(tmp_path / "sessions")
    session = store.create(fixture_bank_dir, PROMPT, small_config())
    refine(store, session.session_id, mock_backends)
    refine(store, session.session_id, mock_backends, new_prompt="Snowy digs in the garden")
    reloaded = store.load(session.session_id)
    assert len(reloaded.history) == 2
    assert reloaded.prompt == "Snowy digs in the garden"
    assert reloaded.history[1]["prompt"] == "Snowy digs in the garden"


def test_refine_unknown_session(tmp_path, mock_backends):
    store = SessionStore(tmp_path / "sessions")
    with pytest.raises(UnknownSession):
        refine(store, "ghost", mock_backends)


# --- evaluation --------------------------------------------------------------------


def test_evaluate_run_identical_embeddings(stub_embedder_cls):
    img = solid((4, 4, 4))
    embedder = stub_embedder_cls(dim=8)
    metrics = evaluate_run([(img, "p")], [img], embedder)
    assert metrics["image_similarity"] == pytest.approx(1.0, abs=1e-9)


def test_evaluate_run_hand_mean(stub_embedder_cls):
    def unit_at(cosine_value):
        return [cosine_value, math.sqrt(1 - cosine_value**2), 0, 0]

    g1, g2 = solid((1, 0, 0)), solid((2, 0, 0))
    r1, r2 = solid((3, 0, 0)), solid((4, 0, 0))
    vecs = {
        pixel_digest(g1): [1, 0, 0, 0],
        pixel_digest(g2): [0, 1, 0, 0],
        # cosines to g1: 0.1, 0.5 ; to g2: 0.3, 0.7 (second component)
        pixel_digest(r1): [0.1, 0.3, math.sqrt(1 - 0.01 - 0.09), 0],
        pixel_digest(r2): [0.5, 0.7, math.sqrt(1 - 0.25 - 0.49), 0],
    }
    embedder = stub_embedder_cls(dim=4, images=vecs)
    metrics = evaluate_run([(g1, "p1"), (g2, "p2")], [r1, r2], embedder)
    assert metrics["image_similarity"] == pytest.approx((0.1 + 0.5 + 0.3 + 0.7) / 4, abs=1e-9)


def test_evaluate_run_empty_input(stub_embedder_cls):
    with pytest.raises(EmptyInput):
        evaluate_run([], [solid((1, 1, 1))], stub_embedder_cls())


def test_evaluate_protocol_shape(fixture_bank_dir, mock_backends):
    report = evaluate_protocol(
        [fixture_bank_dir], ["a cat", "a dog"], [0, 1],
        small_config(), mock_backends,
    )
    assert report["protocol"]["total_images"] == 4
    assert report["per_theme"][0]["images"] == 4
    assert -1 <= report["image_similarity"] <= 1
