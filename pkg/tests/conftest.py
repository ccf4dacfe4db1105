import shutil
from pathlib import Path

import numpy as np
import pytest

from dvp.bank import ingest
from dvp.embedding import HashEmbedder
from dvp.engine import Backends
from dvp.generation import MockInpaintBackend

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixture_bank_dir(tmp_path):
    """Copy of the shipped 16-image fixture bank, ingested and ready."""
    bank_dir = tmp_path / "bank"
    shutil.copytree(FIXTURES / "fixture_bank", bank_dir)
    ingest(bank_dir, "fixture")
    return bank_dir


@pytest.fixture
def mock_backends():
    return Backends(embedder=HashEmbedder(), inpaint=MockInpaintBackend())


class StubEmbedder:
    """Test embedder with prescribed vectors; anything unknown falls back to
    the deterministic hash construction."""

    def __init__(self, dim=8, texts=None, images=None):
        from dvp.embedding import EmbeddingBackendDescriptor

        self.dim = dim
        self.texts = dict(texts or {})
        self.images = dict(images or {})  # keyed by pixel digest
        self.calls = {"text": 0, "image": 0}
        self.descriptor = EmbeddingBackendDescriptor(name="stub", dim=dim, modality="joint")

    def embed_texts(self, texts):
        from dvp.embedding import hash_unit_vector

        self.calls["text"] += len(texts)
        return [
            np.asarray(self.texts[t], dtype=np.float64)
            if t in self.texts
            else hash_unit_vector(b"text:" + t.encode(), self.dim)
            for t in texts
        ]

    def embed_images(self, images):
        from dvp.embedding import hash_unit_vector
        from dvp.raster import pixel_digest

        self.calls["image"] += len(images)
        out = []
        for img in images:
            key = pixel_digest(np.asarray(img, dtype=np.uint8))
            if key in self.images:
                out.append(np.asarray(self.images[key], dtype=np.float64))
            else:
                out.append(hash_unit_vector(b"image:" + key.encode(), self.dim))
        return out


@pytest.fixture
def stub_embedder_cls():
    return StubEmbedder


# one pass/fail line per acceptance criterion at the end of the run

_ACCEPTANCE_LABELS = {
    "test_acceptance_cosine_topk_oracle_equivalence": "similarity matching vs brute-force oracle",
    "test_acceptance_arrangement_enumeration": "arrangement enumeration",
    "test_acceptance_slot_assignment_rules": "slot assignment (pins, stars, middle-row drop)",
    "test_acceptance_composition_bit_exactness": "composition bit-exactness",
    "test_acceptance_end_to_end_determinism": "end-to-end determinism (CLI x3)",
    "test_acceptance_selection_invariances": "selection invariances",
    "test_acceptance_evaluation_harness_shape": "evaluation harness vs independent oracle",
    "test_acceptance_grid_size_ablation_direction": "grid-size ablation direction",
    "test_acceptance_service_conformance": "service endpoint conformance",
    "test_acceptance_live_smoke": "live backend smoke (optional)",
}


def pytest_terminal_summary(terminalreporter):
    results = {}
    for outcome in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(outcome, ()):
            name = getattr(report, "location", ("", "", ""))[2].split("[")[0]
            if name in _ACCEPTANCE_LABELS and (report.when == "call" or outcome != "passed"):
                results.setdefault(name, outcome.upper())
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, label in _ACCEPTANCE_LABELS.items():
        outcome = results.get(name)
        if outcome is None:
            continue
        status = {"PASSED": "PASS", "SKIPPED": "SKIP"}.get(outcome, "FAIL")
        terminalreporter.write_line(f"ACCEPTANCE: {label}: {status}")
