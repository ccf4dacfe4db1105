"""Inpainting backends: the remote fill-style diffusion client, a
deterministic offline mock, and an async job pool.

The mock fills the canvas with the per-pixel mean of all reference cells
plus optional seeded low-amplitude noise, so the generated region resembles
the references and theme-consistency scores behave sensibly in tests.
"""

from __future__ import annotations

import base64
import hashlib
import io
import os
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np

from .composer import VisualPrompt
from .errors import BackendTimeout, BackendUnavailable, ContentRejected, UnknownJob
from .raster import pixel_digest

DEFAULT_GUIDANCE_SCALE = 30.0
DEFAULT_STEPS = 50


@dataclass(frozen=True)
class GenerationParams:
    prompt: str
    seed: int = 0
    guidance_scale: float = DEFAULT_GUIDANCE_SCALE
    steps: int = DEFAULT_STEPS

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.guidance_scale < 0:
            raise ValueError("guidance_scale must be >= 0")


class InpaintBackend(Protocol):
    def inpaint(self, vp: VisualPrompt, params: GenerationParams) -> np.ndarray: ...


class MockInpaintBackend:
    """Offline backend: unmasked pixels pass through byte-identical; the
    masked region becomes the mean reference tile (+ seeded noise)."""

    def __init__(self, noise_amplitude: int = 2):
        self.noise_amplitude = noise_amplitude

    def inpaint(self, vp: VisualPrompt, params: GenerationParams) -> np.ndarray:
        grid = vp.grid
        p = grid.cell_px
        tiles = []
        for r, c in grid.reference_cells():
            tiles.append(vp.composite[r * p:(r + 1) * p, c * p:(c + 1) * p].astype(np.float64))
        mean_tile = np.mean(tiles, axis=0)

        result = vp.composite.copy()
        for r, c in grid.canvas_cells:
            fill = mean_tile
            if self.noise_amplitude > 0:
                seed_material = (pixel_digest(vp.composite) + f":{params.seed}:{r},{c}").encode()
                digest = hashlib.sha256(seed_material).digest()
                rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
                noise = rng.integers(
                    -self.noise_amplitude, self.noise_amplitude + 1, size=mean_tile.shape
                )
                fill = mean_tile + noise
            result[r * p:(r + 1) * p, c * p:(c + 1) * p] = np.clip(np.rint(fill), 0, 255).astype(np.uint8)
        return result


def _png_b64(image: np.ndarray) -> str:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class RemoteInpaintBackend:
    """Client for a fill-style diffusion inpainting service.

    Wire contract: POST {composite_png, mask_png, prompt, guidance_scale,
    steps, seed} -> {image_png} or {error}. Retries transient failures with
    exponential backoff, at most 3 attempts.
    """

    MAX_ATTEMPTS = 3

    def __init__(self, url: str | None = None, token: str | None = None,
                 timeout_s: float | None = None, session=None, backoff_s: float = 1.0):
        import requests

        self.url = (url or os.environ.get("DVP_GEN_URL", "")).rstrip("/")
        if not self.url:
            raise BackendUnavailable("no inpainting backend URL (set DVP_GEN_URL)")
        self.token = token or os.environ.get("DVP_GEN_TOKEN")
        self.timeout_s = timeout_s if timeout_s is not None else float(
            os.environ.get("DVP_GEN_TIMEOUT_S", "120")
        )
        self.backoff_s = backoff_s
        self._session = session or requests.Session()

    def inpaint(self, vp: VisualPrompt, params: GenerationParams) -> np.ndarray:
        import requests
        from PIL import Image

        payload = {
            "composite_png": _png_b64(vp.composite),
            "mask_png": _png_b64(np.stack([vp.mask] * 3, axis=-1)),
            "prompt": params.prompt,
            "guidance_scale": params.guidance_scale,
            "steps": params.steps,
            "seed": params.seed,
        }
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"

        last_error = None
        for attempt in range(self.MAX_ATTEMPTS):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            try:
                resp = self._session.post(
                    f"{self.url}/inpaint", json=payload, headers=headers, timeout=self.timeout_s
                )
            except requests.Timeout as exc:
                last_error = BackendTimeout(str(exc))
                continue
            except requests.RequestException as exc:
                last_error = BackendUnavailable(str(exc))
                continue
            if resp.status_code >= 500:
                last_error = BackendUnavailable(f"backend error {resp.status_code}")
                continue
            body = resp.json()
            if resp.status_code == 422 or body.get("error", {}).get("code") == "content_rejected":
                raise ContentRejected(str(body.get("error")))
            resp.raise_for_status()
            raw = base64.b64decode(body["image_png"])
            with Image.open(io.BytesIO(raw)) as im:
                return np.asarray(im.convert("RGB"), dtype=np.uint8)
        raise last_error


@dataclass(frozen=True)
class GenerationJob:
    job_id: str
    status: str  # pending | running | done | failed
    result: np.ndarray | None = None
    error: str | None = None


class JobPool:
    """Bounded async wrapper over an inpainting backend. Jobs are immutable
    once done or failed."""

    def __init__(self, backend: InpaintBackend, max_in_flight: int = 2):
        self._backend = backend
        self._executor = ThreadPoolExecutor(max_workers=max_in_flight)
        self._jobs: dict[str, GenerationJob] = {}
        self._lock = threading.Lock()

    def submit_async(self, vp: VisualPrompt, params: GenerationParams) -> str:
        job_id = uuid.uuid4().hex
        with self._lock:
            self._jobs[job_id] = GenerationJob(job_id=job_id, status="pending")
        self._executor.submit(self._run, job_id, vp, params)
        return job_id

    def _run(self, job_id: str, vp: VisualPrompt, params: GenerationParams) -> None:
        with self._lock:
            self._jobs[job_id] = GenerationJob(job_id=job_id, status="running")
        try:
            result = self._backend.inpaint(vp, params)
        except Exception as exc:  # job boundary: record, don't propagate
            with self._lock:
                self._jobs[job_id] = GenerationJob(job_id=job_id, status="failed", error=str(exc))
            return
        with self._lock:
            self._jobs[job_id] = GenerationJob(job_id=job_id, status="done", result=result)

    def poll(self, job_id: str) -> GenerationJob:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise UnknownJob(job_id)
        return job

    def wait(self, job_id: str, timeout_s: float = 300.0, interval_s: float = 0.01) -> GenerationJob:
        deadline = time.monotonic() + timeout_s
        while True:
            job = self.poll(job_id)
            if job.status in ("done", "failed"):
                return job
            if time.monotonic() > deadline:
                raise BackendTimeout(f"job {job_id} did not finish in {timeout_s}s")
            time.sleep(interval_s)

    def shutdown(self) -> None:
        self._executor.shutdown(wait=False)
