"""HTTP+JSON studio service: banks, sessions, pins, runs, artifacts.

State lives under a single work directory (banks registry, session store,
run registry, run artifacts), so a restart over the same directory replays
GETs identically. Run execution is async on a bounded pool; the UI polls.
"""

from __future__ import annotations

import io
import json
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse, Response
from pydantic import BaseModel

from . import bank as bank_mod
from .engine import Backends, RunConfig, ScoreWeights, SessionStore, generate
from .errors import (
    BackendUnavailable,
    BankLocked,
    DvpError,
    PinOnCanvas,
    PinOutOfBounds,
    UnknownBank,
    UnknownJob,
    UnknownSession,
)
from .intent import ExtractionRequest, extract_elements, override_elements
from .layout import default_star_cells
from .raster import load_image, pixel_digest, save_png
from .similarity import match_elements

API_PREFIX = "/v1"


class CreateBankRequest(BaseModel):
    dir: str
    theme: str


class CreateSessionRequest(BaseModel):
    bank_id: str
    prompt: str
    n: int | None = None
    elements: list[str] | None = None


class PinRequest(BaseModel):
    cell: list[int]
    image_id: str | None = None


class RunRequest(BaseModel):
    weights: dict | None = None
    pins: list[PinRequest] | None = None
    params: dict | None = None


_STATUS_FOR_CODE = {
    "unknown_bank": 404,
    "unknown_session": 404,
    "unknown_job": 404,
    "bank_locked": 409,
    "backend_unavailable": 503,
    "timeout": 503,
    "empty_bank": 400,
}


def _error_response(exc: DvpError) -> JSONResponse:
    status = _STATUS_FOR_CODE.get(exc.code, 400)
    return JSONResponse(
        status_code=status,
        content={"error": {"code": exc.code, "message": str(exc), "retryable": exc.retryable}},
    )


class Studio:
    """File-backed application state shared by all requests."""

    def __init__(self, workdir, backends: Backends, max_concurrent_runs: int = 2):
        self.workdir = Path(workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.backends = backends
        self.sessions = SessionStore(self.workdir / "sessions")
        self.runs_dir = self.workdir / "runs"
        self._banks_path = self.workdir / "banks.json"
        self._runs_path = self.workdir / "runs.json"
        self.banks = json.loads(self._banks_path.read_text()) if self._banks_path.exists() else {}
        self.runs = json.loads(self._runs_path.read_text()) if self._runs_path.exists() else {}
        self._lock = threading.Lock()
        self._executor = ThreadPoolExecutor(max_workers=max_concurrent_runs)

    def _persist(self) -> None:
        self._banks_path.write_text(json.dumps(self.banks, indent=2))
        self._runs_path.write_text(json.dumps(self.runs, indent=2))

    # --- banks ---

    def create_bank(self, directory: str, theme: str) -> dict:
        manifest = bank_mod.ingest(directory, theme)
        bank_mod.build_cache(directory, manifest, self.backends.embedder)
        bank_id = uuid.uuid4().hex[:12]
        with self._lock:
            self.banks[bank_id] = {"dir": str(directory), "theme": theme}
            self._persist()
        return {
            "bank_id": bank_id,
            "theme": theme,
            "size": manifest.size,
            "image_ids": sorted(manifest.entry_ids()),
            "warnings": manifest.warnings,
        }

    def bank_dir(self, bank_id: str) -> Path:
        if bank_id not in self.banks:
            raise UnknownBank(bank_id)
        return Path(self.banks[bank_id]["dir"])

    # --- sessions ---

    def create_session(self, req: CreateSessionRequest) -> dict:
        bank_dir = self.bank_dir(req.bank_id)
        manifest = bank_mod.load_manifest(bank_dir)
        cache = bank_mod.build_cache(bank_dir, manifest, self.backends.embedder)

        if req.elements:
            elements = override_elements(req.elements)
        else:
            elements = extract_elements(
                ExtractionRequest(prompt=req.prompt, n=req.n or 3, backend=self.backends.llm)
            )
        config = RunConfig(n=len(elements), k=min(3, manifest.size),
                           elements=[e.phrase for e in elements])
        element_vecs = self.backends.embedder.embed_texts([e.phrase for e in elements])
        bank_vecs = [(e.image_id, cache.records[e.image_id]) for e in manifest.entries]
        table = match_elements(element_vecs, bank_vecs, config.k)

        session = self.sessions.create(bank_dir, req.prompt, config)
        session.history.append({"event": "created", "bank_id": req.bank_id})
        self.sessions.save(session)
        return {
            "session_id": session.session_id,
            "bank_id": req.bank_id,
            "prompt": req.prompt,
            "n": len(elements),
            "elements": [
                {"index": e.index, "phrase": e.phrase, "source": e.source} for e in elements
            ],
            "candidate_table": json.loads(table.to_json()),
            "grid": config.to_jsonable()["grid"],
            "stars": [list(c) for c in default_star_cells(config.grid)],
            "pins": {},
        }

    def set_pin(self, session_id: str, cell, image_id: str | None) -> dict:
        session = self.sessions.load(session_id)
        cell = tuple(int(x) for x in cell)
        grid = session.config.grid
        if not (0 <= cell[0] < grid.rows and 0 <= cell[1] < grid.cols):
            raise PinOutOfBounds(f"cell {cell} outside grid")
        if cell in grid.canvas_cells:
            raise PinOnCanvas(f"cell {cell} is the canvas")
        pins = dict(session.config.pins)
        if image_id is None:
            pins.pop(cell, None)
        else:
            manifest = bank_mod.load_manifest(session.bank_dir)
            if image_id not in manifest.entry_ids():
                raise UnknownBank(f"image {image_id} not in bank")
            pins[cell] = image_id
        session.config = replace(session.config, pins=pins)
        self.sessions.save(session)
        return {"session_id": session_id,
                "pins": {f"{r},{c}": v for (r, c), v in sorted(pins.items())}}

    # --- runs ---

    def start_run(self, session_id: str, req: RunRequest) -> str:
        session = self.sessions.load(session_id)
        config = session.config
        if req.weights:
            config = replace(config, weights=ScoreWeights(**req.weights))
        if req.pins is not None:
            pins = {}
            for pin in req.pins:
                pins[tuple(int(x) for x in pin.cell)] = pin.image_id
            config = replace(config, pins=pins)
        if req.params:
            allowed = {k: v for k, v in req.params.items()
                       if k in ("seed", "guidance_scale", "steps", "seed_per_arrangement")}
            config = replace(config, **allowed)
            if "cell_px" in req.params:
                config = replace(config, grid=replace(config.grid, cell_px=int(req.params["cell_px"])))

        run_id = uuid.uuid4().hex[:12]
        with self._lock:
            self.runs[run_id] = {"status": "pending", "session_id": session_id}
            self._persist()
        self._executor.submit(self._execute_run, run_id, session, config)
        return run_id

    def _execute_run(self, run_id: str, session, config: RunConfig) -> None:
        with self._lock:
            self.runs[run_id]["status"] = "running"
        try:
            result = generate(session.bank_dir, session.prompt, config, self.backends,
                              out_dir=self.runs_dir, run_id=run_id)
        except Exception as exc:
            with self._lock:
                self.runs[run_id].update(status="failed", error=f"{type(exc).__name__}: {exc}")
                self._persist()
            return
        session.config = config
        session.history.append({
            "run_id": run_id,
            "selected_arrangement_id": result.selected.arrangement_id,
            "config": config.to_jsonable(),
        })
        self.sessions.save(session)
        with self._lock:
            self.runs[run_id].update(status="done")
            self._persist()

    def run_status(self, run_id: str) -> dict:
        with self._lock:
            run = self.runs.get(run_id)
        if run is None:
            raise UnknownJob(run_id)
        payload = {"run_id": run_id, "status": run["status"], "session_id": run["session_id"]}
        if run["status"] == "failed":
            payload["error"] = run.get("error")
        if run["status"] == "done":
            report = json.loads((self.runs_dir / run_id / "report.json").read_text())
            for arr in report["arrangements"]:
                if "artifacts" in arr:
                    arr["artifacts"] = {
                        key: f"{API_PREFIX}/runs/{run_id}/artifacts/{rel}"
                        for key, rel in arr["artifacts"].items()
                    }
            payload["report"] = report
        return payload

    def artifact_path(self, run_id: str, rel: str) -> Path:
        with self._lock:
            if run_id not in self.runs:
                raise UnknownJob(run_id)
        base = (self.runs_dir / run_id).resolve()
        path = (base / rel).resolve()
        if not str(path).startswith(str(base)) or not path.exists():
            raise UnknownJob(f"no artifact {rel} in run {run_id}")
        return path


def create_app(workdir, backends: Backends) -> FastAPI:
    app = FastAPI(title="dvp studio service", version="1")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    studio = Studio(workdir, backends)
    app.state.studio = studio

    @app.exception_handler(DvpError)
    async def dvp_error_handler(request: Request, exc: DvpError):
        return _error_response(exc)

    @app.post(f"{API_PREFIX}/banks")
    def create_bank(req: CreateBankRequest):
        return studio.create_bank(req.dir, req.theme)

    @app.get(f"{API_PREFIX}/banks/{{bank_id}}/images/{{image_id}}")
    def bank_image(bank_id: str, image_id: str):
        bank_dir = studio.bank_dir(bank_id)
        manifest = bank_mod.load_manifest(bank_dir)
        for entry in manifest.entries:
            if entry.image_id == image_id:
                from PIL import Image

                image = load_image(bank_dir / entry.path)
                buf = io.BytesIO()
                Image.fromarray(image).save(buf, format="PNG")
                return Response(content=buf.getvalue(), media_type="image/png",
                                headers={"Cache-Control": "immutable, max-age=31536000"})
        raise UnknownBank(f"image {image_id} not in bank {bank_id}")

    @app.post(f"{API_PREFIX}/sessions")
    def create_session(req: CreateSessionRequest):
        return studio.create_session(req)

    @app.post(f"{API_PREFIX}/sessions/{{session_id}}/pins")
    def set_pin(session_id: str, req: PinRequest):
        if req.image_id is None:
            raise DvpError("image_id required to set a pin")
        return studio.set_pin(session_id, req.cell, req.image_id)

    @app.delete(f"{API_PREFIX}/sessions/{{session_id}}/pins")
    def delete_pin(session_id: str, req: PinRequest):
        return studio.set_pin(session_id, req.cell, None)

    @app.post(f"{API_PREFIX}/sessions/{{session_id}}/runs")
    def start_run(session_id: str, req: RunRequest):
        run_id = studio.start_run(session_id, req)
        return {"run_id": run_id, "status": "pending"}

    @app.get(f"{API_PREFIX}/runs/{{run_id}}")
    def run_status(run_id: str):
        return studio.run_status(run_id)

    @app.get(f"{API_PREFIX}/runs/{{run_id}}/artifacts/{{rel:path}}")
    def run_artifact(run_id: str, rel: str):
        path = studio.artifact_path(run_id, rel)
        media = "image/png" if path.suffix == ".png" else "application/octet-stream"
        return FileResponse(path, media_type=media,
                            headers={"Cache-Control": "immutable, max-age=31536000"})

    return app
