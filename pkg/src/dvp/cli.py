"""Command-line entry point.

Exit codes: 0 success, 1 domain error (structured on stderr, or stdout with
--json), 2 usage error. Option precedence: flags > DVP_* environment
variables > config file (dvp.toml-style key = value) > built-in defaults.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click

from . import bank as bank_mod
from .embedding import HashEmbedder, PixelStatEmbedder, RemoteEmbedder
from .engine import (
    Backends,
    RunConfig,
    ScoreWeights,
    SessionStore,
    evaluate_protocol,
    generate,
    refine,
)
from .errors import DvpError
from .generation import MockInpaintBackend, RemoteInpaintBackend
from .layout import GridSpec, default_grid

ENV_PREFIX = "DVP_"


def load_config_file(path) -> dict:
    """Minimal key = value config document (toml-compatible scalars)."""
    values = {}
    text = Path(path).read_text()
    try:
        import tomllib

        return {k: v for k, v in tomllib.loads(text).items()}
    except Exception:
        pass
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip().strip('"')
    return values


class Settings:
    def __init__(self, config_path=None):
        self.file_values = {}
        path = config_path or ("dvp.toml" if Path("dvp.toml").exists() else None)
        if path and Path(path).exists():
            self.file_values = load_config_file(path)

    def resolve(self, name: str, flag_value, default=None):
        """flags > env > file > default; flag_value None means unset."""
        if flag_value is not None:
            return flag_value
        env = os.environ.get(ENV_PREFIX + name.upper())
        if env is not None:
            return env
        if name in self.file_values:
            return self.file_values[name]
        return default


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DvpError as exc:
            payload = {"error": {"code": exc.code, "message": str(exc), "retryable": exc.retryable}}
            click.echo(json.dumps(payload), err=True)
            sys.exit(1)

    return wrapper


def parse_grid(grid: str, canvas: str, cell_px: int) -> GridSpec:
    rows, _, cols = grid.lower().partition("x")
    rows, cols = int(rows), int(cols)
    if canvas == "center":
        canvas_cells = frozenset({(rows // 2, cols // 2)})
    else:
        canvas_cells = frozenset(
            tuple(int(x) for x in cell.split(",")) for cell in canvas.split(":")
        )
    return GridSpec(rows=rows, cols=cols, cell_px=cell_px, canvas_cells=canvas_cells)


def parse_stars(stars: str):
    if stars == "auto":
        return None
    return [tuple(int(x) for x in cell.split(",")) for cell in stars.split(";")]


def parse_pins(pins) -> dict:
    out = {}
    for spec in pins:
        cell, _, image_id = spec.partition("=")
        r, c = (int(x) for x in cell.split(","))
        out[(r, c)] = image_id
    return out


def make_embedder(name: str, settings: Settings):
    if name == "hash":
        return HashEmbedder()
    if name == "pixelstat":
        return PixelStatEmbedder()
    if name == "remote":
        url = settings.resolve("embed_url", None)
        if not url:
            raise click.UsageError("remote embedder requires DVP_EMBED_URL or embed_url config")
        return RemoteEmbedder(url=url, token=settings.resolve("embed_token", None))
    raise click.UsageError(f"unknown embedding backend {name!r}")


def make_backends(mock: bool, embed_backend: str | None, settings: Settings) -> Backends:
    if mock:
        return Backends(
            embedder=make_embedder(embed_backend or "hash", settings),
            inpaint=MockInpaintBackend(),
        )
    embedder = make_embedder(embed_backend or settings.resolve("embed_backend", "remote"), settings)
    return Backends(embedder=embedder, inpaint=RemoteInpaintBackend())


def common_run_options(fn):
    options = [
        click.option("--n", type=int, default=3, show_default=True, help="Number of key elements."),
        click.option("--k", type=int, default=3, show_default=True, help="Candidates per element."),
        click.option("--grid", default="3x3", show_default=True, help="Grid geometry ROWSxCOLS."),
        click.option("--canvas", default="center", show_default=True,
                     help="Canvas cells: 'center' or 'r,c[:r,c...]' (contiguous rectangle)."),
        click.option("--cell-px", type=int, default=512, show_default=True, help="Square cell size in pixels."),
        click.option("--stars", default="auto", show_default=True,
                     help="Star cells: 'auto' or 'r,c;r,c'."),
        click.option("--weights", default="0.5,0.5,0", show_default=True,
                     help="Score weights text,image,quality."),
        click.option("--seed", type=int, default=0, show_default=True, help="Base generation seed."),
        click.option("--guidance-scale", type=float, default=30.0, show_default=True),
        click.option("--steps", type=int, default=50, show_default=True),
        click.option("--seed-per-arrangement", is_flag=True, default=False,
                     help="Experiment flag: offset the seed by arrangement id."),
        click.option("--pin", "pins", multiple=True, metavar="R,C=IMAGE_ID",
                     help="Pin an image at a grid cell (repeatable)."),
        click.option("--mock-backends", is_flag=True, default=False,
                     help="Use deterministic offline embedding + inpainting backends."),
        click.option("--embed-backend", default=None,
                     help="Embedding backend: hash, pixelstat, or remote."),
        click.option("--out", default=None, help="Runs output directory.  [default: ./runs]"),
        click.option("--json", "as_json", is_flag=True, default=False,
                     help="Print machine-readable JSON on stdout."),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


def build_run_config(n, k, grid, canvas, cell_px, stars, weights, seed, guidance_scale,
                     steps, seed_per_arrangement, pins, elements=None) -> RunConfig:
    w = [float(x) for x in weights.split(",")]
    return RunConfig(
        n=n, k=k,
        grid=parse_grid(grid, canvas, cell_px),
        stars=parse_stars(stars),
        weights=ScoreWeights(w_text=w[0], w_image=w[1], w_quality=w[2]),
        seed=seed, guidance_scale=guidance_scale, steps=steps,
        seed_per_arrangement=seed_per_arrangement,
        elements=list(elements) if elements else None,
        pins=parse_pins(pins),
    )


@click.group()
@click.option("--config", "config_path", default=None, help="Path to a dvp.toml config file.")
@click.pass_context
def main(ctx, config_path):
    """Theme-specific image generation via dynamic visual prompting."""
    ctx.obj = Settings(config_path)


@main.group()
def bank():
    """Theme bank management."""


@bank.command("ingest")
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("--theme", required=True, help="Theme name recorded in the manifest.")
@click.option("--json", "as_json", is_flag=True, default=False)
@handle_errors
def bank_ingest(directory, theme, as_json):
    """Scan DIRECTORY for images and write the bank manifest."""
    manifest = bank_mod.ingest(directory, theme)
    if as_json:
        click.echo(json.dumps(manifest.to_dict(), sort_keys=True))
    else:
        click.echo(f"ingested {manifest.size} images for theme '{theme}'")
        for w in manifest.warnings:
            click.echo(f"warning: {w['path']}: {w['reason']}", err=True)


@bank.command("index")
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("--backend", default="hash", show_default=True,
              help="Embedding backend: hash, pixelstat, or remote.")
@click.option("--json", "as_json", is_flag=True, default=False)
@click.pass_obj
@handle_errors
def bank_index(settings, directory, backend, as_json):
    """Build (or refresh) the embedding cache for a bank."""
    manifest = bank_mod.load_manifest(directory)
    embedder = make_embedder(backend, settings)
    cache = bank_mod.build_cache(directory, manifest, embedder)
    if as_json:
        click.echo(json.dumps({"backend": backend, "dim": cache.dim, "records": len(cache.records)}))
    else:
        click.echo(f"indexed {len(cache.records)} images with backend '{backend}' (dim {cache.dim})")


@bank.command("verify")
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("--backend", default="hash", show_default=True)
@click.option("--json", "as_json", is_flag=True, default=False)
@handle_errors
def bank_verify(directory, backend, as_json):
    """Check manifest/cache/disk consistency."""
    manifest = bank_mod.load_manifest(directory)
    cache_file = bank_mod.cache_path(directory, backend)
    cache = bank_mod.read_cache(cache_file, backend) if cache_file.exists() else None
    report = bank_mod.verify_cache(directory, manifest, cache)
    if as_json:
        click.echo(json.dumps(report.to_dict(), sort_keys=True))
    else:
        click.echo("clean" if report.clean else
                   f"stale={report.stale} missing={report.missing} orphaned={report.orphaned}")
    sys.exit(0 if report.clean else 1)


@main.command("generate")
@click.option("--bank", "bank_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Theme bank directory.")
@click.option("--prompt", required=True, help="Text prompt.")
@click.option("--elements", default=None, help="Comma-separated element override, bypasses extraction.")
@common_run_options
@click.pass_obj
@handle_errors
def generate_cmd(settings, bank_dir, prompt, elements, n, k, grid, canvas, cell_px, stars,
                 weights, seed, guidance_scale, steps, seed_per_arrangement, pins,
                 mock_backends, embed_backend, out, as_json):
    """Run the full search loop and select the best candidate."""
    element_list = [e.strip() for e in elements.split(",")] if elements else None
    config = build_run_config(n, k, grid, canvas, cell_px, stars, weights, seed,
                              guidance_scale, steps, seed_per_arrangement, pins,
                              elements=element_list)
    backends = make_backends(mock_backends, embed_backend, settings)
    out_dir = settings.resolve("out", out, "runs")
    result = generate(bank_dir, prompt, config, backends, out_dir=out_dir)
    if as_json:
        click.echo(json.dumps(result.report, sort_keys=True))
    else:
        click.echo(f"run {result.run_id}: selected arrangement "
                   f"{result.selected.arrangement_id} "
                   f"(combined {result.selected.combined:.4f})")
        click.echo(f"artifacts: {result.run_dir}")


@main.command("refine")
@click.option("--session", "session_id", required=True, help="Session id to refine.")
@click.option("--sessions-dir", default="sessions", show_default=True)
@click.option("--prompt", "new_prompt", default=None, help="Replace the session prompt.")
@click.option("--pin", "pins", multiple=True, metavar="R,C=IMAGE_ID")
@click.option("--weights", default=None, help="Score weights text,image,quality.")
@click.option("--mock-backends", is_flag=True, default=False)
@click.option("--embed-backend", default=None)
@click.option("--out", default=None)
@click.option("--json", "as_json", is_flag=True, default=False)
@click.pass_obj
@handle_errors
def refine_cmd(settings, session_id, sessions_dir, new_prompt, pins, weights,
               mock_backends, embed_backend, out, as_json):
    """Re-run a session's loop with updated pins, prompt, or weights."""
    store = SessionStore(sessions_dir)
    backends = make_backends(mock_backends, embed_backend, settings)
    w = None
    if weights:
        parts = [float(x) for x in weights.split(",")]
        w = ScoreWeights(w_text=parts[0], w_image=parts[1], w_quality=parts[2])
    out_dir = settings.resolve("out", out, "runs")
    result = refine(store, session_id, backends, out_dir=out_dir,
                    pins=parse_pins(pins) if pins else None,
                    new_prompt=new_prompt, weights=w)
    if as_json:
        click.echo(json.dumps(result.report, sort_keys=True))
    else:
        click.echo(f"run {result.run_id}: selected arrangement {result.selected.arrangement_id}")


@main.command("evaluate")
@click.option("--bank", "bank_dirs", multiple=True, required=True,
              type=click.Path(exists=True, file_okay=False), help="Theme bank (repeatable).")
@click.option("--prompt", "prompts", multiple=True, required=True, help="Prompt (repeatable).")
@click.option("--seeds", default="0", show_default=True, help="Comma-separated seed list.")
@common_run_options
@click.pass_obj
@handle_errors
def evaluate_cmd(settings, bank_dirs, prompts, seeds, n, k, grid, canvas, cell_px, stars,
                 weights, seed, guidance_scale, steps, seed_per_arrangement, pins,
                 mock_backends, embed_backend, out, as_json):
    """Quantitative themes x prompts x seeds evaluation sweep."""
    config = build_run_config(n, k, grid, canvas, cell_px, stars, weights, seed,
                              guidance_scale, steps, seed_per_arrangement, pins)
    backends = make_backends(mock_backends, embed_backend, settings)
    out_dir = settings.resolve("out", out, "runs")
    seed_list = [int(s) for s in seeds.split(",")]
    report = evaluate_protocol(list(bank_dirs), list(prompts), seed_list, config,
                               backends, out_dir=out_dir)
    if as_json:
        click.echo(json.dumps(report, sort_keys=True))
    else:
        click.echo(f"{report['protocol']['total_images']} images: "
                   f"image_similarity={report['image_similarity']:.4f} "
                   f"text_similarity={report['text_similarity']:.4f}")


@main.command("serve")
@click.option("--addr", default="127.0.0.1:8765", show_default=True, help="Bind address host:port.")
@click.option("--workdir", default="dvp-studio", show_default=True,
              help="Directory for banks registry, sessions, and run artifacts.")
@click.option("--mock-backends", is_flag=True, default=False)
@click.option("--embed-backend", default=None)
@click.pass_obj
@handle_errors
def serve_cmd(settings, addr, workdir, mock_backends, embed_backend):
    """Launch the studio HTTP service."""
    import uvicorn

    from .service import create_app

    backends = make_backends(mock_backends, embed_backend, settings)
    app = create_app(workdir=workdir, backends=backends)
    host, _, port = addr.partition(":")
    uvicorn.run(app, host=host, port=int(port or 8765), log_level="warning")


if __name__ == "__main__":
    main()
