"""Theme bank: content-addressed image manifest plus on-disk embedding cache.

Layout inside a bank directory:

* ``bank.manifest.json``   — versioned JSON manifest
* ``bank.<backend>.emb``   — binary embedding cache, one per backend
* ``bank.lock``            — writer exclusion lock

Cache file layout (little-endian): magic ``DVPE``, version u32, dim u32,
count u32, then ``count`` records of 32 raw hash bytes followed by ``dim``
float32 values. Records are sorted by hash so the file is byte-deterministic.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout as LockTimeout

from .errors import BankLocked, EmptyBank, PartialCache, UnreadableDirectory
from .raster import content_hash, load_image, try_load_image

MANIFEST_NAME = "bank.manifest.json"
MANIFEST_VERSION = 1
CACHE_MAGIC = b"DVPE"
CACHE_VERSION = 1

# paper guidance: strong results from 15 diverse images, excels with 30
RECOMMENDED_MIN_IMAGES = 15

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp", ".tif", ".tiff"}


@dataclass(frozen=True)
class BankEntry:
    image_id: str  # sha256 hex of canonical RGB bytes
    path: str  # relative to the bank directory
    width: int
    height: int
    tags: tuple = ()


@dataclass
class BankManifest:
    theme_name: str
    entries: list
    created_at: str
    version: int = MANIFEST_VERSION
    warnings: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.entries)

    def entry_ids(self) -> set:
        return {e.image_id for e in self.entries}

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "theme_name": self.theme_name,
            "created_at": self.created_at,
            "entries": [
                {
                    "image_id": e.image_id,
                    "path": e.path,
                    "width": e.width,
                    "height": e.height,
                    "tags": list(e.tags),
                }
                for e in self.entries
            ],
            "warnings": self.warnings,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BankManifest":
        return cls(
            theme_name=d["theme_name"],
            entries=[
                BankEntry(
                    image_id=e["image_id"],
                    path=e["path"],
                    width=e["width"],
                    height=e["height"],
                    tags=tuple(e.get("tags", ())),
                )
                for e in d["entries"]
            ],
            created_at=d["created_at"],
            version=d["version"],
            warnings=list(d.get("warnings", ())),
        )


@dataclass
class EmbeddingCache:
    backend_name: str
    dim: int
    records: dict  # image_id hex -> np.ndarray float32 of length dim


@dataclass
class VerifyReport:
    stale: list
    missing: list
    orphaned: list

    @property
    def clean(self) -> bool:
        return not (self.stale or self.missing or self.orphaned)

    def to_dict(self) -> dict:
        return {
            "clean": self.clean,
            "stale": self.stale,
            "missing": self.missing,
            "orphaned": self.orphaned,
        }


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def bank_lock(directory) -> FileLock:
    return FileLock(Path(directory) / "bank.lock", timeout=10)


def ingest(directory, theme_name: str) -> BankManifest:
    """Scan a directory for decodable images and write the manifest.

    Non-image files are skipped with a warning record. Re-ingesting the same
    directory reproduces the manifest byte-for-byte except ``created_at``.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise UnreadableDirectory(f"not a directory: {directory}")

    entries = []
    warnings = []
    seen_ids = {}
    for path in sorted(directory.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(directory).as_posix()
        if rel.startswith("bank.") or rel.startswith("runs/"):
            continue
        if path.suffix.lower() not in _IMAGE_SUFFIXES:
            warnings.append({"path": rel, "reason": "not an image file"})
            continue
        image = try_load_image(path)
        if image is None:
            warnings.append({"path": rel, "reason": "undecodable image"})
            continue
        image_id = content_hash(image)
        if image_id in seen_ids:
            warnings.append({"path": rel, "reason": f"duplicate of {seen_ids[image_id]}"})
            continue
        seen_ids[image_id] = rel
        entries.append(
            BankEntry(
                image_id=image_id,
                path=rel,
                width=image.shape[1],
                height=image.shape[0],
            )
        )

    if not entries:
        raise EmptyBank(f"no decodable images in {directory}")
    if len(entries) < RECOMMENDED_MIN_IMAGES:
        warnings.append(
            {
                "path": "",
                "reason": f"bank has {len(entries)} images; "
                f"{RECOMMENDED_MIN_IMAGES}+ diverse images per character recommended",
            }
        )

    manifest = BankManifest(
        theme_name=theme_name,
        entries=entries,
        created_at=datetime.now(timezone.utc).isoformat(),
        warnings=warnings,
    )
    try:
        with bank_lock(directory):
            _atomic_write(
                directory / MANIFEST_NAME,
                json.dumps(manifest.to_dict(), indent=2, sort_keys=True).encode(),
            )
    except LockTimeout as exc:
        raise BankLocked(str(exc)) from exc
    return manifest


def load_manifest(directory) -> BankManifest:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise EmptyBank(f"no manifest at {path}; run ingest first")
    return BankManifest.from_dict(json.loads(path.read_text()))


def cache_path(directory, backend_name: str) -> Path:
    return Path(directory) / f"bank.{backend_name}.emb"


def write_cache(path, cache: EmbeddingCache) -> None:
    chunks = [CACHE_MAGIC, struct.pack("<III", CACHE_VERSION, cache.dim, len(cache.records))]
    for image_id in sorted(cache.records):
        vec = np.asarray(cache.records[image_id], dtype="<f4")
        if vec.shape != (cache.dim,):
            raise PartialCache([image_id])
        chunks.append(bytes.fromhex(image_id))
        chunks.append(vec.tobytes())
    _atomic_write(Path(path), b"".join(chunks))


def read_cache(path, backend_name: str) -> EmbeddingCache:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != CACHE_MAGIC:
        raise ValueError(f"bad cache magic in {path}")
    version, dim, count = struct.unpack_from("<III", raw, 4)
    if version != CACHE_VERSION:
        raise ValueError(f"unsupported cache version {version}")
    records = {}
    offset = 16
    record_size = 32 + 4 * dim
    for _ in range(count):
        image_id = raw[offset:offset + 32].hex()
        vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset + 32).copy()
        records[image_id] = vec
        offset += record_size
    return EmbeddingCache(backend_name=backend_name, dim=dim, records=records)


def build_cache(directory, manifest: BankManifest, backend) -> EmbeddingCache:
    """Embed every manifest entry missing from the cache; idempotent.

    Existing (hash, backend) records are reused without backend calls.
    """
    directory = Path(directory)
    name = backend.descriptor.name
    path = cache_path(directory, name)
    if path.exists():
        cache = read_cache(path, name)
        if cache.dim != backend.descriptor.dim:
            cache = EmbeddingCache(backend_name=name, dim=backend.descriptor.dim, records={})
    else:
        cache = EmbeddingCache(backend_name=name, dim=backend.descriptor.dim, records={})

    # drop records for entries no longer in the manifest
    valid = manifest.entry_ids()
    cache.records = {k: v for k, v in cache.records.items() if k in valid}

    todo = [e for e in manifest.entries if e.image_id not in cache.records]
    if todo:
        images = [load_image(directory / e.path) for e in todo]
        vectors = backend.embed_images(images)
        for entry, vec in zip(todo, vectors):
            cache.records[entry.image_id] = np.asarray(vec, dtype="<f4")

    missing = [e.image_id for e in manifest.entries if e.image_id not in cache.records]
    if missing:
        raise PartialCache(missing)

    try:
        with bank_lock(directory):
            write_cache(path, cache)
    except LockTimeout as exc:
        raise BankLocked(str(exc)) from exc
    return cache


def verify_cache(directory, manifest: BankManifest, cache: EmbeddingCache | None) -> VerifyReport:
    """Report stale (pixels changed on disk), missing, and orphaned records."""
    directory = Path(directory)
    stale = []
    for entry in manifest.entries:
        image = try_load_image(directory / entry.path)
        if image is None or content_hash(image) != entry.image_id:
            stale.append(entry.image_id)

    missing = []
    orphaned = []
    if cache is not None:
        ids = manifest.entry_ids()
        missing = sorted(ids - set(cache.records))
        orphaned = sorted(set(cache.records) - ids)
    return VerifyReport(stale=stale, missing=missing, orphaned=orphaned)


def load_bank_images(directory, manifest: BankManifest) -> dict:
    directory = Path(directory)
    return {e.image_id: load_image(directory / e.path) for e in manifest.entries}
