"""Embedding backends: the adapter contract plus deterministic local backends.

Two offline backends ship with the package:

* ``HashEmbedder`` maps input bytes to a seeded pseudo-random unit vector.
  Same input, same vector, on every platform. Good for reproducible tests
  where score values themselves don't matter.
* ``PixelStatEmbedder`` embeds an image as its grid of downsampled mean
  colors, so visually similar images land close together. Text falls back to
  the hash construction in the same dimension. Used where theme-consistency
  scores need to behave like a real encoder directionally.

``RemoteEmbedder`` speaks the service wire contract: request
``{"modality": ..., "payloads": [...]}``, response ``{"dim": D, "vectors": [...]}``.
"""

from __future__ import annotations

import base64
import hashlib
import io
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import BackendUnavailable, DimensionMismatch
from .similarity import normalize


@dataclass(frozen=True)
class EmbeddingBackendDescriptor:
    name: str
    dim: int
    modality: str  # "text" | "image" | "joint"


class EmbeddingBackend(Protocol):
    """Joint text/image encoder adapter. Implementations must be shareable
    across concurrent callers."""

    @property
    def descriptor(self) -> EmbeddingBackendDescriptor: ...

    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]: ...

    def embed_images(self, images: Sequence[np.ndarray]) -> list[np.ndarray]: ...


def _image_bytes(image: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(image, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionMismatch(f"expected HxWx3 uint8 image, got shape {arr.shape}")
    header = f"{arr.shape[0]}x{arr.shape[1]}:".encode()
    return header + arr.tobytes()


def hash_unit_vector(payload: bytes, dim: int) -> np.ndarray:
    """Seeded pseudo-random unit vector, fully determined by the payload."""
    digest = hashlib.sha256(payload).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return normalize(rng.standard_normal(dim))


class HashEmbedder:
    def __init__(self, dim: int = 64, name: str = "hash"):
        self._descriptor = EmbeddingBackendDescriptor(name=name, dim=dim, modality="joint")

    @property
    def descriptor(self) -> EmbeddingBackendDescriptor:
        return self._descriptor

    def embed_texts(self, texts):
        dim = self._descriptor.dim
        return [hash_unit_vector(b"text:" + t.encode("utf-8"), dim) for t in texts]

    def embed_images(self, images):
        dim = self._descriptor.dim
        return [hash_unit_vector(b"image:" + _image_bytes(img), dim) for img in images]


class PixelStatEmbedder:
    """Image vector = mean RGB over a grid_size x grid_size block partition.

    Linear in the pixel values (before normalization), so an image that is a
    pixel-wise mean of others embeds near the mean of their embeddings.
    """

    def __init__(self, grid_size: int = 4, name: str = "pixelstat"):
        self.grid_size = grid_size
        dim = grid_size * grid_size * 3
        self._descriptor = EmbeddingBackendDescriptor(name=name, dim=dim, modality="joint")

    @property
    def descriptor(self) -> EmbeddingBackendDescriptor:
        return self._descriptor

    def embed_texts(self, texts):
        dim = self._descriptor.dim
        return [hash_unit_vector(b"text:" + t.encode("utf-8"), dim) for t in texts]

    def embed_images(self, images):
        out = []
        g = self.grid_size
        for img in images:
            arr = np.asarray(img, dtype=np.float64)
            if arr.ndim != 3 or arr.shape[2] != 3:
                raise DimensionMismatch(f"expected HxWx3 image, got shape {arr.shape}")
            h, w = arr.shape[:2]
            row_edges = np.linspace(0, h, g + 1).astype(int)
            col_edges = np.linspace(0, w, g + 1).astype(int)
            stats = np.empty((g, g, 3))
            for i in range(g):
                for j in range(g):
                    block = arr[row_edges[i]:row_edges[i + 1], col_edges[j]:col_edges[j + 1]]
                    stats[i, j] = block.mean(axis=(0, 1)) if block.size else 0.0
            out.append(normalize(stats.ravel()))
        return out


class RemoteEmbedder:
    """HTTP adapter over a CLIP-style joint encoder service."""

    def __init__(self, url: str, name: str = "remote", dim: int | None = None,
                 token: str | None = None, timeout_s: float = 120.0, session=None):
        import requests

        self.url = url.rstrip("/")
        self.token = token
        self.timeout_s = timeout_s
        self._session = session or requests.Session()
        self._descriptor = EmbeddingBackendDescriptor(
            name=name, dim=dim or self._probe_dim(), modality="joint"
        )

    def _probe_dim(self) -> int:
        vecs = self._call("text", ["dimension probe"])
        return len(vecs[0])

    @property
    def descriptor(self) -> EmbeddingBackendDescriptor:
        return self._descriptor

    def _call(self, modality: str, payloads: list) -> list:
        import requests

        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = self._session.post(
                f"{self.url}/embed",
                json={"modality": modality, "payloads": payloads},
                headers=headers,
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise BackendUnavailable(f"embedding backend unreachable: {exc}") from exc
        if resp.status_code >= 500:
            raise BackendUnavailable(f"embedding backend error {resp.status_code}")
        resp.raise_for_status()
        body = resp.json()
        return body["vectors"]

    def embed_texts(self, texts):
        vectors = self._call("text", list(texts))
        return [np.asarray(v, dtype=np.float64) for v in vectors]

    def embed_images(self, images):
        from PIL import Image

        payloads = []
        for img in images:
            buf = io.BytesIO()
            Image.fromarray(np.asarray(img, dtype=np.uint8)).save(buf, format="PNG")
            payloads.append(base64.b64encode(buf.getvalue()).decode("ascii"))
        vectors = self._call("image", payloads)
        return [np.asarray(v, dtype=np.float64) for v in vectors]


def make_backend(name: str, **kwargs) -> EmbeddingBackend:
    if name == "hash":
        return HashEmbedder(**kwargs)
    if name == "pixelstat":
        return PixelStatEmbedder(**kwargs)
    if name == "remote":
        return RemoteEmbedder(**kwargs)
    raise ValueError(f"unknown embedding backend: {name}")
