"""Raster helpers. Images are HxWx3 uint8 numpy arrays throughout.

PNG is the only container written (lossless, so pixel digests are stable).
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
from PIL import Image, ImageOps, UnidentifiedImageError


def load_image(path) -> np.ndarray:
    """Decode any Pillow-supported container to canonical 8-bit RGB,
    honoring EXIF orientation."""
    with Image.open(path) as im:
        im = ImageOps.exif_transpose(im)
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def try_load_image(path) -> np.ndarray | None:
    try:
        return load_image(path)
    except (UnidentifiedImageError, OSError, ValueError):
        return None


def save_png(image: np.ndarray, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8)).save(path, format="PNG")


def pixel_digest(image: np.ndarray) -> str:
    """sha256 over canonical row-major RGB bytes, dimensions included."""
    arr = np.ascontiguousarray(image, dtype=np.uint8)
    h = hashlib.sha256()
    h.update(f"{arr.shape[0]}x{arr.shape[1]}x{arr.shape[2]}:".encode())
    h.update(arr.tobytes())
    return h.hexdigest()


def content_hash(image: np.ndarray) -> str:
    """Content identity of an image: sha256 of the decoded RGB bytes only.

    Survives container re-encoding and renames by construction.
    """
    arr = np.ascontiguousarray(image, dtype=np.uint8)
    return hashlib.sha256(arr.tobytes()).hexdigest()


def resize_cover(image: np.ndarray, width: int, height: int) -> np.ndarray:
    """Aspect-preserving resize so the image covers width x height
    (minimum-side fit), then center crop. Bilinear resampling."""
    src_h, src_w = image.shape[:2]
    scale = max(width / src_w, height / src_h)
    new_w = max(width, int(round(src_w * scale)))
    new_h = max(height, int(round(src_h * scale)))
    im = Image.fromarray(image).resize((new_w, new_h), Image.BILINEAR)
    left = (new_w - width) // 2
    top = (new_h - height) // 2
    return np.asarray(im, dtype=np.uint8)[top:top + height, left:left + width]
