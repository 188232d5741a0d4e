"""Grayscale image and mask file I/O.

8/16-bit grayscale PNG and PGM are read; intensities map to [0, 1] by
value/maxval.  Images are written as 16-bit PNG (value = round(v * 65535)),
masks as 8-bit PNG with {0, 255}.  PNG output carries no timestamps, so
identical pixel data produces identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidArgumentError


def read_image(path) -> np.ndarray:
    """Load a grayscale image file as float64 in [0, 1]."""
    with Image.open(path) as pil:
        mode = pil.mode
        arr = np.asarray(pil)
    if arr.ndim != 2:
        raise InvalidArgumentError(f"{path}: expected a single-channel image, got mode {mode!r}")
    if mode == "1":
        return arr.astype(np.float64)
    if mode == "L":
        return arr.astype(np.float64) / 255.0
    if mode in ("I", "I;16"):
        return arr.astype(np.float64) / 65535.0
    if mode == "F":
        return np.clip(arr.astype(np.float64), 0.0, 1.0)
    raise InvalidArgumentError(f"{path}: unsupported image mode {mode!r}")


def write_image(path, img: np.ndarray) -> None:
    """Write a [0, 1] image as 16-bit grayscale PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.rint(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 65535.0).astype(np.uint16)
    Image.fromarray(data, mode="I;16").save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    """Load a mask file; any nonzero pixel is foreground."""
    with Image.open(path) as pil:
        arr = np.asarray(pil)
    if arr.ndim != 2:
        raise InvalidArgumentError(f"{path}: expected a single-channel mask")
    return arr > 0


def write_mask(path, mask: np.ndarray) -> None:
    """Write a boolean mask as 8-bit PNG with values {0, 255}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")
