"""PNG ingestion/emission and montage assembly.

One fixed codec maps 8-bit pixels to the [-1, 1] float domain:
decode v -> v/127.5 - 1, encode x -> round((clip(x) + 1) * 127.5) with
half-away-from-zero rounding, so a round trip moves a pixel by at most
1/255.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

SEPARATOR = 2          # montage gutter width in pixels
SEPARATOR_VALUE = 0.0  # mid-gray in the float domain

MASK_THRESHOLD = 128   # luminance >= 128 is scene, < 128 is hole


def decode_u8(values) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) / 127.5 - 1.0


def encode_u8(x) -> np.ndarray:
    v = np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)
    # All encoded values are >= 0, so floor(v + 0.5) rounds half away
    # from zero (np.round would round half to even).
    return np.floor((v + 1.0) * 127.5 + 0.5).astype(np.uint8)


def _open_u8(path) -> Image.Image:
    try:
        img = Image.open(path)
    except FileNotFoundError:
        raise FileNotFoundError(f"no such image: {path}") from None
    img.load()
    if img.mode in ("RGBA", "LA", "PA") or "transparency" in img.info:
        raise ValueError(f"{path}: alpha channels are not supported")
    if img.mode not in ("L", "RGB"):
        raise ValueError(f"{path}: unsupported PNG mode {img.mode} (need 8-bit L or RGB)")
    return img


def load_png(path) -> np.ndarray:
    """Read an 8-bit grayscale or RGB PNG as a (C, H, W) float tensor."""
    img = _open_u8(path)
    arr = np.asarray(img, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    else:
        arr = arr.transpose(2, 0, 1)
    return decode_u8(arr)


def save_png(x, path) -> None:
    """Write a (C, H, W) float tensor as an 8-bit PNG (1 or 3 channels)."""
    arr = np.asarray(x)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ValueError(f"expected (1|3, H, W) tensor, got shape {arr.shape}")
    u8 = encode_u8(arr)
    if u8.shape[0] == 1:
        img = Image.fromarray(u8[0], mode="L")
    else:
        img = Image.fromarray(u8.transpose(1, 2, 0), mode="RGB")
    img.save(path, format="PNG")


def load_mask_png(path) -> np.ndarray:
    """Read a mask PNG: luminance >= 128 -> scene (1), < 128 -> hole (0).

    RGB masks are converted to luminance with PIL's ITU-R 601-2 transform
    before thresholding.
    """
    img = _open_u8(path)
    if img.mode != "L":
        img = img.convert("L")
    lum = np.asarray(img, dtype=np.uint8)
    return (lum >= MASK_THRESHOLD).astype(np.uint8)


def save_gray_png(values, path) -> None:
    """Write a (H, W) array of u8 values as a grayscale PNG."""
    arr = np.asarray(values, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError(f"expected (H, W) array, got shape {arr.shape}")
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def montage(images, columns: int) -> np.ndarray:
    """Tile equally shaped tensors row-major into one image.

    Cells are separated by 2-pixel mid-gray gutters; trailing cells of a
    ragged last row are filled with the gutter value. Cell order is input
    order; parameter labels belong in the JSON sidecar, not in pixels.
    """
    if columns < 1:
        raise ValueError(f"columns must be >= 1, got {columns}")
    images = [np.asarray(im, dtype=np.float64) for im in images]
    if not images:
        raise ValueError("montage needs at least one image")
    shape = images[0].shape
    if any(im.shape != shape for im in images):
        raise ValueError("montage images must share one shape")
    c, h, w = shape
    rows = -(-len(images) // columns)
    out_h = rows * h + SEPARATOR * (rows - 1)
    out_w = columns * w + SEPARATOR * (columns - 1)
    out = np.full((c, out_h, out_w), SEPARATOR_VALUE, dtype=np.float64)
    for idx, im in enumerate(images):
        r, q = divmod(idx, columns)
        y = r * (h + SEPARATOR)
        x = q * (w + SEPARATOR)
        out[:, y : y + h, x : x + w] = im
    return out


def write_montage_index(path, cells) -> None:
    """Write the sidecar JSON mapping montage cells to their parameters.

    cells: iterable of dicts with keys row, col, params, output.
    """
    doc = {"cells": list(cells)}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
