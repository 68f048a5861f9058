"""Binary masks and boundary-aware transforms: distance fields, heat, dilation.

Canonical polarity everywhere in this package: mask value 1 marks a known
scene pixel, 0 marks a hole pixel to be filled. Distance fields measure
4-neighbor (Manhattan) distance from each pixel to the nearest scene
pixel; dilation of the hole uses 8-connectivity (a geometric border of
width w equals Chebyshev distance <= w from the hole).
"""

from __future__ import annotations

import numpy as np

_INF = np.iinfo(np.int64).max // 4


def validate_mask(mask) -> np.ndarray:
    """Coerce to a 2-D {0,1} uint8 array; reject anything else."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {m.shape}")
    if not np.isin(m, (0, 1)).all():
        raise ValueError("mask values must be 0 (hole) or 1 (scene)")
    return m.astype(np.uint8)


def has_hole(mask: np.ndarray) -> bool:
    return bool((mask == 0).any())


def has_scene(mask: np.ndarray) -> bool:
    return bool((mask == 1).any())


def _relax_row(row: np.ndarray) -> np.ndarray:
    # Horizontal moves cost 1, so e[j] = min_k(row[k] + |j - k|), computed
    # as a cumulative min of row[k] -+ k in each direction.
    n = len(row)
    cols = np.arange(n, dtype=np.int64)
    row = cols + np.minimum.accumulate(row - cols)
    rev = (n - 1 - cols) + np.minimum.accumulate((row - (n - 1 - cols))[::-1])[::-1]
    return np.minimum(row, rev)


def _chamfer(dist: np.ndarray, diagonal: bool) -> np.ndarray:
    # Two-pass chamfer with unit weights; exact for the 4-neighbor metric
    # (diagonal=False) and the 8-neighbor one (diagonal=True).
    h, _ = dist.shape
    for i in range(h):
        if i > 0:
            dist[i] = np.minimum(dist[i], dist[i - 1] + 1)
            if diagonal:
                dist[i, 1:] = np.minimum(dist[i, 1:], dist[i - 1, :-1] + 1)
                dist[i, :-1] = np.minimum(dist[i, :-1], dist[i - 1, 1:] + 1)
        dist[i] = _relax_row(dist[i])
    for i in range(h - 2, -1, -1):
        dist[i] = np.minimum(dist[i], dist[i + 1] + 1)
        if diagonal:
            dist[i, 1:] = np.minimum(dist[i, 1:], dist[i + 1, :-1] + 1)
            dist[i, :-1] = np.minimum(dist[i, :-1], dist[i + 1, 1:] + 1)
        dist[i] = _relax_row(dist[i])
    return dist


def distance_transform(mask) -> np.ndarray:
    """Exact Manhattan distance from every pixel to the nearest scene pixel.

    Zero at scene pixels. Raises on an all-hole mask, where no scene pixel
    exists to measure against.
    """
    m = validate_mask(mask)
    if not has_scene(m):
        raise ValueError("all-hole mask: no scene pixel to measure distance to")
    dist = np.where(m == 1, 0, _INF).astype(np.int64)
    return _chamfer(dist, diagonal=False)


def heated_mask(mask, b: int) -> np.ndarray:
    """Distance-based blend field: h = min(d/b, 1) in the hole, 0 on scene.

    b is the buffer size in pixels; hole pixels at Manhattan distance >= b
    from the scene saturate to 1 and keep the forward-noised target, while
    pixels near the boundary leave room for the denoiser.
    """
    if int(b) != b or b < 1:
        raise ValueError(f"buffer size b must be an integer >= 1, got {b}")
    m = validate_mask(mask)
    d = distance_transform(m)
    heat = np.minimum(d / float(b), 1.0)
    heat[m == 1] = 0.0
    return heat


def dilate_hole(mask, w: int) -> np.ndarray:
    """Grow the hole by w steps of 8-connected dilation; w=0 is the identity."""
    if int(w) != w or w < 0:
        raise ValueError(f"dilation width must be an integer >= 0, got {w}")
    m = validate_mask(mask)
    if w == 0 or not has_hole(m):
        return m.copy()
    cheb = _chamfer(np.where(m == 0, 0, _INF).astype(np.int64), diagonal=True)
    return (cheb > w).astype(np.uint8)


def ring(mask, w: int) -> np.ndarray:
    """Indicator of the w-pixel border band: dilated hole minus original hole.

    Returns a {0,1} array where 1 marks ring membership; disjoint from the
    hole by construction.
    """
    m = validate_mask(mask)
    ext = dilate_hole(m, w)
    return ((ext == 0) & (m == 1)).astype(np.uint8)
