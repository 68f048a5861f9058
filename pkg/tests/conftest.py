from __future__ import annotations

import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def box_mask_5x5():
    """5x5 mask with a 3x3 hole at rows/cols 1..3 (the worked fixture)."""
    m = np.ones((5, 5), dtype=np.uint8)
    m[1:4, 1:4] = 0
    return m


def brute_force_distance(mask: np.ndarray) -> np.ndarray:
    """O(n^4) nearest-scene-pixel search; the independent Manhattan oracle."""
    h, w = mask.shape
    scene = np.argwhere(mask == 1)
    out = np.zeros((h, w), dtype=np.int64)
    for i in range(h):
        for j in range(w):
            out[i, j] = np.abs(scene - np.array([i, j])).sum(axis=1).min()
    return out


def random_mask(gen: np.random.Generator, h: int, w: int,
                p_scene: float = 0.5) -> np.ndarray:
    """Random binary mask guaranteed to contain at least one scene pixel."""
    m = (gen.random((h, w)) < p_scene).astype(np.uint8)
    if not m.any():
        m[gen.integers(h), gen.integers(w)] = 1
    return m


def write_png(path, arr_u8: np.ndarray) -> str:
    """Write a (H, W) or (H, W, 3) uint8 array as a PNG, return the path."""
    mode = "L" if arr_u8.ndim == 2 else "RGB"
    Image.fromarray(arr_u8.astype(np.uint8), mode).save(path)
    return str(path)


def random_scene_png(path, gen: np.random.Generator, h: int, w: int) -> str:
    return write_png(path, gen.integers(0, 256, (h, w, 3), dtype=np.uint8))


def mask_png_from_array(path, mask: np.ndarray) -> str:
    return write_png(path, (mask * 255).astype(np.uint8))


def propagate_reverse_chain(sched, mu0: float, var0: float) -> tuple[float, float]:
    """Exact (mean, variance) of x_0 from the analytic-Gaussian reverse chain.

    Every reverse step is affine in x_t (posterior-mean denoiser), so the
    output distribution follows from propagating (m, v) through
    x_{t-1} = A_t x_t + B_t + sqrt(posterior_var_t) z starting at N(0, 1).
    The result is sigma0^2 plus the discretization residual of the
    fixed-beta-tilde step variance.
    """
    m, v = 0.0, 1.0
    for t in range(sched.T, 0, -1):
        beta, abar = sched.beta(t), sched.alpha_bar(t)
        denom = (1.0 - abar) + abar * var0
        a = (1.0 - beta / denom) / np.sqrt(1.0 - beta)
        b = beta * np.sqrt(abar) * mu0 / (denom * np.sqrt(1.0 - beta))
        m = a * m + b
        v = a * a * v + sched.posterior_var(t)
    return float(m), float(v)


def float32_clean(x: np.ndarray) -> np.ndarray:
    """Round-trip through float32 so wire transport is lossless."""
    return np.asarray(x, dtype=np.float32).astype(np.float64)
