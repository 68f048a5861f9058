"""Core diffusion mechanics: pixel tensors, seeded noise streams, beta schedules.

Images are plain numpy arrays of shape (C, H, W), float64, nominally in
[-1, 1] but unbounded while diffused. The forward process is the standard
DDPM one:

    q(x_t | x_0) = N(x_t; sqrt(abar_t) * x_0, (1 - abar_t) * I)

with abar_t = prod_{i<=t} (1 - beta_i) and abar_0 = 1.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

BETA_START = 1e-4
BETA_END = 0.02
BASE_STEPS = 1000


def ensure_image(x, name: str = "image") -> np.ndarray:
    """Validate and return a (C, H, W) float64 tensor with finite values."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must have shape (C, H, W), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise variances and their cumulative products.

    betas[i] is beta_{i+1} for timesteps 1..T; alpha_bars has length T+1
    with alpha_bars[0] = 1. posterior_vars[i] is the DDPM posterior
    variance beta-tilde_{i+1} = (1 - abar_t-1) / (1 - abar_t) * beta_t,
    which is 0 at t=1.
    """

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    posterior_vars: np.ndarray

    @property
    def T(self) -> int:
        return len(self.betas)

    def beta(self, t: int) -> float:
        self._check_t(t, low=1)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self._check_t(t, low=1)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        self._check_t(t, low=0)
        return float(self.alpha_bars[t])

    def posterior_var(self, t: int) -> float:
        self._check_t(t, low=1)
        return float(self.posterior_vars[t - 1])

    def _check_t(self, t, low):
        if not low <= t <= self.T:
            raise ValueError(f"timestep {t} outside [{low}, {self.T}]")


def schedule_from_betas(betas) -> NoiseSchedule:
    """Build a NoiseSchedule from explicit per-step beta values."""
    b = np.asarray(betas, dtype=np.float64)
    if b.ndim != 1 or len(b) == 0:
        raise ValueError("betas must be a non-empty 1-D sequence")
    if np.any(b <= 0.0) or np.any(b >= 1.0):
        raise ValueError("every beta must lie in (0, 1)")
    alphas = 1.0 - b
    alpha_bars = np.concatenate([[1.0], np.cumprod(alphas)])
    posterior = (1.0 - alpha_bars[:-1]) / (1.0 - alpha_bars[1:]) * b
    return NoiseSchedule(
        betas=b, alphas=alphas, alpha_bars=alpha_bars, posterior_vars=posterior
    )


def make_linear_schedule(T: int) -> NoiseSchedule:
    """Respace the canonical 1000-step linear beta schedule down to T steps.

    The base schedule runs linearly from 1e-4 to 0.02. T evenly spaced base
    indices s_1 < ... < s_T ending at 1000 are selected and the effective
    betas are beta'_t = 1 - abar(s_t) / abar(s_{t-1}), so the respaced
    chain hits the same cumulative noise levels as the base chain does at
    the selected indices.
    """
    if not 1 <= T <= BASE_STEPS:
        raise ValueError(f"T must be in [1, {BASE_STEPS}], got {T}")
    base = np.linspace(BETA_START, BETA_END, BASE_STEPS)
    base_bars = np.concatenate([[1.0], np.cumprod(1.0 - base)])
    idx = np.round(np.arange(1, T + 1) * (BASE_STEPS / T)).astype(int)
    prev = np.concatenate([[0], idx[:-1]])
    betas = 1.0 - base_bars[idx] / base_bars[prev]
    return schedule_from_betas(betas)


def _purpose_key(purpose: str) -> int:
    digest = hashlib.sha256(purpose.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class SeededRng:
    """Counter-based Gaussian streams keyed by (seed, purpose, timestep, counter).

    Every draw spawns a fresh Philox generator from a SeedSequence keyed by
    the full tuple, so identical coordinates always reproduce the same
    values, distinct purposes never share a stream, and repeat visits to a
    timestep (resampling) advance a per-(purpose, t) counter to get fresh
    noise. An instance is owned by exactly one run.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & (2**64 - 1)
        self._counters: dict[tuple[str, int], int] = {}

    def normal(self, purpose: str, t: int, shape) -> np.ndarray:
        """Draw iid standard normal values from the (purpose, t) substream."""
        key = (purpose, int(t))
        counter = self._counters.get(key, 0)
        self._counters[key] = counter + 1
        ss = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(_purpose_key(purpose), int(t), counter)
        )
        return np.random.Generator(np.random.Philox(ss)).standard_normal(shape)


def gaussian_draw(rng: SeededRng, shape, purpose: str = "draw", t: int = 0) -> np.ndarray:
    """Standard normal tensor from a named substream of rng."""
    return rng.normal(purpose, t, shape)


def forward_noise(
    x0: np.ndarray,
    t: int,
    sched: NoiseSchedule,
    rng: SeededRng,
    purpose: str = "forward",
) -> np.ndarray:
    """Sample x_t ~ N(sqrt(abar_t) x_0, (1 - abar_t) I).

    t=0 returns x0 unchanged (abar_0 = 1) without consuming any noise.
    """
    if not 0 <= t <= sched.T:
        raise ValueError(f"timestep {t} outside [0, {sched.T}]")
    if t == 0:
        return np.array(x0, dtype=np.float64, copy=True)
    abar = sched.alpha_bar(t)
    z = rng.normal(purpose, t, np.shape(x0))
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * z


def renoise_one_step(
    x: np.ndarray,
    t: int,
    sched: NoiseSchedule,
    rng: SeededRng,
    purpose: str = "resample",
) -> np.ndarray:
    """One forward step x_{t-1} -> x_t: sqrt(1 - beta_t) x + sqrt(beta_t) z.

    Used when a resampling jump moves the chain back up to timestep t.
    """
    if not 1 <= t <= sched.T:
        raise ValueError(f"timestep {t} outside [1, {sched.T}]")
    b = sched.beta(t)
    z = rng.normal(purpose, t, np.shape(x))
    return np.sqrt(1.0 - b) * x + np.sqrt(b) * z
