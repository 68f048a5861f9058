"""Target-guided inpainting loop.

Each backward (down) step builds three candidates for timestep t-1 -- the
forward-noised scene, the forward-noised target, and the denoiser output
-- and composes them per pixel:

  binary        scene where mask=1; lambda*repaint + (1-lambda)*target in
                the hole ("mask conflict" resolution).
  heated        scene where mask=1; h*target + (1-h)*repaint in the hole,
                h the distance-based heat field, so deep-hole pixels keep
                the target and boundary pixels defer to the denoiser.
  scene-buffer  c*repaint + (1-c)*target in the hole; an 8-connected ring
                of width w around the hole takes the denoiser output
                (optionally the lambda blend) instead of the noised scene,
                so the model can paint the transition band.

Up moves renoise the composite one step (resampling). lambda is evaluated
at the destination timestep of every down move.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    SeededRng,
    ensure_image,
    forward_noise,
    make_linear_schedule,
    renoise_one_step,
)
from .denoise import DenoiserError, reverse_step
from .masks import has_scene, heated_mask, ring, validate_mask
from .schedules import LambdaSchedule, jump_plan, lambda_eval

log = logging.getLogger("targetfill.pipeline")

MASK_MODES = ("binary", "heated", "scene-buffer")
RING_SOURCES = ("ddpm", "lambda-blend")


@dataclass(frozen=True)
class SamplerConfig:
    """Full hyperparameter record for one run."""

    timesteps: int = 200
    jump_len: int = 40
    resample: int = 40
    lambda_schedule: str = "linear-p"  # "const" | "linear-p"
    lambda0: float = 1.0
    p: float = 0.5
    mask_mode: str = "binary"
    heat_buffer: int = 4       # b: heat saturation distance (heated mode)
    ring_width: int = 4        # w: scene-buffer border width
    ring_blend: float = 0.993  # c: hole blend constant (scene-buffer mode)
    ring_source: str = "ddpm"
    heated_combine_lambda: bool = False
    seed: int = 0
    candidates: int = 1

    def lam(self) -> LambdaSchedule:
        if self.lambda_schedule == "const":
            return LambdaSchedule.constant(self.lambda0)
        if self.lambda_schedule == "linear-p":
            return LambdaSchedule.piecewise(self.p, self.timesteps)
        raise ValueError(f"unknown lambda schedule {self.lambda_schedule!r}")

    def validate(self) -> "SamplerConfig":
        if not 1 <= self.timesteps <= 1000:
            raise ValueError(f"timesteps must be in [1, 1000], got {self.timesteps}")
        if self.jump_len < 1 or self.resample < 1:
            raise ValueError("jump_len and resample must be >= 1")
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"mask_mode must be one of {MASK_MODES}")
        if self.ring_source not in RING_SOURCES:
            raise ValueError(f"ring_source must be one of {RING_SOURCES}")
        if not 0.0 <= self.ring_blend <= 1.0:
            raise ValueError(f"c must be in [0, 1], got {self.ring_blend}")
        if self.heat_buffer < 1:
            raise ValueError(f"b must be >= 1, got {self.heat_buffer}")
        if self.ring_width < 0:
            raise ValueError(f"ring width must be >= 0, got {self.ring_width}")
        if self.candidates < 1:
            raise ValueError(f"candidates must be >= 1, got {self.candidates}")
        self.lam()  # validates lambda0 / p ranges
        return self


def _blend(weight, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """weight*a + (1-weight)*b with bitwise-exact endpoints.

    Scalar weights 0 and 1 select b and a outright, so degenerate convex
    combinations are identities, not arithmetic near-identities. Array
    weights get the same treatment per pixel via where().
    """
    if np.isscalar(weight) or np.ndim(weight) == 0:
        w = float(weight)
        if w == 1.0:
            return a.copy()
        if w == 0.0:
            return b.copy()
        return w * a + (1.0 - w) * b
    w = np.asarray(weight)[None, :, :]
    mixed = w * a + (1.0 - w) * b
    return np.where(w == 1.0, a, np.where(w == 0.0, b, mixed))


def _check_shapes(x_scene, x_target, x_repaint, mask) -> None:
    if not (x_scene.shape == x_target.shape == x_repaint.shape):
        raise ValueError(
            f"shape mismatch: scene {x_scene.shape}, target {x_target.shape}, "
            f"repaint {x_repaint.shape}"
        )
    if mask.shape != x_scene.shape[1:]:
        raise ValueError(f"mask shape {mask.shape} != image plane {x_scene.shape[1:]}")


def compose_binary(x_scene_t1, x_target_t1, x_repaint_t1, mask, lam: float) -> np.ndarray:
    """Scene pixels from the forward pass; hole = lam*repaint + (1-lam)*target."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    _check_shapes(x_scene_t1, x_target_t1, x_repaint_t1, mask)
    unknown = _blend(lam, x_repaint_t1, x_target_t1)
    return np.where(mask.astype(bool)[None, :, :], x_scene_t1, unknown)


def compose_heated(x_scene_t1, x_target_t1, x_repaint_t1, mask, heat) -> np.ndarray:
    """Scene pixels forced from the forward pass; hole = h*target + (1-h)*repaint."""
    _check_shapes(x_scene_t1, x_target_t1, x_repaint_t1, mask)
    if heat.shape != mask.shape:
        raise ValueError(f"heat shape {heat.shape} != mask shape {mask.shape}")
    blend = _blend(heat, x_target_t1, x_repaint_t1)
    return np.where(mask.astype(bool)[None, :, :], x_scene_t1, blend)


def compose_scene_buffer(
    x_scene_t1,
    x_target_t1,
    x_repaint_t1,
    mask,
    ring_ind,
    c: float,
    lam: float,
    ring_source: str = "ddpm",
) -> np.ndarray:
    """Hole = c*repaint + (1-c)*target; ring pixels come from the denoiser.

    ring_source "lambda-blend" blends the ring with lambda instead of
    taking the raw denoiser output. The remaining scene keeps the forward
    pass.
    """
    _check_shapes(x_scene_t1, x_target_t1, x_repaint_t1, mask)
    if ring_ind.shape != mask.shape:
        raise ValueError(f"ring shape {ring_ind.shape} != mask shape {mask.shape}")
    if ((ring_ind == 1) & (mask == 0)).any():
        raise ValueError("ring overlaps the hole")
    if ring_source not in RING_SOURCES:
        raise ValueError(f"ring_source must be one of {RING_SOURCES}")
    hole_val = _blend(c, x_repaint_t1, x_target_t1)
    if ring_source == "ddpm":
        ring_val = x_repaint_t1
    else:
        ring_val = _blend(lam, x_repaint_t1, x_target_t1)
    hole_sel = (mask == 0)[None, :, :]
    ring_sel = (ring_ind == 1)[None, :, :]
    return np.where(hole_sel, hole_val, np.where(ring_sel, ring_val, x_scene_t1))


def run(scene, target, mask, cfg: SamplerConfig, denoiser, rng: SeededRng | None = None) -> np.ndarray:
    """Run the full backward pass and return the composed x_0."""
    cfg.validate()
    scene = ensure_image(scene, "scene")
    target = ensure_image(target, "target")
    m = validate_mask(mask)
    _check_shapes(scene, target, scene, m)
    cap = getattr(denoiser, "capability", None)
    if cap is not None and cap.shape != scene.shape:
        raise ValueError(f"denoiser capability {cap.shape} != image shape {scene.shape}")
    if not has_scene(m) and cfg.mask_mode in ("heated", "scene-buffer"):
        raise ValueError(f"all-hole mask is not valid in {cfg.mask_mode} mode")

    sched = make_linear_schedule(cfg.timesteps)
    plan = jump_plan(cfg.timesteps, cfg.jump_len, cfg.resample)
    lam_sched = cfg.lam()
    heat = heated_mask(m, cfg.heat_buffer) if cfg.mask_mode == "heated" else None
    ring_ind = ring(m, cfg.ring_width) if cfg.mask_mode == "scene-buffer" else None

    if rng is None:
        rng = SeededRng(cfg.seed)
    x = rng.normal("init", cfg.timesteps, scene.shape)
    log.debug(
        "run: T=%d j=%d r=%d mode=%s moves=%d",
        cfg.timesteps, cfg.jump_len, cfg.resample, cfg.mask_mode, len(plan.moves),
    )

    for move in plan.moves:
        if move.kind == "up":
            x = renoise_one_step(x, move.t, sched, rng, purpose="resample")
            continue
        s = move.t
        x_scene = forward_noise(scene, s, sched, rng, purpose="scene")
        x_target = forward_noise(target, s, sched, rng, purpose="target")
        try:
            x_repaint = reverse_step(denoiser, x, s + 1, sched, rng, purpose="ddpm")
        except DenoiserError as exc:
            raise DenoiserError(f"denoiser failed at timestep {s + 1}: {exc}") from exc
        lam = lambda_eval(lam_sched, s)
        if cfg.mask_mode == "binary":
            x = compose_binary(x_scene, x_target, x_repaint, m, lam)
        elif cfg.mask_mode == "heated":
            h = heat * (1.0 - lam) if cfg.heated_combine_lambda else heat
            x = compose_heated(x_scene, x_target, x_repaint, m, h)
        else:
            x = compose_scene_buffer(
                x_scene, x_target, x_repaint, m, ring_ind,
                cfg.ring_blend, lam, cfg.ring_source,
            )
        if not np.all(np.isfinite(x)):
            raise DenoiserError(f"non-finite composite at timestep {s}")
    return x


def run_candidates(scene, target, mask, cfg: SamplerConfig, denoiser, n: int | None = None) -> list[np.ndarray]:
    """n independent runs with derived seeds cfg.seed + 0 .. + n-1."""
    if n is None:
        n = cfg.candidates
    if n < 1:
        raise ValueError(f"candidate count must be >= 1, got {n}")
    outputs = []
    for i in range(n):
        cand_cfg = replace(cfg, seed=cfg.seed + i, candidates=1)
        outputs.append(run(scene, target, mask, cand_cfg, denoiser))
    return outputs
