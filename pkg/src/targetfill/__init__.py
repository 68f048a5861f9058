"""Target-guided diffusion inpainting with RePaint-style resampling."""

from .core import (
    NoiseSchedule,
    SeededRng,
    forward_noise,
    gaussian_draw,
    make_linear_schedule,
    renoise_one_step,
    schedule_from_betas,
)
from .denoise import (
    AnalyticGaussianDenoiser,
    Capability,
    DenoiserError,
    ExternalDenoiser,
    OracleDenoiser,
    external_handshake,
    reverse_step,
)
from .masks import dilate_hole, distance_transform, heated_mask, ring
from .pipeline import (
    SamplerConfig,
    compose_binary,
    compose_heated,
    compose_scene_buffer,
    run,
    run_candidates,
)
from .schedules import (
    LambdaSchedule,
    TimestepPlan,
    denoiser_call_count,
    jump_plan,
    lambda_eval,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticGaussianDenoiser",
    "Capability",
    "DenoiserError",
    "ExternalDenoiser",
    "LambdaSchedule",
    "NoiseSchedule",
    "OracleDenoiser",
    "SamplerConfig",
    "SeededRng",
    "TimestepPlan",
    "compose_binary",
    "compose_heated",
    "compose_scene_buffer",
    "denoiser_call_count",
    "dilate_hole",
    "distance_transform",
    "external_handshake",
    "forward_noise",
    "gaussian_draw",
    "heated_mask",
    "jump_plan",
    "lambda_eval",
    "make_linear_schedule",
    "renoise_one_step",
    "reverse_step",
    "ring",
    "run",
    "run_candidates",
    "schedule_from_betas",
]
