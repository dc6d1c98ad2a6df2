"""
Latent codec and diffusion-process math.
"""

from .codec import (
    LatentTensor,
    Provenance,
    decode,
    depth_to_model,
    encode,
    from_model_layout,
    image_to_model,
    model_to_depth,
    to_model_layout,
)
from .schedule import (
    NoiseSchedule,
    ScheduleConfig,
    TimestepSubsequence,
    ddim_step,
    ddpm_reverse_step,
    eps_from_v,
    make_ddim_subsequence,
    make_schedule,
    marginal_sample,
    v_target,
    x0_from_eps,
    x0_from_v,
)

__all__ = [
    "LatentTensor",
    "NoiseSchedule",
    "Provenance",
    "ScheduleConfig",
    "TimestepSubsequence",
    "ddim_step",
    "ddpm_reverse_step",
    "decode",
    "depth_to_model",
    "encode",
    "eps_from_v",
    "from_model_layout",
    "image_to_model",
    "model_to_depth",
    "make_ddim_subsequence",
    "make_schedule",
    "marginal_sample",
    "to_model_layout",
    "v_target",
    "x0_from_eps",
    "x0_from_v",
]
