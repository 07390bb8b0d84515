from __future__ import annotations

import torch

from ..conditioning import ConditioningSet
from .schedule import NoiseSchedule, add_noise

DEFAULT_CFG_SCALE = 5.0


def training_loss(model, z0_cam, z0_range, cond: ConditioningSet, schedule: NoiseSchedule, generator=None, t=None,
                  weights=(0.5, 0.5)):
    """Weighted sum of the per-modality noise-prediction MSEs (default: their mean).

    One ``t`` per scene, shared by its camera and range latents, drawn
    uniformly from ``[0, T_train)`` unless given.
    """
    B = z0_cam.shape[0]
    if t is None:
        t = torch.randint(0, schedule.T_train, (B,), generator=generator)
    eps_c = torch.randn(z0_cam.shape, generator=generator, dtype=z0_cam.dtype)
    eps_r = torch.randn(z0_range.shape, generator=generator, dtype=z0_range.dtype)
    zt_c = add_noise(schedule, z0_cam, t, eps_c)
    zt_r = add_noise(schedule, z0_range, t, eps_r)
    pred_c, pred_r = model(zt_c, zt_r, t, cond)
    return weights[0] * torch.mean((pred_c - eps_c) ** 2) + weights[1] * torch.mean((pred_r - eps_r) ** 2)


def cfg_predict(model, z_cam, z_range, t, cond: ConditioningSet, scale: float = DEFAULT_CFG_SCALE):
    """Classifier-free guidance with a single joint null branch (no reference, zero boxes)."""
    if scale < 0:
        raise ValueError(f"guidance scale must be >= 0, got {scale}")
    if scale == 1.0:
        return model(z_cam, z_range, t, cond)
    null = model(z_cam, z_range, t, cond.nulled())
    if scale == 0.0:
        return null
    full = model(z_cam, z_range, t, cond)
    return tuple(n + scale * (c - n) for n, c in zip(null, full))
