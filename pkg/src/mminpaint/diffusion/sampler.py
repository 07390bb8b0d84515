"""Pseudo linear multistep (PLMS) sampling.

The first three steps use the pseudo Runge-Kutta warm-up (four noise
evaluations each, midpoint at half a stride). Later steps combine the last
four stored predictions with fourth-order Adams-Bashforth weights. Every
step moves the latent with the deterministic DDIM-form transfer.
"""

from __future__ import annotations

from typing import Callable

import torch

from ..errors import ConfigError
from .objective import DEFAULT_CFG_SCALE, cfg_predict
from .schedule import NoiseSchedule

DEFAULT_STEPS = 50
WARMUP_STEPS = 3


def sub_schedule(schedule: NoiseSchedule, steps: int) -> list[int]:
    """Uniform descending timesteps ``(steps-1)*stride, ..., stride, 0``."""
    stride = schedule.T_train // steps
    return [k * stride for k in reversed(range(steps))]


def _ab(schedule: NoiseSchedule, t: int, dtype) -> torch.Tensor:
    return schedule.alpha_bar(max(int(t), -1)).to(dtype)


def transfer(schedule: NoiseSchedule, x, eps, t: float, t_next: float):
    """Move ``x`` from ``t`` to ``t_next`` along the predicted noise."""
    a_t = _ab(schedule, t, x.dtype)
    a_n = _ab(schedule, t_next, x.dtype)
    x0 = (x - (1 - a_t).sqrt() * eps) / a_t.sqrt()
    return a_n.sqrt() * x0 + (1 - a_n).sqrt() * eps


def plms_sample(eps_fn: Callable, x_T: torch.Tensor, schedule: NoiseSchedule, steps: int = DEFAULT_STEPS):
    """Integrate from ``x_T`` to the clean endpoint. ``eps_fn(x, t) -> eps``."""
    if steps < 4:
        raise ConfigError(f"PLMS needs at least 4 steps, got {steps}", "/steps")
    stride = schedule.T_train // steps
    half = stride // 2
    x = x_T
    history: list[torch.Tensor] = []
    for i, t in enumerate(sub_schedule(schedule, steps)):
        t_next = t - stride
        if i < WARMUP_STEPS:
            e1 = eps_fn(x, t)
            x1 = transfer(schedule, x, e1, t, t - half)
            e2 = eps_fn(x1, t - half)
            x2 = transfer(schedule, x, e2, t, t - half)
            e3 = eps_fn(x2, t - half)
            x3 = transfer(schedule, x, e3, t, t_next)
            e4 = eps_fn(x3, t_next)
            history.append(e1)
            eps = (e1 + 2 * e2 + 2 * e3 + e4) / 6
        else:
            e = eps_fn(x, t)
            history.append(e)
            e0, e1, e2, e3 = history[-1], history[-2], history[-3], history[-4]
            eps = (55 * e0 - 59 * e1 + 37 * e2 - 9 * e3) / 24
        history = history[-4:]
        x = transfer(schedule, x, eps, t, t_next)
    return x


def initial_noise(shape, seed: int, dtype=torch.float32) -> torch.Tensor:
    g = torch.Generator().manual_seed(int(seed))
    return torch.randn(shape, generator=g, dtype=dtype)


@torch.no_grad()
def sample(model, cond, steps: int = DEFAULT_STEPS, seed: int = 0, schedule: NoiseSchedule | None = None,
           cfg_scale: float = DEFAULT_CFG_SCALE):
    """Joint camera/range latents for ``cond``; deterministic given ``seed``."""
    schedule = schedule or NoiseSchedule()
    shape = cond.ctx_cam.shape
    x = initial_noise((2, *shape), seed, cond.ctx_cam.dtype)

    def eps_fn(z, t):
        tt = torch.full((shape[0],), int(max(t, 0)), dtype=torch.long)
        e_c, e_r = cfg_predict(model, z[0], z[1], tt, cond, cfg_scale)
        return torch.stack([e_c, e_r])

    out = plms_sample(eps_fn, x, schedule, steps)
    return out[0], out[1]
