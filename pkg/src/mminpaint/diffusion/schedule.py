from __future__ import annotations

from dataclasses import dataclass

import torch

from ..errors import DomainError


@dataclass(frozen=True)
class NoiseSchedule:
    """Scaled-linear beta schedule (betas linear in sqrt space)."""

    T_train: int = 1000
    beta_start: float = 0.00085
    beta_end: float = 0.012

    @property
    def betas(self) -> torch.Tensor:
        return torch.linspace(self.beta_start**0.5, self.beta_end**0.5, self.T_train, dtype=torch.float64) ** 2

    @property
    def alphas_cumprod(self) -> torch.Tensor:
        return torch.cumprod(1.0 - self.betas, dim=0)

    def alpha_bar(self, t) -> torch.Tensor:
        """``alpha_bar`` at integer steps; ``t = -1`` means the clean endpoint (1.0)."""
        t = torch.as_tensor(t, dtype=torch.long)
        ab = torch.cat([torch.ones(1, dtype=torch.float64), self.alphas_cumprod])
        return ab[t + 1]


def add_noise(schedule: NoiseSchedule, z0: torch.Tensor, t, eps: torch.Tensor) -> torch.Tensor:
    """``sqrt(ab_t) z0 + sqrt(1 - ab_t) eps`` with per-item ``t``."""
    t = torch.as_tensor(t, dtype=torch.long).reshape(-1)
    if torch.any(t < 0) or torch.any(t >= schedule.T_train):
        raise DomainError(f"t must lie in [0, {schedule.T_train}), got {t.tolist()}")
    ab = schedule.alpha_bar(t).to(z0.dtype)
    ab = ab.reshape(-1, *([1] * (z0.ndim - 1)))
    return ab.sqrt() * z0 + (1.0 - ab).sqrt() * eps
