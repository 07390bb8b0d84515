"""Intensity and object-aware depth normalization with exact inverses."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .constants import INTENSITY_MAX
from .errors import DomainError
from .range_codec import depth_to_unit

log = logging.getLogger(__name__)

DEFAULT_LAMBDA = 4.0
DEFAULT_ALPHA = 0.5
DEFAULT_BOX_EXPAND = 0.1


@dataclass(frozen=True)
class NormalizationParams:
    lam: float = DEFAULT_LAMBDA
    alpha: float = DEFAULT_ALPHA
    min_d: float = -1.0
    max_d: float = 1.0
    box_expand: float = DEFAULT_BOX_EXPAND

    def __post_init__(self):
        if self.lam <= 0:
            raise DomainError("lambda must be positive")
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        if not -1.0 <= self.min_d <= self.max_d <= 1.0:
            raise DomainError(f"need -1 <= min_d <= max_d <= 1, got {self.min_d}, {self.max_d}")

    @property
    def degenerate(self) -> bool:
        return not self.min_d < self.max_d

    @classmethod
    def for_box(cls, box, lam=DEFAULT_LAMBDA, alpha=DEFAULT_ALPHA, box_expand=DEFAULT_BOX_EXPAND):
        """Depth band from the corners of ``box`` grown by ``1 + box_expand`` about its center."""
        grown = box.scaled(1.0 + box_expand)
        d = depth_to_unit(np.linalg.norm(grown.corners, axis=1))
        lo, hi = np.clip([d.min(), d.max()], -1.0, 1.0)
        return cls(lam=lam, alpha=alpha, min_d=float(lo), max_d=float(hi), box_expand=box_expand)


def normalize_intensity(i, lam: float = DEFAULT_LAMBDA) -> np.ndarray:
    i = np.asarray(i, dtype=np.float64)
    if np.any(i < 0) or np.any(i > INTENSITY_MAX) or not np.all(np.isfinite(i)):
        raise DomainError("intensity must lie in [0, 255]")
    return 2.0 * np.exp(-lam * i / INTENSITY_MAX) - 1.0


def intensity_floor(lam: float = DEFAULT_LAMBDA) -> float:
    return 2.0 * np.exp(-lam) - 1.0


def denormalize_intensity(x, lam: float = DEFAULT_LAMBDA, return_flags: bool = False):
    """Inverse of :func:`normalize_intensity`.

    Inputs at or below the codomain floor clamp to 255 and are flagged; inputs
    above 1 clamp to 0.
    """
    x = np.asarray(x, dtype=np.float64)
    flags = x <= intensity_floor(lam)
    safe = np.clip(x, intensity_floor(lam), 1.0)
    with np.errstate(divide="ignore"):
        i = -INTENSITY_MAX / lam * np.log((safe + 1.0) / 2.0)
    i = np.where(flags, INTENSITY_MAX, np.clip(i, 0.0, INTENSITY_MAX))
    return (i, flags) if return_flags else i


def _warn_degenerate(params):
    msg = f"degenerate depth band min_d=max_d={params.min_d}; using identity depth map"
    log.warning(msg)
    warnings.warn(msg, RuntimeWarning, stacklevel=3)


def normalize_depth(d, params: NormalizationParams) -> np.ndarray:
    """Piecewise-linear remap that widens the object's depth band to ``[-alpha, alpha]``."""
    d = np.clip(np.asarray(d, dtype=np.float64), -1.0, 1.0)
    if params.degenerate:
        _warn_degenerate(params)
        return d.copy()
    a, lo, hi = params.alpha, params.min_d, params.max_d
    out = np.empty_like(d)
    mid = (d >= lo) & (d <= hi)
    below = d < lo
    above = d > hi
    out[mid] = -a + 2 * a * (d[mid] - lo) / (hi - lo)
    out[below] = -1.0 + (1.0 - a) * (d[below] + 1.0) / (lo + 1.0)
    out[above] = a + (1.0 - a) * (d[above] - hi) / (1.0 - hi)
    return out


def denormalize_depth(x, params: NormalizationParams) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)
    if params.degenerate:
        _warn_degenerate(params)
        return x.copy()
    a, lo, hi = params.alpha, params.min_d, params.max_d
    out = np.empty_like(x)
    mid = (x >= -a) & (x <= a)
    below = x < -a
    above = x > a
    out[mid] = lo + (x[mid] + a) * (hi - lo) / (2 * a)
    out[below] = -1.0 + (x[below] + 1.0) * (lo + 1.0) / (1.0 - a)
    out[above] = hi + (x[above] - a) * (1.0 - hi) / (1.0 - a)
    return out
