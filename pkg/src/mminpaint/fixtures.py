"""Randomized inputs shared by the self-test command and the test suite."""

from __future__ import annotations

import numpy as np
import torch

from .conditioning import ConditioningSet

from .constants import BEAM_PITCHES, MAX_DEPTH, MIN_DEPTH, RANGE_H, RANGE_W
from .range_codec import angles_to_xyz, rasterized_yaw
from .scene_model import PointCloud


def random_collision_free_cloud(rng: np.random.Generator, n_points: int = 2000, n_out_of_range: int = 0):
    """Cloud with at most one point per range pixel plus optional out-of-range points.

    Returns ``(cloud, pixels, out_idx)`` where ``pixels`` holds the
    ``(row, col)`` each in-range point must occupy and ``out_idx`` the row
    indices of the points that must be dropped.
    """
    n_points = min(n_points, RANGE_H * RANGE_W)
    flat = rng.choice(RANGE_H * RANGE_W, size=n_points, replace=False)
    rows, cols = np.divmod(flat, RANGE_W)
    half_beam = 0.5 * (BEAM_PITCHES[1] - BEAM_PITCHES[0])
    pitch = BEAM_PITCHES[rows] + rng.uniform(-0.9, 0.9, n_points) * half_beam
    yaw = rasterized_yaw(cols) + rng.uniform(-0.45, 0.45, n_points) * (2 * np.pi / RANGE_W)
    depth = rng.uniform(MIN_DEPTH, MAX_DEPTH, n_points)
    xyz = angles_to_xyz(depth, pitch, yaw)
    inten = rng.uniform(0, 255, n_points)
    pts = np.column_stack([xyz, inten])

    far = rng.uniform(MAX_DEPTH + 0.5, 80.0, n_out_of_range)
    near = rng.uniform(0.1, MIN_DEPTH - 0.05, n_out_of_range)
    out_depth = np.where(rng.random(n_out_of_range) < 0.5, far, near)
    out = np.column_stack(
        [
            angles_to_xyz(out_depth, rng.uniform(-0.5, 0.15, n_out_of_range), rng.uniform(-np.pi, np.pi, n_out_of_range)),
            rng.uniform(0, 255, n_out_of_range),
        ]
    )
    allpts = np.concatenate([pts, out]) if n_out_of_range else pts
    perm = rng.permutation(len(allpts))
    inv = np.argsort(perm)
    shuffled = allpts[perm]
    # position of original point k after shuffling is inv[k]
    pixels = np.full((len(allpts), 2), -1)
    pixels[inv[:n_points]] = np.column_stack([rows, cols])
    out_idx = np.sort(inv[n_points:])
    return PointCloud(shuffled), pixels, out_idx


def random_conditioning(B, C=4, h=8, dim=64, seed=0, dtype=torch.float32) -> ConditioningSet:
    """Random context latents, boxes, reference tokens and keep-masks for ``B`` items."""
    g = torch.Generator().manual_seed(seed)
    r = lambda *s: torch.randn(*s, generator=g, dtype=dtype)
    keep = (torch.rand(B, 1, h, h, generator=g) > 0.3).to(dtype)
    return ConditioningSet(
        r(B, dim), torch.rand(B, 8, 3, generator=g, dtype=dtype), torch.rand(B, 8, 3, generator=g, dtype=dtype),
        r(B, C, h, h), r(B, C, h, h), keep, keep.flip(-1), torch.zeros(B, dtype=torch.bool),
    )
