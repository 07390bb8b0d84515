"""Lossless point cloud <-> range view transform.

Every kept point lands in exactly one pixel. The pixel also stores the point's
unrasterized pitch and yaw, so the inverse recovers the original coordinates.
Points outside the depth range, or losing a pixel collision to a nearer
point, are listed in ``RangeView.dropped``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .constants import BEAM_PITCHES, MAX_DEPTH, MIN_DEPTH, RANGE_H, RANGE_W
from .scene_model import PointCloud

EMPTY_DEPTH = MAX_DEPTH


@dataclass(frozen=True)
class BeamTable:
    pitches: np.ndarray = BEAM_PITCHES

    def __post_init__(self):
        p = np.asarray(self.pitches, dtype=np.float64)
        if p.ndim != 1 or len(p) != RANGE_H or np.any(np.diff(p) <= 0):
            raise ValueError("beam table must hold 32 strictly increasing pitches")

    def nearest_row(self, pitch: np.ndarray) -> np.ndarray:
        """Index of the closest beam; exact midpoints go to the lower row."""
        p = self.pitches
        pitch = np.asarray(pitch, dtype=np.float64)
        hi = np.clip(np.searchsorted(p, pitch, side="left"), 1, len(p) - 1)
        lo = hi - 1
        choose_lo = (pitch - p[lo]) <= (p[hi] - pitch)
        return np.where(choose_lo, lo, hi)

    def fractional_row(self, pitch: np.ndarray) -> np.ndarray:
        """Real-valued row by linear interpolation between beams (extrapolated outside)."""
        p = self.pitches
        pitch = np.asarray(pitch, dtype=np.float64)
        idx = np.clip(np.searchsorted(p, pitch, side="right") - 1, 0, len(p) - 2)
        return idx + (pitch - p[idx]) / (p[idx + 1] - p[idx])


BEAMS = BeamTable()


@dataclass(frozen=True, eq=False)
class RangeView:
    """``32 x 1096`` raster of depth, intensity and per-pixel angles.

    ``point_index`` maps each filled pixel back to the row of the source cloud
    (-1 for empty or synthesized pixels).
    """

    depth: np.ndarray
    intensity: np.ndarray
    pitch: np.ndarray
    yaw: np.ndarray
    filled: np.ndarray
    dropped: np.ndarray
    point_index: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    def copy(self) -> "RangeView":
        return RangeView(*(np.array(getattr(self, f)) for f in self.__dataclass_fields__))

    def with_fields(self, **kw) -> "RangeView":
        return replace(self, **kw)


def yaw_of(xyz: np.ndarray) -> np.ndarray:
    return -np.arctan2(xyz[..., 1], xyz[..., 0])


def column_of(yaw: np.ndarray, width: int = RANGE_W) -> np.ndarray:
    """Integer column for a yaw angle, wrapped into ``[0, width)``."""
    col = np.floor(np.asarray(yaw) / np.pi * (width / 2) + width / 2).astype(np.int64)
    return np.mod(col, width)


def fractional_column(yaw: np.ndarray, width: int = RANGE_W) -> np.ndarray:
    return np.asarray(yaw) / np.pi * (width / 2) + width / 2


def rasterized_yaw(col, width: int = RANGE_W) -> np.ndarray:
    return (np.asarray(col, dtype=np.float64) + 0.5 - width / 2) * (2 * np.pi / width)


def rasterized_angles(shape=(RANGE_H, RANGE_W)) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
    return BEAMS.pitches[rows], rasterized_yaw(cols, shape[1])


def empty_view() -> RangeView:
    pitch, yaw = rasterized_angles()
    shape = (RANGE_H, RANGE_W)
    return RangeView(
        depth=np.full(shape, EMPTY_DEPTH),
        intensity=np.zeros(shape),
        pitch=pitch,
        yaw=yaw,
        filled=np.zeros(shape, dtype=bool),
        dropped=np.zeros(0, dtype=np.int64),
        point_index=np.full(shape, -1, dtype=np.int64),
    )


def project(cloud: PointCloud) -> RangeView:
    """Project a sweep into the range view, keeping the nearest point per pixel."""
    view = empty_view()
    pts = cloud.points
    n = len(pts)
    if n == 0:
        return view
    xyz = pts[:, :3]
    d = np.linalg.norm(xyz, axis=1)
    in_range = (d >= MIN_DEPTH) & (d <= MAX_DEPTH)
    idx = np.flatnonzero(in_range)
    dk = d[idx]
    yaw = yaw_of(xyz[idx])
    pitch = np.arcsin(np.clip(xyz[idx, 2] / dk, -1.0, 1.0))
    row = BEAMS.nearest_row(pitch)
    col = column_of(yaw)
    flat = row * RANGE_W + col

    # nearest depth wins; ties keep the lowest point index
    order = np.lexsort((idx, dk, flat))
    flat_sorted = flat[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = flat_sorted[1:] != flat_sorted[:-1]
    win = order[first]
    lose = order[~first]

    depth = view.depth.ravel()
    inten = view.intensity.ravel()
    pit = view.pitch.ravel()
    yw = view.yaw.ravel()
    filled = view.filled.ravel()
    pidx = view.point_index.ravel()
    f = flat[win]
    depth[f] = dk[win]
    inten[f] = pts[idx[win], 3]
    pit[f] = pitch[win]
    yw[f] = yaw[win]
    filled[f] = True
    pidx[f] = idx[win]
    dropped = np.sort(np.concatenate([np.flatnonzero(~in_range), idx[lose]]))
    return RangeView(
        depth.reshape(RANGE_H, RANGE_W),
        inten.reshape(RANGE_H, RANGE_W),
        pit.reshape(RANGE_H, RANGE_W),
        yw.reshape(RANGE_H, RANGE_W),
        filled.reshape(RANGE_H, RANGE_W),
        dropped.astype(np.int64),
        pidx.reshape(RANGE_H, RANGE_W),
    )


def angles_to_xyz(depth, pitch, yaw) -> np.ndarray:
    depth, pitch, yaw = np.broadcast_arrays(depth, pitch, yaw)
    cp = np.cos(pitch)
    return np.stack([depth * np.cos(yaw) * cp, -depth * np.sin(yaw) * cp, depth * np.sin(pitch)], axis=-1)


def unproject(view: RangeView) -> PointCloud:
    """Filled pixels back to points, in row-major pixel order, using stored angles."""
    m = view.filled
    xyz = angles_to_xyz(view.depth[m], view.pitch[m], view.yaw[m])
    return PointCloud(np.concatenate([xyz, view.intensity[m][:, None]], axis=1))


def unproject_rasterized(view: RangeView, edited: np.ndarray | None = None) -> PointCloud:
    """Like :func:`unproject`, but edited pixels use the pixel-center angles.

    Edited pixels carry model-generated depth without a stored source angle.
    """
    if edited is None or not np.any(edited):
        return unproject(view)
    r_pitch, r_yaw = rasterized_angles(view.shape)
    pitch = np.where(edited, r_pitch, view.pitch)
    yaw = np.where(edited, r_yaw, view.yaw)
    return unproject(view.with_fields(pitch=pitch, yaw=yaw))


def depth_to_unit(depth: np.ndarray) -> np.ndarray:
    """Linear map of metric depth ``[1.4, 54]`` onto ``[-1, 1]``."""
    return 2.0 * (np.asarray(depth, dtype=np.float64) - MIN_DEPTH) / (MAX_DEPTH - MIN_DEPTH) - 1.0


def unit_to_depth(u: np.ndarray) -> np.ndarray:
    return (np.asarray(u, dtype=np.float64) + 1.0) * 0.5 * (MAX_DEPTH - MIN_DEPTH) + MIN_DEPTH
