"""Paste generated crops back into the original camera frame and range view."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .constants import RANGE_H
from .errors import ShapeError
from .geometry import CropSpec, ProjectedBox, box_region, sample_crop_at, uncrop_range
from .range_codec import EMPTY_DEPTH, RangeView, angles_to_xyz, rasterized_angles, unit_to_depth
from .scene_model import Box3D, CameraFrame, PointCloud
from .signal_norm import NormalizationParams, denormalize_depth, denormalize_intensity

BLEND_SIGMA = 2.0
# kernel radius in sigmas; total support is twice this
BLEND_TRUNCATE = 2.0
ALPHA_EPS = 1e-3
# generated unit depth at or above this counts as "no return"
EMPTY_UNIT_DEPTH = 0.98


@dataclass(frozen=True, eq=False)
class CompositeMask:
    camera_region: np.ndarray | None  # H x W, pixels with nonzero blend weight
    m_points: np.ndarray  # 32 x W, original points inside the box
    edited_inside: np.ndarray  # 32 x W, generated points inside the box

    @property
    def range_replaced(self) -> np.ndarray:
        return self.m_points | self.edited_inside


# ---------------------------------------------------------------------------
# camera
# ---------------------------------------------------------------------------


def camera_alpha(pbox: ProjectedBox, crop: CropSpec, shape, sigma: float = BLEND_SIGMA) -> np.ndarray:
    """Feathered blend weight on the full frame.

    Gaussian-blurred box indicator, forced to 1 on the box eroded by the
    kernel radius, zeroed below ``ALPHA_EPS`` and outside the crop window.
    """
    H, W = shape
    region = box_region(pbox, (H, W))
    alpha = ndimage.gaussian_filter(region.astype(np.float64), sigma, truncate=BLEND_TRUNCATE, mode="constant")
    radius = int(np.ceil(BLEND_TRUNCATE * sigma))
    if radius > 0 and region.any():
        core = ndimage.binary_erosion(region, iterations=radius, border_value=0)
        alpha[core] = 1.0
    alpha[alpha < ALPHA_EPS] = 0.0
    window = np.zeros((H, W), dtype=bool)
    window[max(crop.y0, 0) : max(crop.y0 + crop.height, 0), max(crop.x0, 0) : max(crop.x0 + crop.width, 0)] = True
    alpha[~window] = 0.0
    return alpha


def composite_camera(orig: CameraFrame, edited: np.ndarray, crop: CropSpec, pbox: ProjectedBox,
                     sigma: float = BLEND_SIGMA) -> tuple[CameraFrame, np.ndarray]:
    """Blend ``edited`` (the crop's ``D x D x 3`` output) into the frame.

    Returns the new frame and the alpha map. Pixels with zero alpha are copied
    unchanged.
    """
    edited = np.asarray(edited, dtype=np.float64)
    if edited.shape != (crop.size, crop.size, 3):
        raise ShapeError(f"edited camera crop must be {(crop.size, crop.size, 3)}, got {edited.shape}")
    img = orig.image
    alpha = camera_alpha(pbox, crop, img.shape[:2], sigma)
    ys, xs = np.nonzero(alpha)
    out = img.copy()
    if len(ys):
        centers = np.column_stack([xs + 0.5, ys + 0.5])
        gen = sample_crop_at(edited, crop, centers)
        a = alpha[ys, xs][:, None]
        out[ys, xs] = a * gen + (1.0 - a) * img[ys, xs]
    return CameraFrame(out, orig.intrinsics, orig.extrinsics), alpha


# ---------------------------------------------------------------------------
# range
# ---------------------------------------------------------------------------


def window_mask(crop: CropSpec, shape) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    m[:, crop.source_columns()] = True
    return m


def original_points_in_box(view: RangeView, box: Box3D, cloud: PointCloud | None = None) -> np.ndarray:
    """Filled pixels whose source point lies in ``box`` (closed test).

    With ``cloud`` the test uses the stored source coordinates; otherwise the
    point is rebuilt from the pixel's depth and angles.
    """
    m = view.filled
    if cloud is not None:
        xyz = cloud.xyz[view.point_index[m]]
    else:
        xyz = angles_to_xyz(view.depth[m], view.pitch[m], view.yaw[m])
    out = np.zeros(view.shape, dtype=bool)
    out[m] = box.contains(xyz)
    return out


def decode_range_window(edited: np.ndarray, crop: CropSpec, params: NormalizationParams, mode: str = "avg"):
    """Normalized ``D x D x 2`` output to metric depth, intensity and validity on the ``32 x W_R`` window."""
    edited = np.asarray(edited, dtype=np.float64)
    if edited.shape != (crop.size, crop.size, 2):
        raise ShapeError(f"edited range crop must be {(crop.size, crop.size, 2)}, got {edited.shape}")
    win = uncrop_range(edited, crop, mode)
    unit = denormalize_depth(win[..., 0], params)
    depth = unit_to_depth(unit)
    intensity = denormalize_intensity(win[..., 1], params.lam)
    return depth, intensity, unit < EMPTY_UNIT_DEPTH


def composite_range(orig_view: RangeView, edited: np.ndarray, box: Box3D, crop: CropSpec,
                    params: NormalizationParams, cloud: PointCloud | None = None,
                    mode: str = "avg") -> tuple[RangeView, CompositeMask]:
    """Replace window pixels whose original point, or generated point, lies in ``box``."""
    shape = orig_view.shape
    if crop.height != RANGE_H or shape[0] != RANGE_H:
        raise ShapeError("range crop must span every beam")
    cols = crop.source_columns()
    depth_w, inten_w, valid_w = decode_range_window(edited, crop, params, mode)

    r_pitch, r_yaw = rasterized_angles(shape)
    depth = np.full(shape, EMPTY_DEPTH)
    inten = np.zeros(shape)
    valid = np.zeros(shape, dtype=bool)
    depth[:, cols] = depth_w
    inten[:, cols] = inten_w
    valid[:, cols] = valid_w

    in_win = window_mask(crop, shape)
    edited_inside = np.zeros(shape, dtype=bool)
    cand = in_win & valid
    edited_inside[cand] = box.contains(angles_to_xyz(depth[cand], r_pitch[cand], r_yaw[cand]))
    m_points = original_points_in_box(orig_view, box, cloud) & in_win
    rep = m_points | edited_inside

    fill = rep & valid
    clear = rep & ~valid
    new = orig_view.copy()
    new.depth[fill] = depth[fill]
    new.intensity[fill] = inten[fill]
    new.depth[clear] = EMPTY_DEPTH
    new.intensity[clear] = 0.0
    new.pitch[rep] = r_pitch[rep]
    new.yaw[rep] = r_yaw[rep]
    new.filled[rep] = valid[rep]
    new.point_index[rep] = -1
    return new, CompositeMask(None, m_points, edited_inside)


def composite_cloud(orig: PointCloud, orig_view: RangeView, new_view: RangeView, replaced: np.ndarray,
                    box: Box3D) -> PointCloud:
    """Point cloud for an edited view.

    Untouched pixels keep their original rows verbatim. Replaced pixels become
    new points at the pixel-center angles. Points the projection dropped are
    kept unless they fall inside ``box``.
    """
    keep_pix = orig_view.filled & ~replaced
    kept = orig_view.point_index[keep_pix]
    dropped = orig_view.dropped
    if len(dropped):
        dropped = dropped[~box.contains(orig.xyz[dropped])]
    rows = np.sort(np.concatenate([kept, dropped]).astype(np.int64))
    gen = replaced & new_view.filled
    xyz = angles_to_xyz(new_view.depth[gen], new_view.pitch[gen], new_view.yaw[gen])
    # generated points are stored in float32 on export; round now so box counts survive a round trip
    new_pts = np.column_stack([xyz, new_view.intensity[gen]]).astype(np.float32).astype(np.float64)
    return PointCloud(np.concatenate([orig.points[rows], new_pts.reshape(-1, 4)]))
