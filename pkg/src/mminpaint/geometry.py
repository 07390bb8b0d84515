"""Box projection, object-centric crops, viewport transforms and edit masks.

Raster coordinates are continuous ``(x, y)`` with pixel ``(row, col)``
covering ``[col, col+1) x [row, row+1)``. In the range view, beam ``k`` sits at
``y = k + 0.5`` and column ``x`` follows the codec's yaw mapping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .constants import MAX_DEPTH, MIN_DEPTH, RANGE_H, RANGE_W
from .errors import BehindCameraError, CoverageError, OutOfRangeError, ShapeError
from .range_codec import BEAMS, fractional_column, yaw_of
from .raster import bbox_2d, convex_hull, fill_convex, polygon_area
from .scene_model import Box3D, CameraFrame

CAMERA = "camera"
RANGE = "range"

MIN_COVER = 0.2
CAMERA_CONTEXT = 1.5
RANGE_CONTEXT = 4.0
RANGE_MIN_WIDTH = 64


@dataclass(frozen=True, eq=False)
class ProjectedBox:
    """Per-modality projection of a box's 8 corners.

    ``xy`` holds raster coordinates (range columns unwrapped so the box is
    contiguous); ``depth`` is each corner's Euclidean distance from the sensor.
    """

    modality: str
    xy: np.ndarray
    depth: np.ndarray
    straddle: bool = False

    @property
    def corners(self) -> np.ndarray:
        """Camera: ``(u, v, depth)``; range: ``(row, col, depth)`` with wrapped columns."""
        if self.modality == CAMERA:
            return np.column_stack([self.xy, self.depth])
        return np.column_stack([self.xy[:, 1] - 0.5, np.mod(self.xy[:, 0], RANGE_W), self.depth])

    @property
    def bbox(self) -> np.ndarray:
        return bbox_2d(self.xy)

    @property
    def hull(self) -> np.ndarray:
        return convex_hull(self.xy)


@dataclass(frozen=True)
class CropSpec:
    """A source window resized to ``size x size``.

    Range windows always span all rows; ``x0`` may fall outside ``[0, W)`` and
    columns wrap.
    """

    modality: str
    x0: int
    y0: int
    width: int
    height: int
    size: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.size <= 0:
            raise ShapeError("crop window and target size must be positive")

    @property
    def scale(self) -> np.ndarray:
        return np.array([self.size / self.width, self.size / self.height])

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x0 + self.width / 2, self.y0 + self.height / 2])

    def to_target(self, xy: np.ndarray) -> np.ndarray:
        return (np.asarray(xy, dtype=np.float64) - [self.x0, self.y0]) * self.scale

    def to_source(self, xy: np.ndarray) -> np.ndarray:
        return np.asarray(xy, dtype=np.float64) / self.scale + [self.x0, self.y0]

    def source_columns(self) -> np.ndarray:
        """Wrapped range-view column indices covered by the window."""
        return np.mod(self.x0 + np.arange(self.width), RANGE_W)


@dataclass(frozen=True, eq=False)
class EditMask:
    mask: np.ndarray

    @property
    def complement(self) -> np.ndarray:
        return 1.0 - self.mask.astype(np.float64)


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------


def project_box_camera(box: Box3D, cam: CameraFrame) -> ProjectedBox:
    uv, z = cam.project(box.corners)
    if np.any(z <= 0):
        raise BehindCameraError(f"box {box.instance_id}: {int((z <= 0).sum())} corner(s) at or behind the image plane")
    return ProjectedBox(CAMERA, uv, np.linalg.norm(box.corners, axis=1))


def project_box_range(box: Box3D) -> ProjectedBox:
    d = np.linalg.norm(box.corners, axis=1)
    if np.any(d < MIN_DEPTH) or np.any(d > MAX_DEPTH):
        raise OutOfRangeError(f"box {box.instance_id}: corner depth {d.min():.2f}..{d.max():.2f} outside [{MIN_DEPTH}, {MAX_DEPTH}]")
    pitch = np.arcsin(box.corners[:, 2] / d)
    cols = fractional_column(yaw_of(box.corners))
    straddle = bool(cols.max() - cols.min() > RANGE_W / 2)
    if straddle:
        cols = np.where(cols < RANGE_W / 2, cols + RANGE_W, cols)
    rows = BEAMS.fractional_row(pitch)
    return ProjectedBox(RANGE, np.column_stack([cols, rows + 0.5]), d, straddle)


def depth_augmented_camera_box(pbox_cam: ProjectedBox, pbox_range: ProjectedBox) -> np.ndarray:
    """Camera ``(u, v)`` corners with the range projection's depth appended (8x3)."""
    return np.column_stack([pbox_cam.xy, pbox_range.depth])


# ---------------------------------------------------------------------------
# crops
# ---------------------------------------------------------------------------


def _align_columns(pbox: ProjectedBox, crop: CropSpec) -> np.ndarray:
    xy = pbox.xy.copy()
    if pbox.modality == RANGE:
        shift = np.round((crop.center[0] - xy[:, 0].mean()) / RANGE_W) * RANGE_W
        xy[:, 0] += shift
    return xy


def _camera_window(pbox, frame_size, side, rng=None):
    W, H = frame_size
    x0b, y0b, x1b, y1b = pbox.bbox
    if rng is None:
        cx, cy = (x0b + x1b) / 2, (y0b + y1b) / 2
        x0 = int(np.round(cx - side / 2))
        y0 = int(np.round(cy - side / 2))
        if side <= W:
            x0 = int(np.clip(x0, 0, W - side))
        if side <= H:
            y0 = int(np.clip(y0, 0, H - side))
        return x0, y0
    lo_x, hi_x = max(np.ceil(x1b - side), 0), min(np.floor(x0b), W - side)
    lo_y, hi_y = max(np.ceil(y1b - side), 0), min(np.floor(y0b), H - side)
    if lo_x > hi_x:
        lo_x, hi_x = sorted((np.floor(x0b), np.ceil(x1b - side)))
    if lo_y > hi_y:
        lo_y, hi_y = sorted((np.floor(y0b), np.ceil(y1b - side)))
    return int(rng.integers(int(lo_x), int(hi_x) + 1)), int(rng.integers(int(lo_y), int(hi_y) + 1))


def make_crop(
    pbox: ProjectedBox,
    frame_size=(RANGE_W, RANGE_H),
    size: int = 64,
    mode: str = "centered",
    seed=None,
    min_cover: float = MIN_COVER,
) -> CropSpec:
    """Object-centric window around a projected box.

    ``frame_size`` is ``(width, height)``. ``mode="random"`` samples a camera
    window in which the box covers at least ``min_cover`` of the crop.
    """
    if mode not in ("centered", "random"):
        raise ValueError(f"unknown crop mode {mode!r}")
    W, H = frame_size
    x0b, y0b, x1b, y1b = pbox.bbox

    if pbox.modality == RANGE:
        span = x1b - x0b
        width = int(np.clip(int(np.ceil(RANGE_CONTEXT * span)), RANGE_MIN_WIDTH, RANGE_W))
        center = (x0b + x1b) / 2
        if mode == "random":
            rng = np.random.default_rng(seed)
            slack = max((width - span) / 2 - 1, 0)
            center += rng.uniform(-slack, slack)
        return CropSpec(RANGE, int(np.floor(center - width / 2)), 0, width, RANGE_H, size)

    if x1b < 0 or y1b < 0 or x0b > W or y0b > H:
        raise CoverageError("projected box does not intersect the frame")
    if mode == "centered":
        side = int(np.clip(np.ceil(max(x1b - x0b, y1b - y0b) * CAMERA_CONTEXT), 16, min(W, H)))
        x0, y0 = _camera_window(pbox, frame_size, side)
        return CropSpec(CAMERA, x0, y0, side, side, size)

    rng = np.random.default_rng(seed)
    area = polygon_area(pbox.hull)
    s_hi = int(np.floor(min(np.sqrt(area / min_cover) * 0.97, W, H)))
    s_lo = min(int(np.ceil(max(x1b - x0b, y1b - y0b))), s_hi)
    if s_hi < 2:
        raise CoverageError(f"box hull area {area:.1f} px^2 too small for {min_cover:.0%} coverage")
    for _ in range(64):
        side = int(rng.integers(s_lo, s_hi + 1))
        x0, y0 = _camera_window(pbox, frame_size, side, rng)
        crop = CropSpec(CAMERA, x0, y0, side, side, size)
        if rasterize_mask(pbox, crop).mask.mean() >= min_cover:
            return crop
    raise CoverageError(f"no window reaches {min_cover:.0%} coverage for this box")


def rasterize_mask(pbox: ProjectedBox, crop: CropSpec) -> EditMask:
    """Filled convex hull of the viewport-transformed corners on the ``D x D`` grid."""
    if pbox.modality != crop.modality:
        raise ShapeError(f"box modality {pbox.modality} does not match crop modality {crop.modality}")
    D = crop.size
    xy = crop.to_target(_align_columns(pbox, crop))
    hull = convex_hull(xy)
    mask = fill_convex(hull, (D, D))
    if not mask.any() and len(hull):
        # sub-pixel boxes still mark the pixel holding their clipped centroid
        c = hull.mean(axis=0)
        lo, hi = xy.min(axis=0), xy.max(axis=0)
        if hi[0] >= 0 and hi[1] >= 0 and lo[0] <= D and lo[1] <= D:
            j, i = np.clip(np.floor(c).astype(int), 0, D - 1)
            mask[i, j] = True
    return EditMask(mask)


def box_region(pbox: ProjectedBox, shape: tuple[int, int]) -> np.ndarray:
    """Hull fill of a camera-projected box on the full image grid."""
    return fill_convex(pbox.hull, shape)


def range_box_columns(pbox: ProjectedBox, crop: CropSpec) -> np.ndarray:
    return _align_columns(pbox, crop)


# ---------------------------------------------------------------------------
# resampling through a crop
# ---------------------------------------------------------------------------


def crop_image(img: np.ndarray, crop: CropSpec) -> np.ndarray:
    """Bilinear resample of a camera window onto ``D x D`` (edge-clamped)."""
    D = crop.size
    c = (np.arange(D) + 0.5)
    tx, ty = np.meshgrid(c, c)
    src = crop.to_source(np.stack([tx.ravel(), ty.ravel()], axis=1))
    coords = [src[:, 1] - 0.5, src[:, 0] - 0.5]
    chans = [ndimage.map_coordinates(img[..., k], coords, order=1, mode="nearest") for k in range(img.shape[2])]
    return np.stack(chans, axis=-1).reshape(D, D, img.shape[2])


def sample_crop_at(crop_img: np.ndarray, crop: CropSpec, xy_source: np.ndarray) -> np.ndarray:
    """Bilinear lookup of a ``D x D`` crop at source-frame points (inverse viewport)."""
    t = crop.to_target(xy_source)
    coords = [t[:, 1] - 0.5, t[:, 0] - 0.5]
    return np.stack(
        [ndimage.map_coordinates(crop_img[..., k], coords, order=1, mode="nearest") for k in range(crop_img.shape[2])],
        axis=-1,
    )


def _range_index_maps(crop: CropSpec):
    D = crop.size
    rows = np.floor((np.arange(D) + 0.5) * crop.height / D).astype(int)
    cols = np.floor((np.arange(D) + 0.5) * crop.width / D).astype(int)
    return rows, cols


def crop_range(arr: np.ndarray, crop: CropSpec, mode: str = "nearest") -> np.ndarray:
    """Resize a ``32 x W_R`` window onto ``D x D``.

    ``arr`` is a full ``32 x 1096 [x C]`` raster. ``avg`` average-pools along
    any axis that shrinks and samples nearest along axes that grow.
    """
    rows, cols = _range_index_maps(crop)
    window = np.asarray(arr)[:, crop.source_columns()]
    if mode == "nearest":
        return window[rows][:, cols]
    if mode != "avg":
        raise ValueError(f"unknown resize mode {mode!r}")
    out = window.astype(np.float64)
    for axis, n in ((0, crop.height), (1, crop.width)):
        idx = rows if axis == 0 else cols
        if n <= crop.size:
            out = np.take(out, idx, axis=axis)
        else:
            edges = np.floor(np.arange(crop.size + 1) * n / crop.size).astype(int)
            out = np.add.reduceat(out, edges[:-1], axis=axis)
            shape = [1] * out.ndim
            shape[axis] = crop.size
            out = out / np.diff(edges).reshape(shape)
    return out


def uncrop_range(target: np.ndarray, crop: CropSpec, mode: str = "avg") -> np.ndarray:
    """Resize a ``D x D [x C]`` range image back to the ``32 x W_R`` window.

    ``avg`` averages every target pixel that was sampled from a source pixel;
    ``nearest`` takes the target pixel at the source pixel's center. Source
    pixels with no sampled target fall back to nearest.
    """
    D = crop.size
    h, w = crop.height, crop.width
    tgt = np.asarray(target, dtype=np.float64)
    squeeze = tgt.ndim == 2
    if squeeze:
        tgt = tgt[..., None]
    tr = np.clip(np.floor((np.arange(h) + 0.5) * D / h).astype(int), 0, D - 1)
    tc = np.clip(np.floor((np.arange(w) + 0.5) * D / w).astype(int), 0, D - 1)
    nearest = tgt[tr][:, tc]
    if mode == "nearest":
        out = nearest
    elif mode == "avg":
        rows, cols = _range_index_maps(crop)
        sums = np.zeros((h, w, tgt.shape[2]))
        counts = np.zeros((h, w, 1))
        np.add.at(sums, (rows[:, None], cols[None, :]), tgt)
        np.add.at(counts, (rows[:, None], cols[None, :]), 1.0)
        out = np.where(counts > 0, sums / np.maximum(counts, 1.0), nearest)
    else:
        raise ValueError(f"unknown resize mode {mode!r}")
    return out[..., 0] if squeeze else out
