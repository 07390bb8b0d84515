"""Training-object selection, reference sampling, empty-box items and augmentation."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from shapely.geometry import MultiPoint

from .conditioning import reference_crop
from .errors import DomainError, InpaintError, NoReferenceError
from .geometry import project_box_camera, project_box_range
from .raster import iou_2d
from .scene_model import Box3D, SceneSample


@dataclass(frozen=True)
class SelectionFilter:
    """All thresholds are inclusive: an object exactly at a limit is kept."""

    min_lidar_points: int = 64
    min_box_px: tuple = (100, 100)
    max_iou: float = 0.5
    min_visibility: float = 0.7
    classes: tuple = ("car", "pedestrian")
    quota: int = 4096

    def __post_init__(self):
        if self.min_lidar_points < 0 or min(self.min_box_px) < 0:
            raise DomainError("point and pixel thresholds must be non-negative")
        if not 0 <= self.max_iou <= 1 or not 0 <= self.min_visibility <= 1:
            raise DomainError("IoU and visibility thresholds must lie in [0, 1]")
        if self.quota < 0:
            raise DomainError("quota must be non-negative")


@dataclass(frozen=True, eq=False)
class Candidate:
    scene: SceneSample
    box: Box3D

    @property
    def key(self):
        m = self.scene.meta
        return (m.get("scene_id", ""), self.box.instance_id, m.get("timestamp", 0.0), m.get("frame_id", ""))


def image_bbox(box: Box3D, scene: SceneSample) -> np.ndarray | None:
    """Camera bbox ``[x0, y0, x1, y1]`` clipped to the frame; None if behind the camera or off-frame."""
    try:
        pb = project_box_camera(box, scene.camera)
    except InpaintError:
        return None
    x0, y0, x1, y1 = pb.bbox
    W, H = scene.camera.width, scene.camera.height
    b = np.array([max(x0, 0.0), max(y0, 0.0), min(x1, W), min(y1, H)])
    if b[2] <= b[0] or b[3] <= b[1]:
        return None
    return b


def _passes(box, bbox, others, flt: SelectionFilter) -> bool:
    if box.category not in flt.classes or bbox is None:
        return False
    if box.num_lidar_points < flt.min_lidar_points or box.visibility < flt.min_visibility:
        return False
    if bbox[2] - bbox[0] < flt.min_box_px[0] or bbox[3] - bbox[1] < flt.min_box_px[1]:
        return False
    return all(iou_2d(bbox, o) <= flt.max_iou for o in others)


def select_objects(scenes, flt: SelectionFilter = SelectionFilter()) -> list[Candidate]:
    """Objects passing the point, size, overlap and visibility filters.

    Overlap is the 2-D IoU against every other annotated box in the same
    frame that projects into the image. Output is sorted by
    ``(scene_id, instance_id)``, then timestamp.
    """
    out = []
    for scene in scenes:
        bboxes = [image_bbox(b, scene) for b in scene.boxes]
        for i, box in enumerate(scene.boxes):
            others = [bb for j, bb in enumerate(bboxes) if j != i and bb is not None]
            if _passes(box, bboxes[i], others, flt):
                out.append(Candidate(scene, box))
    return sorted(out, key=lambda c: c.key)


# ---------------------------------------------------------------------------
# references
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferencePolicy:
    """Beta prior over normalized temporal distance; mass near 1 favours far-away instances."""

    a: float = 4.0
    b: float = 1.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise DomainError("Beta parameters must be positive")

    def draw(self, rng: np.random.Generator, size=None):
        return rng.beta(self.a, self.b, size)


def sample_reference(times, rng: np.random.Generator, anchor: float | None = None,
                     policy: ReferencePolicy = ReferencePolicy()) -> int:
    """Index into ``times`` whose normalized distance from ``anchor`` is nearest a Beta draw.

    ``anchor`` defaults to the first time. Ties resolve to the lower index.
    """
    times = np.asarray(times, dtype=np.float64)
    if times.size == 0:
        raise NoReferenceError("track has no eligible reference frames")
    anchor = times[0] if anchor is None else anchor
    dist = np.abs(times - anchor)
    span = dist.max()
    norm = dist / span if span > 0 else np.zeros_like(dist)
    dt = policy.draw(rng)
    return int(np.argmin(np.abs(norm - dt)))


def tracks(candidates) -> dict:
    """Candidates grouped by ``(scene_id, instance_id)``, in time order."""
    out = defaultdict(list)
    for c in candidates:
        out[c.key[:2]].append(c)
    return {k: sorted(v, key=lambda c: c.key) for k, v in out.items()}


# ---------------------------------------------------------------------------
# empty-box database
# ---------------------------------------------------------------------------


def _footprint(box: Box3D):
    return MultiPoint(box.corners[:, :2]).convex_hull


def overlap_volume(a: Box3D, b: Box3D) -> float:
    """Intersection volume of two gravity-aligned boxes (yaw about z only)."""
    za, zb = a.corners[:, 2], b.corners[:, 2]
    dz = min(za.max(), zb.max()) - max(za.min(), zb.min())
    if dz <= 0:
        return 0.0
    return _footprint(a).intersection(_footprint(b)).area * dz


def empty_box_ok(box: Box3D, scene: SceneSample, max_iou_sum: float = 0.5) -> bool:
    """No 3-D overlap with any annotated box and summed 2-D IoU at most ``max_iou_sum``."""
    bb = image_bbox(box, scene)
    if bb is None:
        return False
    try:
        project_box_range(box)
    except InpaintError:
        return False
    if any(overlap_volume(box, o) > 0 for o in scene.boxes):
        return False
    total = sum(iou_2d(bb, o) for o in (image_bbox(b, scene) for b in scene.boxes) if o is not None)
    return total <= max_iou_sum


@dataclass(frozen=True, eq=False)
class EmptyBoxItem:
    scene: SceneSample
    box: Box3D


def build_empty_box_db(scenes, rng: np.random.Generator, target: int = 10_000, max_tries: int | None = None,
                       x_range=(6.0, 30.0), y_range=(-8.0, 8.0)) -> list[EmptyBoxItem]:
    """Teleport annotated boxes to random ground positions until ``target`` empty boxes are found."""
    scenes = list(scenes)
    pool = [b for s in scenes for b in s.boxes]
    if not scenes or not pool:
        return []
    max_tries = max_tries if max_tries is not None else 20 * target
    out = []
    for _ in range(max_tries):
        if len(out) >= target:
            break
        scene = scenes[int(rng.integers(len(scenes)))]
        src = pool[int(rng.integers(len(pool)))]
        c = src.center
        x, y = rng.uniform(*x_range), rng.uniform(*y_range)
        yaw = rng.uniform(-np.pi, np.pi)
        moved = Box3D.from_center([x, y, c[2]], tuple(src.size), yaw, src.category, f"empty-{len(out):05d}")
        if empty_box_ok(moved, scene):
            out.append(EmptyBoxItem(scene, moved))
    return out


# ---------------------------------------------------------------------------
# augmentation and training items
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentConfig:
    flip_p: float = 0.5
    max_rotation_deg: float = 15.0
    max_blur_sigma: float = 2.0
    brightness: float = 0.2
    contrast: float = 0.2

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


def augment_reference(img: np.ndarray, rng: np.random.Generator, cfg: AugmentConfig = AugmentConfig()) -> np.ndarray:
    """Flip, rotate, blur and jitter brightness/contrast of an ``H x W x 3`` image in ``[0, 1]``."""
    out = np.asarray(img, dtype=np.float64)
    if cfg.flip_p > 0 and rng.random() < cfg.flip_p:
        out = out[:, ::-1]
    if cfg.max_rotation_deg > 0:
        angle = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg)
        out = ndimage.rotate(out, angle, axes=(1, 0), reshape=False, order=1, mode="nearest")
    if cfg.max_blur_sigma > 0:
        s = rng.uniform(0.0, cfg.max_blur_sigma)
        out = ndimage.gaussian_filter(out, sigma=(s, s, 0))
    if cfg.brightness > 0 or cfg.contrast > 0:
        b = rng.uniform(-cfg.brightness, cfg.brightness) if cfg.brightness > 0 else 0.0
        k = 1.0 + (rng.uniform(-cfg.contrast, cfg.contrast) if cfg.contrast > 0 else 0.0)
        mean = out.mean()
        out = np.clip((out - mean) * k + mean + b, 0.0, 1.0)
    return np.ascontiguousarray(out)


@dataclass(eq=False)
class TrainingItem:
    scene: SceneSample
    box: Box3D
    ref_img: np.ndarray
    empty: bool


def sample_training_item(candidates, empty_db, rng: np.random.Generator, p_empty: float = 0.3,
                         augment: AugmentConfig = AugmentConfig(), policy: ReferencePolicy = ReferencePolicy(),
                         ref_size: int = 32, track_index: dict | None = None) -> TrainingItem:
    """Draw an empty-box item with probability ``p_empty``, else an object with a tracked reference."""
    use_empty = bool(empty_db) and (not candidates or rng.random() < p_empty)
    if use_empty:
        e = empty_db[int(rng.integers(len(empty_db)))]
        return TrainingItem(e.scene, e.box, np.zeros((ref_size, ref_size, 3)), True)
    if not candidates:
        raise NoReferenceError("no object candidates and no empty boxes")
    c = candidates[int(rng.integers(len(candidates)))]
    track = (track_index or tracks(candidates))[c.key[:2]]
    j = sample_reference([t.key[2] for t in track], rng, anchor=c.key[2], policy=policy)
    ref = track[j]
    img = reference_crop(ref.scene, ref.box, ref_size)
    return TrainingItem(c.scene, c.box, augment_reference(img, rng, augment), False)


def epoch_items(candidates, rng: np.random.Generator, quota: int = 4096) -> list[Candidate]:
    """Exactly ``min(quota, available)`` candidates per class, shuffled."""
    by_class = defaultdict(list)
    for c in candidates:
        by_class[c.box.category].append(c)
    out = []
    for cls in sorted(by_class):
        pool = by_class[cls]
        idx = rng.choice(len(pool), size=min(quota, len(pool)), replace=False)
        out += [pool[i] for i in idx]
    return [out[i] for i in rng.permutation(len(out))]
