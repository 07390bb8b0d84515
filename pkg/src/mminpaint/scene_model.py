"""Scene, sensor and annotation types, the on-disk scene format, and a
deterministic synthetic scene generator.

All boxes live in the ego frame. The lidar sits at the ego origin with an
identity extrinsic, so lidar points share that frame.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .constants import BEAM_PITCHES, MAX_DEPTH, MIN_DEPTH, RANGE_W
from .errors import FormatError, SceneIOError, SceneNotFoundError, ValidationError
from .raster import convex_hull, fill_convex

log = logging.getLogger(__name__)

# nuScenes corner order: x forward (length), y left (width), z up (height)
_CORNER_SIGNS = np.array(
    [
        [1, 1, 1],
        [1, -1, 1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, 1],
        [-1, -1, 1],
        [-1, -1, -1],
        [-1, 1, -1],
    ],
    dtype=np.float64,
)
BOX_FACES = (
    (0, 1, 2, 3),  # front (+x)
    (4, 5, 6, 7),  # back
    (0, 3, 7, 4),  # left (+y)
    (1, 2, 6, 5),  # right
    (0, 1, 5, 4),  # top
    (3, 2, 6, 7),  # bottom
)
KNOWN_CATEGORIES = ("car", "pedestrian")

# inward offset for synthetic surface points so float32 storage keeps them inside
_SURFACE_INSET = 1e-4


@dataclass(frozen=True, eq=False)
class PointCloud:
    """``N x 4`` lidar points: x, y, z in meters and intensity in [0, 255].

    ``labels`` is optional generator bookkeeping (box index per point, -1 for
    background). It is not serialized and not part of equality.
    """

    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 4)
        object.__setattr__(self, "points", pts)
        if not np.all(np.isfinite(pts)):
            raise ValidationError("point coordinates must be finite")
        if len(pts) and (pts[:, 3].min() < 0 or pts[:, 3].max() > 255):
            raise ValidationError("intensity must lie in [0, 255]")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.points[:, 3]

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 4)))


@dataclass(frozen=True, eq=False)
class CameraFrame:
    image: np.ndarray
    intrinsics: np.ndarray
    extrinsics: np.ndarray

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.float64)
        K = np.asarray(self.intrinsics, dtype=np.float64)
        T = np.asarray(self.extrinsics, dtype=np.float64)
        object.__setattr__(self, "image", img)
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "extrinsics", T)
        if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] == 0 or img.shape[1] == 0:
            raise ValidationError(f"camera image must be HxWx3, got {img.shape}")
        if K.shape != (3, 3) or K[0, 0] <= 0 or K[1, 1] <= 0:
            raise ValidationError("intrinsics must be 3x3 with positive focal lengths")
        if T.shape != (4, 4):
            raise ValidationError("extrinsics must be 4x4")
        R = T[:3, :3]
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or not np.allclose(T[3], [0, 0, 0, 1]):
            raise ValidationError("extrinsics must be a rigid transform")

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    def to_camera(self, points_ego: np.ndarray) -> np.ndarray:
        p = np.asarray(points_ego, dtype=np.float64).reshape(-1, 3)
        return p @ self.extrinsics[:3, :3].T + self.extrinsics[:3, 3]

    def project(self, points_ego: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pinhole projection. Returns ``(uv, z_cam)``; uv is meaningless where z_cam <= 0."""
        pc = self.to_camera(points_ego)
        z = pc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            uvw = pc @ self.intrinsics.T
            uv = uvw[:, :2] / uvw[:, 2:3]
        return uv, z

    @property
    def center_ego(self) -> np.ndarray:
        R, t = self.extrinsics[:3, :3], self.extrinsics[:3, 3]
        return -R.T @ t


@dataclass(frozen=True, eq=False)
class Box3D:
    corners: np.ndarray
    category: str
    instance_id: str
    visibility: float = 1.0
    num_lidar_points: int = 0

    def __post_init__(self):
        c = np.asarray(self.corners, dtype=np.float64)
        object.__setattr__(self, "corners", c)
        if c.shape != (8, 3) or not np.all(np.isfinite(c)):
            raise ValidationError(f"box corners must be finite 8x3, got {c.shape}")
        if not 0.0 <= float(self.visibility) <= 1.0:
            raise ValidationError("visibility must lie in [0, 1]")
        if int(self.num_lidar_points) < 0:
            raise ValidationError("num_lidar_points must be >= 0")
        self._check_cuboid()

    def _check_cuboid(self):
        c = self.corners
        e_l, e_w, e_h = c[0] - c[4], c[0] - c[1], c[0] - c[3]
        ext = np.array([np.linalg.norm(e_l), np.linalg.norm(e_w), np.linalg.norm(e_h)])
        if np.any(ext <= 0):
            raise ValidationError("box has zero volume")
        center = c.mean(axis=0)
        expected = center + (_CORNER_SIGNS * 0.5) @ np.stack([e_l, e_w, e_h])
        tol = 1e-6 * max(float(ext.max()), 1.0) + 1e-6 * float(np.abs(center).max())
        if not np.allclose(expected, c, atol=tol):
            raise ValidationError("corners do not form a rectangular cuboid")
        gram = np.stack([e_l, e_w, e_h]) / ext[:, None]
        if not np.allclose(gram @ gram.T, np.eye(3), atol=1e-6):
            raise ValidationError("box edges are not orthogonal")

    @classmethod
    def from_center(cls, center, size, yaw, category="car", instance_id="", **attrs) -> "Box3D":
        """``size`` is (length, width, height); yaw rotates about ego z."""
        l, w, h = size
        local = _CORNER_SIGNS * (0.5 * np.array([l, w, h], dtype=np.float64))
        cy, sy = np.cos(yaw), np.sin(yaw)
        R = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
        corners = local @ R.T + np.asarray(center, dtype=np.float64)
        return cls(corners, category, instance_id, **attrs)

    @property
    def center(self) -> np.ndarray:
        return self.corners.mean(axis=0)

    @property
    def axes(self) -> np.ndarray:
        """Rows are unit vectors along length, width, height."""
        c = self.corners
        e = np.stack([c[0] - c[4], c[0] - c[1], c[0] - c[3]])
        return e / np.linalg.norm(e, axis=1, keepdims=True)

    @property
    def size(self) -> np.ndarray:
        c = self.corners
        return np.linalg.norm(np.stack([c[0] - c[4], c[0] - c[1], c[0] - c[3]]), axis=1)

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    def to_local(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return (p - self.center) @ self.axes.T

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Closed point-in-box test in the box's own axis frame."""
        local = self.to_local(points)
        return np.all(np.abs(local) <= 0.5 * self.size + tol, axis=1)

    def scaled(self, factor: float) -> "Box3D":
        c = self.center
        return replace(self, corners=c + (self.corners - c) * factor)

    def with_attributes(self, **attrs) -> "Box3D":
        return replace(self, **attrs)

    def translated(self, offset) -> "Box3D":
        return replace(self, corners=self.corners + np.asarray(offset, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class SceneSample:
    camera: CameraFrame
    lidar: PointCloud
    boxes: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def box_by_id(self, instance_id: str) -> Box3D:
        for b in self.boxes:
            if b.instance_id == instance_id:
                return b
        raise KeyError(instance_id)

    def recount(self) -> list[int]:
        return [int(b.contains(self.lidar.xyz).sum()) for b in self.boxes]

    def validate(self):
        counts = self.recount()
        for b, n in zip(self.boxes, counts):
            if n != b.num_lidar_points:
                raise ValidationError(
                    f"box {b.instance_id}: num_lidar_points={b.num_lidar_points} but recount gives {n}"
                )
        return self


def scenes_close(a: SceneSample, b: SceneSample, atol: float = 1e-9) -> bool:
    """Field-wise comparison used by round-trip checks."""
    if a.meta != b.meta or len(a.boxes) != len(b.boxes):
        return False
    if a.lidar.points.shape != b.lidar.points.shape:
        return False
    if not np.allclose(a.lidar.points, b.lidar.points, atol=atol, rtol=0):
        return False
    ca, cb = a.camera, b.camera
    if ca.image.shape != cb.image.shape or not np.allclose(ca.image, cb.image, atol=atol, rtol=0):
        return False
    if not (np.allclose(ca.intrinsics, cb.intrinsics, atol=atol) and np.allclose(ca.extrinsics, cb.extrinsics, atol=atol)):
        return False
    for x, y in zip(a.boxes, b.boxes):
        if (x.category, x.instance_id, x.num_lidar_points) != (y.category, y.instance_id, y.num_lidar_points):
            return False
        if abs(x.visibility - y.visibility) > atol or not np.allclose(x.corners, y.corners, atol=atol, rtol=0):
            return False
    return True


# ---------------------------------------------------------------------------
# on-disk format
# ---------------------------------------------------------------------------


def export_scene(sample: SceneSample, path) -> None:
    """Write ``meta.json``, ``lidar.bin`` and ``camera.png`` into ``path``.

    Serialization is deterministic, so identical samples give identical bytes.
    """
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        cam = sample.camera
        meta = {
            "scene_id": sample.meta.get("scene_id", ""),
            "frame_id": sample.meta.get("frame_id", ""),
            "timestamp": float(sample.meta.get("timestamp", 0.0)),
            "rainy": bool(sample.meta.get("rainy", False)),
            "night": bool(sample.meta.get("night", False)),
            "camera": {
                "intrinsics": [float(v) for v in cam.intrinsics.ravel()],
                "extrinsics": [float(v) for v in cam.extrinsics.ravel()],
            },
            "boxes": [
                {
                    "corners": [float(v) for v in b.corners.ravel()],
                    "category": b.category,
                    "instance_id": b.instance_id,
                    "visibility": float(b.visibility),
                    "num_lidar_points": int(b.num_lidar_points),
                }
                for b in sample.boxes
            ],
        }
        (path / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        (path / "lidar.bin").write_bytes(sample.lidar.points.astype("<f4").tobytes())
        rgb = np.clip(np.round(cam.image * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(rgb, mode="RGB").save(path / "camera.png", format="PNG", optimize=False)
    except OSError as exc:
        raise SceneIOError(f"cannot write scene to {path}: {exc}") from exc


def load_scene(path) -> SceneSample:
    path = Path(path)
    for name in ("meta.json", "lidar.bin", "camera.png"):
        if not (path / name).is_file():
            raise SceneNotFoundError(f"missing {name} in {path}")
    try:
        meta = json.loads((path / "meta.json").read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"meta.json is not valid JSON: {exc}") from exc
    raw = (path / "lidar.bin").read_bytes()
    if len(raw) % 16:
        raise FormatError(f"lidar.bin has {len(raw)} bytes, not a multiple of 16")
    points = np.frombuffer(raw, dtype="<f4").reshape(-1, 4).astype(np.float64)
    img = np.asarray(Image.open(path / "camera.png").convert("RGB"), dtype=np.float64) / 255.0
    try:
        cam_meta = meta["camera"]
        camera = CameraFrame(
            img,
            np.array(cam_meta["intrinsics"], dtype=np.float64).reshape(3, 3),
            np.array(cam_meta["extrinsics"], dtype=np.float64).reshape(4, 4),
        )
        boxes = [
            Box3D(
                np.array(b["corners"], dtype=np.float64).reshape(8, 3),
                b["category"],
                b["instance_id"],
                visibility=float(b["visibility"]),
                num_lidar_points=int(b["num_lidar_points"]),
            )
            for b in meta["boxes"]
        ]
        info = {k: meta[k] for k in ("scene_id", "frame_id", "timestamp", "rainy", "night")}
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise FormatError(f"malformed meta.json: {exc!r}") from exc
    sample = SceneSample(camera, PointCloud(points), boxes, info)
    return sample.validate()


# ---------------------------------------------------------------------------
# synthetic scenes
# ---------------------------------------------------------------------------

IMAGE_W, IMAGE_H = 400, 225
FOCAL = 280.0
CAMERA_PITCH_DEG = 10.0
GROUND_Z = -1.8
FRAME_DT = 0.5

_SIZE_RANGES = {
    "car": ((3.8, 4.8), (1.7, 2.0), (1.4, 1.7)),
    "pedestrian": ((0.6, 0.9), (0.6, 0.8), (1.6, 1.9)),
    "other": ((0.8, 2.5), (0.8, 2.5), (0.8, 2.0)),
}
_SPEEDS = {"car": 4.0, "pedestrian": 1.2, "other": 0.0}


@dataclass(frozen=True)
class SyntheticSpec:
    n_objects: int = 3
    categories: tuple = ("car", "pedestrian")
    rainy: bool = False
    night: bool = False

    def clamped(self) -> "SyntheticSpec":
        cats = tuple(c for c in self.categories if c) or ("car",)
        return replace(self, n_objects=int(np.clip(self.n_objects, 0, 12)), categories=cats)


def synthetic_camera_matrices() -> tuple[np.ndarray, np.ndarray]:
    """Intrinsics and sensor-from-ego extrinsics of the desk-scale pinhole camera."""
    s, c = np.sin(np.deg2rad(CAMERA_PITCH_DEG)), np.cos(np.deg2rad(CAMERA_PITCH_DEG))
    z_axis = np.array([c, 0.0, -s])
    x_axis = np.array([0.0, -1.0, 0.0])
    y_axis = np.cross(z_axis, x_axis)
    T = np.eye(4)
    T[:3, :3] = np.stack([x_axis, y_axis, z_axis])
    K = np.array([[FOCAL, 0.0, IMAGE_W / 2], [0.0, FOCAL, IMAGE_H / 2], [0.0, 0.0, 1.0]])
    return K, T


def _ray_box(origins_unused, dirs, box: Box3D):
    """Slab test for rays from the ego origin. Returns (t_hit, face) with inf where missed."""
    o = -box.center @ box.axes.T
    d = dirs @ box.axes.T
    half = 0.5 * box.size
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - o) / d
        t2 = (half - o) / d
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    tmin = np.where(np.isnan(tmin), -np.inf, tmin)
    tmax = np.where(np.isnan(tmax), np.inf, tmax)
    t_enter = tmin.max(axis=1)
    axis = tmin.argmax(axis=1)
    t_exit = tmax.min(axis=1)
    hit = (t_enter <= t_exit) & (t_enter > 0)
    sign = np.sign(-d[np.arange(len(d)), axis])
    # face index matching BOX_FACES: axis 0 -> front/back, 1 -> left/right, 2 -> top/bottom
    face = 2 * axis + (sign < 0)
    return np.where(hit, t_enter, np.inf), face


def _lane_intensity(y):
    marks = np.zeros_like(y, dtype=bool)
    for c in (-5.25, -1.75, 1.75, 5.25):
        marks |= np.abs(y - c) < 0.15
    return np.where(marks, 150.0, 15.0)


def _raycast_lidar(boxes, face_intensity, rng, rainy):
    H, W = len(BEAM_PITCHES), RANGE_W
    rows, cols = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    pitch = BEAM_PITCHES[rows] + rng.uniform(-0.003, 0.003, size=rows.shape)
    yaw = (cols + 0.5 + rng.uniform(-0.35, 0.35, size=cols.shape) - W / 2) * (2 * np.pi / W)
    pitch, yaw = pitch.ravel(), yaw.ravel()
    dirs = np.stack([np.cos(yaw) * np.cos(pitch), -np.sin(yaw) * np.cos(pitch), np.sin(pitch)], axis=1)

    with np.errstate(divide="ignore"):
        t_ground = np.where(dirs[:, 2] < 0, GROUND_Z / dirs[:, 2], np.inf)
    best_t = t_ground
    label = np.full(len(dirs), -1)
    face = np.zeros(len(dirs), dtype=int)
    for j, b in enumerate(boxes):
        t, f = _ray_box(None, dirs, b)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        label = np.where(closer, j, label)
        face = np.where(closer, f, face)

    keep = np.isfinite(best_t) & (best_t >= MIN_DEPTH + 1e-3) & (best_t <= MAX_DEPTH - 1e-3)
    t, dirs, label, face = best_t[keep], dirs[keep], label[keep], face[keep]
    xyz = dirs * t[:, None]
    intensity = np.empty(len(t))
    ground = label < 0
    intensity[ground] = _lane_intensity(xyz[ground, 1])
    for j, b in enumerate(boxes):
        sel = label == j
        if not sel.any():
            continue
        local = b.to_local(xyz[sel])
        lim = 0.5 * b.size - _SURFACE_INSET
        local = np.clip(local, -lim, lim)
        xyz[sel] = local @ b.axes + b.center
        intensity[sel] = face_intensity[j][face[sel]]
    if rainy:
        intensity = np.round(intensity * 0.7)
    pts = np.concatenate([xyz, intensity[:, None]], axis=1).astype(np.float32).astype(np.float64)
    return pts, label


def _render_camera(boxes, colors, K, T, rainy, night):
    H, W = IMAGE_H, IMAGE_W
    v, u = np.meshgrid(np.arange(H) + 0.5, np.arange(W) + 0.5, indexing="ij")
    rays_cam = np.stack([(u - K[0, 2]) / K[0, 0], (v - K[1, 2]) / K[1, 1], np.ones_like(u)], axis=-1)
    rays = rays_cam @ T[:3, :3]  # camera -> ego rotation
    img = np.empty((H, W, 3))
    ground = rays[..., 2] < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(ground, GROUND_Z / rays[..., 2], 0.0)
    gy = rays[..., 1] * t
    gx = rays[..., 0] * t
    lane = _lane_intensity(gy) > 100
    shade = np.clip(1.0 - gx / 120.0, 0.5, 1.0)
    ground_rgb = np.where(lane[..., None], [0.85, 0.85, 0.8], [0.35, 0.36, 0.38]) * shade[..., None]
    elev = np.clip(rays[..., 2] * 3.0, 0.0, 1.0)
    sky_rgb = np.stack([0.55 + 0.2 * elev, 0.7 + 0.15 * elev, 0.95 * np.ones_like(elev)], axis=-1)
    img[:] = np.where(ground[..., None], ground_rgb, sky_rgb)

    cam_pos = -T[:3, :3].T @ T[:3, 3]
    order = np.argsort([-np.linalg.norm(b.center - cam_pos) for b in boxes])
    for j in order:
        b = boxes[j]
        uvw = (b.corners @ T[:3, :3].T + T[:3, 3]) @ K.T
        uv = uvw[:, :2] / uvw[:, 2:3]
        faces = []
        for fi, idx in enumerate(BOX_FACES):
            fc = b.corners[list(idx)].mean(axis=0)
            normal = fc - b.center
            if np.dot(normal, fc - cam_pos) < 0:
                faces.append((np.linalg.norm(fc - cam_pos), fi, idx))
        for _, fi, idx in sorted(faces, reverse=True):
            region = fill_convex(convex_hull(uv[list(idx)]), (H, W))
            img[region] = colors[j] * (0.55 + 0.09 * fi)
    if rainy:
        img = 0.75 * img + 0.25 * np.array([0.5, 0.55, 0.65])
    if night:
        img = img * 0.3
    img = np.clip(img, 0.0, 1.0)
    return np.round(img * 255.0) / 255.0


def _visibility(boxes, K, T):
    cam_pos = -T[:3, :3].T @ T[:3, 3]
    dist = [np.linalg.norm(b.center - cam_pos) for b in boxes]
    projections = []
    for b in boxes:
        uvw = (b.corners @ T[:3, :3].T + T[:3, 3]) @ K.T
        projections.append((uvw[:, :2] / uvw[:, 2:3], uvw[:, 2]))
    vis = []
    for j, (uv, z) in enumerate(projections):
        ok = (z > 0) & (uv[:, 0] >= 0) & (uv[:, 0] <= IMAGE_W) & (uv[:, 1] >= 0) & (uv[:, 1] <= IMAGE_H)
        for k, (uv2, z2) in enumerate(projections):
            if k == j or dist[k] >= dist[j] or np.any(z2 <= 0):
                continue
            hull = convex_hull(uv2)
            if len(hull) < 3:
                continue
            inside = np.ones(8, dtype=bool)
            for a, bb in zip(hull, np.roll(hull, -1, axis=0)):
                inside &= (bb[0] - a[0]) * (uv[:, 1] - a[1]) - (bb[1] - a[1]) * (uv[:, 0] - a[0]) > 0
            ok &= ~inside
        vis.append(float(ok.mean()))
    return vis


def _place_objects(rng, spec: SyntheticSpec, n_frames: int, scene_id: str):
    placed = []
    attempts = 0
    while len(placed) < spec.n_objects and attempts < 500:
        attempts += 1
        cat = spec.categories[rng.integers(len(spec.categories))]
        rng_key = cat if cat in _SIZE_RANGES else "other"
        size = np.array([rng.uniform(*r) for r in _SIZE_RANGES[rng_key]])
        x = rng.uniform(7.0, 26.0)
        y = rng.uniform(-0.45, 0.45) * x * 0.6
        yaw = rng.uniform(-np.pi, np.pi)
        speed = _SPEEDS[rng_key] * rng.uniform(0.0, 1.0)
        vel = speed * np.array([np.cos(yaw), np.sin(yaw)])
        radius = 0.5 * np.hypot(size[0], size[1])
        track = [np.array([x, y]) + vel * FRAME_DT * k for k in range(n_frames)]
        if any(p[0] - radius < 4.5 or np.hypot(*p) + radius > 40.0 for p in track):
            continue
        clash = False
        for other in placed:
            for k in range(n_frames):
                if np.linalg.norm(track[k] - other["track"][k]) < radius + other["radius"] + 0.4:
                    clash = True
                    break
            if clash:
                break
        if clash:
            continue
        placed.append(
            {
                "category": cat,
                "size": size,
                "yaw": yaw,
                "track": track,
                "radius": radius,
                "color": rng.uniform(0.15, 0.95, size=3),
                "faces": rng.integers(30, 221, size=6).astype(np.float64),
                "instance_id": f"{scene_id}-obj{len(placed):02d}",
            }
        )
    return placed


def generate_synthetic_sequence(seed: int, spec: SyntheticSpec | None = None, n_frames: int = 1) -> list[SceneSample]:
    """Deterministic multi-frame synthetic scene with tracked objects."""
    spec = (spec or SyntheticSpec()).clamped()
    n_frames = max(int(n_frames), 1)
    rng = np.random.default_rng(seed)
    scene_id = f"synthetic-{int(seed):06d}"
    objects = _place_objects(rng, spec, n_frames, scene_id)
    K, T = synthetic_camera_matrices()
    frames = []
    for k in range(n_frames):
        boxes = [
            Box3D.from_center(
                [o["track"][k][0], o["track"][k][1], GROUND_Z + o["size"][2] / 2],
                o["size"],
                o["yaw"],
                category=o["category"],
                instance_id=o["instance_id"],
            )
            for o in objects
        ]
        frame_rng = np.random.default_rng([seed, k])
        pts, labels = _raycast_lidar(boxes, [o["faces"] for o in objects], frame_rng, spec.rainy)
        cloud = PointCloud(pts, labels)
        image = _render_camera(boxes, [o["color"] for o in objects], K, T, spec.rainy, spec.night)
        vis = _visibility(boxes, K, T)
        boxes = [
            b.with_attributes(visibility=v, num_lidar_points=int(b.contains(pts[:, :3]).sum()))
            for b, v in zip(boxes, vis)
        ]
        meta = {
            "scene_id": scene_id,
            "frame_id": f"{scene_id}-{k:03d}",
            "timestamp": FRAME_DT * k,
            "rainy": bool(spec.rainy),
            "night": bool(spec.night),
        }
        frames.append(SceneSample(CameraFrame(image, K, T), cloud, boxes, meta))
    return frames


def generate_synthetic_scene(seed: int, spec: SyntheticSpec | None = None) -> SceneSample:
    return generate_synthetic_sequence(seed, spec, n_frames=1)[0]
