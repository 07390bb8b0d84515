"""Brute-force reference implementations shared by several test modules."""

from __future__ import annotations

import numpy as np

from mminpaint.constants import BEAM_PITCHES, MAX_DEPTH, MIN_DEPTH, RANGE_W
from mminpaint.errors import InpaintError
from mminpaint.geometry import box_region, crop_image, make_crop, project_box_camera, project_box_range
from mminpaint.conditioning import range_normalized
from mminpaint.range_codec import project
from mminpaint.scene_model import SyntheticSpec, generate_synthetic_scene
from mminpaint.signal_norm import NormalizationParams, denormalize_depth


# -- camera blending -------------------------------------------------------------


def gaussian_alpha_oracle(region, crop, sigma=2.0, truncate=2.0, eps=1e-3):
    H, W = region.shape
    radius = int(truncate * sigma + 0.5)
    offs = np.arange(-radius, radius + 1)
    w = np.exp(-0.5 * offs**2 / sigma**2)
    w /= w.sum()
    pad = np.pad(region.astype(np.float64), radius)
    alpha = np.zeros((H, W))
    for a, dy in enumerate(offs):
        for b, dx in enumerate(offs):
            alpha += w[a] * w[b] * pad[radius + dy : radius + dy + H, radius + dx : radius + dx + W]
    r_core = int(np.ceil(truncate * sigma))
    core = np.ones((H, W), dtype=bool)
    padb = np.pad(region, r_core)
    for dy in range(-r_core, r_core + 1):
        for dx in range(-r_core, r_core + 1):
            if abs(dx) + abs(dy) <= r_core:
                core &= padb[r_core + dy : r_core + dy + H, r_core + dx : r_core + dx + W]
    alpha[core & region] = 1.0
    alpha[alpha < eps] = 0.0
    ys, xs = np.mgrid[0:H, 0:W]
    inside = (xs >= crop.x0) & (xs < crop.x0 + crop.width) & (ys >= crop.y0) & (ys < crop.y0 + crop.height)
    alpha[~inside] = 0.0
    return alpha


def bilinear_oracle(img, x, y):
    """Bilinear value at continuous array coordinates, edge-clamped."""
    h, w = img.shape[:2]
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    return (img[y0, x0] * (1 - fx) * (1 - fy) + img[y0, x1] * fx * (1 - fy)
            + img[y1, x0] * (1 - fx) * fy + img[y1, x1] * fx * fy)


def camera_blend_oracle(orig_img, edited, crop, pbox, sigma=2.0):
    region = box_region(pbox, orig_img.shape[:2])
    alpha = gaussian_alpha_oracle(region, crop, sigma)
    out = orig_img.copy()
    s = crop.size / crop.width
    for y, x in zip(*np.nonzero(alpha)):
        tx = (x + 0.5 - crop.x0) * s - 0.5
        ty = (y + 0.5 - crop.y0) * s - 0.5
        g = bilinear_oracle(edited, tx, ty)
        out[y, x] = alpha[y, x] * g + (1 - alpha[y, x]) * orig_img[y, x]
    return out, alpha


# -- range replacement ------------------------------------------------------------


def avg_resize_oracle(target, crop):
    """Mean of the target pixels sampled from each window pixel, else the nearest one."""
    D, h, w = crop.size, crop.height, crop.width
    sums = np.zeros((h, w) + target.shape[2:])
    counts = np.zeros((h, w))
    for ti in range(D):
        r = int(np.floor((ti + 0.5) * h / D))
        for tj in range(D):
            c = int(np.floor((tj + 0.5) * w / D))
            sums[r, c] += target[ti, tj]
            counts[r, c] += 1
    out = np.empty_like(sums)
    for r in range(h):
        for c in range(w):
            if counts[r, c]:
                out[r, c] = sums[r, c] / counts[r, c]
            else:
                out[r, c] = target[min(int(np.floor((r + 0.5) * D / h)), D - 1), min(int(np.floor((c + 0.5) * D / w)), D - 1)]
    return out


def replacement_oracle(view, cloud, edited, box, crop, params, empty_unit=0.98):
    """Pixel set satisfying (original point in box) or (generated point in box)."""
    win = avg_resize_oracle(edited[..., 0], crop)
    unit = denormalize_depth(win, params)
    depth = (unit + 1.0) * 0.5 * (MAX_DEPTH - MIN_DEPTH) + MIN_DEPTH
    out = np.zeros(view.shape, dtype=bool)
    for j, c in enumerate(np.mod(crop.x0 + np.arange(crop.width), RANGE_W)):
        yaw = (c + 0.5 - RANGE_W / 2) * 2 * np.pi / RANGE_W
        for r in range(view.shape[0]):
            orig_in = view.filled[r, c] and box.contains(cloud.xyz[view.point_index[r, c]][None])[0]
            gen_in = False
            if unit[r, j] < empty_unit:
                p = BEAM_PITCHES[r]
                d = depth[r, j]
                xyz = np.array([d * np.cos(yaw) * np.cos(p), -d * np.sin(yaw) * np.cos(p), d * np.sin(p)])
                gen_in = box.contains(xyz[None])[0]
            out[r, c] = orig_in or gen_in
    return out


def random_edit_cases(n, seed=0, size=64):
    """Synthetic (scene, box, view, crops, params, generated crops) tuples.

    The generated range crop is the true crop with column shifts, noise and
    dropped returns so both replacement criteria fire.
    """
    rng = np.random.default_rng(seed)
    k = 0
    scene_seed = seed * 1000
    while k < n:
        scene = generate_synthetic_scene(scene_seed, SyntheticSpec(n_objects=int(rng.integers(1, 5))))
        scene_seed += 1
        view = project(scene.lidar)
        for box in scene.boxes:
            if k >= n:
                break
            try:
                pb_r = project_box_range(box)
                pb_c = project_box_camera(box, scene.camera)
                crop_c = make_crop(pb_c, (scene.camera.width, scene.camera.height), size)
            except InpaintError:
                continue
            crop_r = make_crop(pb_r, size=size)
            params = NormalizationParams.for_box(box)
            x = range_normalized(view, crop_r, params)
            gen = np.roll(x, int(rng.integers(-6, 7)), axis=1) + rng.normal(0, 0.05, x.shape)
            gen[rng.random(x.shape[:2]) < 0.1, 0] = 1.0
            gen = np.clip(gen, -1.0, 1.0)
            cam = crop_image(scene.camera.image, crop_c)
            cam_gen = np.clip(cam + rng.normal(0, 0.1, cam.shape), 0, 1)
            yield dict(scene=scene, box=box, view=view, crop_r=crop_r, crop_c=crop_c, pbox_c=pb_c,
                       params=params, gen_range=gen, gen_cam=cam_gen)
            k += 1


# -- statistics -------------------------------------------------------------------


def frechet_diagonal(mu1, var1, mu2, var2):
    """Frechet distance between Gaussians with diagonal (commuting) covariances."""
    return float(np.sum((mu1 - mu2) ** 2) + np.sum((np.sqrt(var1) - np.sqrt(var2)) ** 2))


# -- selection filters ------------------------------------------------------------


def constructed_camera(width=400, height=300, f=100.0):
    from mminpaint.scene_model import CameraFrame

    K = np.array([[f, 0.0, width / 2], [0.0, f, height / 2], [0.0, 0.0, 1.0]])
    return CameraFrame(np.zeros((height, width, 3)), K, np.eye(4))


def constructed_scenes(n=50, seed=0):
    """Scenes of axis-aligned boxes in front of an identity-pose pinhole camera.

    Box faces sit on a half-metre grid, so projected extents are exact in
    floating point. Every scene carries some threshold-exact attribute, and a
    subset contains a box exactly 100x100 px and a pair with IoU exactly 0.5.
    """
    from mminpaint.scene_model import Box3D, PointCloud, SceneSample

    rng = np.random.default_rng(seed)
    cam = constructed_camera()
    scenes = []
    for k in range(n):
        boxes = []

        def add(x0, x1, y0, y1, z0, z1):
            c = [(x0 + x1) / 2, (y0 + y1) / 2, (z0 + z1) / 2]
            boxes.append(Box3D.from_center(
                c, (x1 - x0, y1 - y0, z1 - z0), 0.0,
                str(rng.choice(["car", "pedestrian", "bicycle"], p=[0.45, 0.45, 0.1])),
                f"c{k:02d}-{len(boxes):02d}",
                visibility=float(rng.choice([0.5, 0.69, 0.7, 0.71, 1.0])),
                num_lidar_points=int(rng.choice([10, 63, 64, 65, 500])),
            ))

        if k % 3 == 0:
            add(-1.0, 1.0, -1.0, 1.0, 2.0, 4.0)  # exactly 100 x 100 px
        if k % 4 == 1:
            add(-1.0, 1.0, -1.0, 1.0, 2.0, 4.0)
            add(-1.0, 1.0, -1.0, 3.0, 2.0, 4.0)  # IoU exactly 0.5 with the previous box
        for _ in range(int(rng.integers(1, 5))):
            z0 = float(rng.choice([1.0, 2.0, 4.0]))
            x0 = float(rng.integers(-8, 6)) * 0.5
            y0 = float(rng.integers(-6, 4)) * 0.5
            add(x0, x0 + float(rng.integers(1, 6)) * 0.5, y0, y0 + float(rng.integers(1, 6)) * 0.5, z0, z0 + 1.0)
        meta = {"scene_id": f"constructed-{k:03d}", "frame_id": "0", "timestamp": 0.0, "rainy": False, "night": False}
        scenes.append(SceneSample(cam, PointCloud.empty(), boxes, meta))
    return scenes


def brute_force_select(scenes, min_points=64, min_px=(100, 100), max_iou=0.5, min_vis=0.7, classes=("car", "pedestrian")):
    def bbox(box, cam):
        us, vs = [], []
        for p in box.corners:
            q = cam.extrinsics[:3, :3] @ p + cam.extrinsics[:3, 3]
            if q[2] <= 0:
                return None
            us.append(cam.intrinsics[0, 0] * q[0] / q[2] + cam.intrinsics[0, 2])
            vs.append(cam.intrinsics[1, 1] * q[1] / q[2] + cam.intrinsics[1, 2])
        b = [max(min(us), 0.0), max(min(vs), 0.0), min(max(us), cam.width), min(max(vs), cam.height)]
        return b if b[2] > b[0] and b[3] > b[1] else None

    def iou(a, b):
        iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
        ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
        u = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - iw * ih
        return iw * ih / u

    keep = []
    for s in scenes:
        bbs = [bbox(b, s.camera) for b in s.boxes]
        for i, b in enumerate(s.boxes):
            bb = bbs[i]
            ok = (
                b.category in classes and bb is not None
                and b.num_lidar_points >= min_points and b.visibility >= min_vis
                and bb[2] - bb[0] >= min_px[0] and bb[3] - bb[1] >= min_px[1]
                and all(iou(bb, o) <= max_iou for j, o in enumerate(bbs) if j != i and o is not None)
            )
            if ok:
                keep.append((s.meta["scene_id"], b.instance_id))
    return sorted(keep)
