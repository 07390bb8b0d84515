import numpy as np
import pytest
import torch

from mminpaint.compositing import (
    camera_alpha,
    composite_camera,
    composite_cloud,
    composite_range,
    original_points_in_box,
)
from mminpaint.conditioning import range_normalized
from mminpaint.diffusion import DiffusionUNet
from mminpaint.editing import delete_object, edit_scene
from mminpaint.errors import ShapeError
from mminpaint.geometry import RANGE, CropSpec, crop_image, make_crop, project_box_camera, project_box_range
from mminpaint.latent_codec import Codecs
from mminpaint.range_codec import project
from mminpaint.scene_model import Box3D, CameraFrame, SyntheticSpec, generate_synthetic_scene
from mminpaint.signal_norm import NormalizationParams, normalize_depth

from oracles import camera_blend_oracle, random_edit_cases, replacement_oracle


@pytest.fixture(scope="module")
def cases():
    return list(random_edit_cases(8, seed=1))


def test_camera_matches_per_pixel_oracle(cases):
    for c in cases[:4]:
        cam = c["scene"].camera
        out, alpha = composite_camera(cam, c["gen_cam"], c["crop_c"], c["pbox_c"])
        ref, ref_alpha = camera_blend_oracle(cam.image, c["gen_cam"], c["crop_c"], c["pbox_c"])
        np.testing.assert_allclose(alpha, ref_alpha, atol=1e-12)
        np.testing.assert_allclose(out.image, ref, atol=1e-12)
        outside = alpha == 0
        assert np.array_equal(out.image[outside], cam.image[outside])


def test_camera_far_pixels_untouched(cases):
    c = cases[0]
    cam = c["scene"].camera
    alpha = camera_alpha(c["pbox_c"], c["crop_c"], cam.image.shape[:2])
    x0, y0, x1, y1 = c["pbox_c"].bbox
    ys, xs = np.mgrid[0 : cam.height, 0 : cam.width]
    far = (xs + 0.5 < x0 - 6) | (xs + 0.5 > x1 + 6) | (ys + 0.5 < y0 - 6) | (ys + 0.5 > y1 + 6)
    assert (alpha[far] == 0).all()


def test_camera_identity_edit_on_linear_image():
    K = np.array([[200.0, 0, 100], [0, 200.0, 60], [0, 0, 1]])
    gx, gy = np.meshgrid(np.arange(200) / 200, np.arange(120) / 120)
    img = np.stack([gx, gy, 0.5 * (gx + gy)], axis=-1)
    cam = CameraFrame(img, K, np.eye(4))
    box = Box3D.from_center([0.0, 0.0, 12.0], (2.0, 2.0, 2.0), 0.0)
    pb = project_box_camera(box, cam)
    crop = make_crop(pb, (200, 120), 64)
    out, alpha = composite_camera(cam, crop_image(img, crop), crop, pb)
    inner = alpha > 0
    np.testing.assert_allclose(out.image[inner], img[inner], atol=1e-9)


def test_camera_shape_error(cases):
    c = cases[0]
    with pytest.raises(ShapeError):
        composite_camera(c["scene"].camera, np.zeros((32, 32, 3)), c["crop_c"], c["pbox_c"])


def test_range_replacement_matches_oracle(cases):
    for c in cases:
        new, mask = composite_range(c["view"], c["gen_range"], c["box"], c["crop_r"], c["params"], c["scene"].lidar)
        ref = replacement_oracle(c["view"], c["scene"].lidar, c["gen_range"], c["box"], c["crop_r"], c["params"])
        assert np.array_equal(mask.range_replaced, ref)
        assert mask.m_points.any()
        keep = ~mask.range_replaced
        for f in ("depth", "intensity", "pitch", "yaw", "filled", "point_index"):
            assert np.array_equal(getattr(new, f)[keep], getattr(c["view"], f)[keep])
        assert (new.point_index[mask.range_replaced] == -1).all()


def test_range_nothing_in_box_is_identity():
    s = generate_synthetic_scene(2, SyntheticSpec(n_objects=0))
    view = project(s.lidar)
    box = Box3D.from_center([0.0, 20.0, 6.0], (1.0, 1.0, 1.0), 0.0)
    crop = make_crop(project_box_range(box))
    params = NormalizationParams.for_box(box)
    gen = np.full((64, 64, 2), 1.0)
    new, mask = composite_range(view, gen, box, crop, params, s.lidar)
    assert not mask.range_replaced.any()
    for f in ("depth", "intensity", "pitch", "yaw", "filled", "point_index"):
        assert np.array_equal(getattr(new, f), getattr(view, f))


def test_range_whole_window_replaced():
    s = generate_synthetic_scene(2, SyntheticSpec(n_objects=0))
    view = project(s.lidar)
    crop = CropSpec(RANGE, 500, 0, 64, 32, 64)
    params = NormalizationParams()
    # every generated return at 10 m; a box around the sensor holds all of them
    box = Box3D.from_center([0.0, 0.0, 0.0], (30.0, 30.0, 30.0), 0.0)
    u = 2 * (10.0 - 1.4) / (54 - 1.4) - 1
    gen = np.stack([np.full((64, 64), normalize_depth(u, params)), np.zeros((64, 64))], axis=-1)
    new, mask = composite_range(view, gen, box, crop, params)
    win = np.zeros(view.shape, dtype=bool)
    win[:, 500:564] = True
    assert np.array_equal(mask.edited_inside, win)
    np.testing.assert_allclose(new.depth[win], 10.0, atol=1e-9)


def test_background_points_outside_box_survive():
    # a window pixel whose original point and generated point are both outside the box keeps its value
    s = generate_synthetic_scene(5, SyntheticSpec(n_objects=1))
    box = s.boxes[0]
    view = project(s.lidar)
    crop = make_crop(project_box_range(box))
    params = NormalizationParams.for_box(box)
    gen = range_normalized(view, crop, params)
    new, mask = composite_range(view, gen, box, crop, params, s.lidar)
    cols = crop.source_columns()
    bg = view.filled.copy()
    bg[:, np.setdiff1d(np.arange(view.shape[1]), cols)] = False
    bg &= ~original_points_in_box(view, box, s.lidar) & ~mask.edited_inside
    assert bg.any()
    assert np.array_equal(new.depth[bg], view.depth[bg])


def test_cloud_keeps_untouched_rows(cases):
    c = cases[0]
    cloud = c["scene"].lidar
    new, mask = composite_range(c["view"], c["gen_range"], c["box"], c["crop_r"], c["params"], cloud)
    out = composite_cloud(cloud, c["view"], new, mask.range_replaced, c["box"])
    kept = c["view"].point_index[c["view"].filled & ~mask.range_replaced]
    orig_rows = {tuple(r) for r in cloud.points[kept]}
    out_rows = {tuple(r) for r in out.points}
    assert orig_rows <= out_rows
    n_new = int((new.filled & mask.range_replaced).sum())
    dropped_kept = int((~c["box"].contains(cloud.xyz[c["view"].dropped])).sum())
    assert len(out) == len(kept) + n_new + dropped_kept


@pytest.fixture(scope="module")
def fresh_model():
    torch.manual_seed(0)
    return Codecs(), DiffusionUNet().eval()


def test_delete_is_local(fresh_model):
    codecs, model = fresh_model
    s = generate_synthetic_scene(3, SyntheticSpec(n_objects=2))
    box = s.boxes[0]
    res = delete_object(model, codecs, s, box, steps=4, seed=1)
    out = res.scene
    assert box.instance_id not in [b.instance_id for b in out.boxes]
    outside = ~res.mask.camera_region
    assert np.array_equal(out.camera.image[outside], s.camera.image[outside])
    view = project(s.lidar)
    m = res.mask.m_points
    assert m.any()
    new_view = project(out.lidar)
    changed = (new_view.depth != view.depth) | (new_view.filled != view.filled)
    assert changed[m].mean() > 0.5
    out.validate()


def test_edit_is_deterministic(fresh_model, tmp_path):
    from mminpaint.scene_model import export_scene

    codecs, model = fresh_model
    s = generate_synthetic_scene(4, SyntheticSpec(n_objects=1))
    a = edit_scene(model, codecs, s, s.boxes[0], mode="reinsert", steps=4, seed=3)
    b = edit_scene(model, codecs, s, s.boxes[0], mode="reinsert", steps=4, seed=3)
    export_scene(a.scene, tmp_path / "a")
    export_scene(b.scene, tmp_path / "b")
    for name in ("meta.json", "lidar.bin", "camera.png"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
