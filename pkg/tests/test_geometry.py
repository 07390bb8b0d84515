import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import MultiPoint, Point

from mminpaint.constants import RANGE_W
from mminpaint.errors import BehindCameraError, OutOfRangeError, ShapeError
from mminpaint.geometry import (
    CAMERA,
    RANGE,
    CropSpec,
    ProjectedBox,
    crop_range,
    make_crop,
    project_box_camera,
    project_box_range,
    rasterize_mask,
    uncrop_range,
)
from mminpaint.scene_model import Box3D, CameraFrame, generate_synthetic_scene


def pinhole(f=100.0, w=200, h=100):
    K = np.array([[f, 0, w / 2], [0, f, h / 2], [0, 0, 1.0]])
    return CameraFrame(np.zeros((h, w, 3)), K, np.eye(4))


def test_unit_cube_pinhole():
    cam = pinhole()
    box = Box3D.from_center([0.0, 0.0, 10.0], (1.0, 1.0, 1.0), 0.0)
    pb = project_box_camera(box, cam)
    z = box.corners[:, 2]
    expected_u = 100 + 100 * box.corners[:, 0] / z
    expected_v = 50 + 100 * box.corners[:, 1] / z
    np.testing.assert_allclose(pb.xy[:, 0], expected_u, atol=1e-12)
    np.testing.assert_allclose(pb.xy[:, 1], expected_v, atol=1e-12)
    near = z == 9.5
    np.testing.assert_allclose(np.abs(pb.xy[near, 0] - 100), 100 * 0.5 / 9.5)
    np.testing.assert_allclose(np.abs(pb.xy[~near, 0] - 100), 100 * 0.5 / 10.5)


def test_optical_axis_hits_center():
    cam = pinhole()
    uv, z = cam.project(np.array([[0.0, 0.0, 10.0]]))
    assert tuple(uv[0]) == (100.0, 50.0)


def test_behind_camera():
    cam = pinhole()
    box = Box3D.from_center([0.0, 0.0, 0.2], (1.0, 1.0, 1.0), 0.0)
    with pytest.raises(BehindCameraError):
        project_box_camera(box, cam)


def test_range_projection_of_forward_corner():
    box = Box3D.from_center([10.5, 0.5, 0.5], (1.0, 1.0, 1.0), 0.0)
    pb = project_box_range(box)
    # corner 7 of this box is (10, 1, 0); corner with y=0, z=0 is index 2: (11, 0, 0)
    k = int(np.argmin(np.abs(box.corners[:, 1]) + np.abs(box.corners[:, 2]) + np.abs(box.corners[:, 0] - 11)))
    assert pb.corners[k, 1] == pytest.approx(548.0)
    assert pb.corners[k, 2] == pytest.approx(11.0)


def test_range_projection_out_of_range():
    box = Box3D.from_center([60.0, 0.0, 0.0], (1.0, 1.0, 1.0), 0.0)
    with pytest.raises(OutOfRangeError):
        project_box_range(box)


def test_range_box_straddling_seam():
    box = Box3D.from_center([-20.0, 0.0, 0.0], (2.0, 2.0, 2.0), 0.0)
    pb = project_box_range(box)
    assert pb.straddle
    mirrored = project_box_range(Box3D.from_center([20.0, 0.0, 0.0], (2.0, 2.0, 2.0), 0.0))
    assert not mirrored.straddle
    # same angular footprint, shifted by half a turn
    span = np.ptp(pb.xy[:, 0])
    assert span == pytest.approx(np.ptp(mirrored.xy[:, 0]))
    wrapped = pb.corners[:, 1]
    assert wrapped.min() >= 0 and wrapped.max() < RANGE_W
    assert (wrapped < 20).any() and (wrapped > RANGE_W - 20).any()


def test_range_crop_wraps():
    box = Box3D.from_center([-20.0, 0.0, 0.0], (2.0, 2.0, 2.0), 0.0)
    pb = project_box_range(box)
    crop = make_crop(pb)
    cols = set(crop.source_columns().tolist())
    lo = int(np.floor(np.mod(pb.xy[:, 0], RANGE_W)[np.mod(pb.xy[:, 0], RANGE_W) > RANGE_W / 2].min()))
    hi = int(np.floor(np.mod(pb.xy[:, 0], RANGE_W)[np.mod(pb.xy[:, 0], RANGE_W) < RANGE_W / 2].max()))
    assert lo in cols and hi in cols and 0 in cols and RANGE_W - 1 in cols
    assert rasterize_mask(pb, crop).mask.any()


def test_camera_and_range_depths_agree():
    scene = generate_synthetic_scene(11)
    for box in scene.boxes:
        a = project_box_camera(box, scene.camera).depth
        b = project_box_range(box).depth
        assert np.abs(a - b).max() < 1e-9


def test_centered_crop_of_centered_box():
    cam = pinhole(f=100.0, w=200, h=200)
    box = Box3D.from_center([0.0, 0.0, 10.0], (2.0, 2.0, 2.0), 0.0)
    pb = project_box_camera(box, cam)
    crop = make_crop(pb, (200, 200), size=64)
    bc = (pb.bbox[:2] + pb.bbox[2:]) / 2
    assert np.abs(crop.center - bc).max() <= 0.5


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_random_crop_coverage(seed):
    scene = generate_synthetic_scene(5)
    box = scene.boxes[0]
    pb = project_box_camera(box, scene.camera)
    crop = make_crop(pb, (scene.camera.width, scene.camera.height), size=64, mode="random", seed=seed)
    assert rasterize_mask(pb, crop).mask.mean() >= 0.2


@settings(max_examples=50)
@given(
    st.integers(-50, 300), st.integers(-50, 300), st.integers(1, 200), st.integers(1, 200),
    st.lists(st.floats(-500, 500), min_size=2, max_size=2),
)
def test_viewport_invertible(x0, y0, w, h, pt):
    crop = CropSpec(CAMERA, x0, y0, w, h, 64)
    xy = np.array([pt])
    assert np.abs(crop.to_source(crop.to_target(xy)) - xy).max() < 1e-6


def test_mask_empty_when_outside():
    pb = ProjectedBox(CAMERA, np.array([[500.0 + i % 2, 500.0 + i // 4] for i in range(8)]), np.ones(8))
    crop = CropSpec(CAMERA, 0, 0, 100, 100, 32)
    assert not rasterize_mask(pb, crop).mask.any()


def test_mask_full_when_box_covers_crop():
    xy = np.array([[0, 0], [100, 0], [100, 100], [0, 100]] * 2, dtype=float)
    pb = ProjectedBox(CAMERA, xy, np.ones(8))
    m = rasterize_mask(pb, CropSpec(CAMERA, 0, 0, 100, 100, 32))
    assert m.mask.all()
    assert np.array_equal(m.complement, np.zeros((32, 32)))


def test_mask_modality_mismatch():
    pb = ProjectedBox(RANGE, np.zeros((8, 2)), np.ones(8))
    with pytest.raises(ShapeError):
        rasterize_mask(pb, CropSpec(CAMERA, 0, 0, 10, 10, 8))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mask_matches_per_pixel_hull_oracle(seed):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-20, 120, size=(8, 2))
    pb = ProjectedBox(CAMERA, xy, np.ones(8))
    crop = CropSpec(CAMERA, 0, 0, 100, 100, 40)
    m = rasterize_mask(pb, crop)
    hull = MultiPoint([tuple(p) for p in crop.to_target(xy)]).convex_hull
    oracle = np.zeros((40, 40), dtype=bool)
    for i in range(40):
        for j in range(40):
            oracle[i, j] = hull.covers(Point(j + 0.5, i + 0.5))
    # pixel centers within 1e-9 of an edge are the only place the tests may disagree
    diff = m.mask != oracle
    for i, j in np.argwhere(diff):
        assert hull.exterior.distance(Point(j + 0.5, i + 0.5)) < 1e-6
    assert np.array_equal(m.mask.astype(int) + m.complement, np.ones((40, 40)))


def test_range_resize_preserves_window_mean():
    rng = np.random.default_rng(0)
    crop = CropSpec(RANGE, 100, 0, 40, 32, 64)
    src = rng.uniform(size=(32, RANGE_W))
    up = crop_range(src, crop)
    back = uncrop_range(up, crop, mode="avg")
    np.testing.assert_allclose(back, src[:, crop.source_columns()], atol=1e-12)
    assert abs(back.mean() - src[:, crop.source_columns()].mean()) < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(-200, RANGE_W + 200), st.integers(65, 400), st.integers(2, 64))
def test_range_avg_crop_pools_wide_windows(x0, width, size):
    rng = np.random.default_rng(width)
    crop = CropSpec(RANGE, x0, 0, width, 32, size)
    src = rng.uniform(size=(32, RANGE_W, 2))
    out = crop_range(src, crop, mode="avg")
    assert out.shape == (size, size, 2)
    win = src[:, crop.source_columns()]
    # slow per-pixel oracle: nearest along rows when growing, box mean along columns when shrinking
    rows = [int((i + 0.5) * 32 / size) for i in range(size)]
    for j in range(size):
        lo, hi = j * width // size, (j + 1) * width // size
        for i in (0, size - 1):
            r = win[rows[i]] if size > 32 else win[i * 32 // size:(i + 1) * 32 // size].mean(0)
            np.testing.assert_allclose(out[i, j], r[lo:hi].mean(0), atol=1e-12)
    assert abs(out[..., 0].mean() - win[..., 0].mean()) < 0.05


def test_range_crop_unknown_mode():
    crop = CropSpec(RANGE, 0, 0, 40, 32, 64)
    with pytest.raises(ValueError):
        crop_range(np.zeros((32, RANGE_W)), crop, mode="bicubic")
