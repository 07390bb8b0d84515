import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mminpaint.constants import BEAM_PITCHES, RANGE_W
from mminpaint.fixtures import random_collision_free_cloud
from mminpaint.range_codec import (
    BEAMS,
    BeamTable,
    column_of,
    project,
    rasterized_yaw,
    unproject,
    unproject_rasterized,
)
from mminpaint.scene_model import PointCloud


def test_beam_table_values():
    assert len(BEAM_PITCHES) == 32
    assert BEAM_PITCHES[0] == pytest.approx(-23 * 0.0232)
    assert BEAM_PITCHES[-1] == pytest.approx(8 * 0.0232)
    assert np.all(np.diff(BEAM_PITCHES) > 0)
    with pytest.raises(ValueError):
        BeamTable(BEAM_PITCHES[::-1])


def test_single_forward_point():
    view = project(PointCloud([[10.0, 0.0, 0.0, 100.0]]))
    assert view.filled.sum() == 1
    r, c = np.argwhere(view.filled)[0]
    # pitch 0 is beam x_k = 0 -> row 23; yaw 0 -> floor(W/2)
    assert (r, c) == (23, 548)
    assert view.depth[r, c] == 10.0
    assert view.intensity[r, c] == 100.0


def test_out_of_range_point_is_dropped():
    view = project(PointCloud([[60.0, 0.0, 0.0, 5.0], [1.0, 0.0, 0.0, 5.0]]))
    assert view.filled.sum() == 0
    assert list(view.dropped) == [0, 1]


def test_range_bounds_are_inclusive():
    view = project(PointCloud([[1.4, 0.0, 0.0, 1.0], [0.0, -54.0, 0.0, 2.0]]))
    assert view.filled.sum() == 2 and len(view.dropped) == 0


def test_empty_cloud():
    view = project(PointCloud.empty())
    assert not view.filled.any()
    assert len(unproject(view)) == 0


def test_unproject_single_pixel():
    view = project(PointCloud([[10.0, 0.0, 0.0, 100.0]]))
    np.testing.assert_allclose(unproject(view).points, [[10.0, 0.0, 0.0, 100.0]], atol=1e-12)


def test_collision_keeps_nearest():
    pts = [[20.0, 0.0, 0.0, 1.0], [10.0, 0.0, 0.0, 2.0], [10.0, 0.0, 0.0, 3.0]]
    view = project(PointCloud(pts))
    assert view.filled.sum() == 1
    assert view.intensity[23, 548] == 2.0
    assert list(view.dropped) == [0, 2]


def test_round_trip_random_clouds():
    rng = np.random.default_rng(0)
    for _ in range(20):
        cloud, pixels, out_idx = random_collision_free_cloud(rng, 3000, 50)
        view = project(cloud)
        assert np.array_equal(view.dropped, out_idx)
        kept = np.setdiff1d(np.arange(len(cloud)), out_idx)
        assert view.filled.sum() == len(kept)
        assert np.array_equal(np.argwhere(view.filled)[:, 0].size, len(kept))
        np.testing.assert_array_equal(pixels[view.point_index[view.filled]], np.argwhere(view.filled))
        back = unproject(view)
        err = np.abs(back.points - cloud.points[view.point_index[view.filled]]).max()
        assert err < 1e-9


def test_round_trip_single_precision():
    rng = np.random.default_rng(1)
    cloud, _, _ = random_collision_free_cloud(rng, 2000)
    single = PointCloud(cloud.points.astype(np.float32).astype(np.float64))
    view = project(single)
    back = unproject(view)
    err = np.abs(back.xyz - single.xyz[view.point_index[view.filled]]).max()
    assert err < 1e-3


def test_column_wraparound():
    eps = 1e-9
    assert column_of(np.pi - eps) == RANGE_W - 1
    assert column_of(-np.pi + eps) == 0
    assert column_of(np.pi) == 0


@given(st.lists(st.floats(-0.6, 0.25), min_size=2, max_size=50))
def test_row_monotone_in_pitch(pitches):
    p = np.sort(np.array(pitches))
    rows = BEAMS.nearest_row(p)
    assert np.all(np.diff(rows) >= 0)


def test_midpoint_tie_goes_to_lower_row():
    mid = 0.5 * (BEAM_PITCHES[10] + BEAM_PITCHES[11])
    assert BEAMS.nearest_row(mid) == 10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_permutation_keeps_filled_pixels(seed):
    rng = np.random.default_rng(seed)
    n = 300
    # crowd points into few pixels to force collisions
    yaw = rng.uniform(-0.01, 0.01, n)
    pitch = rng.uniform(-0.05, 0.05, n)
    d = rng.uniform(2, 50, n)
    xyz = np.column_stack([d * np.cos(yaw) * np.cos(pitch), -d * np.sin(yaw) * np.cos(pitch), d * np.sin(pitch)])
    pts = np.column_stack([xyz, rng.uniform(0, 255, n)])
    a = project(PointCloud(pts))
    b = project(PointCloud(pts[rng.permutation(n)]))
    assert np.array_equal(a.filled, b.filled)
    assert len(a.dropped) + a.filled.sum() == n


def test_unproject_rasterized_center_yaw():
    view = project(PointCloud([[10.0, 0.0, 0.0, 100.0]]))
    edited = np.zeros_like(view.filled)
    edited[23, 548] = True
    p = unproject_rasterized(view, edited).points[0]
    delta = -p[1]
    assert p[0] == pytest.approx(10 * np.cos(rasterized_yaw(548)))
    assert 0 < delta < 10 * np.pi / RANGE_W
    assert p[2] == pytest.approx(0.0, abs=1e-12)


def test_unproject_rasterized_without_edits_is_unproject():
    rng = np.random.default_rng(2)
    cloud, _, _ = random_collision_free_cloud(rng, 500)
    view = project(cloud)
    np.testing.assert_array_equal(
        unproject_rasterized(view, np.zeros_like(view.filled)).points, unproject(view).points
    )


def test_full_row_edit_lies_on_circle():
    view = project(PointCloud.empty())
    row, d = 5, 12.0
    depth = view.depth.copy()
    depth[row] = d
    filled = view.filled.copy()
    filled[row] = True
    edited = np.zeros_like(filled)
    edited[row] = True
    pts = unproject_rasterized(view.with_fields(depth=depth, filled=filled), edited).xyz
    assert len(pts) == RANGE_W
    radius = np.hypot(pts[:, 0], pts[:, 1])
    for r in radius:
        assert abs(r - d * np.cos(BEAM_PITCHES[row])) < 1e-12
