"""Fast installation checks run by ``mminpaint selftest``."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch

from .compositing import composite_camera, composite_range, decode_range_window, original_points_in_box, window_mask
from .conditioning import range_normalized
from .diffusion import DiffusionUNet, cfg_predict
from .errors import InpaintError
from .fixtures import random_collision_free_cloud, random_conditioning
from .geometry import crop_image, make_crop, project_box_camera, project_box_range
from .range_codec import angles_to_xyz, project, rasterized_angles, unproject
from .scene_model import SyntheticSpec, generate_synthetic_scene
from .signal_norm import NormalizationParams, denormalize_depth, denormalize_intensity, normalize_depth, normalize_intensity


@dataclass
class CheckResult:
    name: str
    passed: bool
    seconds: float
    detail: str = ""


def check_codec_roundtrip(n_clouds: int = 20, seed: int = 0) -> str:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_clouds):
        cloud, pixels, out_idx = random_collision_free_cloud(rng, 1500, 20)
        view = project(cloud)
        back = unproject(view)
        kept = np.setdiff1d(np.arange(len(cloud)), out_idx)
        idx = view.point_index[pixels[kept, 0], pixels[kept, 1]]
        assert np.array_equal(idx, kept), "kept points not at their pixels"
        assert len(back) == len(kept), "dropped-point accounting mismatch"
        worst = max(worst, float(np.abs(back.xyz[np.argsort(view.point_index[view.filled])] - cloud.xyz[kept]).max()))
    assert worst < 1e-9, f"max coordinate error {worst:.3g}"
    return f"max error {worst:.2e}"


def check_norm_roundtrip(seed: int = 0) -> str:
    i = np.arange(256.0)
    e_i = float(np.abs(denormalize_intensity(normalize_intensity(i)) - i).max())
    rng = np.random.default_rng(seed)
    scene = generate_synthetic_scene(seed, SyntheticSpec(n_objects=4))
    e_d = 0.0
    for box in scene.boxes:
        p = NormalizationParams.for_box(box)
        d = np.concatenate([rng.uniform(-1, 1, 1000), [-1.0, p.min_d, p.max_d, 1.0]])
        e_d = max(e_d, float(np.abs(denormalize_depth(normalize_depth(d, p), p) - d).max()))
    assert e_i < 1e-9 and e_d < 1e-12, f"intensity {e_i:.3g}, depth {e_d:.3g}"
    return f"intensity {e_i:.2e}, depth {e_d:.2e}"


def check_zero_gate(inject_fault: bool = False, seed: int = 0) -> str:
    torch.manual_seed(seed)
    model = DiffusionUNet().eval()
    if inject_fault:
        with torch.no_grad():
            for g in model.gates():
                g.fill_(0.1)
    cond = random_conditioning(4, seed=seed)
    g = torch.Generator().manual_seed(seed)
    zc, zr = torch.randn(4, 4, 8, 8, generator=g), torch.randn(4, 4, 8, 8, generator=g)
    t = torch.randint(0, 1000, (4,), generator=g)
    with torch.no_grad():
        a = model(zc, zr, t, cond)
        b = model(zc, zr, t, cond, use_adapters=False)
    diff = max(float((x - y).abs().max()) for x, y in zip(a, b))
    assert diff < 1e-6, f"adapted and base outputs differ by {diff:.3g}"
    return f"max diff {diff:.2e}"


def check_cfg_affinity(seed: int = 0) -> str:
    torch.manual_seed(seed)
    model = DiffusionUNet().eval()
    with torch.no_grad():
        for g in model.gates():
            g.normal_(0, 0.5)
    cond = random_conditioning(2, seed=seed)
    g = torch.Generator().manual_seed(seed + 1)
    zc, zr = torch.randn(2, 4, 8, 8, generator=g), torch.randn(2, 4, 8, 8, generator=g)
    t = torch.tensor([10, 500])
    with torch.no_grad():
        e0, e1, e5 = (cfg_predict(model, zc, zr, t, cond, s) for s in (0.0, 1.0, 5.0))
        c, n = model(zc, zr, t, cond), model(zc, zr, t, cond.nulled())
    assert all(torch.equal(x, y) for x, y in zip(e1, c)), "s=1 is not the conditional prediction"
    assert all(torch.equal(x, y) for x, y in zip(e0, n)), "s=0 is not the unconditional prediction"
    res = max(float((a - b - 5 * (d - b)).abs().max()) for a, b, d in zip(e5, e0, e1))
    assert res < 1e-6, f"affinity residual {res:.3g}"
    return f"residual {res:.2e}"


def check_compositing(n_cases: int = 5, seed: int = 0) -> str:
    """Range replacement set against a per-pixel evaluation, and camera locality."""
    rng = np.random.default_rng(seed)
    pitch, yaw = rasterized_angles()
    done, scene_seed = 0, seed * 1000
    while done < n_cases:
        scene = generate_synthetic_scene(scene_seed, SyntheticSpec(n_objects=3))
        scene_seed += 1
        view = project(scene.lidar)
        for box in scene.boxes:
            try:
                pb_c = project_box_camera(box, scene.camera)
                crop_c = make_crop(pb_c, (scene.camera.width, scene.camera.height), 32)
            except InpaintError:
                continue
            crop_r = make_crop(project_box_range(box), size=32)
            params = NormalizationParams.for_box(box)
            gen = np.clip(range_normalized(view, crop_r, params) + rng.normal(0, 0.05, (32, 32, 2)), -1, 1)
            new_view, mask = composite_range(view, gen, box, crop_r, params, scene.lidar)
            depth, _, valid = decode_range_window(gen, crop_r, params)
            cols = crop_r.source_columns()
            expect = original_points_in_box(view, box, scene.lidar) & window_mask(crop_r, view.shape)
            for r in range(view.shape[0]):
                for j, c in enumerate(cols):
                    if valid[r, j]:
                        p = angles_to_xyz(depth[r, j], pitch[r, c], yaw[r, c])
                        expect[r, c] |= bool(box.contains(p[None])[0])
            assert np.array_equal(expect, mask.range_replaced), "range replacement set differs"
            outside = ~window_mask(crop_r, view.shape)
            assert np.array_equal(new_view.depth[outside], view.depth[outside]), "range edit leaked outside window"
            cam = crop_image(scene.camera.image, crop_c)
            frame, alpha = composite_camera(scene.camera, np.clip(cam + 0.2, 0, 1), crop_c, pb_c)
            assert np.array_equal(frame.image[alpha == 0], scene.camera.image[alpha == 0]), "camera edit leaked"
            done += 1
            if done >= n_cases:
                break
    return f"{done} edits"


CHECKS = {
    "codec_roundtrip": check_codec_roundtrip,
    "norm_roundtrip": check_norm_roundtrip,
    "zero_gate_identity": check_zero_gate,
    "compositing_oracle": check_compositing,
    "cfg_affinity": check_cfg_affinity,
}


def run_selftest(inject_fault: str | None = None) -> list[CheckResult]:
    out = []
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            detail = fn(inject_fault=True) if (inject_fault == "gate" and name == "zero_gate_identity") else fn()
            ok = True
        except AssertionError as exc:
            ok, detail = False, str(exc)
        out.append(CheckResult(name, ok, time.perf_counter() - t0, detail))
    return out
