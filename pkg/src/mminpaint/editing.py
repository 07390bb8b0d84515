"""End-to-end object edits: condition, sample, decode, composite."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch

from .compositing import CompositeMask, composite_camera, composite_cloud, composite_range
from .conditioning import InputConfig, build_conditioning, prepare_inputs
from .diffusion import DEFAULT_CFG_SCALE, NoiseSchedule, sample
from .diffusion.unet import DiffusionUNet
from .latent_codec import Codecs
from .range_codec import project
from .scene_model import Box3D, SceneSample

MODES = ("reinsert", "replace", "insert", "delete")


@dataclass(eq=False)
class EditResult:
    scene: SceneSample
    mask: CompositeMask
    camera_crop: np.ndarray  # generated D x D x 3 in [0, 1]
    range_crop: np.ndarray  # generated D x D x 2, normalized
    alpha: np.ndarray


@torch.no_grad()
def decode_latents(codecs: Codecs, z_cam, z_range):
    cam = ((codecs.camera.decode(z_cam) + 1.0) / 2.0).clamp(0.0, 1.0)
    rng = codecs.range.decode(z_range).clamp(-1.0, 1.0)
    to_np = lambda x: x[0].permute(1, 2, 0).double().numpy()
    return to_np(cam), to_np(rng)


def edit_scene(
    model: DiffusionUNet,
    codecs: Codecs,
    scene: SceneSample,
    box: Box3D,
    mode: str = "reinsert",
    ref_img: np.ndarray | None = None,
    seed: int = 0,
    steps: int = 50,
    cfg_scale: float = DEFAULT_CFG_SCALE,
    input_cfg: InputConfig = InputConfig(),
    schedule: NoiseSchedule | None = None,
    resize_mode: str = "avg",
) -> EditResult:
    """Regenerate the region of ``box`` in both modalities and composite it back.

    ``delete`` uses the null reference and zero box, then drops the box from
    the annotations. ``insert`` adds it. Box point counts are recomputed on the
    edited cloud.
    """
    if mode not in MODES:
        raise ValueError(f"unknown edit mode {mode!r}; expected one of {MODES}")
    view = project(scene.lidar)
    inputs = prepare_inputs(scene, box, ref_img, input_cfg, view=view)
    cond = build_conditioning(codecs, [inputs], empty=(mode == "delete"))
    z_c, z_r = sample(model, cond, steps=steps, seed=seed, schedule=schedule, cfg_scale=cfg_scale)
    gen_cam, gen_rng = decode_latents(codecs, z_c, z_r)

    camera, alpha = composite_camera(scene.camera, gen_cam, inputs.crop_cam, inputs.pbox_cam)
    new_view, rmask = composite_range(view, gen_rng, box, inputs.crop_range, inputs.norm, scene.lidar, resize_mode)
    cloud = composite_cloud(scene.lidar, view, new_view, rmask.range_replaced, box)

    boxes = [b for b in scene.boxes if b.instance_id != box.instance_id]
    if mode != "delete":
        boxes.append(box)
    boxes = [b.with_attributes(num_lidar_points=int(b.contains(cloud.xyz).sum())) for b in boxes]
    meta = dict(scene.meta)
    meta["edit"] = {"mode": mode, "instance_id": box.instance_id, "seed": int(seed)}
    out = replace(scene, camera=camera, lidar=cloud, boxes=boxes, meta=meta)
    mask = CompositeMask(alpha > 0, rmask.m_points, rmask.edited_inside)
    return EditResult(out, mask, gen_cam, gen_rng, alpha)


def delete_object(model, codecs, scene: SceneSample, box: Box3D, **kw) -> EditResult:
    """Remove ``box`` by inpainting with the black (null) reference."""
    return edit_scene(model, codecs, scene, box, mode="delete", **kw)
