"""Edit inputs, Fourier box tokens and conditioning-set assembly.

``prepare_inputs`` turns a scene plus a target box into the object-centric
camera and range rasters, masks and normalized box geometry.
``build_conditioning`` encodes a batch of those into latents and a
:class:`ConditioningSet`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .constants import MAX_DEPTH
from .errors import DomainError, PairingError
from .geometry import (
    CAMERA,
    RANGE,
    CropSpec,
    ProjectedBox,
    crop_image,
    crop_range,
    make_crop,
    project_box_camera,
    project_box_range,
    range_box_columns,
    rasterize_mask,
)
from .latent_codec import DOWNSAMPLE, REF_SIZE, Codecs, embed_reference
from .range_codec import RangeView, depth_to_unit, project
from .scene_model import Box3D, SceneSample
from .signal_norm import NormalizationParams, normalize_depth, normalize_intensity

FOURIER_BANDS = 16


# ---------------------------------------------------------------------------
# box tokens
# ---------------------------------------------------------------------------


def fourier_features(x: torch.Tensor, bands: int = FOURIER_BANDS) -> torch.Tensor:
    """``sin``/``cos`` of ``2^k * pi * x`` for ``k < bands``, per scalar, flattened."""
    freqs = (2.0 ** torch.arange(bands, dtype=x.dtype)) * torch.pi
    ang = x.flatten(1)[..., None] * freqs
    return torch.cat([torch.sin(ang), torch.cos(ang)], dim=-1).flatten(1)


class BoxEncoder(nn.Module):
    """Fourier embedding of an 8x3 box followed by a modality-agnostic MLP."""

    def __init__(self, dim: int = 64, bands: int = FOURIER_BANDS):
        super().__init__()
        self.bands = bands
        self.dim = dim
        self.mlp = nn.Sequential(nn.Linear(24 * 2 * bands, dim), nn.SiLU(), nn.Linear(dim, dim))

    def forward(self, boxes: torch.Tensor) -> torch.Tensor:
        if not torch.isfinite(boxes).all():
            raise DomainError("box coordinates must be finite")
        return self.mlp(fourier_features(boxes.reshape(boxes.shape[0], 24), self.bands))


def normalized_box(pbox: ProjectedBox, crop: CropSpec) -> np.ndarray:
    """Viewport-transformed corners scaled by the crop size, plus depth over max range (8x3)."""
    xy = range_box_columns(pbox, crop) if pbox.modality == RANGE else pbox.xy
    t = crop.to_target(xy) / crop.size
    return np.column_stack([t, pbox.depth / MAX_DEPTH])


def scale_invariant_box(corners_px: np.ndarray, size) -> np.ndarray:
    """Pixel corners divided by the frame size; used to check scaling equivariance."""
    return np.asarray(corners_px, dtype=np.float64) / np.asarray(size, dtype=np.float64)


# ---------------------------------------------------------------------------
# raster inputs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InputConfig:
    size: int = 64
    alpha: float = 0.5
    lam: float = 4.0
    box_expand: float = 0.1
    object_aware: bool = True
    crop_mode: str = "centered"


@dataclass(eq=False)
class EditInputs:
    """Everything derived from (scene, box, reference) before encoding."""

    x_cam: np.ndarray  # D x D x 3 in [0, 1]
    x_range: np.ndarray  # D x D x 2, normalized
    ctx_range: np.ndarray  # D x D x 2, normalized masked range input
    mask_cam: np.ndarray  # D x D bool, 1 inside box
    mask_range: np.ndarray
    crop_cam: CropSpec
    crop_range: CropSpec
    pbox_cam: ProjectedBox
    pbox_range: ProjectedBox
    box_cam: np.ndarray  # 8 x 3 normalized, depth-augmented
    box_range: np.ndarray
    norm: NormalizationParams
    ref_img: np.ndarray  # REF_SIZE x REF_SIZE x 3
    view: RangeView = field(repr=False, default=None)
    box: Box3D = None


def reference_crop(sample: SceneSample, box: Box3D, size: int = REF_SIZE) -> np.ndarray:
    """Minimal 2-D window around the projected source box, resized to ``size``."""
    pb = project_box_camera(box, sample.camera)
    H, W = sample.camera.height, sample.camera.width
    x0, y0, x1, y1 = pb.bbox
    x0, y0 = max(int(np.floor(x0)), 0), max(int(np.floor(y0)), 0)
    x1, y1 = min(int(np.ceil(x1)), W), min(int(np.ceil(y1)), H)
    if x1 <= x0 or y1 <= y0:
        return np.zeros((size, size, 3))
    crop = CropSpec(CAMERA, x0, y0, x1 - x0, y1 - y0, size)
    return crop_image(sample.camera.image, crop)


def range_normalized(view: RangeView, crop: CropSpec, params: NormalizationParams, object_aware: bool = True, masked=None):
    """Normalized ``D x D x 2`` range image of a window; masked pixels are zeroed before normalization."""
    raw = np.stack([view.depth, view.intensity], axis=-1)
    img = crop_range(raw, crop)
    if masked is not None:
        img = img * (~masked)[..., None]
    d = depth_to_unit(img[..., 0])
    d = normalize_depth(d, params) if object_aware else np.clip(d, -1.0, 1.0)
    i = normalize_intensity(np.clip(img[..., 1], 0, 255), params.lam)
    return np.stack([d, i], axis=-1)


def prepare_inputs(
    sample: SceneSample,
    box: Box3D,
    ref_img: np.ndarray | None = None,
    cfg: InputConfig = InputConfig(),
    seed=None,
    view: RangeView | None = None,
) -> EditInputs:
    cam = sample.camera
    pb_cam = project_box_camera(box, cam)
    pb_rng = project_box_range(box)
    crop_c = make_crop(pb_cam, (cam.width, cam.height), cfg.size, cfg.crop_mode, seed)
    crop_r = make_crop(pb_rng, size=cfg.size, mode=cfg.crop_mode, seed=seed)
    m_c = rasterize_mask(pb_cam, crop_c).mask
    m_r = rasterize_mask(pb_rng, crop_r).mask
    view = view if view is not None else project(sample.lidar)
    if cfg.object_aware:
        params = NormalizationParams.for_box(box, lam=cfg.lam, alpha=cfg.alpha, box_expand=cfg.box_expand)
    else:
        params = NormalizationParams(lam=cfg.lam, alpha=cfg.alpha)
    x_r = range_normalized(view, crop_r, params, cfg.object_aware)
    ctx_r = range_normalized(view, crop_r, params, cfg.object_aware, masked=m_r)
    # camera box carries the range projection's depth
    box_c = normalized_box(pb_cam, crop_c)
    box_c[:, 2] = pb_rng.depth / MAX_DEPTH
    if ref_img is None:
        ref_img = reference_crop(sample, box)
    return EditInputs(
        x_cam=crop_image(cam.image, crop_c),
        x_range=x_r,
        ctx_range=ctx_r,
        mask_cam=m_c,
        mask_range=m_r,
        crop_cam=crop_c,
        crop_range=crop_r,
        pbox_cam=pb_cam,
        pbox_range=pb_rng,
        box_cam=box_c,
        box_range=normalized_box(pb_rng, crop_r),
        norm=params,
        ref_img=np.asarray(ref_img, dtype=np.float64),
        view=view,
        box=box,
    )


# ---------------------------------------------------------------------------
# conditioning set
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ConditioningSet:
    """Batched conditioning for both modalities of the same scenes.

    Box geometry is kept as normalized 8x3 corners; the model's trainable box
    encoder turns it into tokens. ``null`` marks items whose reference and
    boxes are the null values.
    """

    ref_token: torch.Tensor  # B x d
    box_cam: torch.Tensor  # B x 8 x 3
    box_range: torch.Tensor
    ctx_cam: torch.Tensor  # B x C x h x h
    ctx_range: torch.Tensor
    mask_cam: torch.Tensor  # B x 1 x h x h, complement mask (1 = keep)
    mask_range: torch.Tensor
    null: torch.Tensor  # B bool

    def __post_init__(self):
        if self.ctx_cam.shape != self.ctx_range.shape or self.box_cam.shape != self.box_range.shape:
            raise PairingError(
                f"camera/range conditioning disagree: {tuple(self.ctx_cam.shape)} vs {tuple(self.ctx_range.shape)}"
            )

    @property
    def batch(self) -> int:
        return self.ref_token.shape[0]

    def nulled(self) -> "ConditioningSet":
        """Reference and both boxes set to their null values; context is kept."""
        return replace(
            self,
            ref_token=torch.zeros_like(self.ref_token),
            box_cam=torch.zeros_like(self.box_cam),
            box_range=torch.zeros_like(self.box_range),
            null=torch.ones_like(self.null),
        )

    def index(self, idx) -> "ConditioningSet":
        return ConditioningSet(**{k: getattr(self, k)[idx] for k in self.__dataclass_fields__})

    @staticmethod
    def cat(items) -> "ConditioningSet":
        return ConditioningSet(**{k: torch.cat([getattr(c, k) for c in items]) for k in ConditioningSet.__dataclass_fields__})

    def detach(self) -> "ConditioningSet":
        return ConditioningSet(**{k: getattr(self, k).detach() for k in self.__dataclass_fields__})


def latent_keep_mask(mask: np.ndarray) -> torch.Tensor:
    """Edit mask (1 = edit) to the latent-resolution complement (1 = keep)."""
    m = torch.as_tensor(np.asarray(mask, dtype=np.float32))[None, None]
    return 1.0 - F.max_pool2d(m, DOWNSAMPLE)


def _cam_tensor(x):
    return torch.as_tensor(np.asarray(x, dtype=np.float32)).permute(0, 3, 1, 2) * 2.0 - 1.0


def _range_tensor(x):
    return torch.as_tensor(np.asarray(x, dtype=np.float32)).permute(0, 3, 1, 2)


@torch.no_grad()
def encode_targets(codecs: Codecs, inputs: list[EditInputs]):
    """Clean latents ``(z0_cam, z0_range)`` of the unmasked crops."""
    z_c = codecs.camera.encode(_cam_tensor(np.stack([x.x_cam for x in inputs])))
    z_r = codecs.range.encode(_range_tensor(np.stack([x.x_range for x in inputs])))
    return z_c, z_r


@torch.no_grad()
def build_conditioning(codecs: Codecs, inputs: list[EditInputs], empty=False) -> ConditioningSet:
    """Encode context, masks, reference and boxes for a batch of edit inputs.

    ``empty`` (bool or per-item sequence) selects the null reference and zero
    boxes; context latents always come from the masked inputs.
    """
    n = len(inputs)
    empty = np.broadcast_to(np.asarray(empty, dtype=bool), (n,))
    keep_c = np.stack([~x.mask_cam for x in inputs])[..., None]
    ctx_c = codecs.camera.encode(_cam_tensor(np.stack([x.x_cam for x in inputs]) * keep_c))
    ctx_r = codecs.range.encode(_range_tensor(np.stack([x.ctx_range for x in inputs])))
    refs = np.stack([np.zeros_like(x.ref_img) if e else x.ref_img for x, e in zip(inputs, empty)])
    ref_tok = embed_reference(codecs.reference, refs)
    box_c = torch.as_tensor(np.stack([np.zeros((8, 3)) if e else x.box_cam for x, e in zip(inputs, empty)]), dtype=torch.float32)
    box_r = torch.as_tensor(np.stack([np.zeros((8, 3)) if e else x.box_range for x, e in zip(inputs, empty)]), dtype=torch.float32)
    return ConditioningSet(
        ref_token=ref_tok,
        box_cam=box_c,
        box_range=box_r,
        ctx_cam=ctx_c,
        ctx_range=ctx_r,
        mask_cam=torch.cat([latent_keep_mask(x.mask_cam) for x in inputs]),
        mask_range=torch.cat([latent_keep_mask(x.mask_range) for x in inputs]),
        null=torch.as_tensor(empty.copy()),
    )
