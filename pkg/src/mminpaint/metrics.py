"""Reconstruction metrics and a realism harness with pluggable feature backbones."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F
from scipy import linalg
from torch import nn

from .compositing import original_points_in_box
from .errors import ConfigError, InsufficientData, ShapeError
from .geometry import CAMERA, CropSpec, crop_image, project_box_camera, project_box_range
from .range_codec import RangeView, depth_to_unit, project
from .scene_model import Box3D, PointCloud, SceneSample

PATCH_SIZE = 64
PATCH_DILATION = 0.2


# ---------------------------------------------------------------------------
# reconstruction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReconstructionReport:
    """Median absolute depth error (m) and intensity MSE (0-255 scale).

    Object-set values are NaN and ``object_present`` is False when no original
    point lies in the box.
    """

    median_depth_error_object: float
    median_depth_error_mask: float
    mse_intensity_object: float
    mse_intensity_mask: float
    object_present: bool = True
    n_object: int = 0
    n_mask: int = 0


def _set_errors(orig: RangeView, recon: RangeView, sel: np.ndarray):
    if not sel.any():
        return float("nan"), float("nan")
    dd = np.abs(recon.depth[sel] - orig.depth[sel])
    di = recon.intensity[sel] - orig.intensity[sel]
    return float(np.median(dd)), float(np.mean(di**2))


def reconstruction_metrics(orig_view: RangeView, recon_view: RangeView, box: Box3D, mask: np.ndarray,
                           cloud: PointCloud | None = None) -> ReconstructionReport:
    """Errors over the object pixels (original points in ``box``) and over ``mask``."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != orig_view.shape or recon_view.shape != orig_view.shape:
        raise ShapeError("views and mask must share the range-view shape")
    obj = original_points_in_box(orig_view, box, cloud)
    d_o, i_o = _set_errors(orig_view, recon_view, obj)
    d_m, i_m = _set_errors(orig_view, recon_view, mask)
    return ReconstructionReport(d_o, d_m, i_o, i_m, bool(obj.any()), int(obj.sum()), int(mask.sum()))


# ---------------------------------------------------------------------------
# perceptual backbones
# ---------------------------------------------------------------------------


class RandomConvBackbone(nn.Module):
    """Fixed-seed random convolutional features; deterministic stand-in for a learned network."""

    def __init__(self, seed: int = 0, widths=(16, 32, 64)):
        super().__init__()
        g = torch.Generator().manual_seed(seed)
        layers, cin = [], 3
        for w in widths:
            conv = nn.Conv2d(cin, w, 3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=g) * (2.0 / (9 * cin)) ** 0.5)
                conv.bias.zero_()
            layers.append(conv)
            cin = w
        self.layers = nn.ModuleList(layers)
        self.requires_grad_(False)

    def forward(self, x) -> list[torch.Tensor]:
        feats = []
        for conv in self.layers:
            x = F.relu(conv(x))
            feats.append(x)
        return feats

    def pooled(self, x) -> torch.Tensor:
        return self.forward(x)[-1].mean(dim=(2, 3))


_BACKBONES: dict[str, Callable[[], nn.Module]] = {"random-conv": RandomConvBackbone}
_CACHE: dict[str, nn.Module] = {}


def register_backbone(name: str, factory: Callable[[], nn.Module]) -> None:
    """Attach a feature extractor: ``forward`` returns a list of maps, ``pooled`` a vector."""
    _BACKBONES[name] = factory
    _CACHE.pop(name, None)


def get_backbone(name: str = "random-conv") -> nn.Module:
    if name not in _BACKBONES:
        raise ConfigError(f"unknown backbone {name!r}; registered: {sorted(_BACKBONES)}", "/metrics/backbone")
    if name not in _CACHE:
        _CACHE[name] = _BACKBONES[name]().eval()
    return _CACHE[name]


def to_rgb_tensor(patch) -> torch.Tensor:
    """``H x W``, ``H x W x 1`` or ``H x W x 3`` patch in ``[0, 1]`` to a ``1 x 3 x H x W`` tensor in ``[-1, 1]``.

    Single-channel patches are tiled three times.
    """
    p = np.asarray(patch, dtype=np.float32)
    if p.ndim == 2:
        p = p[..., None]
    if p.ndim != 3 or p.shape[2] not in (1, 3):
        raise ShapeError(f"patch must be HxW, HxWx1 or HxWx3, got {p.shape}")
    if p.shape[2] == 1:
        p = np.repeat(p, 3, axis=2)
    return torch.from_numpy(np.ascontiguousarray(p)).permute(2, 0, 1)[None] * 2.0 - 1.0


def _unit(f, eps=1e-10):
    return f / (f.pow(2).sum(dim=1, keepdim=True).sqrt() + eps)


@torch.no_grad()
def perceptual_distance(a, b, backbone: str = "random-conv") -> float:
    """Per-layer squared distance of channel-normalized features, spatially averaged, then layer-averaged."""
    net = get_backbone(backbone)
    fa, fb = net(to_rgb_tensor(a)), net(to_rgb_tensor(b))
    per_layer = [(_unit(x) - _unit(y)).pow(2).sum(dim=1).mean() for x, y in zip(fa, fb)]
    return float(torch.stack(per_layer).mean())


@torch.no_grad()
def pooled_features(patches, backbone: str = "random-conv") -> np.ndarray:
    net = get_backbone(backbone)
    if not len(patches):
        return np.zeros((0, 0))
    return torch.cat([net.pooled(to_rgb_tensor(p)) for p in patches]).double().numpy()


def image_similarity(a, b, backbone: str = "random-conv") -> float:
    """Cosine similarity of pooled features."""
    fa, fb = pooled_features([a, b], backbone)
    return float(fa @ fb / (np.linalg.norm(fa) * np.linalg.norm(fb) + 1e-12))


# ---------------------------------------------------------------------------
# distribution distance
# ---------------------------------------------------------------------------


def frechet_from_stats(mu1, cov1, mu2, cov2) -> float:
    mu1, mu2 = np.atleast_1d(mu1), np.atleast_1d(mu2)
    cov1, cov2 = np.atleast_2d(cov1), np.atleast_2d(cov2)
    with np.errstate(invalid="ignore", divide="ignore"):
        # the residual estimate divides by zero for rank-deficient products
        covmean, _ = linalg.sqrtm(cov1 @ cov2, disp=False)
    if not np.all(np.isfinite(covmean)):
        off = np.eye(len(mu1)) * 1e-10
        covmean = linalg.sqrtm((cov1 + off) @ (cov2 + off))
    covmean = np.real(covmean)
    diff = mu1 - mu2
    return float(max(diff @ diff + np.trace(cov1) + np.trace(cov2) - 2 * np.trace(covmean), 0.0))


def frechet_distance(feats_a: np.ndarray, feats_b: np.ndarray) -> float:
    """Frechet distance between Gaussians fitted to two ``N x d`` feature sets."""
    a, b = np.asarray(feats_a, dtype=np.float64), np.asarray(feats_b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise InsufficientData("need at least two samples per set for a distribution distance")
    return frechet_from_stats(a.mean(0), np.cov(a, rowvar=False), b.mean(0), np.cov(b, rowvar=False))


# ---------------------------------------------------------------------------
# realism harness
# ---------------------------------------------------------------------------


def camera_patch(scene: SceneSample, box: Box3D, dilation: float = PATCH_DILATION, size: int = PATCH_SIZE,
                 extended: bool = True) -> np.ndarray:
    """Box bbox (dilated by ``dilation`` per side when ``extended``), clamped to the frame, resized to ``size``."""
    pb = project_box_camera(box, scene.camera)
    x0, y0, x1, y1 = pb.bbox
    d = dilation if extended else 0.0
    w, h = x1 - x0, y1 - y0
    W, H = scene.camera.width, scene.camera.height
    x0, x1 = max(int(np.floor(x0 - d * w)), 0), min(int(np.ceil(x1 + d * w)), W)
    y0, y1 = max(int(np.floor(y0 - d * h)), 0), min(int(np.ceil(y1 + d * h)), H)
    if x1 <= x0 or y1 <= y0:
        return np.zeros((size, size, 3))
    crop = CropSpec(CAMERA, x0, y0, x1 - x0, y1 - y0, size)
    return crop_image(scene.camera.image, crop)


def range_patches(view: RangeView, box: Box3D, dilation: float = PATCH_DILATION, size: int = PATCH_SIZE):
    """Depth and intensity patches in ``[0, 1]`` around the box, nearest-resampled, columns wrapped."""
    pb = project_box_range(box)
    x0, y0, x1, y1 = pb.bbox
    w, h = x1 - x0, y1 - y0
    H, W = view.shape
    c0, c1 = int(np.floor(x0 - dilation * w)), int(np.ceil(x1 + dilation * w))
    r0, r1 = max(int(np.floor(y0 - dilation * h)), 0), min(int(np.ceil(y1 + dilation * h)), H)
    r1 = max(r1, r0 + 1)
    rows = r0 + np.floor((np.arange(size) + 0.5) * (r1 - r0) / size).astype(int)
    cols = np.mod(c0 + np.floor((np.arange(size) + 0.5) * (c1 - c0) / size).astype(int), W)
    depth = (np.clip(depth_to_unit(view.depth), -1, 1) + 1) / 2
    inten = view.intensity / 255.0
    return depth[rows][:, cols], inten[rows][:, cols]


@dataclass(frozen=True, eq=False)
class EditRecord:
    original: SceneSample
    edited: SceneSample
    box: Box3D
    reference: np.ndarray | None = None


@dataclass(frozen=True)
class RealismReport:
    fid: float
    lpips: float
    d_lpips: float
    i_lpips: float
    clip_i: float | None
    n: int


def realism_report(edits, backbone: str = "random-conv") -> RealismReport:
    """Distribution and pairwise distances between original and edited extended patches."""
    edits = list(edits)
    if len(edits) < 2:
        raise InsufficientData("realism report needs at least two edits")
    cam_o, cam_e, lp, dl, il, ci = [], [], [], [], [], []
    for e in edits:
        po, pe = camera_patch(e.original, e.box), camera_patch(e.edited, e.box)
        cam_o.append(po)
        cam_e.append(pe)
        lp.append(perceptual_distance(po, pe, backbone))
        do, io = range_patches(project(e.original.lidar), e.box)
        de, ie = range_patches(project(e.edited.lidar), e.box)
        dl.append(perceptual_distance(do, de, backbone))
        il.append(perceptual_distance(io, ie, backbone))
        if e.reference is not None:
            ci.append(image_similarity(camera_patch(e.edited, e.box, extended=False), e.reference, backbone))
    fid = frechet_distance(pooled_features(cam_o, backbone), pooled_features(cam_e, backbone))
    return RealismReport(fid, float(np.mean(lp)), float(np.mean(dl)), float(np.mean(il)),
                         float(np.mean(ci)) if ci else None, len(edits))
