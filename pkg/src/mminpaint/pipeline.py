"""Training stages, dataset assembly and the range-codec ablation.

Stages, in order:

1. camera autoencoder on camera crops (stand-in for a pretrained image VAE);
2. range adapters with the shared backbone frozen, best checkpoint by
   held-out reconstruction loss;
3. base denoiser without adapters (stand-in for a pretrained inpainting UNet);
4. adapter fine-tune: only the box encoder, box adapters and cross-modal
   attention train, at a constant learning rate; the top-k checkpoints by
   held-out loss are kept and the final one is chosen by the Frechet
   distance of reinsertion edits.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .conditioning import ConditioningSet, EditInputs, InputConfig, build_conditioning, encode_targets, prepare_inputs
from .datagen import (
    AugmentConfig,
    SelectionFilter,
    build_empty_box_db,
    sample_training_item,
    select_objects,
    tracks,
)
from .diffusion import DiffusionUNet, NoiseSchedule, training_loss
from .editing import edit_scene
from .errors import InpaintError
from .geometry import crop_range, make_crop, project_box_range, uncrop_range
from .latent_codec import Codecs, NaiveRangeCodec, PatchDiscriminator, kl_term
from .metrics import EditRecord, ReconstructionReport, realism_report, reconstruction_metrics
from .range_codec import RangeView, depth_to_unit, project, unit_to_depth
from .scene_model import SceneSample, SyntheticSpec, generate_synthetic_sequence
from .signal_norm import NormalizationParams, denormalize_depth, denormalize_intensity, normalize_depth, normalize_intensity

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# bookkeeping
# ---------------------------------------------------------------------------


class JsonlLogger:
    def __init__(self, path: Path | None = None):
        self.path = Path(path) if path else None
        self.records: list[dict] = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def __call__(self, **rec):
        self.records.append(rec)
        if self.path:
            with self.path.open("a") as f:
                f.write(json.dumps(rec, sort_keys=True) + "\n")


def state_hash(params) -> str:
    h = hashlib.sha256()
    for p in params:
        h.update(p.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def build_models(cfg: dict) -> tuple[Codecs, DiffusionUNet]:
    m = cfg["model"]
    codecs = Codecs(tuple(m["ae_widths"]), m["latent_channels"], m["token_dim"])
    unet = DiffusionUNet(m["latent_channels"], tuple(m["unet_widths"]), m["token_dim"], m["heads"], m["d_head"], m["fourier_bands"])
    return codecs, unet


def input_config(cfg: dict, crop_mode: str = "centered") -> InputConfig:
    return InputConfig(size=cfg["D"], alpha=cfg["alpha_depth"], lam=cfg["lambda_intensity"],
                       box_expand=cfg["box_expand"], crop_mode=crop_mode)


def selection_filter(cfg: dict) -> SelectionFilter:
    f = cfg["filters"]
    return SelectionFilter(f["min_lidar_points"], tuple(f["min_box_px"]), f["max_iou"], f["min_visibility"],
                           tuple(f["classes"]), f["quota"])


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


def make_scenes(cfg: dict, seed_offset: int = 0) -> list[SceneSample]:
    d = cfg["data"]
    spec = SyntheticSpec(n_objects=d["n_objects"])
    out = []
    for k in range(d["n_scenes"]):
        out += generate_synthetic_sequence(cfg["seed"] * 10_000 + seed_offset + k, spec, d["n_frames"])
    return out


@dataclass(eq=False)
class ItemSet:
    inputs: list[EditInputs]
    empty: list[bool]
    scenes: list[SceneSample] = field(default_factory=list)


def make_items(scenes, cfg: dict, rng: np.random.Generator, n: int, crop_mode: str = "centered") -> ItemSet:
    """Draw ``n`` training items (objects with tracked references, or empty boxes) and build their inputs."""
    cands = select_objects(scenes, selection_filter(cfg))
    db = build_empty_box_db(scenes, rng, target=cfg["data"]["empty_boxes"]) if cfg["p_empty"] > 0 else []
    idx = tracks(cands)
    icfg = input_config(cfg, crop_mode)
    inputs, empty, used = [], [], []
    for _ in range(20 * n):
        if len(inputs) >= n:
            break
        item = sample_training_item(cands, db, rng, cfg["p_empty"], AugmentConfig(), track_index=idx)
        try:
            x = prepare_inputs(item.scene, item.box, item.ref_img, icfg, seed=int(rng.integers(2**31)))
        except InpaintError:
            continue
        inputs.append(x)
        empty.append(item.empty)
        used.append(item.scene)
    return ItemSet(inputs, empty, used)


@dataclass(eq=False)
class LatentSet:
    z_cam: torch.Tensor
    z_range: torch.Tensor
    cond: ConditioningSet

    def __len__(self):
        return self.z_cam.shape[0]

    def take(self, idx) -> "LatentSet":
        idx = torch.as_tensor(idx, dtype=torch.long)
        return LatentSet(self.z_cam[idx], self.z_range[idx], self.cond.index(idx))


@torch.no_grad()
def encode_items(codecs: Codecs, items: ItemSet, chunk: int = 32) -> LatentSet:
    zc, zr, cs = [], [], []
    for k in range(0, len(items.inputs), chunk):
        batch = items.inputs[k : k + chunk]
        a, b = encode_targets(codecs, batch)
        zc.append(a)
        zr.append(b)
        cs.append(build_conditioning(codecs, batch, empty=items.empty[k : k + chunk]))
    return LatentSet(torch.cat(zc), torch.cat(zr), ConditioningSet.cat(cs))


# ---------------------------------------------------------------------------
# autoencoders
# ---------------------------------------------------------------------------


def _batches(n, batch, gen, steps):
    for _ in range(steps):
        yield torch.randint(0, n, (batch,), generator=gen)


def train_camera_ae(codecs: Codecs, crops: np.ndarray, stage: dict, gen: torch.Generator, logger=None) -> list[float]:
    """Camera crops ``N x D x D x 3`` in ``[0, 1]``; trains backbone plus camera in/out layers."""
    x_all = torch.as_tensor(crops, dtype=torch.float32).permute(0, 3, 1, 2) * 2 - 1
    ae = codecs.camera
    params = list(ae.parameters())
    opt = torch.optim.Adam(params, lr=stage["lr"])
    hist = []
    ae.train()
    for step, idx in enumerate(_batches(len(x_all), stage["batch"], gen, stage["steps"])):
        x = x_all[idx]
        rec, mean, logvar = ae(x, sample=True, generator=gen)
        loss = F.l1_loss(rec, x) + stage["kl_weight"] * kl_term(mean, logvar)
        opt.zero_grad()
        loss.backward()
        opt.step()
        hist.append(loss.item())
        if logger:
            logger(stage="camera_ae", step=step, loss=loss.item())
    ae.eval()
    return hist


def range_recon_loss(codecs: Codecs, x: torch.Tensor) -> torch.Tensor:
    return F.l1_loss(codecs.range.decode(codecs.range.encode(x)), x)


def train_range_adapters(codecs: Codecs, crops: np.ndarray, held_out: np.ndarray, stage: dict, gen: torch.Generator,
                         logger=None) -> tuple[list[float], float]:
    """Train only the range in/out adapters; restores the checkpoint with the lowest held-out loss."""
    x_all = torch.as_tensor(crops, dtype=torch.float32).permute(0, 3, 1, 2)
    x_val = torch.as_tensor(held_out, dtype=torch.float32).permute(0, 3, 1, 2)
    for p in codecs.backbone.parameters():
        p.requires_grad_(False)
    params = codecs.range.adapter_parameters()
    opt = torch.optim.Adam(params, lr=stage["lr"])
    disc = PatchDiscriminator(2) if stage["disc_weight"] > 0 else None
    d_opt = torch.optim.Adam(disc.parameters(), lr=stage["lr"]) if disc else None

    def evaluate():
        with torch.no_grad():
            return float(range_recon_loss(codecs, x_val))

    best, best_state, hist = evaluate(), copy.deepcopy(codecs.range.state_dict()), []
    for step, idx in enumerate(_batches(len(x_all), stage["batch"], gen, stage["steps"])):
        x = x_all[idx]
        rec, mean, logvar = codecs.range(x, sample=True, generator=gen)
        loss = F.l1_loss(rec, x) + stage["kl_weight"] * kl_term(mean, logvar)
        if disc is not None:
            loss = loss - stage["disc_weight"] * disc(rec).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
        if disc is not None:
            # hinge critic update
            d_loss = F.relu(1 - disc(x)).mean() + F.relu(1 + disc(rec.detach())).mean()
            d_opt.zero_grad()
            d_loss.backward()
            d_opt.step()
        hist.append(loss.item())
        if logger:
            logger(stage="range_ae", step=step, loss=loss.item())
        if (step + 1) % stage["eval_every"] == 0 or step + 1 == stage["steps"]:
            val = evaluate()
            if logger:
                logger(stage="range_ae", step=step, val_loss=val)
            if val < best:
                best, best_state = val, copy.deepcopy(codecs.range.state_dict())
    codecs.range.load_state_dict(best_state)
    for p in codecs.backbone.parameters():
        p.requires_grad_(True)
    codecs.eval()
    return hist, best


# ---------------------------------------------------------------------------
# denoiser
# ---------------------------------------------------------------------------


def eval_loss(model, data: LatentSet, schedule: NoiseSchedule, seed: int = 1234) -> float:
    """Loss on fixed timesteps and noise, comparable across training steps."""
    g = torch.Generator().manual_seed(seed)
    t = torch.randint(0, schedule.T_train, (len(data),), generator=g)
    with torch.no_grad():
        return float(training_loss(model, data.z_cam, data.z_range, data.cond, schedule, g, t=t))


def pretrain_base(model: DiffusionUNet, data: LatentSet, stage: dict, schedule: NoiseSchedule, gen: torch.Generator,
                  logger=None) -> list[float]:
    """Train the base denoiser with the adapters bypassed.

    With ``modalities="camera"`` only the camera loss is used, so the base
    has never seen range latents, as with an image-only pretrained model.
    """
    weights = (1.0, 0.0) if stage.get("modalities", "camera") == "camera" else (0.5, 0.5)
    base = model.base_parameters()
    opt = torch.optim.AdamW(base, lr=stage["lr"], weight_decay=0.0)
    base_only = lambda zc, zr, t, c: model(zc, zr, t, c, use_adapters=False)
    hist = []
    model.train()
    for step, idx in enumerate(_batches(len(data), stage["batch"], gen, stage["steps"])):
        b = data.take(idx)
        loss = training_loss(base_only, b.z_cam, b.z_range, b.cond, schedule, gen, weights=weights)
        opt.zero_grad()
        loss.backward()
        opt.step()
        hist.append(loss.item())
        if logger:
            logger(stage="base", step=step, loss=loss.item())
    model.eval()
    return hist


@dataclass
class FinetuneResult:
    history: list[float]
    eval_history: list[tuple[int, float]]
    top_k: list[tuple[float, int, dict]]  # (eval loss, step, trainable state)
    initial_eval: float
    final_eval: float
    base_hash_before: str
    base_hash_after: str


def trainable_state(model: DiffusionUNet) -> dict:
    ids = {id(p) for p in model.trainable_parameters()}
    return {n: p.detach().clone() for n, p in model.named_parameters() if id(p) in ids}


def finetune(model: DiffusionUNet, data: LatentSet, held_out: LatentSet, stage: dict, schedule: NoiseSchedule,
             gen: torch.Generator, logger=None) -> FinetuneResult:
    """Adapter fine-tune at a constant learning rate, base frozen."""
    model.freeze_base()
    before = state_hash(model.base_parameters())
    opt = torch.optim.AdamW(model.trainable_parameters(), lr=stage["lr"], weight_decay=0.0)
    init = eval_loss(model, held_out, schedule)
    hist, evals, top = [], [(0, init)], []
    model.train()
    for step, idx in enumerate(_batches(len(data), stage["batch"], gen, stage["steps"])):
        b = data.take(idx)
        loss = training_loss(model, b.z_cam, b.z_range, b.cond, schedule, gen)
        opt.zero_grad()
        loss.backward()
        opt.step()
        hist.append(loss.item())
        if logger:
            logger(stage="finetune", step=step, loss=loss.item())
        if (step + 1) % stage["eval_every"] == 0 or step + 1 == stage["steps"]:
            model.eval()
            val = eval_loss(model, held_out, schedule)
            model.train()
            evals.append((step + 1, val))
            if logger:
                logger(stage="finetune", step=step, val_loss=val)
            top.append((val, step + 1, trainable_state(model)))
            top = sorted(top, key=lambda r: (r[0], r[1]))[: stage["top_k"]]
    model.eval()
    return FinetuneResult(hist, evals, top, init, evals[-1][1], before, state_hash(model.base_parameters()))


def pick_by_realism(model, codecs, top_k, scenes, cfg, n_edits: int, steps: int) -> tuple[int, list[float]]:
    """Index into ``top_k`` with the lowest Frechet distance on reinsertion edits."""
    cands = select_objects(scenes, selection_filter(cfg))[: max(n_edits, 2)]
    if len(cands) < 2 or len(top_k) == 1:
        return 0, []
    scores = []
    for _, _, state in top_k:
        model.load_state_dict(state, strict=False)
        recs = []
        for k, c in enumerate(cands):
            try:
                r = edit_scene(model, codecs, c.scene, c.box, "reinsert", seed=k, steps=steps,
                               cfg_scale=cfg["cfg_scale"], input_cfg=input_config(cfg))
            except InpaintError:
                continue
            recs.append(EditRecord(c.scene, r.scene, c.box))
        scores.append(realism_report(recs).fid if len(recs) >= 2 else float("inf"))
    best = int(np.argmin(scores))
    model.load_state_dict(top_k[best][2], strict=False)
    return best, scores


# ---------------------------------------------------------------------------
# whole run
# ---------------------------------------------------------------------------


@dataclass
class TrainRun:
    codecs: Codecs
    model: DiffusionUNet
    finetune: FinetuneResult
    logger: JsonlLogger
    realism_scores: list[float]
    chosen: int


def run_training(cfg: dict, out_dir=None) -> TrainRun:
    """All four stages, seed-deterministic. Writes JSONL logs and checkpoints when ``out_dir`` is given."""
    t0 = time.time()
    torch.manual_seed(cfg["seed"])
    gen = torch.Generator().manual_seed(cfg["seed"])
    rng = np.random.default_rng(cfg["seed"])
    out = Path(out_dir) if out_dir else None
    logger = JsonlLogger(out / "train_log.jsonl" if out else None)
    schedule = NoiseSchedule(cfg["T_train"])

    scenes = make_scenes(cfg)
    held_scenes = make_scenes(cfg, seed_offset=5000)
    items = make_items(scenes, cfg, rng, cfg["data"]["n_items"])
    held = make_items(held_scenes, cfg, rng, max(cfg["data"]["n_eval"], 4) * 4)
    log.info("built %d training and %d held-out items", len(items.inputs), len(held.inputs))

    codecs, model = build_models(cfg)
    cam_crops = np.stack([x.x_cam for x in items.inputs] + [x.x_cam for x in held.inputs])
    train_camera_ae(codecs, cam_crops, cfg["camera_ae"], gen, logger)
    rng_crops = np.stack([x.x_range for x in items.inputs])
    train_range_adapters(codecs, rng_crops, np.stack([x.x_range for x in held.inputs]), cfg["range_ae"], gen, logger)
    codecs.requires_grad_(False)

    data = encode_items(codecs, items)
    held_data = encode_items(codecs, held)
    pretrain_base(model, data, cfg["base"], schedule, gen, logger)
    ft = finetune(model, data, held_data, cfg["finetune"], schedule, gen, logger)
    chosen, scores = pick_by_realism(model, codecs, ft.top_k, held_scenes, cfg, cfg["data"]["n_eval"],
                                     cfg["finetune"]["select_steps"])
    logger(stage="select", chosen_step=ft.top_k[chosen][1] if ft.top_k else 0, fid=scores,
           seconds=round(time.time() - t0, 3))
    if out:
        save_checkpoint(out / "model.pt", cfg, codecs, model)
        ckdir = out / "checkpoints"
        ckdir.mkdir(parents=True, exist_ok=True)
        for rank, (val, step, state) in enumerate(ft.top_k):
            torch.save({"step": step, "eval_loss": val, "trainable": state}, ckdir / f"top{rank}_step{step:06d}.pt")
    return TrainRun(codecs, model, ft, logger, scores, chosen)


def save_checkpoint(path, cfg, codecs, model):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"config": cfg, "codecs": codecs.state_dict(), "unet": model.state_dict()}, path)


def load_checkpoint(path):
    blob = torch.load(path, map_location="cpu", weights_only=False)
    codecs, model = build_models(blob["config"])
    codecs.load_state_dict(blob["codecs"])
    model.load_state_dict(blob["unet"])
    return blob["config"], codecs.eval(), model.eval()


# ---------------------------------------------------------------------------
# range codec ablation
# ---------------------------------------------------------------------------


def _linear_intensity(i):
    return 2.0 * np.clip(i, 0, 255) / 255.0 - 1.0


def _linear_intensity_inv(x):
    return np.clip((x + 1.0) / 2.0 * 255.0, 0, 255)


@torch.no_grad()
def range_roundtrip(encode_decode, view: RangeView, box, size: int, resize: str, object_aware: bool,
                    lam: float = 4.0, alpha: float = 0.5, box_expand: float = 0.1) -> tuple[RangeView, np.ndarray]:
    """Crop, normalize, encode/decode, resize back and denormalize the box's range window.

    Without ``object_aware`` depth is linearly normalized and intensity
    linearly scaled. Pixels outside the window keep their original values.
    Returns the reconstructed view and the window mask.
    """
    crop = make_crop(project_box_range(box), size=size)
    if object_aware:
        params = NormalizationParams.for_box(box, lam=lam, alpha=alpha, box_expand=box_expand)
    raw = crop_range(np.stack([view.depth, view.intensity], axis=-1), crop, "avg" if resize == "avg" else "nearest")
    d = depth_to_unit(raw[..., 0])
    if object_aware:
        x = np.stack([normalize_depth(d, params), normalize_intensity(np.clip(raw[..., 1], 0, 255), lam)], axis=-1)
    else:
        x = np.stack([np.clip(d, -1, 1), _linear_intensity(raw[..., 1])], axis=-1)
    t = torch.as_tensor(x, dtype=torch.float32).permute(2, 0, 1)[None]
    y = encode_decode(t)[0].clamp(-1, 1).permute(1, 2, 0).double().numpy()
    win = uncrop_range(y, crop, resize)
    if object_aware:
        depth = unit_to_depth(denormalize_depth(win[..., 0], params))
        inten = denormalize_intensity(win[..., 1], lam)
    else:
        depth = unit_to_depth(win[..., 0])
        inten = _linear_intensity_inv(win[..., 1])
    cols = crop.source_columns()
    new = view.copy()
    new.depth[:, cols] = depth
    new.intensity[:, cols] = inten
    mask = np.zeros(view.shape, dtype=bool)
    mask[:, cols] = True
    return new, mask


ABLATION_ROWS = ("naive", "avg_pool", "object_aware", "range_adapters")


def range_codec_ablation(codecs: Codecs, scenes, size: int = 64, lam: float = 4.0, alpha: float = 0.5,
                         box_expand: float = 0.1, rows=ABLATION_ROWS) -> dict[str, ReconstructionReport]:
    """Cumulative range-encoding variants, reported as median-aggregated reconstruction errors.

    ``naive`` duplicates depth through the camera codec and resizes back by
    nearest neighbour; ``avg_pool`` adds average pooling; ``object_aware``
    adds object-aware depth and exponential intensity normalization;
    ``range_adapters`` swaps in the trained range adapters.
    """
    naive = NaiveRangeCodec(codecs.camera)
    settings = {
        "naive": (lambda t: naive.decode(naive.encode(t)), "nearest", False),
        "avg_pool": (lambda t: naive.decode(naive.encode(t)), "avg", False),
        "object_aware": (lambda t: naive.decode(naive.encode(t)), "avg", True),
        "range_adapters": (lambda t: codecs.range.decode(codecs.range.encode(t)), "avg", True),
    }
    per_row = {r: [] for r in rows}
    for s in scenes:
        view = project(s.lidar)
        for box in s.boxes:
            try:
                project_box_range(box)
            except InpaintError:
                continue
            for r in rows:
                fn, resize, oa = settings[r]
                recon, mask = range_roundtrip(fn, view, box, size, resize, oa, lam, alpha, box_expand)
                rep = reconstruction_metrics(view, recon, box, mask, s.lidar)
                if rep.object_present:
                    per_row[r].append(rep)
    out = {}
    for r, reps in per_row.items():
        vals = lambda f: float(np.median([getattr(x, f) for x in reps])) if reps else float("nan")
        out[r] = ReconstructionReport(vals("median_depth_error_object"), vals("median_depth_error_mask"),
                                      vals("mse_intensity_object"), vals("mse_intensity_mask"), bool(reps),
                                      len(reps), 0)
    return out
