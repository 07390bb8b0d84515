"""Command-line entry point: ``mminpaint {train,edit,selftest,metrics,gen-synthetic}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .config import load_config
from .conditioning import reference_crop
from .editing import MODES, edit_scene
from .errors import ConfigError, InpaintError
from .metrics import EditRecord, realism_report, reconstruction_metrics
from .range_codec import depth_to_unit, project
from .scene_model import Box3D, SyntheticSpec, export_scene, generate_synthetic_sequence, load_scene

log = logging.getLogger("mminpaint")


def _overrides(args) -> dict:
    return {"seed": args.seed} if getattr(args, "seed", None) is not None else {}


def _find_box(scene, instance_id: str) -> Box3D:
    for b in scene.boxes:
        if b.instance_id == instance_id:
            return b
    known = ", ".join(b.instance_id for b in scene.boxes) or "none"
    raise ConfigError(f"no box {instance_id!r} in scene (available: {known})", "/box")


def _box_from_json(path) -> Box3D:
    d = json.loads(Path(path).read_text())
    corners = np.asarray(d["corners"], dtype=np.float64).reshape(8, 3)
    return Box3D(corners, d.get("category", "car"), d.get("instance_id", "inserted"))


def write_previews(scene, out_dir) -> None:
    """Camera image plus depth and intensity rasters of the range view, as PNG."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    view = project(scene.lidar)
    depth = (1.0 - (np.clip(depth_to_unit(view.depth), -1, 1) + 1) / 2) * view.filled
    inten = np.clip(view.intensity / 255.0, 0, 1)
    to_u8 = lambda a: np.clip(np.round(a * 255), 0, 255).astype(np.uint8)
    Image.fromarray(to_u8(scene.camera.image), mode="RGB").save(out / "camera.png")
    Image.fromarray(to_u8(depth), mode="L").save(out / "depth.png")
    Image.fromarray(to_u8(inten), mode="L").save(out / "intensity.png")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    from .pipeline import run_training

    cfg = load_config(args.config, _overrides(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    run = run_training(cfg, out)
    ft = run.finetune
    print(json.dumps({
        "initial_eval_loss": ft.initial_eval,
        "final_eval_loss": ft.final_eval,
        "base_unchanged": ft.base_hash_before == ft.base_hash_after,
        "chosen_step": ft.top_k[run.chosen][1] if ft.top_k else None,
        "checkpoint": str(out / "model.pt"),
    }, indent=2))
    return 0


def cmd_edit(args) -> int:
    from .pipeline import build_models, input_config, load_checkpoint

    if args.checkpoint:
        cfg, codecs, model = load_checkpoint(args.checkpoint)
    else:
        cfg = load_config(args.config, _overrides(args))
        torch.manual_seed(cfg["seed"])
        codecs, model = build_models(cfg)
        codecs.eval()
        model.eval()
    scene = load_scene(args.scene)
    if args.mode == "insert":
        if not args.box_json:
            raise ConfigError("insert needs --box-json", "/box_json")
        box = _box_from_json(args.box_json)
    else:
        if not args.box:
            raise ConfigError(f"{args.mode} needs --box", "/box")
        box = _find_box(scene, args.box)
    ref = None
    if args.reference:
        ref_scene = load_scene(args.reference)
        ref = reference_crop(ref_scene, _find_box(ref_scene, args.reference_box or box.instance_id))
    elif args.mode in ("replace", "insert"):
        raise ConfigError(f"{args.mode} needs --reference", "/reference")
    steps = args.steps if args.steps is not None else cfg["steps"]
    res = edit_scene(model, codecs, scene, box, args.mode, ref_img=ref, seed=args.seed or 0, steps=steps,
                     cfg_scale=cfg["cfg_scale"], input_cfg=input_config(cfg), resize_mode=cfg["resize"])
    out = Path(args.out)
    export_scene(res.scene, out / "scene")
    write_previews(res.scene, out / "previews")
    write_previews(scene, out / "previews_original")
    summary = {**res.scene.meta["edit"], "camera_pixels": int((res.alpha > 0).sum()),
               "range_pixels": int(res.mask.range_replaced.sum()), "steps": steps, "cfg_scale": cfg["cfg_scale"]}
    (out / "edit.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps({**summary, "out": str(out)}))
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest(args.inject_fault)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<20s} {r.seconds:7.3f}s  {r.detail}")
    ok = all(r.passed for r in results)
    print("all checks passed" if ok else "self-test FAILED")
    return 0 if ok else 1


def cmd_metrics(args) -> int:
    records, lines = [], []
    for spec in args.pairs:
        try:
            orig_dir, edit_dir, inst = spec.split(":")
        except ValueError:
            raise ConfigError(f"pair must be ORIGINAL:EDITED:INSTANCE_ID, got {spec!r}", "/pairs") from None
        orig, edited = load_scene(orig_dir), load_scene(edit_dir)
        box = _find_box(orig, inst)
        ov, ev = project(orig.lidar), project(edited.lidar)
        rep = reconstruction_metrics(ov, ev, box, ov.filled | ev.filled, orig.lidar)
        lines.append({"pair": spec, **rep.__dict__})
        records.append(EditRecord(orig, edited, box))
    if len(records) >= 2:
        lines.append({"realism": realism_report(records, args.backbone).__dict__})
    text = "\n".join(json.dumps(x, sort_keys=True) for x in lines)
    print(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "a") as f:
            f.write(text + "\n")
    return 0


def cmd_gen_synthetic(args) -> int:
    spec = SyntheticSpec(n_objects=args.objects, rainy=args.rainy, night=args.night)
    out = Path(args.out)
    frames = generate_synthetic_sequence(args.seed or 0, spec, args.frames)
    for k, f in enumerate(frames):
        export_scene(f, out / f"frame_{k:03d}")
    print(json.dumps({"frames": len(frames), "boxes": [b.instance_id for b in frames[0].boxes], "out": str(out)}))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mminpaint", description="Multimodal camera and lidar object inpainting.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="YAML or JSON config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=out_required)

    sp = sub.add_parser("train", help="train autoencoders, base denoiser and adapters")
    common(sp)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("edit", help="reinsert, replace, insert or delete an object")
    common(sp)
    sp.add_argument("--checkpoint", help="model.pt from train; untrained models are used when omitted")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--mode", choices=MODES, default="reinsert")
    sp.add_argument("--box", help="instance id of the edited box")
    sp.add_argument("--box-json", help="box file for insert: corners (8x3), category, instance_id")
    sp.add_argument("--reference", help="scene directory holding the reference object")
    sp.add_argument("--reference-box", help="instance id of the reference object")
    sp.add_argument("--steps", type=int)
    sp.set_defaults(fn=cmd_edit)

    sp = sub.add_parser("selftest", help="fast installation checks")
    sp.add_argument("--inject-fault", choices=["gate"], help="perturb the gate init to exercise the failure path")
    sp.set_defaults(fn=cmd_selftest)

    sp = sub.add_parser("metrics", help="reconstruction and realism metrics of edited scenes")
    sp.add_argument("pairs", nargs="+", metavar="ORIGINAL:EDITED:INSTANCE_ID")
    sp.add_argument("--backbone", default="random-conv")
    sp.add_argument("--out", help="append JSONL results here")
    sp.set_defaults(fn=cmd_metrics)

    sp = sub.add_parser("gen-synthetic", help="write a synthetic multi-frame scene")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--frames", type=int, default=1)
    sp.add_argument("--objects", type=int, default=3)
    sp.add_argument("--rainy", action="store_true")
    sp.add_argument("--night", action="store_true")
    sp.set_defaults(fn=cmd_gen_synthetic)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InpaintError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
