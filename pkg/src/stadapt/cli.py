"""Command-line entry points.

Every subcommand accepts ``--config FILE`` (flat ``section.key = value``
text) plus ``--set section.key=value`` overrides; dedicated flags win over
both. Commands exit 0 on success and print one diagnostic line to stderr on
failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .adapt import adapt, train_source_only
from .checkpoint import (checkpoint_from_model, load_checkpoint, save_checkpoint)
from .config import (adapt_config_from, format_config, merge_overrides,
                     model_config_from, model_config_to_mapping,
                     parse_config_file, pretrain_config_from)
from .data import build_adaptation_pool, load_clip, load_manifest
from .metrics import MetricsReport
from .model import build_model
from .perturb import parse_perturbation
from .pretrain import pretrain
from .protocol import protocol_from_mapping, run_protocol, run_robustness
from .saliency import saliency_map
from .scoring import (DEFAULT_EVAL_CLIPS, evaluate_manifest, export_embeddings)
from .synth import SyntheticSpec, make_synthetic_dataset
from .utils import file_sha256


def _mapping_from(args, extra: dict[str, str] | None = None) -> dict[str, str]:
    mapping = parse_config_file(args.config) if getattr(args, "config", None) else {}
    mapping = merge_overrides(mapping, getattr(args, "set", None) or [])
    for key, value in (extra or {}).items():
        if value is not None:
            mapping[key] = str(value)
    return mapping


def _write_run_provenance(out: Path, mapping: dict[str, str],
                          inputs: dict[str, Path]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.cfg").write_text(format_config(mapping))
    lines = [f"{name}\t{file_sha256(p)}\t{p}" for name, p in sorted(inputs.items())]
    if lines:
        (out / "inputs.sha256").write_text("\n".join(lines) + "\n")


def _load_model(checkpoint_path: str):
    ckpt = load_checkpoint(checkpoint_path)
    model = build_model(ckpt.config, seed=0)
    from .checkpoint import load_into_model
    load_into_model(ckpt, model)
    model.eval()
    return ckpt, model


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_videos=args.n_videos,
        frames_per_video=args.frames_per_video,
        forgery_families=tuple(args.families.split(",")) if args.families else (),
        domain_style=args.style,
        seed=args.seed,
        image_size=args.image_size,
    )
    manifest = make_synthetic_dataset(spec, args.out, role=args.role)
    print(f"wrote {len(manifest)} videos under {args.out}")
    return 0


def cmd_pretrain(args) -> int:
    mapping = _mapping_from(args, {
        "model.preset": args.preset,
        "pretrain.epochs": args.epochs,
        "run.seed": args.seed,
    })
    model_cfg = model_config_from(mapping)
    pre_cfg = pretrain_config_from(mapping)
    if args.no_detach_target:
        import dataclasses
        pre_cfg = dataclasses.replace(pre_cfg, detach_target=False)
    seed = int(mapping.get("run.seed", "0"))
    out = Path(args.out)
    manifest = load_manifest(args.manifest, role="pretrain", clip_len=model_cfg.clip_len)
    mapping.update(model_config_to_mapping(model_cfg))
    _write_run_provenance(out, mapping, {"pretrain_manifest": Path(args.manifest)})
    ckpt = pretrain(manifest, model_cfg, pre_cfg, seed,
                    log_path=out / "pretrain_log.csv")
    content = save_checkpoint(ckpt, out / "pretrain.ckpt")
    print(f"pretrain checkpoint {out / 'pretrain.ckpt'} ({content[:12]})")
    return 0


def _head_training(args, source_only: bool) -> int:
    mapping = _mapping_from(args, {
        "adapt.epochs": args.epochs,
        "run.seed": args.seed,
    })
    ad_cfg = adapt_config_from(mapping)
    seed = int(mapping.get("run.seed", "0"))
    ckpt = load_checkpoint(args.checkpoint)
    model_cfg = ckpt.config
    out = Path(args.out)
    source = load_manifest(args.source_manifest, role="source", clip_len=model_cfg.clip_len)
    inputs = {"checkpoint": Path(args.checkpoint), "source_manifest": Path(args.source_manifest)}
    if source_only:
        _write_run_provenance(out, mapping, inputs)
        heads = train_source_only(ckpt, source, model_cfg, ad_cfg, seed,
                                  log_path=out / "train_log.csv",
                                  allow_unpretrained=args.allow_unpretrained)
        name = "source_only.ckpt"
    else:
        target = load_manifest(args.target_manifest, role="target", clip_len=model_cfg.clip_len)
        inputs["target_manifest"] = Path(args.target_manifest)
        _write_run_provenance(out, mapping, inputs)
        pool = build_adaptation_pool(
            source, target, args.target_ratio,
            np.random.default_rng(seed))
        heads = adapt(ckpt, pool, model_cfg, ad_cfg, seed,
                      log_path=out / "train_log.csv",
                      allow_unpretrained=args.allow_unpretrained)
        name = "adapt.ckpt"
    content = save_checkpoint(heads, out / name)
    print(f"checkpoint {out / name} ({content[:12]})")
    return 0


def cmd_adapt(args) -> int:
    return _head_training(args, source_only=False)


def cmd_train_source_only(args) -> int:
    return _head_training(args, source_only=True)


def cmd_eval(args) -> int:
    ckpt, model = _load_model(args.checkpoint)
    manifest = load_manifest(args.manifest, role="eval", clip_len=ckpt.config.clip_len)
    perturbation = parse_perturbation(args.perturb) if args.perturb else None
    report = evaluate_manifest(manifest, model, protocol=args.protocol_name,
                               n_eval_clips=args.n_eval_clips,
                               perturbation=perturbation, perturb_seed=args.seed)
    out = Path(args.out)
    report.save(out)
    print(report.to_text(), end="")
    return 0


def cmd_robustness(args) -> int:
    ckpt, _ = _load_model(args.checkpoint)
    manifest = load_manifest(args.manifest, role="eval", clip_len=ckpt.config.clip_len)
    results = run_robustness(ckpt, manifest, args.out,
                             n_eval_clips=args.n_eval_clips, seed=args.seed)
    print(f"{len(results)} reports under {Path(args.out) / 'reports'}")
    return 0


def cmd_embed(args) -> int:
    ckpt, model = _load_model(args.checkpoint)
    manifest = load_manifest(args.manifest, role="eval", clip_len=ckpt.config.clip_len)
    path = export_embeddings(manifest, model, args.layer, args.out,
                             n_eval_clips=args.n_eval_clips)
    print(f"embeddings written to {path}")
    return 0


def cmd_saliency(args) -> int:
    ckpt, model = _load_model(args.checkpoint)
    manifest = load_manifest(args.manifest, role="eval", clip_len=ckpt.config.clip_len)
    by_id = {rec.video_id: rec for rec in manifest.records}
    if args.video_id not in by_id:
        raise ValueError(f"video_id {args.video_id!r} not in manifest")
    clip = load_clip(by_id[args.video_id], args.offset, ckpt.config.clip_len)
    cam = saliency_map(clip, model, args.target_class)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.save(out, cam)
    if args.png_dir:
        from PIL import Image
        png_dir = Path(args.png_dir)
        png_dir.mkdir(parents=True, exist_ok=True)
        for i in range(cam.shape[0]):
            frame = (cam[i] * 255.0 + 0.5).astype(np.uint8)
            scale = max(1, 128 // frame.shape[0])
            frame = np.repeat(np.repeat(frame, scale, 0), scale, 1)
            Image.fromarray(frame, mode="L").save(png_dir / f"{i:06d}.png")
    print(f"saliency map {cam.shape} written to {out}")
    return 0


def cmd_protocol(args) -> int:
    mapping = merge_overrides(parse_config_file(args.config_file), args.set or [])
    spec = protocol_from_mapping(mapping, out_dir=args.out)
    results = run_protocol(spec)
    print(f"{len(results)} reports under {spec.out_dir / 'reports'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stadapt",
        description="Face-forgery video detection: frozen spatiotemporal backbone "
                    "with latent adaptation to unlabeled target videos.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="flat key=value config file")
            p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                           help="override a config entry")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth", help="generate a synthetic video dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-videos", type=int, required=True)
    p.add_argument("--frames-per-video", type=int, default=26)
    p.add_argument("--families", default="", help="comma list from seam,flicker,checker")
    p.add_argument("--style", default="clean", choices=("clean", "noisy", "compressed"))
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--role", default="eval", choices=("source", "target", "pretrain", "eval"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pretrain", help="self-supervised backbone initialization")
    common(p)
    p.add_argument("--manifest", required=True, help="real-only manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=("paper-default", "desk-reduced"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--no-detach-target", action="store_true",
                   help="let gradients flow into the reconstruction target")
    p.set_defaults(func=cmd_pretrain)

    for name, handler, needs_target in (("adapt", cmd_adapt, True),
                                        ("train-source-only", cmd_train_source_only, False)):
        p = sub.add_parser(name, help=f"{name} head training over a frozen backbone")
        common(p)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--source-manifest", required=True)
        if needs_target:
            p.add_argument("--target-manifest", required=True)
            p.add_argument("--target-ratio", type=float, default=0.1)
        p.add_argument("--out", required=True)
        p.add_argument("--epochs", type=int)
        p.add_argument("--allow-unpretrained", action="store_true")
        p.set_defaults(func=handler)

    p = sub.add_parser("eval", help="score a manifest and report metrics")
    common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--perturb", help="kind:severity, e.g. noise:3")
    p.add_argument("--n-eval-clips", type=int, default=DEFAULT_EVAL_CLIPS)
    p.add_argument("--protocol-name", default="eval")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("robustness", help="full 7x5 perturbation grid evaluation")
    common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-eval-clips", type=int, default=DEFAULT_EVAL_CLIPS)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("embed", help="export per-video embeddings to TSV")
    common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--layer", choices=("z", "h"), default="h")
    p.add_argument("--out", required=True)
    p.add_argument("--n-eval-clips", type=int, default=DEFAULT_EVAL_CLIPS)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("saliency", help="class-activation map for one video clip")
    common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--video-id", required=True)
    p.add_argument("--target-class", type=int, default=1)
    p.add_argument("--offset", type=int, default=0)
    p.add_argument("--out", required=True, help="output .npy path")
    p.add_argument("--png-dir", help="also write per-frame heat map PNGs here")
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("protocol", help="run a full experiment from a config file")
    p.add_argument("config_file")
    p.add_argument("--out", help="override run.out from the config")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.set_defaults(func=cmd_protocol)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one diagnostic line, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())
