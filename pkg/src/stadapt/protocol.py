"""Experiment orchestration: pretrain -> adapt -> evaluate pipelines.

A protocol config describes data pools (on-disk manifests or synthetic
generation blocks), the seeds, which variants to run (adaptation and/or the
source-only baseline), optional pretraining data scales, and the
perturbation set for evaluation. Every run directory receives the resolved
config, input hashes, all checkpoints, per-stage CSV logs, one report file
per (variant, scale, seed, eval set, perturbation) cell, and an aggregate
table.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import synth as synthmod
from .adapt import adapt, train_source_only
from .checkpoint import (Checkpoint, checkpoint_from_model, load_into_model,
                         save_checkpoint)
from .config import (AdaptConfig, ModelConfig, PretrainConfig, ConfigError,
                     adapt_config_from, format_config, model_config_from,
                     model_config_to_mapping, pretrain_config_from)
from .data import DatasetManifest, build_adaptation_pool, load_manifest
from .metrics import MetricsReport
from .model import build_model
from .perturb import Perturbation, parse_perturbation, perturbation_grid
from .pretrain import pretrain
from .scoring import DEFAULT_EVAL_CLIPS, evaluate_manifest
from .utils import derive_seed, file_sha256

SYNTH_POOLS = ("pretrain", "source", "target", "eval")


@dataclass
class ProtocolSpec:
    name: str
    out_dir: Path
    seeds: tuple[int, ...]
    model_cfg: ModelConfig
    pretrain_cfg: PretrainConfig
    adapt_cfg: AdaptConfig
    pretrain_manifest: Path | None = None
    source_manifest: Path | None = None
    target_manifest: Path | None = None
    eval_manifests: tuple[Path, ...] = ()
    target_ratio: float = 0.1
    variants: tuple[str, ...] = ("adapt",)
    pretrain_scales: tuple[float, ...] = (1.0,)
    perturbations: tuple[Perturbation, ...] = ()
    include_clean: bool = True
    n_eval_clips: int = DEFAULT_EVAL_CLIPS
    synth_blocks: dict = field(default_factory=dict)
    raw_mapping: dict = field(default_factory=dict)


def _parse_seeds(raw: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in raw.replace(",", " ").split())


def _parse_perturbation_set(raw: str) -> tuple[Perturbation, ...]:
    raw = raw.strip()
    if raw in ("", "none"):
        return ()
    if raw == "grid":
        return tuple(perturbation_grid())
    return tuple(parse_perturbation(tok) for tok in raw.replace(",", " ").split())


def _synth_blocks(mapping: dict[str, str]) -> dict:
    blocks: dict[str, dict[str, str]] = {}
    for key, value in mapping.items():
        if not key.startswith("synth."):
            continue
        pool, _, option = key.partition("synth.")[2].partition(".")
        if pool not in SYNTH_POOLS or not option:
            raise ConfigError(f"bad synth key {key!r}; expected synth.<pool>.<option>")
        blocks.setdefault(pool, {})[option] = value
    return blocks


def protocol_from_mapping(mapping: dict[str, str], out_dir: Path | str | None = None) -> ProtocolSpec:
    model_cfg = model_config_from(mapping)
    pre_cfg = pretrain_config_from(mapping)
    ad_cfg = adapt_config_from(mapping)
    out = Path(out_dir) if out_dir else Path(mapping.get("run.out", "runs/protocol"))
    perturbations = _parse_perturbation_set(mapping.get("protocol.perturbations", "none"))

    def path_or_none(key):
        return Path(mapping[key]) if key in mapping else None

    evals = tuple(Path(tok) for tok in mapping.get("data.eval_manifests", "").split()) or ()
    return ProtocolSpec(
        name=mapping.get("run.name", "protocol"),
        out_dir=out,
        seeds=_parse_seeds(mapping.get("protocol.seeds", mapping.get("run.seed", "0"))),
        model_cfg=model_cfg,
        pretrain_cfg=pre_cfg,
        adapt_cfg=ad_cfg,
        pretrain_manifest=path_or_none("data.pretrain_manifest"),
        source_manifest=path_or_none("data.source_manifest"),
        target_manifest=path_or_none("data.target_manifest"),
        eval_manifests=evals,
        target_ratio=float(mapping.get("data.target_ratio", "0.1")),
        variants=tuple(mapping.get("protocol.variants", "adapt").replace(",", " ").split()),
        pretrain_scales=tuple(float(t) for t in
                              mapping.get("protocol.pretrain_scales", "1.0").replace(",", " ").split()),
        perturbations=perturbations,
        n_eval_clips=int(mapping.get("protocol.n_eval_clips", str(DEFAULT_EVAL_CLIPS))),
        synth_blocks=_synth_blocks(mapping),
        raw_mapping=dict(mapping),
    )


def _generate_pool(pool: str, block: dict[str, str], data_dir: Path,
                   model_cfg: ModelConfig) -> Path:
    families = tuple(block.get("families", "").replace(",", " ").split())
    spec = synthmod.SyntheticSpec(
        n_videos=int(block.get("n_videos", "10")),
        frames_per_video=int(block.get("frames_per_video", str(model_cfg.clip_len + 6))),
        forgery_families=families,
        domain_style=block.get("style", "clean"),
        seed=int(block.get("seed", "0")),
        image_size=int(block.get("image_size", str(model_cfg.image_size))),
    )
    role = pool if pool in ("pretrain", "source", "target") else "eval"
    synthmod.make_synthetic_dataset(spec, data_dir / pool, role=role)
    return data_dir / pool / "manifest.tsv"


def _scale_subset(manifest: DatasetManifest, scale: float, seed: int) -> DatasetManifest:
    if scale >= 1.0:
        return manifest
    keep = int(np.ceil(scale * len(manifest)))
    rng = np.random.default_rng(derive_seed(seed, "pretrain-scale-subset"))
    picked = sorted(rng.choice(len(manifest), size=keep, replace=False))
    return DatasetManifest(records=tuple(manifest.records[i] for i in picked),
                           name=f"{manifest.name}-scale{int(round(scale * 100))}",
                           role=manifest.role)


def _scale_tag(scale: float) -> str:
    return f"scale{int(round(scale * 100)):03d}"


def run_protocol(spec: ProtocolSpec) -> list[tuple[Path, MetricsReport]]:
    out = spec.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "checkpoints").mkdir(exist_ok=True)
    (out / "logs").mkdir(exist_ok=True)
    (out / "reports").mkdir(exist_ok=True)

    # synthesize any pools declared in the config that lack explicit manifests
    manifests = {
        "pretrain": spec.pretrain_manifest,
        "source": spec.source_manifest,
        "target": spec.target_manifest,
    }
    eval_paths = list(spec.eval_manifests)
    for pool, block in spec.synth_blocks.items():
        path = _generate_pool(pool, block, out / "data", spec.model_cfg)
        if pool == "eval":
            eval_paths.append(path)
        elif manifests.get(pool) is None:
            manifests[pool] = path

    if manifests["source"] is None:
        raise ConfigError("protocol needs a source manifest (data.source_manifest or synth.source.*)")
    if not eval_paths:
        if manifests["target"] is None:
            raise ConfigError("protocol needs eval manifests or a target manifest")
        eval_paths = [manifests["target"]]

    clip_len = spec.model_cfg.clip_len
    source = load_manifest(manifests["source"], role="source", clip_len=clip_len)
    target = (load_manifest(manifests["target"], role="target", clip_len=clip_len)
              if manifests["target"] else None)
    pretrain_manifest = (load_manifest(manifests["pretrain"], role="pretrain", clip_len=clip_len)
                         if manifests["pretrain"] else None)
    eval_sets = [load_manifest(p, role="eval", clip_len=clip_len) for p in eval_paths]

    needs_pretrain = any(s > 0 for s in spec.pretrain_scales)
    if needs_pretrain and pretrain_manifest is None:
        raise ConfigError("pretrain_scales > 0 need a pretrain manifest")
    if "adapt" in spec.variants and target is None:
        raise ConfigError("the adapt variant needs a target manifest")

    # provenance: resolved config + input hashes
    resolved = dict(spec.raw_mapping)
    resolved.update(model_config_to_mapping(spec.model_cfg))
    (out / "config.resolved.cfg").write_text(format_config(resolved))
    hash_lines = [f"{name}\t{file_sha256(path)}\t{path}"
                  for name, path in sorted(
                      {**{k: v for k, v in manifests.items() if v},
                       **{f"eval{i}": p for i, p in enumerate(eval_paths)}}.items())]
    (out / "inputs.sha256").write_text("\n".join(hash_lines) + "\n")

    results: list[tuple[Path, MetricsReport]] = []
    perturb_cells: list[Perturbation | None] = [None] if spec.include_clean else []
    perturb_cells += list(spec.perturbations)

    for scale in spec.pretrain_scales:
        for seed in spec.seeds:
            tag = f"{_scale_tag(scale)}_seed{seed}"
            if scale > 0:
                subset = _scale_subset(pretrain_manifest, scale, seed)
                backbone = pretrain(subset, spec.model_cfg, spec.pretrain_cfg, seed,
                                    log_path=out / "logs" / f"pretrain_{tag}.csv")
            else:
                backbone = checkpoint_from_model(build_model(spec.model_cfg, seed), phase="init")
            save_checkpoint(backbone, out / "checkpoints" / f"backbone_{tag}.ckpt")

            for variant in spec.variants:
                if variant == "adapt":
                    pool = build_adaptation_pool(
                        source, target, spec.target_ratio,
                        np.random.default_rng(derive_seed(seed, "protocol.pool")))
                    heads = adapt(backbone, pool, spec.model_cfg, spec.adapt_cfg, seed,
                                  log_path=out / "logs" / f"adapt_{tag}.csv",
                                  allow_unpretrained=True)
                elif variant == "source-only":
                    heads = train_source_only(backbone, source, spec.model_cfg,
                                              spec.adapt_cfg, seed,
                                              log_path=out / "logs" / f"source_only_{tag}.csv",
                                              allow_unpretrained=True)
                else:
                    raise ConfigError(f"unknown variant {variant!r}")
                save_checkpoint(heads, out / "checkpoints" / f"{variant}_{tag}.ckpt")

                model = build_model(spec.model_cfg, seed)
                load_into_model(heads, model)
                model.eval()
                for eval_set in eval_sets:
                    for cell in perturb_cells:
                        label = "clean" if cell is None else str(cell).replace(":", "-")
                        descriptor = f"{spec.name}/{variant}/{tag}/{eval_set.name}"
                        report = evaluate_manifest(
                            eval_set, model, protocol=descriptor,
                            n_eval_clips=spec.n_eval_clips,
                            perturbation=cell, perturb_seed=seed)
                        path = out / "reports" / f"{variant}_{tag}_{eval_set.name}_{label}.txt"
                        report.save(path)
                        results.append((path, report))

    _write_table(out / "reports_table.tsv", results)
    if spec.perturbations:
        _write_robustness_summary(out / "robustness_summary.tsv", results)
    return results


def _write_table(path: Path, results: list[tuple[Path, MetricsReport]]) -> None:
    rows = ["\t".join(["report", "protocol", "perturbation", "n_videos",
                       "acc", "auc", "eer"])]
    for rpath, rep in results:
        rows.append("\t".join([
            rpath.name, rep.protocol, rep.perturbation or "none", str(rep.n_videos),
            _cell(rep.acc), _cell(rep.auc), _cell(rep.eer)]))
    path.write_text("\n".join(rows) + "\n")


def _cell(value: float | None) -> str:
    return "undefined" if value is None else f"{value:.4f}"


def _write_robustness_summary(path: Path, results: list[tuple[Path, MetricsReport]]) -> None:
    """Per-kind AUC averaged over severities, next to the clean AUC."""
    from .perturb import KINDS

    clean: list[float] = []
    by_kind: dict[str, list[float]] = {k: [] for k in KINDS}
    for _, rep in results:
        if rep.auc is None:
            continue
        if rep.perturbation is None:
            clean.append(rep.auc)
        else:
            kind = rep.perturbation.split(":")[0]
            if kind in by_kind:
                by_kind[kind].append(rep.auc)
    header = ["clean"] + list(KINDS) + ["avg", "drop"]
    clean_auc = float(np.mean(clean)) if clean else float("nan")
    kind_aucs = [float(np.mean(v)) if v else float("nan") for v in by_kind.values()]
    avg = float(np.mean([a for a in kind_aucs if not np.isnan(a)])) if kind_aucs else float("nan")
    drop = avg - clean_auc
    row = [f"{clean_auc:.4f}"] + [f"{a:.4f}" for a in kind_aucs] + [f"{avg:.4f}", f"{drop:+.4f}"]
    path.write_text("\t".join(header) + "\n" + "\t".join(row) + "\n")


def run_robustness(checkpoint: Checkpoint, manifest: DatasetManifest,
                   out_dir: Path | str, n_eval_clips: int = DEFAULT_EVAL_CLIPS,
                   seed: int = 0, protocol: str = "robustness") -> list[tuple[Path, MetricsReport]]:
    """Clean pass plus the full 7x5 grid; writes reports, table and summary."""
    out = Path(out_dir)
    (out / "reports").mkdir(parents=True, exist_ok=True)
    model = build_model(checkpoint.config, seed)
    load_into_model(checkpoint, model)
    model.eval()

    results: list[tuple[Path, MetricsReport]] = []
    for cell in [None] + perturbation_grid():
        label = "clean" if cell is None else str(cell).replace(":", "-")
        report = evaluate_manifest(manifest, model, protocol=f"{protocol}/{manifest.name}",
                                   n_eval_clips=n_eval_clips, perturbation=cell,
                                   perturb_seed=seed)
        path = out / "reports" / f"robustness_{manifest.name}_{label}.txt"
        report.save(path)
        results.append((path, report))
    _write_table(out / "reports_table.tsv", results)
    _write_robustness_summary(out / "robustness_summary.tsv", results)
    return results
