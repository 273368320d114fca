"""Real-only self-supervised initialization of the backbone.

Each batch takes two clips per video at distinct offsets; the contrastive
term pulls sibling clips together against the other videos while the
reconstruction term makes the pooled representation recover its own frame
feature grids. Only the backbone groups (encoder, tokenizer, transformer,
reconstructor) receive updates; the heads stay bit-identical.
"""

from __future__ import annotations

import math
import warnings
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint, checkpoint_from_model, load_into_model
from .config import ModelConfig, PretrainConfig
from .data import DatasetManifest, sample_positive_pair
from .losses import (contrastive_loss, init_loss, pairwise_cosine,
                     reconstruction_loss)
from .model import (ForgeryDetector, build_model, clips_to_tensor,
                    set_phase_trainable, trainable_parameters)
from .utils import CsvLogger, derive_seed

PRETRAIN_LOG_FIELDS = ["epoch", "L_con", "L_rec", "L_init", "lr", "mean_pairwise_sim"]


def warmup_lr(step: int, total_steps: int, cfg) -> float:
    """Linear warm-up to the base rate over the first warmup_frac of steps."""
    warm_steps = max(1, int(math.ceil(cfg.warmup_frac * total_steps)))
    if step >= warm_steps:
        return cfg.lr
    frac = step / warm_steps
    return cfg.warmup_start_lr + frac * (cfg.lr - cfg.warmup_start_lr)


def _set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def _video_batches(n_videos: int, per_batch: int, rng: np.random.Generator):
    order = rng.permutation(n_videos)
    batches = [order[i:i + per_batch] for i in range(0, n_videos, per_batch)]
    # a trailing single video cannot form negatives; merge it into the previous batch
    if len(batches) > 1 and len(batches[-1]) < 2:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches = batches[:-1]
    return batches


def _check_finite(loss: torch.Tensor, epoch: int, step: int) -> None:
    if not torch.isfinite(loss):
        raise RuntimeError(
            f"non-finite training loss {loss.item()} at epoch {epoch}, step {step}")


def mean_inter_video_sim(z: torch.Tensor, video_ids: list[str]) -> float:
    """Mean cosine similarity over all clip pairs from different videos."""
    sims = pairwise_cosine(z.detach())
    mask = torch.tensor([[a != b for b in video_ids] for a in video_ids])
    return float(sims[mask].mean())


def pretrain(manifest: DatasetManifest, model_cfg: ModelConfig, cfg: PretrainConfig,
             seed: int, log_path: Path | str | None = None,
             init_checkpoint: Checkpoint | None = None) -> Checkpoint:
    """Run the initialization stage and return the phase=pretrain checkpoint."""
    if manifest.role != "pretrain":
        raise ValueError(f"pretraining expects a role=pretrain manifest, got {manifest.role!r}")
    if len(manifest) < 2:
        raise ValueError("pretraining needs at least 2 videos for negatives")

    model = build_model(model_cfg, seed)
    parent_hash = None
    if init_checkpoint is not None:
        load_into_model(init_checkpoint, model)
        parent_hash = init_checkpoint.content_hash()
    set_phase_trainable(model, "pretrain")
    params = list(trainable_parameters(model, "pretrain").values())
    optimizer = torch.optim.Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)

    rng = np.random.default_rng(derive_seed(seed, "pretrain.batches"))
    per_batch = min(cfg.videos_per_batch, len(manifest))
    steps_per_epoch = len(_video_batches(len(manifest), per_batch, np.random.default_rng(0)))
    total_steps = max(1, cfg.epochs * steps_per_epoch)

    logger = CsvLogger(log_path, PRETRAIN_LOG_FIELDS) if log_path else None
    step = 0
    for epoch in range(cfg.epochs):
        sums = {"L_con": 0.0, "L_rec": 0.0, "L_init": 0.0, "sim": 0.0}
        batches = _video_batches(len(manifest), per_batch, rng)
        for batch_idx, video_indices in enumerate(batches):
            clips, video_ids = [], []
            for vi in video_indices:
                record = manifest.records[int(vi)]
                a, b = sample_positive_pair(record, model_cfg.clip_len, rng)
                clips += [a, b]
                video_ids += [record.video_id, record.video_id]
            x = clips_to_tensor(clips)

            features = model.spatial_features(x)
            z = model.transformer(model.tokenizer(features))
            l_con = contrastive_loss(z, video_ids, cfg.temperature, cfg.sim_eps)
            target = features.detach() if cfg.detach_target else features
            recovered = model.reconstructor(z)
            l_rec = reconstruction_loss(recovered, target)
            loss = init_loss(l_con, l_rec, cfg.weight_contrastive, cfg.weight_reconstruction)
            _check_finite(loss, epoch, batch_idx)

            _set_lr(optimizer, warmup_lr(step, total_steps, cfg))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            step += 1

            sums["L_con"] += float(l_con.detach())
            sums["L_rec"] += float(l_rec.detach())
            sums["L_init"] += float(loss.detach())
            sums["sim"] += mean_inter_video_sim(z, video_ids)

        n = len(batches)
        mean_sim = sums["sim"] / n
        if mean_sim > cfg.collapse_warn_threshold:
            warnings.warn(
                f"epoch {epoch}: mean inter-video similarity {mean_sim:.3f} exceeds "
                f"{cfg.collapse_warn_threshold}; representations may be collapsing",
                stacklevel=2)
        if logger:
            logger.append({"epoch": epoch,
                           "L_con": f"{sums['L_con'] / n:.8f}",
                           "L_rec": f"{sums['L_rec'] / n:.8f}",
                           "L_init": f"{sums['L_init'] / n:.8f}",
                           "lr": f"{optimizer.param_groups[0]['lr']:.8g}",
                           "mean_pairwise_sim": f"{mean_sim:.8f}"})

    return checkpoint_from_model(model, phase="pretrain", parent_hash=parent_hash)
