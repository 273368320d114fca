"""Head adaptation over the frozen backbone.

Each step draws one labeled source batch and one unlabeled target batch,
forms the joint loss (cross-entropy on source plus latent reconstruction on
target), and updates only the adaptive layer and classifier. Source and
target batch sampling use independent seeded streams, so a run with
trade_off=1 consumes exactly the same source schedule as a source-only run.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint, checkpoint_from_model, load_into_model
from .config import AdaptConfig, ModelConfig
from .data import AdaptationPool, DatasetManifest, FrameClip, sample_clip
from .losses import classification_loss, last_loss, reconstruction_loss
from .model import (ForgeryDetector, build_model, clips_to_tensor,
                    set_phase_trainable, trainable_parameters)
from .pretrain import _check_finite, _set_lr, warmup_lr
from .utils import CsvLogger, derive_seed

ADAPT_LOG_FIELDS = ["epoch", "L_cls", "L_rec", "L_last", "source_acc"]


def classification_logits(model: ForgeryDetector, clips: torch.Tensor) -> torch.Tensor:
    """Supervised path: representation -> adaptive layer -> classifier."""
    return model.classifier(model.adaptive(model.represent(clips)))


def target_reconstruction_loss(model: ForgeryDetector,
                               clips: torch.Tensor) -> torch.Tensor:
    """Recover each target clip's own feature grids from its adapted latent."""
    if clips.shape[0] == 0:
        raise ValueError("empty target batch")
    features = model.spatial_features(clips)
    z = model.transformer(model.tokenizer(features))
    recovered = model.reconstructor(model.adaptive(z))
    return reconstruction_loss(recovered, features.detach())


def _source_epoch_batches(records, batch_clips: int, rng: np.random.Generator):
    """Partition the shuffled source videos into per-step batches."""
    order = rng.permutation(len(records))
    return [order[i:i + batch_clips] for i in range(0, len(records), batch_clips)]


def _fit_heads(checkpoint: Checkpoint, model_cfg: ModelConfig, cfg: AdaptConfig,
               seed: int, source_records, target_pool: AdaptationPool | None,
               log_path: Path | str | None, phase_note: str) -> Checkpoint:
    model = build_model(model_cfg, seed)
    load_into_model(checkpoint, model)
    set_phase_trainable(model, "adapt")
    params = list(trainable_parameters(model, "adapt").values())
    optimizer = torch.optim.Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)

    src_rng = np.random.default_rng(derive_seed(seed, phase_note, "source"))
    tgt_rng = np.random.default_rng(derive_seed(seed, phase_note, "target"))
    steps_per_epoch = max(1, -(-len(source_records) // cfg.source_batch_clips))
    total_steps = max(1, cfg.epochs * steps_per_epoch)
    logger = CsvLogger(log_path, ADAPT_LOG_FIELDS) if log_path else None

    step = 0
    for epoch in range(cfg.epochs):
        sums = {"L_cls": 0.0, "L_rec": 0.0, "L_last": 0.0}
        correct = 0
        seen = 0
        batches = _source_epoch_batches(source_records, cfg.source_batch_clips, src_rng)
        for batch_idx, indices in enumerate(batches):
            clips, labels = [], []
            for idx in indices:
                rec = source_records[int(idx)]
                clips.append(sample_clip(rec, model_cfg.clip_len, src_rng))
                labels.append(rec.label)
            x = clips_to_tensor(clips)
            y = torch.tensor(labels, dtype=torch.long)
            logits = classification_logits(model, x)
            l_cls = classification_loss(logits, y)

            if target_pool is not None:
                target_clips = target_pool.sample_target_batch(
                    cfg.target_batch_clips, model_cfg.clip_len, tgt_rng)
                l_rec = target_reconstruction_loss(model, clips_to_tensor(target_clips))
                loss = last_loss(l_cls, l_rec, cfg.trade_off)
            else:
                l_rec = torch.zeros((), dtype=l_cls.dtype)
                loss = l_cls
            _check_finite(loss, epoch, batch_idx)

            _set_lr(optimizer, warmup_lr(step, total_steps, cfg))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            step += 1

            sums["L_cls"] += float(l_cls.detach())
            sums["L_rec"] += float(l_rec.detach())
            sums["L_last"] += float(loss.detach())
            correct += int((logits.detach().argmax(dim=1) == y).sum())
            seen += len(labels)

        if logger:
            n = len(batches)
            logger.append({"epoch": epoch,
                           "L_cls": f"{sums['L_cls'] / n:.8f}",
                           "L_rec": f"{sums['L_rec'] / n:.8f}",
                           "L_last": f"{sums['L_last'] / n:.8f}",
                           "source_acc": f"{correct / max(seen, 1):.6f}"})

    return checkpoint_from_model(model, phase="adapt",
                                 parent_hash=checkpoint.content_hash())


def adapt(checkpoint: Checkpoint, pool: AdaptationPool, model_cfg: ModelConfig,
          cfg: AdaptConfig, seed: int, log_path: Path | str | None = None,
          allow_unpretrained: bool = False) -> Checkpoint:
    """Optimize {adaptive, classifier} on the joint source+target objective."""
    if checkpoint.phase != "pretrain" and not allow_unpretrained:
        raise ValueError(
            f"adaptation expects a phase=pretrain checkpoint, got {checkpoint.phase!r} "
            "(pass allow_unpretrained=True to override)")
    if len(pool.source_records) == 0 or len(pool.target_records) == 0:
        raise ValueError("adaptation pool is empty on one side")
    return _fit_heads(checkpoint, model_cfg, cfg, seed, pool.source_records,
                      pool, log_path, phase_note="adapt")


def train_source_only(checkpoint: Checkpoint, source: DatasetManifest,
                      model_cfg: ModelConfig, cfg: AdaptConfig, seed: int,
                      log_path: Path | str | None = None,
                      allow_unpretrained: bool = False) -> Checkpoint:
    """Ablation baseline: supervised training of the heads, no target pipeline."""
    if checkpoint.phase != "pretrain" and not allow_unpretrained:
        raise ValueError(
            f"source-only training expects a phase=pretrain checkpoint, got "
            f"{checkpoint.phase!r} (pass allow_unpretrained=True to override)")
    if len(source) == 0:
        raise ValueError("empty source manifest")
    return _fit_heads(checkpoint, model_cfg, cfg, seed, source.labeled().records,
                      None, log_path, phase_note="adapt")
