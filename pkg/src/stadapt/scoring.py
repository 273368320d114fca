"""Deterministic video scoring, manifest evaluation, and embedding export."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .data import (DatasetManifest, FrameClip, SamplingError, VideoRecord,
                   load_clip)
from .metrics import MetricsReport, VideoScore, compute_metrics
from .model import ForgeryDetector, clips_to_tensor
from .perturb import Perturbation, apply_perturbation
from .utils import derive_seed

DEFAULT_EVAL_CLIPS = 4


def eval_offsets(frame_count: int, clip_len: int, n_eval_clips: int) -> tuple[int, ...]:
    """Evenly spaced clip offsets; coincident offsets collapse to one."""
    if frame_count < clip_len:
        raise SamplingError(f"video too short: {frame_count} < {clip_len}")
    if n_eval_clips < 1:
        raise SamplingError("n_eval_clips must be >= 1")
    span = frame_count - clip_len
    raw = np.linspace(0, span, num=n_eval_clips)
    return tuple(sorted({int(round(v)) for v in raw}))


def _clip_rng(seed: int, video_id: str, perturbation: Perturbation | None):
    if perturbation is None:
        return None
    return np.random.default_rng(derive_seed(seed, "perturb", video_id, str(perturbation)))


@torch.no_grad()
def clip_fake_probability(model: ForgeryDetector, clip: FrameClip) -> float:
    logits = model.logits(clips_to_tensor(clip).to(next(model.parameters()).dtype))
    return float(torch.softmax(logits, dim=1)[0, 1])


def score_video(record: VideoRecord, model: ForgeryDetector,
                n_eval_clips: int = DEFAULT_EVAL_CLIPS,
                perturbation: Perturbation | None = None,
                perturb_seed: int = 0) -> VideoScore:
    """Mean fake-probability over deterministic evenly spaced clips."""
    clip_len = model.cfg.clip_len
    offsets = eval_offsets(record.frame_count, clip_len, n_eval_clips)
    rng = _clip_rng(perturb_seed, record.video_id, perturbation)
    clip_scores = []
    for offset in offsets:
        clip = load_clip(record, offset, clip_len)
        if perturbation is not None:
            clip = apply_perturbation(clip, perturbation, rng)
        clip_scores.append(clip_fake_probability(model, clip))
    return VideoScore(video_id=record.video_id,
                      score=float(np.mean(clip_scores)),
                      label=record.label,
                      clip_scores=tuple(clip_scores))


def score_manifest(manifest: DatasetManifest, model: ForgeryDetector,
                   n_eval_clips: int = DEFAULT_EVAL_CLIPS,
                   perturbation: Perturbation | None = None,
                   perturb_seed: int = 0) -> list[VideoScore]:
    return [score_video(rec, model, n_eval_clips, perturbation, perturb_seed)
            for rec in manifest.records]


def evaluate_manifest(manifest: DatasetManifest, model: ForgeryDetector,
                      protocol: str = "", n_eval_clips: int = DEFAULT_EVAL_CLIPS,
                      perturbation: Perturbation | None = None,
                      perturb_seed: int = 0) -> MetricsReport:
    if len(manifest) == 0:
        raise ValueError("empty eval manifest")
    scores = score_manifest(manifest.labeled(), model, n_eval_clips,
                            perturbation, perturb_seed)
    return compute_metrics(scores, protocol=protocol,
                           perturbation=str(perturbation) if perturbation else None)


@torch.no_grad()
def video_embedding(record: VideoRecord, model: ForgeryDetector, layer: str,
                    n_eval_clips: int = DEFAULT_EVAL_CLIPS) -> np.ndarray:
    """Mean clip embedding at the requested tap ('z' or 'h')."""
    if layer not in ("z", "h"):
        raise ValueError(f"layer must be 'z' or 'h', got {layer!r}")
    clip_len = model.cfg.clip_len
    dtype = next(model.parameters()).dtype
    vecs = []
    for offset in eval_offsets(record.frame_count, clip_len, n_eval_clips):
        clip = load_clip(record, offset, clip_len)
        z = model.represent(clips_to_tensor(clip).to(dtype))
        vecs.append((model.latent(z) if layer == "h" else z)[0].cpu().numpy())
    return np.mean(vecs, axis=0)


def export_embeddings(manifest: DatasetManifest, model: ForgeryDetector,
                      layer: str, out_path: Path | str,
                      n_eval_clips: int = DEFAULT_EVAL_CLIPS) -> Path:
    """One tab-separated row per video: id, tags, then the embedding."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    dim = model.cfg.token_dim
    header = ["video_id", "label", "domain_tag", "method_tag"] + [f"e{i}" for i in range(dim)]
    lines = ["\t".join(header)]
    for rec in manifest.records:
        vec = video_embedding(rec, model, layer, n_eval_clips)
        label = "-" if rec.label is None else str(rec.label)
        method = rec.method_tag if rec.method_tag is not None else "-"
        lines.append("\t".join([rec.video_id, label, rec.domain_tag, method]
                               + [f"{v:.8e}" for v in vec]))
    out_path.write_text("\n".join(lines) + "\n")
    return out_path
