"""Training objectives: latent reconstruction, contrastive, classification.

All functions are pure torch ops, dtype-generic, and differentiable, so the
same code path serves float32 training and float64 gradient checking.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F


class LossError(ValueError):
    pass


def reconstruction_loss(recovered: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean-over-frames L1 distance between feature sequences.

    Accepts one clip (n, g, g, d_t) or a batch (B, n, g, g, d_t); a batch
    averages the per-clip values. Each frame's distance sums absolute
    differences over all g*g*d_t entries, and the per-clip loss divides by
    the frame count n only.
    """
    if recovered.shape != target.shape:
        raise LossError(f"shape mismatch: {tuple(recovered.shape)} vs {tuple(target.shape)}")
    if recovered.dim() == 4:
        recovered = recovered[None]
        target = target[None]
    if recovered.dim() != 5:
        raise LossError(f"expected (B, n, g, g, d) features, got {tuple(recovered.shape)}")
    n = recovered.shape[1]
    per_clip = (recovered - target).abs().sum(dim=(1, 2, 3, 4)) / n
    return per_clip.mean()


def cosine_sim(z_i: torch.Tensor, z_j: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """Cosine similarity with the norm product clamped from below by eps."""
    if z_i.shape != z_j.shape:
        raise LossError(f"dim mismatch: {tuple(z_i.shape)} vs {tuple(z_j.shape)}")
    denom = torch.clamp(z_i.norm() * z_j.norm(), min=eps)
    return (z_i * z_j).sum() / denom


def pairwise_cosine(z: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """(N, d) -> (N, N) matrix of clamped cosine similarities."""
    norms = z.norm(dim=1)
    denom = torch.clamp(norms[:, None] * norms[None, :], min=eps)
    return (z @ z.T) / denom


def anchor_contrastive_loss(pos_sim: torch.Tensor, neg_sims: torch.Tensor,
                            temperature: float) -> torch.Tensor:
    """Single-anchor softmax loss over one positive and its negatives."""
    logits = torch.cat([pos_sim.reshape(1), neg_sims.reshape(-1)]) / temperature
    return torch.logsumexp(logits, dim=0) - logits[0]


def contrastive_loss(embeddings: torch.Tensor, video_ids: list[str],
                     temperature: float, eps: float = 1e-8) -> torch.Tensor:
    """Batch contrastive loss over same-video positive pairs.

    Every video must contribute exactly two clips; for each anchor the
    positive is its sibling clip and the negatives are all clips of the
    other videos. Returns the mean over all 2M anchors.
    """
    n = embeddings.shape[0]
    if len(video_ids) != n:
        raise LossError("one video_id per embedding required")
    counts: dict[str, int] = {}
    for vid in video_ids:
        counts[vid] = counts.get(vid, 0) + 1
    bad = {vid: c for vid, c in counts.items() if c != 2}
    if bad:
        raise LossError(f"each video must appear exactly twice, got {bad}")
    if len(counts) < 2:
        raise LossError("need at least 2 distinct videos for negatives")

    sims = pairwise_cosine(embeddings, eps) / temperature
    same_video = torch.tensor([[a == b for b in video_ids] for a in video_ids],
                              device=embeddings.device)
    eye = torch.eye(n, dtype=torch.bool, device=embeddings.device)
    pos_mask = same_video & ~eye
    neg_mask = ~same_video

    pos = sims[pos_mask].reshape(n)  # exactly one positive per row
    neg_inf = torch.finfo(sims.dtype).min
    denom_logits = torch.where(pos_mask | neg_mask, sims, torch.full_like(sims, neg_inf))
    return (torch.logsumexp(denom_logits, dim=1) - pos).mean()


def classification_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean softmax cross-entropy for the 2-way real/fake head."""
    if logits.dim() != 2 or logits.shape[0] == 0:
        raise LossError(f"expected nonempty (B, 2) logits, got {tuple(logits.shape)}")
    labels = labels.reshape(-1)
    if labels.shape[0] != logits.shape[0]:
        raise LossError("one label per logit row required")
    if ((labels != 0) & (labels != 1)).any():
        raise LossError("labels must be 0 (real) or 1 (fake)")
    return F.cross_entropy(logits, labels.long())


def init_loss(l_con: torch.Tensor, l_rec: torch.Tensor,
              weight_con: float, weight_rec: float) -> torch.Tensor:
    """Pretraining objective: weighted sum of contrastive and reconstruction."""
    if weight_con < 0 or weight_rec < 0:
        raise LossError("loss weights must be >= 0")
    return weight_con * l_con + weight_rec * l_rec


def last_loss(l_cls: torch.Tensor, l_rec: torch.Tensor, trade_off: float) -> torch.Tensor:
    """Adaptation objective: convex combination of the two pipelines."""
    if not 0.0 <= trade_off <= 1.0:
        raise LossError(f"trade_off must be in [0, 1], got {trade_off}")
    return trade_off * l_cls + (1.0 - trade_off) * l_rec
