"""Grad-CAM heat maps over the frame encoder's final feature grids."""

from __future__ import annotations

import numpy as np
import torch

from .data import FrameClip
from .model import ForgeryDetector, clips_to_tensor


def saliency_map(clip: FrameClip, model: ForgeryDetector, target_class: int) -> np.ndarray:
    """Per-frame class-activation map, max-normalized to [0, 1] per clip.

    Channel weights are the spatial average of the target-class logit's
    gradient on each frame's feature grid; the map is the ReLU of the
    weighted channel sum. An everywhere-zero gradient yields an all-zero
    map rather than an error.
    """
    if target_class not in range(model.cfg.n_classes):
        raise ValueError(f"target_class must be in [0, {model.cfg.n_classes}), got {target_class}")
    dtype = next(model.parameters()).dtype
    clips = clips_to_tensor(clip).to(dtype)
    with torch.no_grad():
        features = model.spatial_features(clips)  # (1, n, g, g, d_t)
    features = features.detach().requires_grad_(True)
    tokens = model.tokenizer(features)
    z = model.transformer(tokens)
    logit = model.classifier(model.latent(z))[0, target_class]
    grad = torch.autograd.grad(logit, features)[0][0]  # (n, g, g, d_t)
    acts = features.detach()[0]
    weights = grad.mean(dim=(1, 2), keepdim=True)  # per-frame channel weights
    cam = torch.relu((weights * acts).sum(dim=-1))  # (n, g, g)
    cam = cam.cpu().numpy()
    peak = cam.max()
    if peak > 0:
        cam = cam / peak
    return cam.astype(np.float64)
