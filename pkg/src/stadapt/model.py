"""The detector network and its parameter-group bookkeeping.

Pipeline: a per-frame CNN encoder turns each frame into a g×g grid of
feature cells; every cell becomes one token via a shared linear projection
plus a learned positional embedding; a pre-norm transformer mixes all tokens
of the clip and mean-pools them into a single clip representation z. On top
of z sit an adaptive affine layer (h = L(z)), a 2-way classifier, and a
convolutional reconstructor that recovers the per-frame feature grids from a
latent vector.

Parameter groups and which phase may train them:

    encoder, tokenizer, transformer, reconstructor   -> pretrain
    adaptive, classifier                             -> adapt
"""

from __future__ import annotations

import math
from collections import OrderedDict

import numpy as np
import torch
from torch import nn

from .config import ModelConfig
from .data import FrameClip
from .utils import derive_seed

PARAM_GROUPS = ("encoder", "tokenizer", "transformer", "reconstructor",
                "adaptive", "classifier")

PHASE_TRAINABLE = {
    "pretrain": ("encoder", "tokenizer", "transformer", "reconstructor"),
    "adapt": ("adaptive", "classifier"),
}


class FrameEncoder(nn.Module):
    """Stride-2 conv stack applied to each frame independently."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        layers = []
        in_ch = 3
        for out_ch in cfg.encoder_channels:
            layers += [nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=2, padding=1),
                       nn.ReLU()]
            in_ch = out_ch
        self.convs = nn.Sequential(*layers)
        self.grid = cfg.feature_grid

    def forward(self, clips: torch.Tensor) -> torch.Tensor:
        """(B, n, H, W, 3) -> (B, n, g, g, d_t); frame i sees only frame i."""
        b, n, h, w, _ = clips.shape
        x = clips.permute(0, 1, 4, 2, 3).reshape(b * n, 3, h, w)
        x = self.convs(x)
        x = nn.functional.adaptive_avg_pool2d(x, self.grid)
        x = x.reshape(b, n, -1, self.grid, self.grid)
        return x.permute(0, 1, 3, 4, 2)


class TokenProjector(nn.Module):
    """One token per feature-grid cell: projection plus positional embedding."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.project = nn.Linear(cfg.feature_dim, cfg.token_dim, bias=False)
        self.pos_embed = nn.Parameter(torch.zeros(cfg.n_tokens, cfg.token_dim))

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        """(B, n, g, g, d_t) -> (B, L, d_z) with L = n * g * g."""
        b = features.shape[0]
        flat = features.reshape(b, -1, features.shape[-1])
        return self.project(flat) + self.pos_embed


class SelfAttention(nn.Module):
    def __init__(self, dim: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.scale = self.head_dim ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.out = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, l, d = x.shape
        qkv = self.qkv(x).reshape(b, l, 3, self.n_heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        attn = torch.softmax((q @ k.transpose(-2, -1)) * self.scale, dim=-1)
        mixed = (attn @ v).transpose(1, 2).reshape(b, l, d)
        return self.out(mixed)


class TransformerBlock(nn.Module):
    """Pre-norm residual attention followed by a pre-norm residual MLP."""

    def __init__(self, dim: int, n_heads: int, mlp_ratio: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, n_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, dim * mlp_ratio),
            nn.GELU(),
            nn.Linear(dim * mlp_ratio, dim),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        x = x + self.mlp(self.norm2(x))
        return x


class ClipTransformer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg.token_dim, cfg.n_heads, cfg.mlp_ratio)
            for _ in range(cfg.depth))

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        """(B, L, d_z) -> (B, d_z) by mean pooling the final token layer."""
        x = tokens
        for block in self.blocks:
            x = block(x)
        return x.mean(dim=1)


class FeatureReconstructor(nn.Module):
    """Recover per-frame feature grids from one latent vector.

    The latent is tiled over every token position, offset by a learned
    positional embedding, then a single convolution maps each frame's grid
    back to feature_dim channels.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.clip_len = cfg.clip_len
        self.grid = cfg.feature_grid
        self.pos_embed = nn.Parameter(torch.zeros(cfg.n_tokens, cfg.token_dim))
        self.conv = nn.Conv2d(cfg.token_dim, cfg.feature_dim, kernel_size=3, padding=1)

    def forward(self, latent: torch.Tensor) -> torch.Tensor:
        """(B, d_z) -> (B, n, g, g, d_t)."""
        b, d = latent.shape
        tiled = latent[:, None, :] + self.pos_embed
        x = tiled.reshape(b * self.clip_len, self.grid, self.grid, d)
        x = x.permute(0, 3, 1, 2)
        x = self.conv(x)
        x = x.permute(0, 2, 3, 1)
        return x.reshape(b, self.clip_len, self.grid, self.grid, -1)


class ForgeryDetector(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = FrameEncoder(cfg)
        self.tokenizer = TokenProjector(cfg)
        self.transformer = ClipTransformer(cfg)
        self.reconstructor = FeatureReconstructor(cfg)
        self.adaptive = nn.Linear(cfg.token_dim, cfg.token_dim)
        self.classifier = nn.Linear(cfg.token_dim, cfg.n_classes)

    def spatial_features(self, clips: torch.Tensor) -> torch.Tensor:
        if clips.shape[2] != self.cfg.image_size or clips.shape[3] != self.cfg.image_size:
            raise ValueError(
                f"clip spatial size {tuple(clips.shape[2:4])} does not match "
                f"configured image_size {self.cfg.image_size}")
        return self.encoder(clips)

    def represent(self, clips: torch.Tensor) -> torch.Tensor:
        """Clips -> clip representation z, shape (B, d_z)."""
        return self.transformer(self.tokenizer(self.spatial_features(clips)))

    def latent(self, z: torch.Tensor) -> torch.Tensor:
        return self.adaptive(z)

    def logits(self, clips: torch.Tensor) -> torch.Tensor:
        """Full classification path: encoder -> transformer -> adaptive -> classifier."""
        return self.classifier(self.latent(self.represent(clips)))


def _init_parameters(model: ForgeryDetector, gen: torch.Generator) -> None:
    for module in model.modules():
        if isinstance(module, nn.Conv2d):
            fan_in = module.in_channels * module.kernel_size[0] * module.kernel_size[1]
            module.weight.data.normal_(0.0, math.sqrt(2.0 / fan_in), generator=gen)
            if module.bias is not None:
                module.bias.data.zero_()
        elif isinstance(module, nn.Linear):
            module.weight.data.normal_(0.0, 0.02, generator=gen)
            if module.bias is not None:
                module.bias.data.zero_()
        elif isinstance(module, nn.LayerNorm):
            module.weight.data.fill_(1.0)
            module.bias.data.zero_()
    # encoder kernels start mean-free per input slice, biasing pooled responses
    # toward local contrast (manipulation residue) over absolute intensity
    for module in model.encoder.modules():
        if isinstance(module, nn.Conv2d):
            module.weight.data -= module.weight.data.mean(dim=(2, 3), keepdim=True)
    model.tokenizer.pos_embed.data.normal_(0.0, 0.02, generator=gen)
    model.reconstructor.pos_embed.data.normal_(0.0, 0.02, generator=gen)


def build_model(cfg: ModelConfig, seed: int) -> ForgeryDetector:
    """Construct and deterministically initialize a detector."""
    model = ForgeryDetector(cfg)
    gen = torch.Generator().manual_seed(derive_seed(seed, "model-init") % 2 ** 63)
    _init_parameters(model, gen)
    return model


def parameter_groups(model: ForgeryDetector) -> dict[str, OrderedDict]:
    """Every parameter assigned to exactly one named group."""
    groups = {}
    for group in PARAM_GROUPS:
        module = getattr(model, group)
        groups[group] = OrderedDict(module.named_parameters())
    return groups


def trainable_parameters(model: ForgeryDetector, phase: str) -> OrderedDict:
    """Qualified name -> parameter for everything the phase may optimize."""
    if phase not in PHASE_TRAINABLE:
        raise ValueError(f"unknown phase {phase!r} (choose from {sorted(PHASE_TRAINABLE)})")
    out = OrderedDict()
    groups = parameter_groups(model)
    for group in PHASE_TRAINABLE[phase]:
        for name, p in groups[group].items():
            out[f"{group}.{name}"] = p
    return out


def set_phase_trainable(model: ForgeryDetector, phase: str) -> None:
    """Freeze everything outside the phase's trainable set."""
    allowed = set(PHASE_TRAINABLE[phase]) if phase in PHASE_TRAINABLE else None
    if allowed is None:
        raise ValueError(f"unknown phase {phase!r}")
    for group, params in parameter_groups(model).items():
        flag = group in allowed
        for p in params.values():
            p.requires_grad_(flag)


def count_parameters(model: ForgeryDetector, phase: str) -> int:
    return sum(p.numel() for p in trainable_parameters(model, phase).values())


def clips_to_tensor(clips: list[FrameClip] | FrameClip,
                    dtype: torch.dtype = torch.float32) -> torch.Tensor:
    if isinstance(clips, FrameClip):
        clips = [clips]
    stack = np.stack([c.frames for c in clips])
    return torch.from_numpy(stack).to(dtype)
