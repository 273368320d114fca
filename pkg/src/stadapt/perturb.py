"""The seven corruption families at five severity levels.

Severity parameter tables are fixed here so robustness numbers are
reproducible. All kinds preserve clip shape and clamp to [0, 1]; every frame
gets the identical treatment except ``noise`` (independent per frame), and
``compress`` re-encodes each frame at the sequence's quality setting.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .data import FrameClip

KINDS = ("saturation", "contrast", "block", "noise", "blur", "pixel", "compress")

SATURATION_FACTORS = (1.15, 1.3, 1.6, 2.0, 3.0)
CONTRAST_FACTORS = (0.85, 0.7, 0.55, 0.4, 0.3)
BLOCK_COUNTS = (2, 4, 8, 12, 16)
BLOCK_SIZE = 32
NOISE_SIGMAS = (0.02, 0.04, 0.06, 0.1, 0.15)
BLUR_SIGMAS = (1.0, 2.0, 3.0, 5.0, 7.0)
PIXEL_FACTORS = (2, 3, 4, 6, 8)
COMPRESS_QUALITIES = (90, 70, 50, 35, 20)

PARAM_TABLES = {
    "saturation": SATURATION_FACTORS,
    "contrast": CONTRAST_FACTORS,
    "block": BLOCK_COUNTS,
    "noise": NOISE_SIGMAS,
    "blur": BLUR_SIGMAS,
    "pixel": PIXEL_FACTORS,
    "compress": COMPRESS_QUALITIES,
}


class PerturbationError(ValueError):
    pass


@dataclass(frozen=True)
class Perturbation:
    kind: str
    severity: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PerturbationError(f"unknown perturbation kind {self.kind!r}")
        if not 1 <= self.severity <= 5:
            raise PerturbationError(f"severity must be in 1..5, got {self.severity}")

    @property
    def parameter(self):
        return PARAM_TABLES[self.kind][self.severity - 1]

    def __str__(self) -> str:
        return f"{self.kind}:{self.severity}"


def parse_perturbation(text: str) -> Perturbation:
    kind, _, sev = text.partition(":")
    if not sev:
        raise PerturbationError(f"expected kind:severity, got {text!r}")
    try:
        severity = int(sev)
    except ValueError:
        raise PerturbationError(f"bad severity in {text!r}") from None
    return Perturbation(kind=kind.strip(), severity=severity)


def perturbation_grid() -> list[Perturbation]:
    """All 35 (kind, severity) cells in stable kind-major order."""
    return [Perturbation(kind, sev) for kind in KINDS for sev in range(1, 6)]


def _saturation(frames: np.ndarray, factor: float) -> np.ndarray:
    gray = frames.mean(axis=-1, keepdims=True)
    return gray + factor * (frames - gray)


def _contrast(frames: np.ndarray, factor: float) -> np.ndarray:
    return 0.5 + factor * (frames - 0.5)


def _block(frames: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    h, w = frames.shape[1:3]
    side = min(BLOCK_SIZE, h, w)
    out = frames.copy()
    for _ in range(count):
        y = int(rng.integers(0, h - side + 1))
        x = int(rng.integers(0, w - side + 1))
        out[:, y:y + side, x:x + side, :] = 0.0
    return out


def _noise(frames: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    return frames + rng.normal(0.0, sigma, size=frames.shape)


def _blur(frames: np.ndarray, sigma: float) -> np.ndarray:
    # smooth spatial dims only, per frame and channel
    return gaussian_filter(frames, sigma=(0, sigma, sigma, 0))


def _pixelate(frames: np.ndarray, factor: int) -> np.ndarray:
    n, h, w, c = frames.shape
    pad_h = (-h) % factor
    pad_w = (-w) % factor
    padded = np.pad(frames, ((0, 0), (0, pad_h), (0, pad_w), (0, 0)), mode="edge")
    hh, ww = padded.shape[1] // factor, padded.shape[2] // factor
    blocks = padded.reshape(n, hh, factor, ww, factor, c).mean(axis=(2, 4))
    up = np.repeat(np.repeat(blocks, factor, axis=1), factor, axis=2)
    return up[:, :h, :w, :]


def _compress(frames: np.ndarray, quality: int) -> np.ndarray:
    out = np.empty_like(frames)
    for t in range(frames.shape[0]):
        img = Image.fromarray((np.clip(frames[t], 0, 1) * 255.0 + 0.5).astype(np.uint8))
        buf = io.BytesIO()
        img.save(buf, format="JPEG", quality=quality)
        buf.seek(0)
        with Image.open(buf) as back:
            out[t] = np.asarray(back.convert("RGB"), dtype=frames.dtype) / 255.0
    return out


def apply_perturbation(clip: FrameClip, p: Perturbation,
                       rng: np.random.Generator | None = None) -> FrameClip:
    """Corrupt a clip; stochastic kinds require a seeded generator."""
    frames = clip.frames.astype(np.float32)
    if p.kind in ("block", "noise") and rng is None:
        raise PerturbationError(f"{p.kind} perturbation needs a seeded rng")
    if p.kind == "saturation":
        frames = _saturation(frames, p.parameter)
    elif p.kind == "contrast":
        frames = _contrast(frames, p.parameter)
    elif p.kind == "block":
        frames = _block(frames, p.parameter, rng)
    elif p.kind == "noise":
        frames = _noise(frames, p.parameter, rng)
    elif p.kind == "blur":
        frames = _blur(frames, p.parameter)
    elif p.kind == "pixel":
        frames = _pixelate(frames, p.parameter)
    elif p.kind == "compress":
        frames = _compress(frames, p.parameter)
    frames = np.clip(frames, 0.0, 1.0).astype(np.float32)
    return FrameClip(video_id=clip.video_id, offset=clip.offset, frames=frames)
