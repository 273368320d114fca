"""Procedural real/forged face-video stand-ins for desk-scale experiments.

"Real" videos are smoothly drifting textured patterns; the three forgery
families each inject a localized artifact into an otherwise real video:

* ``seam``    — a composited region with a sharp blending boundary whose
  position jitters frame to frame,
* ``flicker`` — a region whose brightness flickers independently per frame,
* ``checker`` — a static high-frequency checkerboard patch that ignores the
  global motion.

``domain_style`` then shifts the global statistics of every frame
(``clean`` leaves them alone, ``noisy`` adds fixed-level Gaussian noise,
``compressed`` round-trips frames through JPEG). Output is byte-identical
for identical spec+seed.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .data import (DatasetManifest, LABEL_FAKE, LABEL_REAL, ManifestError,
                   VideoRecord, save_manifest)

FAMILIES = ("seam", "flicker", "checker")
STYLES = ("clean", "noisy", "compressed")

# style/artifact strength constants; fixed so datasets regenerate identically
COMPRESSED_JPEG_QUALITY = 25
COMPRESSED_BLUR_SIGMA = 0.8
COMPRESSED_CHROMA_SCALE = 1.0
NOISY_SIGMA = 0.05
FLICKER_EDGE_LIFT = 0.2


@dataclass(frozen=True)
class SyntheticSpec:
    n_videos: int
    frames_per_video: int
    forgery_families: tuple[str, ...]
    domain_style: str = "clean"
    seed: int = 0
    image_size: int = 64

    def __post_init__(self):
        if self.n_videos <= 0 or self.frames_per_video <= 0 or self.image_size <= 0:
            raise ManifestError("n_videos, frames_per_video and image_size must be positive")
        for fam in self.forgery_families:
            if fam not in FAMILIES:
                raise ManifestError(f"unknown forgery family {fam!r} (choose from {FAMILIES})")
        if self.domain_style not in STYLES:
            raise ManifestError(f"unknown domain_style {self.domain_style!r} (choose from {STYLES})")


def _texture(rng: np.random.Generator, size: int, max_freq: int | None = None,
             flat_spectrum: bool = False) -> np.ndarray:
    """Random RGB texture on a torus, values roughly in [0.15, 0.85].

    Natural textures get a 1/f amplitude rolloff, so fine detail is present
    (it carries per-video identity) but never dominates; forgery donors use
    a flat spectrum, which is what makes their inserts look alien.
    """
    if max_freq is None:
        max_freq = int(rng.integers(6, 11))
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    img = np.zeros((size, size, 3), dtype=np.float64)
    for c in range(3):
        acc = np.zeros((size, size))
        for _ in range(5):
            fy, fx = rng.integers(1, max_freq + 1, size=2)
            phase = rng.uniform(0, 2 * math.pi, size=2)
            amp = rng.uniform(0.05, 0.22)
            if not flat_spectrum:
                amp /= max(1.0, math.hypot(fy, fx) / 1.5)
            acc += amp * np.sin(2 * math.pi * (fy * yy + fx * xx) / size + phase[0])
            acc += amp * np.cos(2 * math.pi * (fx * yy - fy * xx) / size + phase[1])
        img[..., c] = acc
    img -= img.min()
    peak = img.max()
    if peak > 0:
        img /= peak
    return 0.15 + 0.7 * img


def _roll2(img: np.ndarray, dy: float, dx: float) -> np.ndarray:
    return np.roll(np.roll(img, int(round(dy)), axis=0), int(round(dx)), axis=1)


def _real_video(rng: np.random.Generator, n_frames: int, size: int) -> np.ndarray:
    """Temporally coherent drift of one texture plus mild global pulsing.

    Each video gets its own color cast, brightness, contrast and texture
    frequency range, the way distinct faces and scenes differ globally;
    within a video everything evolves smoothly.
    """
    base = _texture(rng, size, max_freq=int(rng.integers(6, 11)))
    gains = rng.uniform(0.7, 1.3, size=3)
    offset = rng.uniform(-0.1, 0.1)
    contrast = rng.uniform(0.8, 1.2)
    vy, vx = rng.uniform(-1.5, 1.5, size=2)
    pulse_phase = rng.uniform(0, 2 * math.pi)
    frames = np.empty((n_frames, size, size, 3), dtype=np.float64)
    for t in range(n_frames):
        frame = _roll2(base, vy * t, vx * t)
        frame = 0.5 + contrast * (frame - 0.5)
        frame = frame * gains + offset
        frame = frame * (1.0 + 0.03 * math.sin(0.4 * t + pulse_phase))
        frames[t] = frame
    return np.clip(frames, 0.0, 1.0)


def _region(rng: np.random.Generator, size: int,
            lo: float = 0.55, hi: float = 0.8) -> tuple[int, int, int, int]:
    """Random box (y0, y1, x0, x1) covering a large part of the frame."""
    h = int(size * rng.uniform(lo, hi))
    w = int(size * rng.uniform(lo, hi))
    y0 = int(rng.integers(0, size - h + 1))
    x0 = int(rng.integers(0, size - w + 1))
    return y0, y0 + h, x0, x0 + w


def _apply_seam(frames: np.ndarray, rng: np.random.Generator) -> dict:
    """Composite a busier foreign texture left of a jittering full-height boundary."""
    n, size = frames.shape[0], frames.shape[1]
    donor = _texture(rng, size, max_freq=int(rng.integers(16, 25)), flat_spectrum=True)
    base_col = int(rng.integers(size // 4, 3 * size // 4))
    cols = []
    for t in range(n):
        col = int(np.clip(base_col + rng.integers(-3, 4), 2, size - 2))
        cols.append(col)
        donor_t = _roll2(donor, 0.3 * t, -0.3 * t)
        mask = np.arange(size) < col
        frames[t][:, mask] = donor_t[:, mask]
        # sharp seam line makes the blending boundary explicit
        edge = slice(max(col - 1, 0), min(col + 1, size))
        frames[t][:, edge] = np.clip(frames[t][:, edge] + 0.35, 0.0, 1.0)
    return {"kind": "seam", "region": [0, size, 0, max(cols)],
            "boundary_base_col": base_col, "boundary_cols": cols}


def _apply_flicker(frames: np.ndarray, rng: np.random.Generator) -> dict:
    """Brightness of one region flickers independently each frame.

    The tampered region also keeps a thin bright outline every frame, the
    blending-boundary residue that localized manipulation leaves behind.
    """
    n, size = frames.shape[0], frames.shape[1]
    y0, y1, x0, x1 = _region(rng, size)
    signs = rng.choice([-1.0, 1.0], size=n)
    gains = 1.0 + signs * rng.uniform(0.25, 0.5, size=n)
    for t in range(n):
        frames[t, y0:y1, x0:x1] = np.clip(frames[t, y0:y1, x0:x1] * gains[t], 0.0, 1.0)
        border = np.zeros((size, size), dtype=bool)
        border[y0:y1, x0:x1] = True
        border[y0 + 1:y1 - 1, x0 + 1:x1 - 1] = False
        frames[t][border] = np.clip(frames[t][border] + FLICKER_EDGE_LIFT, 0.0, 1.0)
    return {"kind": "flicker", "region": [y0, y1, x0, x1], "gains": gains.tolist()}


def _apply_checker(frames: np.ndarray, rng: np.random.Generator) -> dict:
    """Static high-frequency checkerboard patch that ignores global motion."""
    size = frames.shape[1]
    y0, y1, x0, x1 = _region(rng, size)
    yy, xx = np.meshgrid(np.arange(y1 - y0), np.arange(x1 - x0), indexing="ij")
    board = (((yy // 2) + (xx // 2)) % 2).astype(np.float64)
    patch = (0.15 + 0.7 * board)[..., None]
    frames[:, y0:y1, x0:x1] = 0.15 * frames[:, y0:y1, x0:x1] + 0.85 * patch
    return {"kind": "checker", "region": [y0, y1, x0, x1]}


_APPLY = {"seam": _apply_seam, "flicker": _apply_flicker, "checker": _apply_checker}


def _style_frames(frames: np.ndarray, style: str, rng: np.random.Generator) -> np.ndarray:
    if style == "clean":
        return frames
    if style == "noisy":
        noisy = frames + rng.normal(0.0, NOISY_SIGMA, size=frames.shape)
        return np.clip(noisy, 0.0, 1.0)
    if style == "compressed":
        # codec pipeline: deblocking-style softening, limited-range (16-235)
        # level squeeze, chroma attenuation, then per-frame block coding
        from scipy.ndimage import gaussian_filter
        frames = gaussian_filter(frames, sigma=(0, COMPRESSED_BLUR_SIGMA,
                                                 COMPRESSED_BLUR_SIGMA, 0))
        frames = (16.0 + frames * (235.0 - 16.0)) / 255.0
        gray = frames.mean(axis=-1, keepdims=True)
        frames = gray + COMPRESSED_CHROMA_SCALE * (frames - gray)
        out = np.empty_like(frames)
        for t in range(frames.shape[0]):
            img = Image.fromarray((frames[t] * 255.0 + 0.5).astype(np.uint8))
            buf = io.BytesIO()
            img.save(buf, format="JPEG", quality=COMPRESSED_JPEG_QUALITY)
            buf.seek(0)
            with Image.open(buf) as back:
                out[t] = np.asarray(back.convert("RGB"), dtype=np.float64) / 255.0
        return out
    raise ManifestError(f"unknown style {style!r}")


def _write_video(frames: np.ndarray, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    data = (frames * 255.0 + 0.5).astype(np.uint8)
    for t in range(data.shape[0]):
        Image.fromarray(data[t]).save(out_dir / f"{t:06d}.png")


def make_synthetic_dataset(spec: SyntheticSpec, out_dir: Path | str,
                           role: str = "eval", name: str | None = None,
                           id_prefix: str = "") -> DatasetManifest:
    """Generate videos on disk and return the manifest describing them.

    With any forgery families requested the label split is even: the first
    half of the videos stays real, the second half cycles through the
    families. A ``generation_meta.json`` sidecar records, per video, the
    injected artifact kind and region (reals record none), keyed by video_id.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ManifestError(f"output directory not writable: {out_dir}: {exc}") from exc

    rng = np.random.default_rng(spec.seed)
    families = tuple(spec.forgery_families)
    n_fake = spec.n_videos // 2 if families else 0
    n_real = spec.n_videos - n_fake

    records = []
    meta = {"spec": {"n_videos": spec.n_videos, "frames_per_video": spec.frames_per_video,
                     "forgery_families": list(families), "domain_style": spec.domain_style,
                     "seed": spec.seed, "image_size": spec.image_size},
            "videos": {}}
    domain_tag = f"synth-{spec.domain_style}"
    for i in range(spec.n_videos):
        is_fake = i >= n_real
        family = families[(i - n_real) % len(families)] if is_fake else None
        video_id = f"{id_prefix}{'fake' if is_fake else 'real'}_{i:04d}"
        frames = _real_video(rng, spec.frames_per_video, spec.image_size)
        artifact = None
        if is_fake:
            artifact = _APPLY[family](frames, rng)
        frames = _style_frames(frames, spec.domain_style, rng)
        _write_video(frames, out_dir / video_id)
        records.append(VideoRecord(
            video_id=video_id,
            frames_dir=out_dir / video_id,
            label=LABEL_FAKE if is_fake else LABEL_REAL,
            domain_tag=domain_tag,
            method_tag=family,
            frame_count=spec.frames_per_video,
        ))
        meta["videos"][video_id] = {
            "family": family,
            "artifacts": [artifact["kind"]] if artifact else [],
            "artifact": artifact,
            "style": spec.domain_style,
        }

    manifest = DatasetManifest(records=tuple(records),
                               name=name or out_dir.name, role=role)
    save_manifest(manifest, out_dir / "manifest.tsv")
    (out_dir / "generation_meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    return manifest


def load_generation_meta(dataset_dir: Path | str) -> dict:
    return json.loads((Path(dataset_dir) / "generation_meta.json").read_text())
