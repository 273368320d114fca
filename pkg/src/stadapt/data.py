"""Video manifests, clip sampling, and source/target adaptation pools.

Manifest file format: one record per line, tab-separated fields
``video_id  frames_path  label  domain_tag  method_tag  frame_count``,
with ``-`` for an absent label or method tag. Frames live at
``frames_path/%06d.png`` (0-based), pre-cropped aligned RGB faces.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

LABEL_REAL = 0
LABEL_FAKE = 1

_LABEL_TOKENS = {"real": LABEL_REAL, "0": LABEL_REAL, "fake": LABEL_FAKE, "1": LABEL_FAKE}
_LABEL_NAMES = {LABEL_REAL: "real", LABEL_FAKE: "fake"}

ROLES = ("source", "target", "pretrain", "eval")


class ManifestError(ValueError):
    pass


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    frames_dir: Path
    label: int | None
    domain_tag: str
    method_tag: str | None
    frame_count: int

    def frame_path(self, index: int) -> Path:
        return self.frames_dir / f"{index:06d}.png"


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[VideoRecord, ...]
    name: str
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ManifestError(f"unknown role {self.role!r} (choose from {ROLES})")
        seen = set()
        for rec in self.records:
            if rec.video_id in seen:
                raise ManifestError(f"duplicate video_id {rec.video_id!r}")
            seen.add(rec.video_id)
        if self.role == "pretrain":
            for rec in self.records:
                if rec.label != LABEL_REAL:
                    raise ManifestError(
                        f"pretrain must be real-only: {rec.video_id!r} is not labeled real")

    def __len__(self) -> int:
        return len(self.records)

    def labeled(self) -> "DatasetManifest":
        bad = [r.video_id for r in self.records if r.label is None]
        if bad:
            raise ManifestError(f"records without labels: {bad[:5]}")
        return self


def load_manifest(path: Path | str, role: str, clip_len: int = 20,
                  verify_frames: bool = True) -> DatasetManifest:
    """Load and validate a manifest file.

    Records shorter than ``clip_len`` are rejected outright: padding short
    videos would corrupt the temporal statistics the detector relies on.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 6:
            raise ManifestError(f"{path}:{lineno}: expected 6 tab-separated fields, got {len(parts)}")
        video_id, frames_path, label_tok, domain_tag, method_tok, count_tok = parts
        if label_tok == "-":
            label = None
        elif label_tok in _LABEL_TOKENS:
            label = _LABEL_TOKENS[label_tok]
        else:
            raise ManifestError(f"{path}:{lineno}: bad label {label_tok!r}")
        try:
            frame_count = int(count_tok)
        except ValueError:
            raise ManifestError(f"{path}:{lineno}: bad frame_count {count_tok!r}") from None
        if frame_count < clip_len:
            raise ManifestError(
                f"{path}:{lineno}: video {video_id!r} has {frame_count} frames, "
                f"too short for clip length {clip_len}")
        frames_dir = Path(frames_path)
        if not frames_dir.is_absolute():
            frames_dir = path.parent / frames_dir
        records.append(VideoRecord(
            video_id=video_id,
            frames_dir=frames_dir,
            label=label,
            domain_tag=domain_tag,
            method_tag=None if method_tok == "-" else method_tok,
            frame_count=frame_count,
        ))
    if verify_frames:
        for rec in records:
            if not rec.frames_dir.is_dir():
                raise ManifestError(f"frames directory missing for {rec.video_id!r}: {rec.frames_dir}")
            on_disk = sum(1 for p in rec.frames_dir.iterdir() if p.suffix == ".png")
            if on_disk != rec.frame_count:
                raise ManifestError(
                    f"frame_count mismatch for {rec.video_id!r}: manifest says "
                    f"{rec.frame_count}, found {on_disk} png files")
    return DatasetManifest(records=tuple(records), name=path.stem, role=role)


def merge_manifests(manifests: list[DatasetManifest], name: str,
                    role: str) -> DatasetManifest:
    """Concatenate record lists; video_ids must stay globally unique."""
    records = tuple(rec for m in manifests for rec in m.records)
    return DatasetManifest(records=records, name=name, role=role)


def save_manifest(manifest: DatasetManifest, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for rec in manifest.records:
        frames = rec.frames_dir
        try:
            frames = frames.relative_to(path.parent)
        except ValueError:
            pass
        label_tok = "-" if rec.label is None else _LABEL_NAMES[rec.label]
        method_tok = rec.method_tag if rec.method_tag is not None else "-"
        lines.append("\t".join([rec.video_id, str(frames), label_tok,
                                rec.domain_tag, method_tok, str(rec.frame_count)]))
    path.write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class FrameClip:
    """A fixed-length run of consecutive frames, values in [0, 1]."""

    video_id: str
    offset: int
    frames: np.ndarray  # (clip_len, H, W, 3) float32

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise SamplingError(f"clip frames must be (n, H, W, 3), got {self.frames.shape}")


# Decoded frames are cached per video as uint8 so repeated sampling across
# epochs does not re-hit the PNG decoder.
_FRAME_CACHE: dict[Path, np.ndarray] = {}
_FRAME_CACHE_LIMIT = 512


def _video_frames(record: VideoRecord) -> np.ndarray:
    key = record.frames_dir
    cached = _FRAME_CACHE.get(key)
    if cached is not None:
        return cached
    frames = []
    for i in range(record.frame_count):
        p = record.frame_path(i)
        try:
            with Image.open(p) as img:
                frames.append(np.asarray(img.convert("RGB"), dtype=np.uint8))
        except OSError as exc:
            raise SamplingError(f"failed to decode frame {p}: {exc}") from exc
    stack = np.stack(frames)
    if len(_FRAME_CACHE) >= _FRAME_CACHE_LIMIT:
        _FRAME_CACHE.pop(next(iter(_FRAME_CACHE)))
    _FRAME_CACHE[key] = stack
    return stack


def clear_frame_cache() -> None:
    _FRAME_CACHE.clear()


def load_clip(record: VideoRecord, offset: int, clip_len: int) -> FrameClip:
    if offset < 0 or offset + clip_len > record.frame_count:
        raise SamplingError(
            f"clip [{offset}, {offset + clip_len}) out of range for "
            f"{record.video_id!r} with {record.frame_count} frames")
    frames = _video_frames(record)[offset:offset + clip_len]
    return FrameClip(video_id=record.video_id, offset=offset,
                     frames=frames.astype(np.float32) / 255.0)


def sample_clip(record: VideoRecord, clip_len: int, rng: np.random.Generator) -> FrameClip:
    """Sample one clip at a uniformly random offset."""
    if clip_len <= 0:
        raise SamplingError("clip length must be positive")
    if record.frame_count < clip_len:
        raise SamplingError(
            f"video {record.video_id!r} too short: {record.frame_count} < {clip_len}")
    offset = int(rng.integers(0, record.frame_count - clip_len + 1))
    return load_clip(record, offset, clip_len)


def sample_positive_pair(record: VideoRecord, clip_len: int,
                         rng: np.random.Generator) -> tuple[FrameClip, FrameClip]:
    """Two same-length clips from one video at distinct random offsets."""
    if clip_len <= 0:
        raise SamplingError("clip length must be positive")
    n_offsets = record.frame_count - clip_len + 1
    if n_offsets < 2:
        raise SamplingError(
            f"video {record.video_id!r} too short for a positive pair: needs "
            f">= {clip_len + 1} frames, has {record.frame_count}")
    offset_a = int(rng.integers(0, n_offsets))
    offset_b = int(rng.integers(0, n_offsets - 1))
    if offset_b >= offset_a:
        offset_b += 1
    return load_clip(record, offset_a, clip_len), load_clip(record, offset_b, clip_len)


@dataclass(frozen=True)
class AdaptationPool:
    """Labeled source clips plus a small unlabeled target pool.

    Target records are stored with their labels stripped, so nothing reachable
    from the pool can leak a target label downstream.
    """

    source_records: tuple[VideoRecord, ...]
    target_records: tuple[VideoRecord, ...]
    target_ratio: float

    def sample_source_batch(self, n_clips: int, clip_len: int,
                            rng: np.random.Generator) -> tuple[list[FrameClip], np.ndarray]:
        picks = rng.integers(0, len(self.source_records), size=n_clips)
        clips, labels = [], []
        for idx in picks:
            rec = self.source_records[int(idx)]
            clips.append(sample_clip(rec, clip_len, rng))
            labels.append(rec.label)
        return clips, np.asarray(labels, dtype=np.int64)

    def sample_target_batch(self, n_clips: int, clip_len: int,
                            rng: np.random.Generator) -> list[FrameClip]:
        picks = rng.integers(0, len(self.target_records), size=n_clips)
        return [sample_clip(self.target_records[int(idx)], clip_len, rng) for idx in picks]


def build_adaptation_pool(source: DatasetManifest, target: DatasetManifest,
                          target_ratio: float, rng: np.random.Generator) -> AdaptationPool:
    """Draw the unlabeled target subset and pair it with the labeled source.

    The subset holds ``ceil(target_ratio * |source videos|)`` target videos,
    drawn without replacement and capped at the target manifest size.
    """
    if not 0.0 < target_ratio <= 1.0:
        raise ManifestError(f"target_ratio must be in (0, 1], got {target_ratio}")
    if len(source) == 0:
        raise ManifestError("empty source manifest")
    if len(target) == 0:
        raise ManifestError("empty target manifest")
    source.labeled()
    want = int(np.ceil(target_ratio * len(source)))
    if want > len(target):
        warnings.warn(
            f"requested {want} target videos but only {len(target)} available; using all",
            stacklevel=2)
        want = len(target)
    picked = rng.choice(len(target), size=want, replace=False)
    stripped = tuple(replace(target.records[int(i)], label=None) for i in sorted(picked))
    return AdaptationPool(source_records=source.records,
                          target_records=stripped,
                          target_ratio=target_ratio)
