"""Self-describing parameter container with integrity hashing.

Layout: ``STCKPT01`` magic, an 8-byte big-endian header length, a JSON
header, then the raw array payload. The header carries the architecture
echo, phase tag, parent hash, a per-array manifest (group, name, dtype,
shape, offset) and the content hash over canonical-header+payload, so any
byte flip is detected on load.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .model import ForgeryDetector, PARAM_GROUPS, parameter_groups

MAGIC = b"STCKPT01"
PHASES = ("init", "pretrain", "adapt")


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class Checkpoint:
    groups: dict[str, dict[str, np.ndarray]]
    config: ModelConfig
    phase: str
    parent_hash: str | None = None

    def __post_init__(self):
        if self.phase not in PHASES:
            raise CheckpointError(f"unknown phase {self.phase!r} (choose from {PHASES})")
        missing = [g for g in PARAM_GROUPS if g not in self.groups]
        if missing:
            raise CheckpointError(f"missing parameter groups: {missing}")

    def group_bytes(self, group: str) -> bytes:
        """Canonical byte serialization of one group (stable name order)."""
        blob = bytearray()
        for name in sorted(self.groups[group]):
            arr = np.ascontiguousarray(self.groups[group][name])
            blob += name.encode() + b"\0" + arr.tobytes()
        return bytes(blob)

    def group_digest(self, group: str) -> str:
        return hashlib.sha256(self.group_bytes(group)).hexdigest()

    def content_hash(self) -> str:
        header, payload = _encode_body(self)
        return _hash_body(header, payload)


def checkpoint_from_model(model: ForgeryDetector, phase: str,
                          parent_hash: str | None = None) -> Checkpoint:
    groups = {}
    for group, params in parameter_groups(model).items():
        groups[group] = {name: p.detach().cpu().numpy().copy()
                         for name, p in params.items()}
    return Checkpoint(groups=groups, config=model.cfg, phase=phase,
                      parent_hash=parent_hash)


def load_into_model(ckpt: Checkpoint, model: ForgeryDetector) -> None:
    import torch

    for group, params in parameter_groups(model).items():
        stored = ckpt.groups[group]
        for name, p in params.items():
            if name not in stored:
                raise CheckpointError(f"group {group!r} is missing array {name!r}")
            arr = stored[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise CheckpointError(
                    f"shape mismatch in group {group!r}, array {name!r}: "
                    f"checkpoint {tuple(arr.shape)} vs model {tuple(p.shape)}")
    if model.cfg != ckpt.config:
        raise CheckpointError("model config does not match checkpoint config echo")
    for group, params in parameter_groups(model).items():
        stored = ckpt.groups[group]
        for name, p in params.items():
            with torch.no_grad():
                p.copy_(torch.from_numpy(stored[name]))


def _config_dict(cfg: ModelConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["encoder_channels"] = list(d["encoder_channels"])
    return d


def _config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    d["encoder_channels"] = tuple(d["encoder_channels"])
    return ModelConfig(**d)


def _encode_body(ckpt: Checkpoint) -> tuple[dict, bytes]:
    payload = bytearray()
    manifest = []
    for group in PARAM_GROUPS:
        for name in sorted(ckpt.groups[group]):
            arr = np.ascontiguousarray(ckpt.groups[group][name])
            manifest.append({
                "group": group,
                "name": name,
                "dtype": arr.dtype.name,
                "shape": list(arr.shape),
                "offset": len(payload),
                "nbytes": arr.nbytes,
            })
            payload += arr.tobytes()
    header = {
        "format": "stadapt-checkpoint",
        "version": 1,
        "phase": ckpt.phase,
        "parent_hash": ckpt.parent_hash,
        "config": _config_dict(ckpt.config),
        "arrays": manifest,
    }
    return header, bytes(payload)


def _hash_body(header: dict, payload: bytes) -> str:
    canonical = json.dumps(header, sort_keys=True).encode()
    return hashlib.sha256(canonical + payload).hexdigest()


def save_checkpoint(ckpt: Checkpoint, path: Path | str) -> str:
    """Write the container; returns the content hash."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header, payload = _encode_body(ckpt)
    content_hash = _hash_body(header, payload)
    header["content_hash"] = content_hash
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(len(header_bytes).to_bytes(8, "big"))
        f.write(header_bytes)
        f.write(payload)
    return content_hash


def load_checkpoint(path: Path | str) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    header_len = int.from_bytes(raw[8:16], "big")
    try:
        header = json.loads(raw[16:16 + header_len])
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupted checkpoint header in {path}: {exc}") from exc
    payload = raw[16 + header_len:]
    stored_hash = header.pop("content_hash", None)
    if stored_hash is None or _hash_body(header, payload) != stored_hash:
        raise CheckpointError(f"checkpoint hash mismatch: {path}")
    groups: dict[str, dict[str, np.ndarray]] = {g: {} for g in PARAM_GROUPS}
    for entry in header["arrays"]:
        arr = np.frombuffer(
            payload, dtype=np.dtype(entry["dtype"]),
            count=int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1,
            offset=entry["offset"],
        ).reshape(entry["shape"]).copy()
        groups[entry["group"]][entry["name"]] = arr
    return Checkpoint(groups=groups, config=_config_from_dict(header["config"]),
                      phase=header["phase"], parent_hash=header["parent_hash"])
