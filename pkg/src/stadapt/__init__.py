"""Face-forgery video detection with a frozen spatiotemporal backbone and
semi-supervised latent adaptation to unlabeled target videos."""

__version__ = "0.1.0"

from .config import (AdaptConfig, DESK_REDUCED, ModelConfig, PAPER_DEFAULT,
                     PretrainConfig)
from .data import (AdaptationPool, DatasetManifest, FrameClip, VideoRecord,
                   build_adaptation_pool, load_manifest, sample_clip,
                   sample_positive_pair)
from .model import ForgeryDetector, build_model

__all__ = [
    "AdaptConfig", "AdaptationPool", "DatasetManifest", "DESK_REDUCED",
    "ForgeryDetector", "FrameClip", "ModelConfig", "PAPER_DEFAULT",
    "PretrainConfig", "VideoRecord", "build_adaptation_pool", "build_model",
    "load_manifest", "sample_clip", "sample_positive_pair",
]
