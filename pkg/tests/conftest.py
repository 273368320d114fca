import numpy as np
import pytest
import torch

from stadapt.config import ModelConfig
from stadapt.data import FrameClip
from stadapt.synth import SyntheticSpec, make_synthetic_dataset

# tiny architecture for fast unit tests; desk-reduced stays for integration
TINY = ModelConfig(clip_len=3, image_size=16, encoder_channels=(4, 8),
                   feature_grid=2, feature_dim=8, token_dim=16, depth=1,
                   n_heads=2, mlp_ratio=2)


@pytest.fixture(scope="session")
def tiny_cfg():
    return TINY


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_clip(rng, cfg: ModelConfig, video_id="clip", offset=0) -> FrameClip:
    frames = rng.random((cfg.clip_len, cfg.image_size, cfg.image_size, 3), dtype=np.float32)
    return FrameClip(video_id=video_id, offset=offset, frames=frames)


@pytest.fixture(scope="session")
def small_synth(tmp_path_factory):
    """A small mixed real/fake dataset reused by read-only tests."""
    root = tmp_path_factory.mktemp("synthdata")
    spec = SyntheticSpec(n_videos=8, frames_per_video=26, forgery_families=("seam",),
                         domain_style="clean", seed=5, image_size=16)
    manifest = make_synthetic_dataset(spec, root / "mix", role="eval")
    return manifest


@pytest.fixture(scope="session")
def torch_threads():
    return torch.get_num_threads()
