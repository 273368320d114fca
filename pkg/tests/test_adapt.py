import numpy as np
import pytest
import torch

from stadapt.adapt import (adapt, classification_logits,
                           target_reconstruction_loss, train_source_only)
from stadapt.checkpoint import checkpoint_from_model
from stadapt.config import AdaptConfig, DESK_REDUCED, PretrainConfig
from stadapt.data import build_adaptation_pool, load_manifest, sample_clip
from stadapt.losses import classification_loss, last_loss, reconstruction_loss
from stadapt.model import (build_model, clips_to_tensor, set_phase_trainable,
                           trainable_parameters)
from stadapt.pretrain import pretrain
from stadapt.synth import SyntheticSpec, make_synthetic_dataset

from conftest import TINY

BACKBONE_GROUPS = ("encoder", "tokenizer", "transformer", "reconstructor")
FAST = AdaptConfig(epochs=2, source_batch_clips=4, target_batch_clips=2)


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    root = tmp_path_factory.mktemp("adapt_world")
    source = make_synthetic_dataset(
        SyntheticSpec(8, 8, ("seam",), "clean", seed=41, image_size=16),
        root / "src", role="source")
    target = make_synthetic_dataset(
        SyntheticSpec(6, 8, ("flicker",), "noisy", seed=42, image_size=16),
        root / "tgt", role="target")
    reals = make_synthetic_dataset(
        SyntheticSpec(4, 8, (), "clean", seed=43, image_size=16),
        root / "pre", role="pretrain")
    backbone = pretrain(reals, TINY, PretrainConfig(videos_per_batch=4, epochs=1), seed=1)
    pool = build_adaptation_pool(source, target, 0.5, np.random.default_rng(2))
    return source, target, pool, backbone


class TestFreezeContract:
    def test_backbone_bytes_identical(self, world):
        _, _, pool, backbone = world
        out = adapt(backbone, pool, TINY, FAST, seed=3)
        for group in BACKBONE_GROUPS:
            assert out.group_digest(group) == backbone.group_digest(group)
        assert out.phase == "adapt"
        assert out.parent_hash == backbone.content_hash()

    def test_heads_change(self, world):
        _, _, pool, backbone = world
        out = adapt(backbone, pool, TINY, FAST, seed=3)
        assert out.group_digest("adaptive") != backbone.group_digest("adaptive")
        assert out.group_digest("classifier") != backbone.group_digest("classifier")

    def test_zero_epochs_noop(self, world):
        _, _, pool, backbone = world
        out = adapt(backbone, pool, TINY,
                    AdaptConfig(epochs=0, source_batch_clips=4, target_batch_clips=2), seed=3)
        for group in out.groups:
            assert out.group_digest(group) == backbone.group_digest(group)


class TestVariants:
    def test_lambda_one_coincides_with_source_only(self, world):
        source, _, pool, backbone = world
        cfg = AdaptConfig(epochs=2, source_batch_clips=4, target_batch_clips=2, trade_off=1.0)
        a = adapt(backbone, pool, TINY, cfg, seed=5)
        b = train_source_only(backbone, source, TINY, cfg, seed=5)
        for group in a.groups:
            for name in a.groups[group]:
                assert np.array_equal(a.groups[group][name], b.groups[group][name])

    def test_reconstruction_pipeline_changes_heads(self, world):
        source, _, pool, backbone = world
        a = adapt(backbone, pool, TINY, FAST, seed=5)
        b = train_source_only(backbone, source, TINY, FAST, seed=5)
        assert a.group_digest("adaptive") != b.group_digest("adaptive")

    def test_phase_precondition(self, world):
        source, _, pool, _ = world
        init = checkpoint_from_model(build_model(TINY, seed=0), phase="init")
        with pytest.raises(ValueError, match="pretrain"):
            adapt(init, pool, TINY, FAST, seed=0)
        with pytest.raises(ValueError, match="pretrain"):
            train_source_only(init, source, TINY, FAST, seed=0)
        adapt(init, pool, TINY, FAST, seed=0, allow_unpretrained=True)

    def test_deterministic(self, world):
        _, _, pool, backbone = world
        a = adapt(backbone, pool, TINY, FAST, seed=9)
        b = adapt(backbone, pool, TINY, FAST, seed=9)
        for group in a.groups:
            assert a.group_digest(group) == b.group_digest(group)


class TestGradientRouting:
    def batch(self, world, n_src=4, n_tgt=2):
        source, _, pool, backbone = world
        model = build_model(TINY, seed=7)
        from stadapt.checkpoint import load_into_model
        load_into_model(backbone, model)
        set_phase_trainable(model, "adapt")
        rng = np.random.default_rng(0)
        clips, labels = pool.sample_source_batch(n_src, TINY.clip_len, rng)
        targets = pool.sample_target_batch(n_tgt, TINY.clip_len, rng)
        x = clips_to_tensor(clips)
        y = torch.tensor(labels, dtype=torch.long)
        t = clips_to_tensor(targets)
        return model, x, y, t

    def test_frozen_groups_receive_no_gradient(self, world):
        model, x, y, t = self.batch(world)
        loss = last_loss(classification_loss(classification_logits(model, x), y),
                         target_reconstruction_loss(model, t), 0.5)
        loss.backward()
        for name, p in trainable_parameters(model, "pretrain").items():
            assert p.grad is None, name

    def test_classifier_gradient_scales_with_lambda(self, world):
        lam = 0.5
        model, x, y, t = self.batch(world)
        l_cls = classification_loss(classification_logits(model, x), y)
        grads_cls = torch.autograd.grad(l_cls, model.classifier.parameters(),
                                        retain_graph=False)
        model2, x2, y2, t2 = self.batch(world)
        loss = last_loss(classification_loss(classification_logits(model2, x2), y2),
                         target_reconstruction_loss(model2, t2), lam)
        grads_joint = torch.autograd.grad(loss, model2.classifier.parameters())
        for g_joint, g_cls in zip(grads_joint, grads_cls):
            assert torch.allclose(g_joint, lam * g_cls, atol=1e-7)

    def test_adaptive_gradient_is_weighted_sum(self, world):
        lam = 0.3
        model, x, y, t = self.batch(world)
        l_cls = classification_loss(classification_logits(model, x), y)
        l_rec = target_reconstruction_loss(model, t)
        g_cls = torch.autograd.grad(l_cls, model.adaptive.parameters(), retain_graph=True)
        g_rec = torch.autograd.grad(l_rec, model.adaptive.parameters(), retain_graph=True)
        g_joint = torch.autograd.grad(last_loss(l_cls, l_rec, lam),
                                      model.adaptive.parameters())
        for gj, gc, gr in zip(g_joint, g_cls, g_rec):
            assert torch.allclose(gj, lam * gc + (1 - lam) * gr, atol=1e-6)


class TestTargetReconstruction:
    def test_identical_clips_equal_single(self, world):
        model, _, _, t = self.make(world)
        single = target_reconstruction_loss(model, t[:1])
        batch = target_reconstruction_loss(model, t[:1].repeat(3, 1, 1, 1, 1))
        assert torch.allclose(single, batch, atol=1e-6)

    def make(self, world):
        source, _, pool, backbone = world
        model = build_model(TINY, seed=7)
        from stadapt.checkpoint import load_into_model
        load_into_model(backbone, model)
        rng = np.random.default_rng(1)
        t = clips_to_tensor(pool.sample_target_batch(2, TINY.clip_len, rng))
        return model, None, None, t

    def test_empty_batch_rejected(self, world):
        model, _, _, t = self.make(world)
        with pytest.raises(ValueError, match="empty"):
            target_reconstruction_loss(model, t[:0])

    def test_tuned_adaptive_beats_random_desk_reduced(self, tmp_path):
        # optimizing the adaptive layer on one clip must beat its random init
        pool_dir = tmp_path / "single"
        manifest = make_synthetic_dataset(
            SyntheticSpec(2, 26, (), "clean", seed=51, image_size=64),
            pool_dir, role="pretrain")
        model = build_model(DESK_REDUCED, seed=2)
        set_phase_trainable(model, "adapt")
        clip = sample_clip(manifest.records[0], DESK_REDUCED.clip_len,
                           np.random.default_rng(0))
        x = clips_to_tensor(clip)
        loss_random = target_reconstruction_loss(model, x).item()
        opt = torch.optim.Adam(model.adaptive.parameters(), lr=5e-3)
        for _ in range(200):
            opt.zero_grad()
            loss = target_reconstruction_loss(model, x)
            loss.backward()
            opt.step()
        assert loss.item() < loss_random
