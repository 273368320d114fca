import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from stadapt.losses import (LossError, anchor_contrastive_loss,
                            classification_loss, contrastive_loss, cosine_sim,
                            init_loss, last_loss, reconstruction_loss)

REL = 1e-6


def close(actual, expected, rel=REL):
    actual = float(actual)
    return math.isclose(actual, expected, rel_tol=rel, abs_tol=rel)


def t64(data):
    return torch.tensor(data, dtype=torch.float64)


class TestReconstructionLoss:
    def test_identity_is_zero(self):
        t = t64(np.arange(24.0).reshape(2, 2, 2, 3))
        assert reconstruction_loss(t, t).item() == 0.0

    def test_hand_example_two_scalar_frames(self):
        # two frames, one 1x1x1 cell each: T*=(1,3), T=(0,0) -> (1+3)/2
        t_star = t64([[[[1.0]]], [[[3.0]]]])
        t = t64([[[[0.0]]], [[[0.0]]]])
        assert close(reconstruction_loss(t_star, t), 2.0)

    def test_scaling_homogeneity(self):
        rng = np.random.default_rng(0)
        t_star = t64(rng.normal(size=(4, 3, 3, 5)))
        t = t64(rng.normal(size=(4, 3, 3, 5)))
        base = reconstruction_loss(t_star, t).item()
        for c in (0.0, 0.5, 3.0):
            scaled = t + c * (t_star - t)
            assert close(reconstruction_loss(scaled, t), c * base, rel=1e-9)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(LossError):
            reconstruction_loss(torch.zeros(2, 2, 2, 3), torch.zeros(2, 2, 2, 4))

    def test_batch_is_mean_of_clips(self):
        rng = np.random.default_rng(1)
        a = t64(rng.normal(size=(2, 4, 3, 3, 5)))
        b = t64(rng.normal(size=(2, 4, 3, 3, 5)))
        per_clip = [reconstruction_loss(a[i], b[i]).item() for i in range(2)]
        assert close(reconstruction_loss(a, b), np.mean(per_clip), rel=1e-12)

    @given(st.integers(min_value=1, max_value=5), st.integers(min_value=0, max_value=2 ** 31))
    @settings(max_examples=25, deadline=None)
    def test_triangle_inequality(self, n, seed):
        rng = np.random.default_rng(seed)
        a, b, c = (t64(rng.normal(size=(n, 2, 2, 3))) for _ in range(3))
        lab = reconstruction_loss(a, b).item()
        lbc = reconstruction_loss(b, c).item()
        lac = reconstruction_loss(a, c).item()
        assert lac <= lab + lbc + 1e-9


class TestCosineSim:
    def test_self_similarity(self):
        z = t64([0.3, -1.2, 2.0])
        assert close(cosine_sim(z, z), 1.0)

    def test_orthogonal(self):
        assert close(cosine_sim(t64([1.0, 0.0]), t64([0.0, 1.0])), 0.0, rel=1e-12)

    def test_zero_vector_clamps_to_zero(self):
        z = t64([0.0, 0.0, 0.0])
        other = t64([1.0, 2.0, 3.0])
        assert cosine_sim(z, other, eps=1e-8).item() == 0.0

    def test_dim_mismatch(self):
        with pytest.raises(LossError):
            cosine_sim(torch.zeros(3), torch.zeros(4))


class TestContrastiveLoss:
    def test_single_negative_closed_form(self):
        # anchor=(1,0), positive=(1,0), one negative=(0,1), tau=0.5
        loss = anchor_contrastive_loss(t64(1.0), t64([0.0]), temperature=0.5)
        assert close(loss, math.log(1.0 + math.exp(-2.0)))

    def test_all_identical_equals_log1p_negatives(self):
        for m in (2, 3, 5):
            z = torch.ones(2 * m, 4, dtype=torch.float64)
            ids = [f"v{i}" for i in range(m) for _ in range(2)]
            loss = contrastive_loss(z, ids, temperature=0.5)
            n_negatives = 2 * (m - 1)
            assert close(loss, math.log(1 + n_negatives))

    def test_loss_strictly_positive(self):
        rng = np.random.default_rng(3)
        z = t64(rng.normal(size=(6, 8)))
        ids = ["a", "a", "b", "b", "c", "c"]
        assert contrastive_loss(z, ids, temperature=0.5).item() > 0.0

    def test_batch_mean_against_anchor_form(self):
        # brute-force per-anchor evaluation must match the vectorized batch
        rng = np.random.default_rng(4)
        m = 4
        z = t64(rng.normal(size=(2 * m, 8)))
        ids = [f"v{i}" for i in range(m) for _ in range(2)]
        per_anchor = []
        for i in range(2 * m):
            pos = next(j for j in range(2 * m) if ids[j] == ids[i] and j != i)
            negs = [j for j in range(2 * m) if ids[j] != ids[i]]
            pos_sim = cosine_sim(z[i], z[pos])
            neg_sims = torch.stack([cosine_sim(z[i], z[j]) for j in negs])
            per_anchor.append(anchor_contrastive_loss(pos_sim, neg_sims, 0.5).item())
        assert close(contrastive_loss(z, ids, temperature=0.5), np.mean(per_anchor), rel=1e-9)

    def test_rejects_unpaired_video(self):
        z = torch.ones(3, 4)
        with pytest.raises(LossError):
            contrastive_loss(z, ["a", "a", "b"], temperature=0.5)

    def test_rejects_single_video(self):
        z = torch.ones(2, 4)
        with pytest.raises(LossError):
            contrastive_loss(z, ["a", "a"], temperature=0.5)

    @given(st.floats(min_value=0.01, max_value=100.0), st.integers(min_value=0, max_value=2 ** 31))
    @settings(max_examples=30, deadline=None)
    def test_scale_invariance_single_embedding(self, c, seed):
        rng = np.random.default_rng(seed)
        z = rng.normal(size=(6, 5))
        ids = ["a", "a", "b", "b", "c", "c"]
        base = contrastive_loss(t64(z), ids, temperature=0.5).item()
        z_scaled = z.copy()
        z_scaled[2] *= c
        scaled = contrastive_loss(t64(z_scaled), ids, temperature=0.5).item()
        assert math.isclose(base, scaled, rel_tol=1e-6, abs_tol=1e-6)

    @given(st.integers(min_value=0, max_value=2 ** 31))
    @settings(max_examples=30, deadline=None)
    def test_batch_order_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        m = 4
        z = rng.normal(size=(2 * m, 6))
        ids = [f"v{i}" for i in range(m) for _ in range(2)]
        base = contrastive_loss(t64(z), ids, temperature=0.5).item()
        perm = rng.permutation(2 * m)
        shuffled = contrastive_loss(t64(z[perm]), [ids[i] for i in perm], temperature=0.5).item()
        assert math.isclose(base, shuffled, rel_tol=1e-9, abs_tol=1e-9)


class TestClassificationLoss:
    def test_saturated_correct_is_near_zero(self):
        loss = classification_loss(t64([[20.0, -20.0]]), torch.tensor([0]))
        assert loss.item() < 1e-8

    def test_uniform_prediction_is_ln2(self):
        for label in (0, 1):
            loss = classification_loss(t64([[0.0, 0.0]]), torch.tensor([label]))
            assert close(loss, math.log(2.0))

    def test_confident_wrong_closed_form(self):
        # logits (real=-3, fake=3), true label real -> log(1 + e^6)
        loss = classification_loss(t64([[-3.0, 3.0]]), torch.tensor([0]))
        assert close(loss, math.log(1.0 + math.exp(6.0)))

    def test_label_validation(self):
        with pytest.raises(LossError):
            classification_loss(torch.zeros(1, 2), torch.tensor([2]))

    def test_empty_batch_rejected(self):
        with pytest.raises(LossError):
            classification_loss(torch.zeros(0, 2), torch.zeros(0))

    @given(st.integers(min_value=0, max_value=2 ** 31))
    @settings(max_examples=30, deadline=None)
    def test_batch_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        logits = rng.normal(size=(7, 2))
        labels = rng.integers(0, 2, size=7)
        base = classification_loss(t64(logits), torch.tensor(labels)).item()
        perm = rng.permutation(7)
        shuffled = classification_loss(t64(logits[perm]), torch.tensor(labels[perm])).item()
        assert math.isclose(base, shuffled, rel_tol=1e-9, abs_tol=1e-12)


class TestCombinedLosses:
    def test_init_loss_paper_defaults(self):
        value = init_loss(t64(0.2), t64(0.4), 1.0, 0.5)
        assert close(value, 0.4)

    def test_init_loss_zero_weight_drops_term(self):
        assert close(init_loss(t64(0.7), t64(123.0), 1.0, 0.0), 0.7)

    def test_init_loss_zero_losses(self):
        assert init_loss(t64(0.0), t64(0.0), 1.0, 0.5).item() == 0.0

    def test_init_loss_rejects_negative_weights(self):
        with pytest.raises(LossError):
            init_loss(t64(1.0), t64(1.0), -0.1, 0.5)

    def test_last_loss_paper_default(self):
        assert close(last_loss(t64(0.8), t64(0.4), 0.5), 0.6)

    def test_last_loss_extremes(self):
        assert close(last_loss(t64(0.8), t64(0.4), 1.0), 0.8)
        assert close(last_loss(t64(0.8), t64(0.4), 0.0), 0.4)

    def test_last_loss_out_of_range(self):
        with pytest.raises(LossError):
            last_loss(t64(1.0), t64(1.0), 1.5)

    @given(st.floats(min_value=0.0, max_value=1.0),
           st.floats(min_value=0.0, max_value=10.0),
           st.floats(min_value=0.0, max_value=10.0))
    @settings(max_examples=50, deadline=None)
    def test_last_loss_convexity_bounds(self, lam, l_cls, l_rec):
        value = last_loss(t64(l_cls), t64(l_rec), lam).item()
        assert min(l_cls, l_rec) - 1e-9 <= value <= max(l_cls, l_rec) + 1e-9
