import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stadapt.data import FrameClip
from stadapt.perturb import (BLOCK_COUNTS, BLUR_SIGMAS, COMPRESS_QUALITIES,
                             CONTRAST_FACTORS, KINDS, NOISE_SIGMAS,
                             PIXEL_FACTORS, Perturbation, PerturbationError,
                             SATURATION_FACTORS, apply_perturbation,
                             parse_perturbation, perturbation_grid)


def make_clip(frames):
    return FrameClip("clip", 0, frames.astype(np.float32))


def gray_clip(level=0.5, n=4, size=64):
    return make_clip(np.full((n, size, size, 3), level))


def random_clip(seed=0, n=4, size=64):
    rng = np.random.default_rng(seed)
    return make_clip(rng.random((n, size, size, 3)))


class TestGrid:
    def test_grid_has_35_cells(self):
        assert len(perturbation_grid()) == 35

    def test_first_entry_and_order(self):
        grid = perturbation_grid()
        assert grid[0] == Perturbation("saturation", 1)
        assert [p.kind for p in grid[:5]] == ["saturation"] * 5
        assert [p.severity for p in grid[:5]] == [1, 2, 3, 4, 5]

    def test_unique_cells(self):
        grid = perturbation_grid()
        assert len(set(grid)) == 35
        assert grid.count(Perturbation("compress", 5)) == 1

    def test_invalid_kind_and_severity(self):
        with pytest.raises(PerturbationError):
            Perturbation("warp", 1)
        with pytest.raises(PerturbationError):
            Perturbation("noise", 0)
        with pytest.raises(PerturbationError):
            Perturbation("noise", 6)

    def test_parse(self):
        assert parse_perturbation("noise:3") == Perturbation("noise", 3)
        with pytest.raises(PerturbationError):
            parse_perturbation("noise")


class TestParameterTables:
    def test_severity_monotone_corruption_strength(self):
        assert list(SATURATION_FACTORS) == sorted(SATURATION_FACTORS)
        assert list(CONTRAST_FACTORS) == sorted(CONTRAST_FACTORS, reverse=True)
        assert list(BLOCK_COUNTS) == sorted(BLOCK_COUNTS)
        assert list(NOISE_SIGMAS) == sorted(NOISE_SIGMAS)
        assert list(BLUR_SIGMAS) == sorted(BLUR_SIGMAS)
        assert list(PIXEL_FACTORS) == sorted(PIXEL_FACTORS)
        assert list(COMPRESS_QUALITIES) == sorted(COMPRESS_QUALITIES, reverse=True)

    def test_exact_spec_values(self):
        assert SATURATION_FACTORS == (1.15, 1.3, 1.6, 2.0, 3.0)
        assert CONTRAST_FACTORS == (0.85, 0.7, 0.55, 0.4, 0.3)
        assert BLOCK_COUNTS == (2, 4, 8, 12, 16)
        assert NOISE_SIGMAS == (0.02, 0.04, 0.06, 0.1, 0.15)
        assert BLUR_SIGMAS == (1.0, 2.0, 3.0, 5.0, 7.0)
        assert PIXEL_FACTORS == (2, 3, 4, 6, 8)
        assert COMPRESS_QUALITIES == (90, 70, 50, 35, 20)


class TestShapeAndRange:
    @pytest.mark.parametrize("kind", KINDS)
    @pytest.mark.parametrize("severity", [1, 3, 5])
    def test_shape_and_range_preserved(self, kind, severity):
        clip = random_clip(seed=severity)
        out = apply_perturbation(clip, Perturbation(kind, severity),
                                 np.random.default_rng(0))
        assert out.frames.shape == clip.frames.shape
        assert out.frames.min() >= 0.0
        assert out.frames.max() <= 1.0
        assert out.video_id == clip.video_id and out.offset == clip.offset

    @given(st.integers(min_value=0, max_value=2 ** 31),
           st.sampled_from(KINDS), st.integers(min_value=1, max_value=5))
    @settings(max_examples=40, deadline=None)
    def test_shape_range_property(self, seed, kind, severity):
        clip = random_clip(seed=seed, n=2, size=36)
        out = apply_perturbation(clip, Perturbation(kind, severity),
                                 np.random.default_rng(seed))
        assert out.frames.shape == clip.frames.shape
        assert 0.0 <= out.frames.min() and out.frames.max() <= 1.0


class TestPerKindBehavior:
    def test_saturation_fixed_point_on_gray(self):
        clip = gray_clip(0.5)
        for sev in range(1, 6):
            out = apply_perturbation(clip, Perturbation("saturation", sev))
            assert np.allclose(out.frames, clip.frames, atol=1e-6)

    def test_contrast_pulls_toward_midgray(self):
        clip = random_clip(seed=1)
        out = apply_perturbation(clip, Perturbation("contrast", 5))
        assert np.all(np.abs(out.frames - 0.5) <= np.abs(clip.frames - 0.5) + 1e-6)

    def test_noise_sigma_empirical(self):
        clip = gray_clip(0.5, n=8, size=64)
        for sev, sigma in enumerate(NOISE_SIGMAS, start=1):
            out = apply_perturbation(clip, Perturbation("noise", sev),
                                     np.random.default_rng(123))
            measured = float((out.frames - 0.5).std())
            assert abs(measured - sigma) / sigma < 0.05

    def test_noise_independent_per_frame(self):
        clip = gray_clip(0.5, n=3)
        out = apply_perturbation(clip, Perturbation("noise", 3), np.random.default_rng(0))
        assert not np.array_equal(out.frames[0], out.frames[1])

    def test_block_same_positions_across_frames(self):
        clip = make_clip(np.full((3, 64, 64, 3), 0.9))
        out = apply_perturbation(clip, Perturbation("block", 2), np.random.default_rng(4))
        zero_masks = [np.all(out.frames[t] == 0.0, axis=-1) for t in range(3)]
        assert np.array_equal(zero_masks[0], zero_masks[1])
        assert np.array_equal(zero_masks[0], zero_masks[2])
        assert zero_masks[0].sum() >= 32 * 32  # at least one full square survives overlap

    def test_block_deterministic_under_seed(self):
        clip = random_clip(seed=2)
        a = apply_perturbation(clip, Perturbation("block", 3), np.random.default_rng(7))
        b = apply_perturbation(clip, Perturbation("block", 3), np.random.default_rng(7))
        assert np.array_equal(a.frames, b.frames)

    def test_blur_reduces_high_frequency(self):
        clip = random_clip(seed=3)
        out = apply_perturbation(clip, Perturbation("blur", 3))
        def hf(f):
            return float(np.abs(np.diff(f, axis=1)).mean())
        assert hf(out.frames) < hf(clip.frames)

    def test_pixelate_period_8_constancy(self):
        clip = random_clip(seed=4, n=2, size=64)
        out = apply_perturbation(clip, Perturbation("pixel", 5))  # factor 8
        blocks = out.frames.reshape(2, 8, 8, 8, 8, 3)
        assert np.allclose(blocks, blocks[:, :, :1, :, :1, :], atol=1e-6)

    def test_pixelate_non_divisible_size(self):
        clip = random_clip(seed=5, n=2, size=50)  # 50 % 3 != 0
        out = apply_perturbation(clip, Perturbation("pixel", 2))
        assert out.frames.shape == clip.frames.shape

    def test_compress_identical_frames_identically(self):
        frames = np.tile(random_clip(seed=6, n=1).frames, (3, 1, 1, 1))
        out = apply_perturbation(make_clip(frames), Perturbation("compress", 4))
        assert np.array_equal(out.frames[0], out.frames[1])
        assert not np.array_equal(out.frames, frames)  # quality 35 visibly lossy

    def test_stochastic_kinds_require_rng(self):
        clip = gray_clip()
        with pytest.raises(PerturbationError, match="rng"):
            apply_perturbation(clip, Perturbation("noise", 1))
        with pytest.raises(PerturbationError, match="rng"):
            apply_perturbation(clip, Perturbation("block", 1))
