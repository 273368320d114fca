import numpy as np
import pytest

from stadapt.checkpoint import checkpoint_from_model
from stadapt.config import parse_config_file
from stadapt.model import build_model
from stadapt.protocol import protocol_from_mapping, run_protocol, run_robustness
from stadapt.synth import SyntheticSpec, make_synthetic_dataset

from conftest import TINY

TINY_MODEL_LINES = """
model.clip_len = 3
model.image_size = 16
model.encoder_channels = 4,8
model.feature_grid = 2
model.feature_dim = 8
model.token_dim = 16
model.depth = 1
model.n_heads = 2
model.mlp_ratio = 2
pretrain.videos_per_batch = 4
pretrain.epochs = 1
adapt.epochs = 1
adapt.source_batch_clips = 4
adapt.target_batch_clips = 2
"""


def write_cfg(path, body):
    path.write_text(TINY_MODEL_LINES + body)
    return path


@pytest.fixture(scope="module")
def ablation_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("proto")
    cfg = write_cfg(root / "ablation.cfg", """
run.name = ablation-smoke
protocol.seeds = 3,4
protocol.variants = adapt,source-only
protocol.n_eval_clips = 1
data.target_ratio = 0.5
synth.pretrain.n_videos = 4
synth.pretrain.frames_per_video = 8
synth.pretrain.seed = 1
synth.source.n_videos = 6
synth.source.frames_per_video = 8
synth.source.families = seam
synth.source.seed = 2
synth.target.n_videos = 4
synth.target.frames_per_video = 8
synth.target.families = flicker
synth.target.style = noisy
synth.target.seed = 3
""")
    mapping = parse_config_file(cfg)
    spec = protocol_from_mapping(mapping, out_dir=root / "run")
    results = run_protocol(spec)
    return root / "run", results


class TestProtocolRunner:
    def test_paired_reports_per_seed(self, ablation_run):
        out, results = ablation_run
        # 2 variants x 2 seeds x 1 eval set x clean
        assert len(results) == 4
        names = sorted(p.name for p, _ in results)
        assert sum("adapt_" in n for n in names) == 2
        assert sum("source-only_" in n for n in names) == 2

    def test_directory_tree(self, ablation_run):
        out, _ = ablation_run
        assert (out / "config.resolved.cfg").exists()
        assert (out / "inputs.sha256").exists()
        assert (out / "reports_table.tsv").exists()
        assert any((out / "checkpoints").glob("backbone_*.ckpt"))
        assert any((out / "checkpoints").glob("adapt_*.ckpt"))
        assert any((out / "logs").glob("pretrain_*.csv"))
        assert any((out / "logs").glob("adapt_*.csv"))
        assert any((out / "data" / "source").glob("manifest.tsv"))

    def test_table_rows_match_reports(self, ablation_run):
        out, results = ablation_run
        rows = (out / "reports_table.tsv").read_text().strip().splitlines()
        assert len(rows) == 1 + len(results)

    def test_scale_zero_skips_pretraining(self, tmp_path):
        cfg = write_cfg(tmp_path / "scale.cfg", """
run.name = scale-smoke
protocol.seeds = 5
protocol.variants = source-only
protocol.pretrain_scales = 0.0
protocol.n_eval_clips = 1
synth.source.n_videos = 4
synth.source.frames_per_video = 8
synth.source.families = seam
synth.source.seed = 7
synth.eval.n_videos = 4
synth.eval.frames_per_video = 8
synth.eval.families = seam
synth.eval.seed = 8
""")
        spec = protocol_from_mapping(parse_config_file(cfg), out_dir=tmp_path / "run")
        results = run_protocol(spec)
        assert len(results) == 1
        assert not any((tmp_path / "run" / "logs").glob("pretrain_*.csv"))

    def test_missing_source_rejected(self, tmp_path):
        cfg = write_cfg(tmp_path / "bad.cfg", "run.name = bad\n")
        spec = protocol_from_mapping(parse_config_file(cfg), out_dir=tmp_path / "run")
        with pytest.raises(Exception, match="source manifest"):
            run_protocol(spec)


class TestRobustnessRunner:
    def test_grid_structure(self, tmp_path):
        manifest = make_synthetic_dataset(
            SyntheticSpec(4, 8, ("seam",), "clean", seed=9, image_size=16),
            tmp_path / "eval", role="eval")
        ckpt = checkpoint_from_model(build_model(TINY, seed=1), phase="init")
        results = run_robustness(ckpt, manifest, tmp_path / "rob", n_eval_clips=1)
        assert len(results) == 36  # clean + 35 grid cells
        summary = (tmp_path / "rob" / "robustness_summary.tsv").read_text().splitlines()
        header = summary[0].split("\t")
        assert header == ["clean", "saturation", "contrast", "block", "noise",
                          "blur", "pixel", "compress", "avg", "drop"]
        assert len(summary[1].split("\t")) == len(header)
