#!/usr/bin/env python3
"""Initialization data-scale experiment.

Adapts the detector after pretraining on 0%, 50% and 100% of the real-video
pool (equal optimization steps per scale) and reports cross-domain AUC per
scale, mean over seeds.
"""

import argparse
import warnings
from pathlib import Path

import numpy as np

from stadapt.adapt import adapt
from stadapt.checkpoint import checkpoint_from_model, load_into_model
from stadapt.config import AdaptConfig, DESK_REDUCED, PretrainConfig
from stadapt.data import DatasetManifest, build_adaptation_pool, merge_manifests
from stadapt.model import build_model
from stadapt.pretrain import pretrain
from stadapt.scoring import evaluate_manifest
from stadapt.synth import SyntheticSpec, make_synthetic_dataset
from stadapt.utils import derive_seed

EPOCHS_FOR_SCALE = {0.5: 40, 1.0: 20}  # 120 steps at either scale


def subset(manifest, scale, seed):
    if scale >= 1.0:
        return manifest
    keep = int(np.ceil(scale * len(manifest)))
    rng = np.random.default_rng(derive_seed(seed, "pretrain-scale-subset"))
    picked = sorted(rng.choice(len(manifest), size=keep, replace=False))
    return DatasetManifest(records=tuple(manifest.records[i] for i in picked),
                           name=f"{manifest.name}-sub", role="pretrain")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/data_scale")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    args = parser.parse_args()
    root = Path(args.out)
    cfg = DESK_REDUCED

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mix_a = make_synthetic_dataset(SyntheticSpec(24, 26, (), "clean", seed=111),
                                       root / "data" / "pre_clean", role="pretrain",
                                       id_prefix="ca_")
        mix_b = make_synthetic_dataset(SyntheticSpec(24, 26, (), "compressed", seed=112),
                                       root / "data" / "pre_compressed", role="pretrain",
                                       id_prefix="cb_")
        pre = merge_manifests([mix_a, mix_b], "pre48", "pretrain")
        source = make_synthetic_dataset(SyntheticSpec(24, 26, ("seam",), "clean", seed=103),
                                        root / "data" / "src", role="source")
        target = make_synthetic_dataset(SyntheticSpec(40, 26, ("checker",), "compressed",
                                                      seed=105),
                                        root / "data" / "tgt", role="target")
    target_eval = DatasetManifest(records=target.records, name=target.name, role="eval")
    acfg = AdaptConfig(epochs=10, source_batch_clips=4, target_batch_clips=4)

    results = {0.0: [], 0.5: [], 1.0: []}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for seed in args.seeds:
            pool = build_adaptation_pool(source, target, 1.0,
                                         np.random.default_rng(derive_seed(seed, "pool")))
            for scale in (0.0, 0.5, 1.0):
                if scale == 0.0:
                    backbone = checkpoint_from_model(build_model(cfg, seed), phase="init")
                else:
                    backbone = pretrain(subset(pre, scale, seed), cfg,
                                        PretrainConfig(videos_per_batch=8,
                                                       epochs=EPOCHS_FOR_SCALE[scale]),
                                        seed=seed)
                heads = adapt(backbone, pool, cfg, acfg, seed=seed, allow_unpretrained=True)
                model = build_model(cfg, seed)
                load_into_model(heads, model)
                model.eval()
                results[scale].append(evaluate_manifest(target_eval, model,
                                                        n_eval_clips=6).auc)
            print(f"seed {seed}: " +
                  "  ".join(f"{int(s*100)}%: {results[s][-1]:.1f}" for s in (0.0, 0.5, 1.0)))

    print("\nmean cross-domain AUC by pretraining scale:")
    for scale in (0.0, 0.5, 1.0):
        print(f"  {int(scale*100):3d}%: {np.mean(results[scale]):.2f}")


if __name__ == "__main__":
    main()
