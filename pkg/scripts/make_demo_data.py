#!/usr/bin/env python3
"""Generate the standard desk-scale synthetic pools under a data directory."""

import argparse
from pathlib import Path

from stadapt.synth import SyntheticSpec, make_synthetic_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/demo", help="output root")
    parser.add_argument("--frames", type=int, default=26)
    args = parser.parse_args()
    root = Path(args.out)

    pools = {
        "pretrain_real": SyntheticSpec(24, args.frames, (), "clean", seed=101),
        "source_seam_clean": SyntheticSpec(24, args.frames, ("seam",), "clean", seed=103),
        "target_flicker_compressed": SyntheticSpec(40, args.frames, ("flicker",),
                                                   "compressed", seed=104),
        "target_checker_compressed": SyntheticSpec(40, args.frames, ("checker",),
                                                   "compressed", seed=105),
    }
    roles = {"pretrain_real": "pretrain", "source_seam_clean": "source",
             "target_flicker_compressed": "target", "target_checker_compressed": "target"}
    for name, spec in pools.items():
        manifest = make_synthetic_dataset(spec, root / name, role=roles[name])
        print(f"{name}: {len(manifest)} videos -> {root / name / 'manifest.tsv'}")


if __name__ == "__main__":
    main()
