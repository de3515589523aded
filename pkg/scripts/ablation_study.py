#!/usr/bin/env python3
"""Ablate one pipeline stage over several seeds and print the paired metrics.

Usage:
    python scripts/ablation_study.py --switch erw --seeds 5 --out runs/ablation
    python scripts/ablation_study.py --switch band_screen --seeds 5
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from oilspill import evaluate
from oilspill.pipeline import PipelineConfig, run_ablation
from oilspill.scenegen import default_scene_spec


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--switch", choices=("erw", "band_screen"), required=True)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--out", type=Path, default=Path("runs/ablation"))
    args = parser.parse_args()

    spec = default_scene_spec()
    deltas_auc, deltas_dp = [], []
    print(f"{'seed':>4} {'auc_on':>8} {'auc_off':>8} {'dp_on':>8} {'dp_off':>8} {'iso_on':>7}")
    for seed in range(args.seeds):
        config = PipelineConfig(scene=spec, seed=seed,
                                output_dir=args.out / f"seed{seed}")
        result = run_ablation(config, args.switch)
        iso = evaluate.count_isolated_positives(result.on_artifacts.detection.values)
        print(f"{seed:>4} {result.on_report.auc:>8.4f} {result.off_report.auc:>8.4f} "
              f"{result.on_report.dp:>8.4f} {result.off_report.dp:>8.4f} {iso:>7d}")
        deltas_auc.append(result.auc_delta)
        deltas_dp.append(result.dp_delta)

    print(f"median AUC delta {np.median(deltas_auc):+.4f}, "
          f"median DP delta {np.median(deltas_dp):+.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
