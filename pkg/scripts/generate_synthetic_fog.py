#!/usr/bin/env python3
"""
Synthetic data generator for the sea-fog pipeline.

- Writes observations.csv, grid.csv, catalog.yaml and truth.json into the output directory.
- Fog follows a planted rule: lagged 2 m humidity at or above a threshold and 10 m wind below one.
- Label noise and missing observations are optional edge cases.

Usage:
  python scripts/generate_synthetic_fog.py \
    --out-dir data/synth \
    --seed 7 \
    --fog-frequency 0.05 \
    --label-noise 0.05

If no args are provided, the synth section of config/default.yaml is used as is.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

PROJECT_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(PROJECT_ROOT))

from src.components import SynthesisComponent  # noqa: E402
from src.config import PipelineConfig  # noqa: E402
from src.utils import FogPipelineError, setup_logging  # noqa: E402


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Generate a seeded synthetic sea-fog dataset")
    parser.add_argument("--config", type=Path, default=PROJECT_ROOT / "config/default.yaml")
    parser.add_argument("--out-dir", type=Path, default=None, help="Defaults to paths.data_dir")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--fog-frequency", type=float, default=None, help="Target fraction of fog labels")
    parser.add_argument("--label-noise", type=float, default=None, help="Probability of flipping a label")
    parser.add_argument("--missing-fraction", type=float, default=None, help="Fraction of blank visibilities")
    return parser.parse_args()


def main() -> int:
    args = parse_args()
    config = PipelineConfig.from_yaml(args.config).with_overrides({
        "synth.seed": args.seed,
        "synth.target_fog_frequency": args.fog_frequency,
        "synth.label_noise": args.label_noise,
        "synth.missing_fraction": args.missing_fraction,
    })
    setup_logging(config.project.log_level)
    out_dir = args.out_dir or Path(config.paths.data_dir)

    try:
        result = SynthesisComponent(config).execute(out_dir)
    except FogPipelineError as e:
        print(f"Synthesis failed: {e}", file=sys.stderr)
        return 1

    for name, path in result.paths.items():
        print(f"Wrote {name}: {path}")
    print(f"Rule fog frequency: {result.truth['rule_fog_frequency']:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
