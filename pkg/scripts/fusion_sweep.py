#!/usr/bin/env python3
"""Accuracy as a function of the fusion depth K (default grid 0, 2, 5)."""

import argparse
from pathlib import Path

from factpool.config import Config
from factpool.experiment import ExperimentConfig, sweep
from factpool.synthetic import SyntheticSpec, write_synthetic


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=str, default="out/fusion_sweep")
    parser.add_argument("--questions", type=int, default=300)
    parser.add_argument("--train-count", type=int, default=200)
    parser.add_argument("--test-count", type=int, default=100)
    parser.add_argument("--epochs", type=int, default=6)
    parser.add_argument("--values", type=str, default="0,2,5")
    parser.add_argument("--seeds", type=str, default="0")
    args = parser.parse_args()

    out = Path(args.out)
    paths = write_synthetic(
        SyntheticSpec(entities=10 * args.questions, relations=6, questions=args.questions,
                      candidates=4, distractor_rate=0.6, kg_fraction=0.6, seed=0),
        out / "data",
    )
    cfg = Config(L=6, d=64, heads=4, K=0, fusion_mode="early_late", max_tokens=40,
                 max_nodes=32, epochs=args.epochs, batch_size=16, seed=0)
    ecfg = ExperimentConfig(
        config=cfg,
        kg_path=str(paths["kg"]),
        dataset_path=str(paths["dataset"]),
        templates_path=str(paths["templates"]),
        train_count=args.train_count,
        test_count=args.test_count,
        seeds=tuple(int(s) for s in args.seeds.split(",")),
        out_dir=str(out),
    )
    _, text = sweep(ecfg, "K", [int(v) for v in args.values.split(",")])
    print(text, end="")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
