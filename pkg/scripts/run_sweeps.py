#!/usr/bin/env python3
"""Hyperparameter sweeps: keep fraction, queue capacity, or text batch
size, each across a shared seed set. Wraps the sweep command with a
desk-scale config so a full grid finishes in minutes."""

import argparse

from pairsieve.config import RunConfig
from pairsieve.data import GenConfig
from pairsieve.harness import DEFAULT_GRIDS, cmd_sweep


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--axis", choices=sorted(DEFAULT_GRIDS), default="lambda")
    ap.add_argument("--values", help="comma-separated grid (defaults per axis)")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--n-pairs", type=int, default=2500)
    ap.add_argument("--out-dir", default="out/sweeps")
    args = ap.parse_args()

    cfg = RunConfig(data=GenConfig(n_pairs=args.n_pairs, seed=0), seed=0)
    cfg.n_val = min(500, args.n_pairs // 5)
    cfg.mlm_on = args.axis == "text_batch"
    cfg.stop.enabled = False
    cfg.train.base_lr = 2e-2
    cfg.train.filter_epochs_max = 6
    cfg.train.epochs = 16

    values = args.values.split(",") if args.values else None
    seeds = [int(s) for s in args.seeds.split(",")]
    results = cmd_sweep(cfg, args.axis, values, seeds, args.out_dir)
    for row in results:
        extra = f" step_time={row['step_time_s']*1e6:.0f}us" if "step_time_s" in row else ""
        print(
            f"{args.axis}={row['value']} seed={row['seed']}: "
            f"f1={row['val_f1']:.3f} R@1={row['val_r1_b2a']:.3f} "
            f"noisy={row['frac_noisy']:.3f}{extra}"
        )
    print(f"comparison CSV under {args.out_dir}/sweep_{args.axis}.csv")


if __name__ == "__main__":
    main()
