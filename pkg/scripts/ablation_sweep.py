"""Train every attention variant over several seeds and tabulate final training loss.

The final loss is the mean L1 over the last epoch.

    python scripts/ablation_sweep.py --seeds 0 1 2 --epochs 3 --steps-per-epoch 100
"""
import argparse
import logging

import numpy as np

from rbamsr.ablation import HEADER, run_ablation
from rbamsr.model import VARIANTS, ModelConfig
from rbamsr.synthetic import texture_corpus
from rbamsr.train import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=3)
    ap.add_argument("--steps-per-epoch", type=int, default=100)
    ap.add_argument("--lr0", type=float, default=1e-3)
    ap.add_argument("--B", type=int, default=2)
    ap.add_argument("--C", type=int, default=16)
    ap.add_argument("--n-train", type=int, default=60)
    ap.add_argument("--variants", nargs="+", default=list(VARIANTS))
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    images = texture_corpus(args.n_train, 96, seed=1)
    base = ModelConfig(B=args.B, C=args.C, r=2)
    losses = {v: [] for v in args.variants}
    print("seed\t" + HEADER)
    for seed in args.seeds:
        cfg = TrainConfig(batch_size=16, patch_size=24, lr0=args.lr0, epochs=args.epochs,
                          lr_halve_every=args.epochs, steps_per_epoch=args.steps_per_epoch, seed=seed)
        for row in run_ablation(base, cfg, images, variants=args.variants):
            losses[row.variant].append(row.final_l1)
            print(f"{seed}\t{row.line()}", flush=True)
    print("\nvariant\tmean_final_l1\tsem")
    for v, vals in losses.items():
        print(f"{v}\t{np.mean(vals):.6f}\t{np.std(vals) / np.sqrt(len(vals)):.6f}")


if __name__ == "__main__":
    main()
