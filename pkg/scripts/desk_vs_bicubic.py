"""Train the small network on synthetic textures and compare with bicubic at x2.

    python scripts/desk_vs_bicubic.py --lr0 1e-3 --epochs 6 --steps-per-epoch 500
"""
import argparse
import logging
from dataclasses import fields

from rbamsr.desk import DeskConfig, run_desk


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for f in fields(DeskConfig):
        ap.add_argument(f"--{f.name.replace('_', '-')}", type=type(f.default), default=f.default)
    ap.add_argument("--report", help="write the per-image model table here")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = DeskConfig(**{f.name: getattr(args, f.name) for f in fields(DeskConfig)})
    res = run_desk(cfg)
    print(f"training: {res.train_seconds:.0f} s, epoch losses {[round(x, 4) for x in res.train_losses]}")
    print(f"bicubic  {res.bicubic.psnr_mean:.3f} +- {res.bicubic.psnr_sem:.3f} dB")
    print(f"model    {res.model.psnr_mean:.3f} +- {res.model.psnr_sem:.3f} dB")
    print(f"gain     {res.gain_db:+.3f} dB")
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(res.model.to_table())


if __name__ == "__main__":
    main()
