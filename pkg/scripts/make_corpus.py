"""Write a synthetic texture corpus as PGM files plus a split manifest.

    python scripts/make_corpus.py --out data/textures --n 60 --size 96
"""
import argparse
from pathlib import Path

from rbamsr.datakit import Manifest, Record, split
from rbamsr.imaging import write_pgm
from rbamsr.synthetic import texture_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--n", type=int, default=60)
    ap.add_argument("--size", type=int, default=96)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--train-fraction", type=float, default=0.8)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i, img in enumerate(texture_corpus(args.n, args.size, seed=args.seed)):
        name = f"tex{i:03d}"
        write_pgm(out / f"{name}.pgm", img)
        records.append(Record(name, f"{name}.pgm"))
    split(Manifest(records), args.train_fraction, args.seed).save(out / "manifest.tsv")
    print(f"wrote {len(records)} images and {out / 'manifest.tsv'}")


if __name__ == "__main__":
    main()
