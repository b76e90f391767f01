"""Dataset manifests, train/test split and the texture-rich/poor partition."""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError
from .imaging import GrayImage, bicubic_resample, read_pgm
from .metrics import psnr

SPLITS = ("train", "test")
PARTITIONS = ("unassigned", "rich", "poor")


@dataclass(frozen=True)
class Record:
    image_id: str
    path: str
    split: str = "train"
    partition: str = "unassigned"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ContractError(f"{self.image_id}: split must be one of {SPLITS}, got {self.split!r}")
        if self.partition not in PARTITIONS:
            raise ContractError(f"{self.image_id}: partition must be one of {PARTITIONS}, got {self.partition!r}")
        if not self.image_id or any(ch in self.image_id for ch in "\t\n"):
            raise ContractError(f"invalid image id {self.image_id!r}")


@dataclass
class Manifest:
    records: list = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.image_id in seen:
                raise ContractError(f"duplicate image id {rec.image_id!r}")
            seen.add(rec.image_id)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def subset(self, split: str | None = None, partition: str | None = None) -> list:
        return [r for r in self.records
                if (split is None or r.split == split) and (partition is None or r.partition == partition)]

    def missing(self) -> list:
        """Records whose image file cannot be read."""
        return [r for r in self.records if not os.access(r.path, os.R_OK)]

    def load_images(self, records=None) -> list:
        """``[(image_id, GrayImage), ...]`` for ``records`` (default: all)."""
        return [(r.image_id, read_pgm(r.path)) for r in (self.records if records is None else records)]

    # -- file format: image_id<TAB>path<TAB>split<TAB>partition -------------
    def dumps(self) -> str:
        return "".join(f"{r.image_id}\t{r.path}\t{r.split}\t{r.partition}\n" for r in self.records)

    @classmethod
    def loads(cls, text: str, base_dir: str | os.PathLike | None = None) -> "Manifest":
        records = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise FormatError(f"manifest line {lineno}: expected 4 tab-separated fields, got {len(parts)}")
            image_id, path, split_, part = parts
            if base_dir is not None and not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            try:
                records.append(Record(image_id, path, split_, part))
            except ContractError as exc:
                raise FormatError(f"manifest line {lineno}: {exc}") from None
        return cls(records)

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Manifest":
        path = Path(path)
        manifest = cls.loads(path.read_text(), base_dir=path.parent)
        for rec in manifest.missing():
            warnings.warn(f"manifest entry {rec.image_id}: {rec.path} is not readable")
        return manifest

    @classmethod
    def from_directory(cls, directory: str | os.PathLike, pattern: str = "*.pgm") -> "Manifest":
        paths = sorted(Path(directory).glob(pattern))
        return cls([Record(p.stem, str(p)) for p in paths])


def split(manifest: Manifest, train_fraction: float, seed: int) -> Manifest:
    """Seeded shuffle; the first ``floor(fraction * n)`` shuffled records become train."""
    if not 0.0 < train_fraction < 1.0:
        raise ContractError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(manifest)
    if n == 0:
        raise ContractError("cannot split an empty manifest")
    order = np.random.default_rng(seed).permutation(n)
    n_train = math.floor(train_fraction * n)
    is_train = np.zeros(n, dtype=bool)
    is_train[order[:n_train]] = True
    return Manifest([replace(r, split="train" if is_train[i] else "test")
                     for i, r in enumerate(manifest.records)])


def bicubic_restoration_psnr(img: GrayImage, r: int) -> float:
    """PSNR of bicubic down-by-``r`` then up-by-``r`` against the original."""
    if img.height % r or img.width % r:
        raise ContractError(f"{img.height}x{img.width} image not divisible by {r}")
    small = bicubic_resample(img, img.height // r, img.width // r)
    return psnr(bicubic_resample(small, img.height, img.width), img)


@dataclass
class PartitionReport:
    scale: int
    scores: dict
    threshold: float
    labels: dict

    def rich(self) -> list:
        return [k for k, v in self.labels.items() if v == "rich"]

    def poor(self) -> list:
        return [k for k, v in self.labels.items() if v == "poor"]

    def to_table(self, sep: str = "\t") -> str:
        lines = [sep.join(["image_id", "bicubic_psnr_db", "label"])]
        for k, s in self.scores.items():
            lines.append(sep.join([k, "inf" if math.isinf(s) else f"{s:.6f}", self.labels[k]]))
        lines.append(sep.join(["threshold", f"{self.threshold:.6f}", f"x{self.scale}"]))
        return "\n".join(lines) + "\n"


def label_by_threshold(scores: dict) -> tuple[float, dict]:
    """Threshold = mean of finite scores; strictly below it -> "rich", otherwise "poor"."""
    finite = [s for s in scores.values() if math.isfinite(s)]
    if len(finite) < len(scores):
        warnings.warn(f"{len(scores) - len(finite)} image(s) with infinite bicubic PSNR excluded "
                      f"from the threshold (labelled poor)")
    if not finite:
        raise ContractError("no finite bicubic PSNR to threshold")
    # fsum: correctly rounded, hence independent of record order
    threshold = math.fsum(finite) / len(finite)
    labels = {k: "rich" if s < threshold else "poor" for k, s in scores.items()}
    if not any(v == "rich" for v in labels.values()):
        warnings.warn("texture-rich partition is empty (all bicubic scores equal the mean)")
    return threshold, labels


def partition_by_texture(manifest: Manifest, r: int, images: dict | None = None) -> PartitionReport:
    """Score every test image by bicubic restoration and split at the mean.

    ``images`` optionally maps ``image_id`` to an already-loaded
    :class:`GrayImage`; otherwise files are read from the manifest paths.
    """
    test = manifest.subset(split="test")
    if not test:
        raise ContractError("partition needs a non-empty test split")
    scores = {}
    for rec in test:
        img = images[rec.image_id] if images is not None else read_pgm(rec.path)
        if img.height % r or img.width % r:
            warnings.warn(f"skipping {rec.image_id}: {img.height}x{img.width} not divisible by {r}")
            continue
        scores[rec.image_id] = bicubic_restoration_psnr(img, r)
    threshold, labels = label_by_threshold(scores)
    return PartitionReport(r, scores, threshold, labels)


def apply_partition(manifest: Manifest, report: PartitionReport) -> Manifest:
    return Manifest([replace(r, partition=report.labels.get(r.image_id, r.partition))
                     for r in manifest.records])
