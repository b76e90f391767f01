"""Command-line entry point.

Exit codes: 0 success, 1 verification or metric failure, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import ablation, datakit, gradcheck
from .autodiff import Tensor, no_grad
from .checkpoint import Checkpoint, check_compatible, load_checkpoint
from .errors import ConfigError, ContractError, FormatError, ShapeError
from .imaging import GrayImage, bicubic_resample, read_pgm, write_pgm
from .metrics import BicubicBaseline, evaluate
from .model import ModelConfig, build, forward, predictor
from .train import TrainConfig, train


class UsageError(Exception):
    """Bad flags, config or inputs; maps to exit code 2."""


@dataclass
class RunConfig:
    # model
    B: int = 5
    C: int = 64
    scale: int = 2
    sa_pool: int = 8
    ca_reduction: int = 4
    use_ca: bool = True
    use_sa: bool = True
    use_first_order: bool = True
    use_second_order: bool = True
    # training
    batch_size: int = 16
    patch_size: int = 48
    lr0: float = 1e-4
    lr_halve_every: int = 50
    epochs: int = 300
    seed: int = 0
    steps_per_epoch: int = 0  # 0: derived from corpus size
    checkpoint_every: int = 10
    dtype: str = "float32"
    # paths
    manifest: str = ""
    checkpoint: str = ""
    out: str = ""

    def model_config(self) -> ModelConfig:
        return ModelConfig(B=self.B, C=self.C, r=self.scale, sa_pool=self.sa_pool,
                           ca_reduction=self.ca_reduction, use_ca=self.use_ca, use_sa=self.use_sa,
                           use_first_order=self.use_first_order, use_second_order=self.use_second_order)

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, patch_size=self.patch_size, lr0=self.lr0,
                           lr_halve_every=self.lr_halve_every, epochs=self.epochs, seed=self.seed,
                           scale=self.scale, steps_per_epoch=self.steps_per_epoch or None,
                           checkpoint_every=self.checkpoint_every, dtype=self.dtype)

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str, types=_FIELD_TYPES):
    kind = types[key]
    if kind in (bool, "bool"):
        low = raw.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw.strip()


def parse_config_text(text: str, source: str = "<config>", types=_FIELD_TYPES) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment; keys outside ``types`` are rejected."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, raw = body.partition("=")
        key = key.strip()
        if not sep or not key:
            raise UsageError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        if key not in types:
            raise UsageError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, raw.strip(), types)
        except ValueError as exc:
            raise UsageError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return values


def resolve(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} not found")
        values.update(parse_config_text(path.read_text(), str(path)))
    for name in _FIELD_TYPES:
        flag = getattr(args, f"set_{name}", None)
        if flag is not None:
            try:
                values[name] = _convert(name, flag)
            except ValueError as exc:
                raise UsageError(f"--{name.replace('_', '-')}: {exc}") from None
    for name in ("manifest", "out", "checkpoint"):
        v = getattr(args, name, None)
        if v:
            values[name] = v
    try:
        cfg = RunConfig(**values)
        cfg.model_config()
        cfg.train_config()
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _add_overrides(p: argparse.ArgumentParser) -> None:
    group = p.add_argument_group("config overrides")
    for f in fields(RunConfig):
        if f.name in ("manifest", "out", "checkpoint"):
            continue
        group.add_argument(f"--{f.name.replace('_', '-')}", dest=f"set_{f.name}", default=None,
                           metavar=f.name.upper(), help=f"(default {f.default})")


def _echo(cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.txt").write_text(cfg.dumps())


def _load_ckpt(path) -> Checkpoint:
    try:
        ckpt = load_checkpoint(path)
        check_compatible(ckpt)
    except FileNotFoundError:
        raise UsageError(f"checkpoint {path} not found") from None
    except (FormatError, ConfigError) as exc:
        raise UsageError(f"checkpoint {path}: {exc}") from None
    return ckpt


def _load_manifest(path) -> datakit.Manifest:
    if not path:
        raise UsageError("--manifest is required")
    try:
        return datakit.Manifest.load(path)
    except FileNotFoundError:
        raise UsageError(f"manifest {path} not found") from None
    except FormatError as exc:
        raise UsageError(str(exc)) from None


def _read_image(path) -> GrayImage:
    try:
        return read_pgm(path)
    except FileNotFoundError:
        raise UsageError(f"{path} not found") from None
    except FormatError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _train_images(manifest: datakit.Manifest) -> list:
    recs = manifest.subset(split="train")
    if not recs:
        raise UsageError("manifest has no train records")
    return [img for _, img in manifest.load_images(recs)]


def _test_images(manifest: datakit.Manifest, partition: str = "all") -> list:
    recs = manifest.subset(split="test") or list(manifest.records)
    if partition == "rich":
        if all(r.partition == "unassigned" for r in recs):
            raise UsageError("manifest is not partitioned; run `rbamsr partition` first or use --partition all")
        recs = [r for r in recs if r.partition == "rich"]
    return manifest.load_images(recs)


# -- commands ---------------------------------------------------------------

def cmd_degrade(args) -> int:
    img = _read_image(args.inp)
    r = args.scale
    if img.height % r or img.width % r:
        raise UsageError(f"{img.height}x{img.width} image is not divisible by {r}")
    write_pgm(args.out, bicubic_resample(img, img.height // r, img.width // r))
    return 0


def cmd_train(args) -> int:
    cfg = resolve(args)
    if not cfg.out:
        raise UsageError("--out is required")
    out = Path(cfg.out)
    manifest = _load_manifest(cfg.manifest)
    images = _train_images(manifest)
    model_cfg, train_cfg = cfg.model_config(), cfg.train_config()
    start = 0
    if args.resume:
        ckpt = _load_ckpt(args.resume)
        if ckpt.config != model_cfg:
            raise UsageError(f"checkpoint model {ckpt.config} differs from resolved config {model_cfg}")
        params, adam, start = ckpt.params, ckpt.adam, int(ckpt.meta.get("epoch", 0))
    else:
        params, adam = build(model_cfg, cfg.seed, dtype=np.dtype(cfg.dtype)), None
    _echo(cfg, out)
    try:
        records = train(params, model_cfg, images, train_cfg, checkpoint_dir=out, adam=adam,
                        start_epoch=start, log_path=out / "train_log.csv")
    except ContractError as exc:
        raise UsageError(str(exc)) from None
    for rec in records:
        print(rec.line())
    return 0


def cmd_infer(args) -> int:
    ckpt = _load_ckpt(args.checkpoint)
    img = _read_image(args.inp)
    dtype = ckpt.params[ckpt.params.names()[0]].dtype
    x = Tensor(img.data[None].astype(dtype))
    try:
        start = time.perf_counter()
        with no_grad():
            y = forward(ckpt.params, ckpt.config, x)
        elapsed = time.perf_counter() - start
    except ShapeError as exc:
        raise UsageError(str(exc)) from None
    write_pgm(args.out, GrayImage.from_array(y.data[0]))
    print(f"forward_seconds: {elapsed:.6f}")
    return 0


def cmd_eval(args) -> int:
    manifest = _load_manifest(args.manifest)
    if args.checkpoint:
        ckpt = _load_ckpt(args.checkpoint)
        if ckpt.config.r != args.scale:
            raise UsageError(f"checkpoint scale {ckpt.config.r} differs from --scale {args.scale}")
        predict = predictor(ckpt.params, ckpt.config)
    else:
        predict = BicubicBaseline(args.scale)
    images = _test_images(manifest, args.partition)
    if not images:
        warnings.warn("no images to evaluate (empty partition)")
    report = evaluate(predict, images, args.scale)
    table = report.to_table()
    if args.report:
        Path(args.report).write_text(table)
    sys.stdout.write(table)
    return 0


def cmd_partition(args) -> int:
    manifest = _load_manifest(args.manifest)
    try:
        report = datakit.partition_by_texture(manifest, args.scale)
    except ContractError as exc:
        raise UsageError(str(exc)) from None
    labelled = datakit.apply_partition(manifest, report)
    labelled.save(args.out)
    if args.report:
        Path(args.report).write_text(report.to_table())
    sys.stdout.write(report.to_table())
    return 0


def cmd_split(args) -> int:
    manifest = _load_manifest(args.manifest)
    try:
        datakit.split(manifest, args.fraction, args.seed).save(args.out)
    except ContractError as exc:
        raise UsageError(str(exc)) from None
    return 0


def cmd_manifest(args) -> int:
    manifest = datakit.Manifest.from_directory(args.dir)
    if not len(manifest):
        raise UsageError(f"no .pgm files in {args.dir}")
    manifest.save(args.out)
    return 0


GRADCHECK_DEFAULTS = dict(B=1, C=4, scale=2, size=8)
CORNERS = {
    "CA-1st": dict(use_ca=True, use_sa=False, use_first_order=True, use_second_order=False),
    "CA-2nd": dict(use_ca=True, use_sa=False, use_first_order=False, use_second_order=True),
    "SA-1st": dict(use_ca=False, use_sa=True, use_first_order=True, use_second_order=False),
    "SA-2nd": dict(use_ca=False, use_sa=True, use_first_order=False, use_second_order=True),
}


def cmd_gradcheck(args) -> int:
    values = dict(GRADCHECK_DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} not found")
        values.update(parse_config_text(path.read_text(), str(path), {**_FIELD_TYPES, "size": int}))
    size = values.pop("size")
    run = RunConfig(**values)
    if size > 16 or run.C > 8:
        raise UsageError(f"gradcheck is limited to toy extents (size <= 16, C <= 8); got size={size}, C={run.C}")
    try:
        base = run.model_config()
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    configs = {"model": base}
    if args.corners:
        configs = {name: ModelConfig(**{**base.to_dict(), **sw}) for name, sw in CORNERS.items()}
    failed = []
    for label, mcfg in configs.items():
        results = gradcheck.check_model(mcfg, seed=args.seed, size=size)
        for r in results:
            status = "ok" if r.ok else "FAIL"
            print(f"{label}\t{r.name}\t{r.rel_error:.3e}\t{status}")
            if not r.ok:
                failed.append(f"{label}:{r.name}")
        worst = max(results, key=lambda r: r.rel_error)
        print(f"{label}\tworst relative error {worst.rel_error:.3e} ({worst.name})")
    if failed:
        print(f"gradient check FAILED for: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_ablate(args) -> int:
    cfg = resolve(args)
    if not cfg.out:
        raise UsageError("--out is required")
    manifest = _load_manifest(cfg.manifest)
    train_images = _train_images(manifest)
    test_recs = manifest.subset(split="test")
    test_images = manifest.load_images(test_recs) if test_recs else []
    _echo(cfg, Path(cfg.out))
    try:
        rows = ablation.run_ablation(cfg.model_config(), cfg.train_config(), train_images, test_images)
    except ContractError as exc:
        raise UsageError(str(exc)) from None
    table = ablation.format_table(rows)
    (Path(cfg.out) / "ablation.tsv").write_text(table)
    sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rbamsr", description="Residual bilinear attention super-resolution")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="bicubic-downsample a PGM")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=int, choices=(2, 4), required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config")
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--resume", help="checkpoint to continue from")
    _add_overrides(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="super-resolve one PGM")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="PSNR/SSIM/time report")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint")
    src.add_argument("--baseline", choices=("bicubic",))
    p.add_argument("--manifest", required=True)
    p.add_argument("--scale", type=int, choices=(2, 4), required=True)
    p.add_argument("--partition", choices=("rich", "all"), default="all")
    p.add_argument("--report", help="also write the table here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("partition", help="label test images texture-rich/poor")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scale", type=int, choices=(2, 4), required=True)
    p.add_argument("--out", required=True, help="labelled manifest")
    p.add_argument("--report")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("split", help="seeded train/test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("manifest", help="manifest from a directory of PGMs")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corners", action="store_true", help="check the four {CA,SA} x {1st,2nd} corners")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train the attention ablation grid")
    p.add_argument("--config")
    p.add_argument("--manifest")
    p.add_argument("--out")
    _add_overrides(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rbamsr {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
