"""Command-line entry point: ``agagan {synth,train,infer,evaluate,verify}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(unreadable or inconsistent inputs, corrupt checkpoints, failed training
step), 3 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import runtime
from .attributes import AttributeVector
from .autograd import ConfigurationError
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .data import DataError, SynthSpec, load_manifest, mask_attributes, read_image, synth_face_dataset, to_hwc, to_nchw, write_image
from .discriminator import build_discriminator
from .generator import build_generator, generator_forward
from .losses import PerceptualExtractor
from .metrics import BrisqueModelError
from .trainer import (
    BatchSampler,
    TrainingError,
    arrays_from_manifest,
    evaluate_split,
    run_stage1,
    run_stage2,
    unet_outputs,
)
from .unet import build_unet

log = logging.getLogger("agagan")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3
IMAGE_SUFFIXES = (".png", ".ppm", ".pgm", ".pnm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out", type=Path, help="output directory (created if absent)")
    p.add_argument("--seed", type=int, help="shorthand for --set seed=N")
    p.add_argument("--threads", type=int, help="BLAS thread count")
    p.add_argument("--deterministic", action="store_true", help="single-threaded, fixed-order execution")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="agagan", description="Attribute-guided face super-resolution.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="render a synthetic attribute-annotated face dataset")
    _common(p)

    p = sub.add_parser("train", help="train stage 1 (GAN) or stage 2 (U-Net refiner)")
    _common(p)
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--data", type=Path, help="dataset directory (overrides data.dir)")
    p.add_argument("--checkpoint", type=Path, help="stage-1 checkpoint (required for stage 2)")
    p.add_argument("--resume", type=Path, help="continue from a checkpoint written by this stage")

    p = sub.add_parser("infer", help="super-resolve LR images")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True, help="directory of LR images")
    p.add_argument("--attributes", type=Path, required=True, help="attribute CSV for the input images")
    p.add_argument("--mask-fraction", type=float, help="fraction of attributes marked unknown")

    p = sub.add_parser("evaluate", help="score a checkpoint on an HR test split")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, help="dataset directory (overrides data.dir)")

    p = sub.add_parser("verify", help="run the built-in correctness suites")
    _common(p)
    p.add_argument("--suite", action="append", choices=("gradcheck", "metrics", "shapes", "losses"))
    p.add_argument("--inject-fault", metavar="OP", help="deliberately break one kernel to test detection")
    return ap


def _prepare(args) -> tuple[RunConfig, Path]:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    cfg = load_config(args.config, overrides)
    runtime.set_threads(args.threads, args.deterministic)
    out = args.out or Path("runs") / f"{args.command}-{time.strftime('%Y%m%d-%H%M%S')}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.dumps())
    return cfg, out


def _load_data(cfg: RunConfig, data_dir: Path | None):
    root = data_dir or (Path(cfg["data.dir"]) if cfg["data.dir"] else None)
    if root is None:
        raise UsageError("no dataset: pass --data or set data.dir")
    manifest = load_manifest(
        root / cfg["data.csv"], root, drop=cfg["data.drop"], hr_side=cfg["hr_side"], scale=cfg["scale"]
    )
    if len(manifest) == 0:
        raise DataError(f"{root / cfg['data.csv']}: dataset has no records")
    return arrays_from_manifest(manifest, cfg["scale"])


# -- subcommands ---------------------------------------------------------


def cmd_synth(cfg: RunConfig, out: Path) -> int:
    force = {}
    for item in cfg["synth.force"]:
        name, _, bit = item.partition(":")
        force[name] = int(bit or 1)
    spec = SynthSpec(
        seed=cfg["synth.seed"],
        count=cfg["synth.count"],
        side=cfg["hr_side"],
        attributes=cfg["synth.attributes"],
        probability=cfg["synth.probability"],
        force=force,
    )
    manifest, _ = synth_face_dataset(spec, out, scale=cfg["scale"])
    print(f"wrote {len(manifest)} faces and attributes.csv to {out}")
    return EXIT_OK


def _steps_for(cfg: RunConfig, stage: int, n: int) -> int:
    tc = cfg.train_config(stage)
    if tc.epochs:
        return int(math.ceil(tc.epochs * n / min(tc.batch_size, n)))
    return tc.steps


def cmd_train(cfg: RunConfig, out: Path, stage: int, data_dir=None, checkpoint=None, resume=None) -> int:
    data = _load_data(cfg, data_dir)
    tc = cfg.train_config(stage)
    tc.steps = _steps_for(cfg, stage, len(data))
    extractor = PerceptualExtractor(cfg["percep.widths"], cfg["percep.seed"])
    sampler = BatchSampler(len(data), tc.batch_size, np.random.default_rng(tc.seed))
    dropout_rng = np.random.default_rng(tc.seed + 1)
    mask_rng = np.random.default_rng(tc.seed + 2)
    start = 0

    if stage == 1:
        if resume:
            ck = load_checkpoint(resume)
            gen, disc = ck.build("gen"), ck.build("disc")
        else:
            gen = build_generator(cfg.generator_config(), cfg["gen.seed"])
            disc = build_discriminator(cfg.disc_config(), cfg["disc.seed"])
        states = {"gen": gen, "disc": disc}
    else:
        if checkpoint is None and resume is None:
            raise UsageError("stage 2 needs the stage-1 checkpoint: pass --checkpoint")
        ck = load_checkpoint(resume or checkpoint)
        if "gen" not in ck.configs:
            raise CheckpointError("gen", "stage-1 generator not found in checkpoint")
        gen = ck.build("gen")
        unet = ck.build("unet") if resume else build_unet(cfg.unet_config(), cfg["unet.seed"])
        states = {"gen": gen, "unet": unet}
    if resume:
        start = int(ck.meta["step"])
        sampler.restore(ck.rng["sampler"])
        if "dropout" in ck.rng:
            dropout_rng.bit_generator.state = ck.rng["dropout"]
        if "attr_mask" in ck.rng:
            mask_rng.bit_generator.state = ck.rng["attr_mask"]
        log.info("resuming stage %d at step %d", stage, start)

    tag = f"stage{stage}"

    def save(path: Path, step: int) -> None:
        rng = {"sampler": sampler.state()}
        if stage == 2:
            rng["dropout"] = dropout_rng.bit_generator.state
        else:
            rng["attr_mask"] = mask_rng.bit_generator.state
        save_checkpoint(path, states, rng=rng, meta={"step": step, "stage": stage, "train": vars(tc).copy()})

    def on_step(step, rep, _sampler):
        done = step + 1
        if tc.checkpoint_every and done % tc.checkpoint_every == 0 and done < tc.steps:
            save(out / f"{tag}_step{done:06d}.agac", done)

    log_path = out / f"train_{tag}.csv"
    t0 = time.time()
    if stage == 1:
        reports = run_stage1(data, gen, disc, tc, extractor, sampler, start, log_path, on_step, mask_rng)
    else:
        reports = run_stage2(data, gen, unet, tc, extractor, sampler, dropout_rng, start, log_path, on_step)
    save(out / f"{tag}.agac", tc.steps)
    last = reports[-1] if reports else {}
    summary = " ".join(f"{k}={v:.4g}" for k, v in last.items() if k != "step")
    print(f"{tag}: {tc.steps - start} steps in {time.time() - t0:.1f}s; last {summary}")
    print(f"checkpoint: {out / f'{tag}.agac'}")
    return EXIT_OK


def _attention_png(m: np.ndarray) -> np.ndarray:
    lo, hi = float(m.min()), float(m.max())
    scaled = (m - lo) / (hi - lo) if hi > lo else np.zeros_like(m)
    return np.floor(scaled * 255 + 0.5).astype(np.uint8)


def cmd_infer(cfg: RunConfig, out: Path, checkpoint: Path, input_dir: Path, attributes: Path, mask_fraction=None) -> int:
    ck = load_checkpoint(checkpoint)
    gen = ck.build("gen")
    unet = ck.build("unet") if "unet" in ck.configs else None
    gcfg = gen.config
    manifest = load_manifest(attributes, input_dir, drop=cfg["data.drop"], check_images=False)
    listed = {r.filename for r in manifest.records}
    unlisted = sorted(p.name for p in input_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.name not in listed)
    if unlisted:
        raise DataError(f"no attribute row for input images {unlisted[:5]}")
    fraction = cfg["infer.mask_fraction"] if mask_fraction is None else mask_fraction
    lr_side = gcfg.lr_side

    for i, rec in enumerate(manifest.records):
        try:
            img = read_image(manifest.image_path(i))
        except OSError as exc:
            raise DataError(f"{rec.filename}: unreadable image ({exc})") from exc
        if img.shape != (lr_side, lr_side, 3):
            raise DataError(
                f"{rec.filename}: x{gcfg.scale} checkpoint expects {lr_side}x{lr_side}x3 input, got {img.shape}"
            )
        att: AttributeVector = rec.attributes
        if fraction > 0:
            att = mask_attributes(att, fraction, [cfg["infer.mask_seed"], i])
        lr = to_nchw([img])
        sr, maps = generator_forward(lr, att.values[None, :], gen, mode="eval")
        stem = Path(rec.filename).stem
        write_image(out / f"{stem}_sr.png", to_hwc(sr.data)[0])
        if unet is not None:
            from .data import bicubic_resize, normalize

            bic = normalize(np.clip(bicubic_resize(img.astype(np.float64), gcfg.hr_side), 0, 255))
            refined = unet_outputs(unet, sr.data, np.ascontiguousarray(bic.transpose(2, 0, 1)[None]))
            write_image(out / f"{stem}_sr_u.png", to_hwc(refined)[0])
        if cfg["infer.attention_maps"]:
            for k, m in enumerate(maps):
                write_image(out / f"{stem}_aga{k}.png", _attention_png(m.data[0, 0]))
                if cfg["infer.raw_maps"]:
                    np.save(out / f"{stem}_aga{k}.npy", m.data[0, 0])
    print(f"super-resolved {len(manifest)} images into {out}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, out: Path, checkpoint: Path, data_dir=None) -> int:
    ck = load_checkpoint(checkpoint)
    gen = ck.build("gen")
    unet = ck.build("unet") if "unet" in ck.configs else None
    data = _load_data(cfg, data_dir)
    model = cfg["eval.brisque_model"] or None
    reports = evaluate_split(data, gen, unet, cfg["eval.metrics"], model)
    path = out / "metrics.csv"
    for k, (label, rep) in enumerate(reports.items()):
        rep.write_csv(path, append=k > 0)
    for label, rep in reports.items():
        means = rep.means()
        print(f"{label:8s} " + " ".join(f"{m}={means[m]:.4f}" for m in rep.metrics))
    print(f"report: {path}")
    return EXIT_OK


def cmd_verify(suites=None, inject_fault=None) -> int:
    from .verify import can_inject, run_suites

    if inject_fault is not None and not can_inject(inject_fault):
        raise UsageError(f"--inject-fault: no kernel or metric named {inject_fault!r}")
    ok = run_suites(suites, inject_fault=inject_fault)
    return EXIT_OK if ok else EXIT_VERIFY


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg, out = _prepare(args)
        if args.command == "synth":
            return cmd_synth(cfg, out)
        if args.command == "train":
            return cmd_train(cfg, out, args.stage, args.data, args.checkpoint, args.resume)
        if args.command == "infer":
            return cmd_infer(cfg, out, args.checkpoint, args.input, args.attributes, args.mask_fraction)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, out, args.checkpoint, args.data)
        return cmd_verify(args.suite, args.inject_fault)
    except (UsageError, ConfigurationError) as exc:
        print(f"agagan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, BrisqueModelError, TrainingError, OSError) as exc:
        print(f"agagan: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
