"""Two-stage training: adversarial AGA-GAN (stage 1), then the U-Net refiner on frozen stage-1 outputs."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .attributes import NEUTRAL
from .autograd import Tensor, adam_step, no_grad
from .data import DatasetManifest, bicubic_resize, degrade, denormalize, normalize, to_nchw
from .discriminator import DiscState, discriminator_forward
from .generator import GeneratorState, generator_forward
from .metrics import METRIC_NAMES, MetricReport, compute_metrics
from .losses import ADV_WEIGHT, ClampCounter, PerceptualExtractor, d_loss_terms, total_generator_loss, unet_loss
from .unet import UNetState, unet_forward

log = logging.getLogger(__name__)

GAN_LOG_COLUMNS = ("step", "L_D", "L_adv", "L_percep", "L_mae", "D_HR", "D_SR")
UNET_LOG_COLUMNS = ("step", "L_U", "L_percep", "L_mse")


class TrainingError(RuntimeError):
    pass


class NonFiniteLossError(TrainingError):
    def __init__(self, component: str, value: float):
        super().__init__(f"non-finite loss component {component} = {value}; step aborted")
        self.component = component
        self.value = value


@dataclass
class TrainConfig:
    stage: int = 1
    batch_size: int = 8
    lr: float = 1e-4
    lr_disc: float | None = None
    steps: int = 1000
    epochs: int | None = None
    label_smoothing: float = 0.9
    seed: int = 0
    eval_every: int = 0
    checkpoint_every: int = 0
    d_steps: int = 1
    non_saturating: bool = False
    attr_mask_prob: float = 0.0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.stage not in (1, 2):
            raise ValueError("stage must be 1 or 2")
        if not 0.0 <= self.attr_mask_prob <= 1.0:
            raise ValueError("attr_mask_prob must be in [0, 1]")


@dataclass
class Batch:
    hr: np.ndarray
    lr: np.ndarray
    att: np.ndarray
    lr_bicubic: np.ndarray | None = None
    index: np.ndarray | None = None


@dataclass
class ArrayDataset:
    """A manifest decoded into normalized arrays (desk-scale: everything in memory)."""

    hr: np.ndarray
    lr: np.ndarray
    att: np.ndarray
    lr_bicubic: np.ndarray
    names: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return self.hr.shape[0]

    def batch(self, idx) -> Batch:
        idx = np.asarray(idx)
        return Batch(self.hr[idx], self.lr[idx], self.att[idx], self.lr_bicubic[idx], idx)


def arrays_from_images(images, attributes, scale: int, names=None) -> ArrayDataset:
    lr_imgs = [degrade(im, scale) for im in images]
    side = images[0].shape[0]
    bic = [np.clip(bicubic_resize(im, side), 0, 255) for im in lr_imgs]
    hr = to_nchw(images)
    lr = to_nchw(lr_imgs)
    lr_bic = np.ascontiguousarray(normalize(np.stack(bic)).transpose(0, 3, 1, 2))
    att = np.stack([np.asarray(a.values if hasattr(a, "values") else a, np.float32) for a in attributes])
    return ArrayDataset(hr, lr, att.astype(np.float32), lr_bic, list(names or []))


def arrays_from_manifest(manifest: DatasetManifest, scale: int | None = None) -> ArrayDataset:
    scale = scale or manifest.scale
    images = [manifest.load_image(i) for i in range(len(manifest))]
    return arrays_from_images(
        images, [r.attributes for r in manifest.records], scale, [r.filename for r in manifest.records]
    )


# -- single steps -------------------------------------------------------


def _finite(name: str, t: Tensor) -> None:
    v = float(t.item())
    if not math.isfinite(v):
        raise NonFiniteLossError(name, v)


def train_gan_step(
    batch: Batch,
    gen: GeneratorState,
    disc: DiscState,
    cfg: TrainConfig,
    extractor: PerceptualExtractor,
) -> dict:
    """One discriminator update then one generator update. Returns the step report."""
    hr = Tensor(batch.hr)
    att = Tensor(batch.att)
    counter = ClampCounter()
    sr, _ = generator_forward(batch.lr, att, gen, mode="train")

    for _ in range(cfg.d_steps):
        d_hr = discriminator_forward(hr, att, disc)
        d_sr = discriminator_forward(sr.detach(), att, disc)
        real, fake = d_loss_terms(d_hr, d_sr, cfg.label_smoothing, counter)
        ld = real + fake
        _finite("L_D", ld)
        disc.params.zero_grad()
        ld.backward()
        adam_step(disc.params, cfg.lr_disc or cfg.lr)
        disc.params.zero_grad()

    parts: dict = {}
    with disc.params.frozen():
        d_sr_g = discriminator_forward(sr, att, disc)
        lg = total_generator_loss(hr, sr, d_sr_g, extractor, cfg.non_saturating, parts=parts)
        for key in ("adv", "percep", "mae"):
            if not math.isfinite(parts[key]):
                raise NonFiniteLossError(f"L_{key}", parts[key])
        gen.params.zero_grad()
        lg.backward()
        adam_step(gen.params, cfg.lr)
        gen.params.zero_grad()

    return {
        "L_D": float(ld.item()),
        "L_D_real": float(real.item()),
        "L_D_fake": float(fake.item()),
        "L_adv": parts["adv"],
        "L_percep": parts["percep"],
        "L_mae": parts["mae"],
        "L_G": float(lg.item()),
        "D_HR": float(d_hr.data.mean(dtype=np.float64)),
        "D_SR": float(d_sr.data.mean(dtype=np.float64)),
        "clamped": counter.count,
    }


def stage1_outputs(gen: GeneratorState, lr: np.ndarray, att: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Eval-mode generator predictions, computed without recording a graph."""
    outs = []
    with no_grad():
        for i in range(0, lr.shape[0], batch_size):
            sr, _ = generator_forward(lr[i : i + batch_size], att[i : i + batch_size], gen, mode="eval")
            outs.append(sr.data)
    return np.concatenate(outs)


def train_unet_step(
    batch: Batch,
    gen: GeneratorState,
    unet: UNetState,
    cfg: TrainConfig,
    extractor: PerceptualExtractor,
    rng: np.random.Generator,
    sr_aga: np.ndarray | None = None,
) -> dict:
    """One U-Net update on the refinement loss; the generator is only run in eval mode.

    ``sr_aga`` may carry precomputed stage-1 outputs for the batch (the
    generator is frozen, so they are identical to a fresh forward pass).
    """
    if sr_aga is None:
        sr_aga = stage1_outputs(gen, batch.lr, batch.att, batch.lr.shape[0])
    hr = Tensor(batch.hr)
    sr_u = unet_forward(sr_aga, batch.lr_bicubic, unet, mode="train", rng=rng)
    parts: dict = {}
    lu = unet_loss(hr, sr_u, extractor, parts=parts)
    _finite("L_U", lu)
    unet.params.zero_grad()
    lu.backward()
    adam_step(unet.params, cfg.lr)
    unet.params.zero_grad()
    return {"L_U": float(lu.item()), "L_percep": parts["percep"], "L_mse": parts["mse"]}


def mask_batch_attributes(att: np.ndarray, prob: float, rng: np.random.Generator) -> np.ndarray:
    """Hide a random share of each selected sample's attributes behind the neutral value.

    A sample is selected with probability ``prob``; its share of hidden
    attributes is drawn uniformly from [0, 1].  The rng is advanced the same
    amount whatever the outcome, so resumed runs stay in step.
    """
    out = att.copy()
    n, k = att.shape
    selected = rng.random(n) < prob
    share = rng.random(n)
    hidden = rng.random((n, k)) < share[:, None]
    out[selected[:, None] & hidden] = NEUTRAL
    return out


def recombine_generator_loss(report: dict) -> float:
    return ADV_WEIGHT * report["L_adv"] + report["L_percep"] + report["L_mae"]


# -- loops ---------------------------------------------------------------


class BatchSampler:
    """Epoch-wise shuffled minibatches from a seeded generator."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = rng
        self.order: list[int] = []

    def next(self) -> np.ndarray:
        if len(self.order) < self.batch_size:
            self.order.extend(self.rng.permutation(self.n).tolist())
        idx, self.order = self.order[: self.batch_size], self.order[self.batch_size :]
        return np.array(idx)

    def state(self) -> dict:
        return {"order": list(self.order), "rng": self.rng.bit_generator.state}

    def restore(self, state: dict) -> None:
        self.order = list(state["order"])
        self.rng.bit_generator.state = state["rng"]


class CsvLog:
    def __init__(self, path, columns, append: bool = False):
        self.path = Path(path) if path else None
        self.columns = columns
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if not (append and self.path.exists()):
                with open(self.path, "w", newline="") as fh:
                    csv.writer(fh, lineterminator="\n").writerow(columns)

    def write(self, step: int, report: dict) -> None:
        if self.path is None:
            return
        row = [step] + [repr(float(report[c])) for c in self.columns[1:]]
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(row)


def run_stage1(
    data: ArrayDataset,
    gen: GeneratorState,
    disc: DiscState,
    cfg: TrainConfig,
    extractor: PerceptualExtractor,
    sampler: BatchSampler | None = None,
    start_step: int = 0,
    log_path=None,
    on_step=None,
    mask_rng: np.random.Generator | None = None,
) -> list[dict]:
    """Run ``cfg.steps`` total steps (counting from ``start_step``); returns the step reports."""
    sampler = sampler or BatchSampler(len(data), cfg.batch_size, np.random.default_rng(cfg.seed))
    if mask_rng is None:
        mask_rng = np.random.default_rng(cfg.seed + 2)
    logger = CsvLog(log_path, GAN_LOG_COLUMNS, append=start_step > 0)
    reports = []
    for step in range(start_step, cfg.steps):
        batch = data.batch(sampler.next())
        if cfg.attr_mask_prob > 0:
            batch.att = mask_batch_attributes(batch.att, cfg.attr_mask_prob, mask_rng)
        rep = train_gan_step(batch, gen, disc, cfg, extractor)
        rep["step"] = step
        logger.write(step, rep)
        reports.append(rep)
        if on_step is not None:
            on_step(step, rep, sampler)
        if step % 100 == 0:
            log.info("stage1 step %d: L_D=%.4f L_G=%.4f mae=%.4f", step, rep["L_D"], rep["L_G"], rep["L_mae"])
    return reports


def run_stage2(
    data: ArrayDataset,
    gen: GeneratorState,
    unet: UNetState,
    cfg: TrainConfig,
    extractor: PerceptualExtractor,
    sampler: BatchSampler | None = None,
    dropout_rng: np.random.Generator | None = None,
    start_step: int = 0,
    log_path=None,
    on_step=None,
) -> list[dict]:
    sampler = sampler or BatchSampler(len(data), cfg.batch_size, np.random.default_rng(cfg.seed))
    dropout_rng = dropout_rng or np.random.default_rng(cfg.seed + 1)
    cached = stage1_outputs(gen, data.lr, data.att)
    logger = CsvLog(log_path, UNET_LOG_COLUMNS, append=start_step > 0)
    reports = []
    for step in range(start_step, cfg.steps):
        idx = sampler.next()
        rep = train_unet_step(data.batch(idx), gen, unet, cfg, extractor, dropout_rng, sr_aga=cached[idx])
        rep["step"] = step
        logger.write(step, rep)
        reports.append(rep)
        if on_step is not None:
            on_step(step, rep, sampler)
        if step % 100 == 0:
            log.info("stage2 step %d: L_U=%.4f", step, rep["L_U"])
    return reports


def config_snapshot(cfg: TrainConfig) -> dict:
    return asdict(cfg)


# -- evaluation ----------------------------------------------------------


def unet_outputs(unet: UNetState, sr_aga: np.ndarray, lr_bicubic: np.ndarray, batch_size: int = 8) -> np.ndarray:
    outs = []
    with no_grad():
        for i in range(0, sr_aga.shape[0], batch_size):
            sl = slice(i, i + batch_size)
            outs.append(unet_forward(sr_aga[sl], lr_bicubic[sl], unet, mode="eval").data)
    return np.concatenate(outs)


def evaluate_split(
    data: ArrayDataset,
    gen: GeneratorState,
    unet: UNetState | None = None,
    metrics=METRIC_NAMES,
    brisque_model=None,
    att: np.ndarray | None = None,
) -> dict[str, MetricReport]:
    """Metric reports for the bicubic baseline, the generator and (if given) the refiner.

    Predictions are quantized to 8 bits before scoring, as if saved to disk.
    ``att`` optionally replaces the dataset attributes (partial-attribute runs).
    """
    if len(data) == 0:
        raise TrainingError("cannot evaluate an empty split")
    att = data.att if att is None else att
    names = data.names or [f"{i:05d}" for i in range(len(data))]
    sr_aga = stage1_outputs(gen, data.lr, att)
    outputs = {"bicubic": data.lr_bicubic, "sr_aga": sr_aga}
    if unet is not None:
        outputs["sr_u"] = unet_outputs(unet, sr_aga, data.lr_bicubic)
    reports = {}
    for label, batch in outputs.items():
        rep = MetricReport(label, tuple(metrics))
        for i in range(len(data)):
            ref = denormalize(data.hr[i].transpose(1, 2, 0))
            test = denormalize(batch[i].transpose(1, 2, 0))
            rep.add(names[i], compute_metrics(ref, test, metrics, brisque_model))
        reports[label] = rep
    return reports
