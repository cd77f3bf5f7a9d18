"""Flat ``key = value`` run configuration with named presets.

Lines are ``key = value``; ``#`` starts a comment.  A ``preset`` key (or
the ``preset`` argument) selects the base values, then file entries and
``--set`` overrides apply in order.  Every key is typed; unknown keys are
rejected so typos fail loudly.
"""

from __future__ import annotations

from pathlib import Path

from .autograd import ConfigurationError
from .discriminator import DiscConfig
from .generator import GeneratorConfig
from .trainer import TrainConfig
from .unet import UNetConfig


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none") else float(text)


def _str_tuple(text: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in _str_tuple(text))


# key -> (parser, default); defaults are the desk preset
SCHEMA: dict[str, tuple] = {
    "preset": (str, "desk"),
    "scale": (int, 4),
    "hr_side": (int, 128),
    "seed": (int, 0),
    "data.dir": (str, ""),
    "data.csv": (str, "attributes.csv"),
    "data.drop": (_str_tuple, ()),
    "synth.count": (int, 8),
    "synth.seed": (int, 0),
    "synth.attributes": (_str_tuple, ("big_nose", "eyeglasses", "goatee", "mustache", "narrow_eyes", "mouth_open")),
    "synth.force": (_str_tuple, ()),
    "synth.probability": (float, 0.5),
    "gen.main_channels": (int, 12),
    "gen.attr_channels": (int, 6),
    "gen.rrdb_count": (int, 1),
    "gen.rrdb_growth": (int, 8),
    "gen.aga_module_count": (int, 3),
    "gen.residual_scale": (float, 0.4),
    "gen.fuse_mode": (str, "concat"),
    "gen.seed": (int, 0),
    "disc.base_channels": (int, 8),
    "disc.growth": (int, 2),
    "disc.dense_width": (int, 0),
    "disc.seed": (int, 1),
    "unet.depth": (int, 4),
    "unet.base_channels": (int, 8),
    "unet.dropout": (float, 0.2),
    "unet.se_reduction": (int, 4),
    "unet.passthrough_init": (_bool, True),
    "unet.seed": (int, 2),
    "percep.widths": (_int_tuple, (8, 16, 32, 32)),
    "percep.seed": (int, 1234),
    "train.batch_size": (int, 2),
    "train.lr": (float, 1e-3),
    "train.lr_disc": (_opt_float, None),
    "train.stage1_steps": (int, 2000),
    "train.stage2_steps": (int, 500),
    "train.epochs": (_opt_float, None),
    "train.label_smoothing": (float, 0.9),
    "train.d_steps": (int, 1),
    "train.non_saturating": (_bool, False),
    "train.attr_mask_prob": (float, 0.5),
    "train.checkpoint_every": (int, 500),
    "infer.mask_fraction": (float, 0.0),
    "infer.mask_seed": (int, 0),
    "infer.attention_maps": (_bool, True),
    "infer.raw_maps": (_bool, False),
    "eval.metrics": (_str_tuple, ("psnr", "ssim", "fsim", "sre", "uiq", "brisque")),
    "eval.brisque_model": (str, ""),
}

PRESETS: dict[str, dict[str, str]] = {
    "desk": {},
    # widths and schedule at the published scale; not a desk target
    "full": {
        "scale": "8",
        "gen.main_channels": "64",
        "gen.attr_channels": "32",
        "gen.rrdb_count": "4",
        "gen.rrdb_growth": "32",
        "disc.base_channels": "32",
        "unet.base_channels": "32",
        "unet.se_reduction": "8",
        "train.batch_size": "50",
        "train.lr": "1e-4",
        "train.epochs": "50",
        "train.stage1_steps": "100000",
        "train.stage2_steps": "100000",
        "train.attr_mask_prob": "0",
        "synth.count": "1000",
    },
}


class RunConfig(dict):
    """Typed flat mapping; build model and trainer configs from it."""

    def set(self, key: str, text: str) -> None:
        if key not in SCHEMA:
            raise ConfigurationError(f"unknown config key {key!r}")
        parser = SCHEMA[key][0]
        try:
            self[key] = parser(text)
        except ValueError as exc:
            raise ConfigurationError(f"bad value for {key}: {exc}") from exc

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            scale=self["scale"],
            main_channels=self["gen.main_channels"],
            attr_channels=self["gen.attr_channels"],
            rrdb_count=self["gen.rrdb_count"],
            rrdb_growth=self["gen.rrdb_growth"],
            aga_module_count=self["gen.aga_module_count"],
            residual_scale=self["gen.residual_scale"],
            fuse_mode=self["gen.fuse_mode"],
            hr_side=self["hr_side"],
        )

    def disc_config(self) -> DiscConfig:
        return DiscConfig(
            base_channels=self["disc.base_channels"],
            growth=self["disc.growth"],
            dense_width=self["disc.dense_width"],
            hr_side=self["hr_side"],
        )

    def unet_config(self) -> UNetConfig:
        return UNetConfig(
            depth=self["unet.depth"],
            base_channels=self["unet.base_channels"],
            dropout=self["unet.dropout"],
            se_reduction=self["unet.se_reduction"],
            hr_side=self["hr_side"],
            passthrough_init=self["unet.passthrough_init"],
        )

    def train_config(self, stage: int) -> TrainConfig:
        return TrainConfig(
            stage=stage,
            batch_size=self["train.batch_size"],
            lr=self["train.lr"],
            lr_disc=self["train.lr_disc"],
            steps=self["train.stage1_steps"] if stage == 1 else self["train.stage2_steps"],
            epochs=self["train.epochs"],
            label_smoothing=self["train.label_smoothing"],
            seed=self["seed"],
            checkpoint_every=self["train.checkpoint_every"],
            d_steps=self["train.d_steps"],
            non_saturating=self["train.non_saturating"],
            attr_mask_prob=self["train.attr_mask_prob"],
        )

    def dumps(self) -> str:
        lines = []
        for key in SCHEMA:
            value = self[key]
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif value is None:
                value = "none"
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def parse_lines(text: str) -> list[tuple[str, str]]:
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def load_config(path=None, overrides=(), preset: str | None = None) -> RunConfig:
    """Defaults, then the preset, then the file, then ``key=value`` overrides."""
    file_pairs = parse_lines(Path(path).read_text()) if path else []
    override_pairs = []
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override must be key=value, got {item!r}")
        k, v = item.split("=", 1)
        override_pairs.append((k.strip(), v.strip()))
    chosen = preset
    for k, v in file_pairs + override_pairs:
        if k == "preset":
            chosen = v
    chosen = chosen or "desk"
    if chosen not in PRESETS:
        raise ConfigurationError(f"unknown preset {chosen!r}; choose from {sorted(PRESETS)}")

    cfg = RunConfig({k: default for k, (_, default) in SCHEMA.items()})
    for k, v in PRESETS[chosen].items():
        cfg.set(k, v)
    for k, v in file_pairs + override_pairs:
        cfg.set(k, v)
    cfg["preset"] = chosen
    return cfg
