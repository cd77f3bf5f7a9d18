"""Checkpoint files: parameter stores, Adam moments, configs and RNG state.

Layout (all integers little-endian)::

    b"AGAC"            magic
    u32                format version
    u64                manifest byte length
    manifest           UTF-8 JSON text
    blob               raw float32 arrays, at the offsets listed in the manifest

The manifest lists every array as ``{name, shape, dtype, offset, nbytes,
crc32}`` and carries the config snapshots, optimizer step counters, RNG
state and any caller metadata.  Arrays are named ``<store>/<param>`` for
parameters and ``<store>/adam.m/<param>``, ``<store>/adam.v/<param>`` for
the Adam moments.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autograd import ParamStore
from .discriminator import DiscConfig, DiscState
from .generator import GeneratorConfig, GeneratorState
from .unet import UNetConfig, UNetState

MAGIC = b"AGAC"
VERSION = 1
_HEAD = struct.Struct("<4sIQ")

_STATE_TYPES = {
    "gen": (GeneratorState, GeneratorConfig),
    "disc": (DiscState, DiscConfig),
    "unet": (UNetState, UNetConfig),
}


class CheckpointError(ValueError):
    """Raised for unreadable checkpoints; ``section`` names the part that failed."""

    def __init__(self, section: str, message: str):
        super().__init__(f"checkpoint section {section!r}: {message}")
        self.section = section


@dataclass
class Checkpoint:
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    configs: dict[str, dict] = field(default_factory=dict)
    seeds: dict[str, int] = field(default_factory=dict)
    steps: dict[str, int] = field(default_factory=dict)
    rng: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def stores(self) -> list[str]:
        return list(self.configs)

    def params_of(self, store: str) -> dict[str, np.ndarray]:
        pre = f"{store}/"
        return {k[len(pre) :]: v for k, v in self.arrays.items() if k.startswith(pre) and "/adam." not in k}

    def restore_into(self, store_name: str, params: ParamStore, with_moments: bool = True) -> None:
        """Copy saved arrays into an existing store; names and shapes must match exactly."""
        saved = self.params_of(store_name)
        unknown = sorted(set(saved) - set(params))
        missing = sorted(set(params) - set(saved))
        if unknown:
            raise CheckpointError(store_name, f"unknown parameter names {unknown[:5]}")
        if missing:
            raise CheckpointError(store_name, f"missing parameters {missing[:5]}")
        for name, t in params.items():
            arr = saved[name]
            if arr.shape != t.shape:
                raise CheckpointError(store_name, f"{name}: saved shape {arr.shape} != model shape {t.shape}")
            t.data[...] = arr
            if with_moments:
                m = self.arrays.get(f"{store_name}/adam.m/{name}")
                v = self.arrays.get(f"{store_name}/adam.v/{name}")
                if m is not None and v is not None:
                    params.m[name][...] = m
                    params.v[name][...] = v
        params.step = self.steps.get(store_name, 0)

    def build(self, store_name: str):
        """Reconstruct a model state of the saved kind with the saved config and weights."""
        from .discriminator import build_discriminator
        from .generator import build_generator
        from .unet import build_unet

        builders = {"gen": build_generator, "disc": build_discriminator, "unet": build_unet}
        if store_name not in self.configs:
            raise CheckpointError(store_name, "not present in this checkpoint")
        _, config_cls = _STATE_TYPES[store_name]
        config = config_cls(**self.configs[store_name])
        state = builders[store_name](config, self.seeds.get(store_name, 0))
        self.restore_into(store_name, state.params)
        return state


def _store_arrays(name: str, store: ParamStore) -> dict[str, np.ndarray]:
    out = {}
    for pname, t in store.items():
        out[f"{name}/{pname}"] = t.data
        out[f"{name}/adam.m/{pname}"] = store.m[pname]
        out[f"{name}/adam.v/{pname}"] = store.v[pname]
    return out


def save_checkpoint(path, states: dict, rng: dict | None = None, meta: dict | None = None) -> None:
    """Write ``states`` (``{"gen": GeneratorState, "disc": ..., "unet": ...}``) atomically.

    ``meta`` must be JSON-serializable; it typically holds the training
    config snapshot, the global step and sampler state.
    """
    arrays: dict[str, np.ndarray] = {}
    configs, seeds, steps = {}, {}, {}
    for name, state in states.items():
        if name not in _STATE_TYPES:
            raise ValueError(f"unknown state kind {name!r}; expected one of {sorted(_STATE_TYPES)}")
        if state is None:
            continue
        arrays.update(_store_arrays(name, state.params))
        configs[name] = asdict(state.config)
        seeds[name] = int(state.seed)
        steps[name] = int(state.params.step)

    entries, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": "float32",
                "offset": offset,
                "nbytes": len(data),
                "crc32": zlib.crc32(data),
            }
        )
        chunks.append(data)
        offset += len(data)
    manifest = {
        "version": VERSION,
        "arrays": entries,
        "blob_bytes": offset,
        "configs": configs,
        "seeds": seeds,
        "steps": steps,
        "rng": rng or {},
        "meta": meta or {},
    }
    text = json.dumps(manifest, indent=1, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, VERSION, len(text)))
        fh.write(text)
        for c in chunks:
            fh.write(c)
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError("file", str(exc)) from exc
    if len(raw) < _HEAD.size:
        raise CheckpointError("header", f"file is {len(raw)} bytes, shorter than the header")
    magic, version, mlen = _HEAD.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError("header", f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointError("header", f"unsupported format version {version} (reader is {VERSION})")
    start = _HEAD.size
    if start + mlen > len(raw):
        raise CheckpointError("manifest", f"truncated: need {mlen} bytes, have {len(raw) - start}")
    try:
        manifest = json.loads(raw[start : start + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError("manifest", f"unparseable ({exc})") from exc
    missing = [k for k in ("arrays", "blob_bytes", "configs") if not isinstance(manifest, dict) or k not in manifest]
    if missing:
        raise CheckpointError("manifest", f"missing fields {missing}")

    blob = memoryview(raw)[start + mlen :]
    if len(blob) != manifest.get("blob_bytes"):
        raise CheckpointError("blob", f"truncated or padded: {len(blob)} bytes, manifest says {manifest.get('blob_bytes')}")
    ckpt = Checkpoint(
        configs=manifest["configs"],
        seeds=manifest.get("seeds", {}),
        steps=manifest.get("steps", {}),
        rng=manifest.get("rng", {}),
        meta=manifest.get("meta", {}),
    )
    for e in manifest["arrays"]:
        name = e["name"]
        lo, hi = e["offset"], e["offset"] + e["nbytes"]
        if e["dtype"] != "float32" or hi > len(blob) or e["nbytes"] != 4 * int(np.prod(e["shape"])):
            raise CheckpointError(f"blob:{name}", "entry does not fit the blob")
        chunk = bytes(blob[lo:hi])
        if zlib.crc32(chunk) != e["crc32"]:
            raise CheckpointError(f"blob:{name}", "checksum mismatch")
        ckpt.arrays[name] = np.frombuffer(chunk, dtype="<f4").astype(np.float32).reshape(e["shape"])
    return ckpt
