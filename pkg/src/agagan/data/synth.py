"""Procedural attribute-annotated faces for desk-scale experiments.

Faces are drawn on a 4x supersampled grid and box-filtered down, so edges
are antialiased.  Each optional attribute has an overlay (or a geometry
change) that is drawn iff its bit is set, and its pixel footprint is
returned as a region mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..attributes import ATTRIBUTE_NAMES, SYNTH_ATTRIBUTES, AttributeVector
from .imageio import write_image
from .manifest import DatasetManifest, Record, write_manifest

SUPERSAMPLE = 4

DEFAULT_RANGES = {
    "head_rx": (36.0, 42.0),
    "head_ry": (46.0, 52.0),
    "eye_dx": (14.0, 17.0),
    "eye_y": (56.0, 60.0),
    "eye_rx": (5.5, 7.0),
    "eye_ry": (3.2, 4.2),
    "narrow_factor": (0.35, 0.5),
    "nose_w": (3.5, 5.0),
    "big_nose_factor": (1.8, 2.2),
    "mouth_y": (89.0, 93.0),
    "mouth_rx": (9.0, 12.0),
    "glasses_half_w": (9.0, 10.5),
    "glasses_half_h": (6.5, 7.5),
    "glasses_frame": (1.8, 2.4),
}


@dataclass
class SynthSpec:
    seed: int = 0
    count: int = 16
    side: int = 128
    attributes: tuple[str, ...] = tuple(SYNTH_ATTRIBUTES)
    probability: float = 0.5
    force: dict = field(default_factory=dict)
    ranges: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        bad = [a for a in self.attributes if a not in SYNTH_ATTRIBUTES]
        bad += [a for a in self.force if a not in self.attributes]
        if bad:
            raise ValueError(f"unsupported synthetic attributes: {bad}")
        if self.count < 0 or self.side < 32:
            raise ValueError("count must be >= 0 and side >= 32")

    def range(self, key: str) -> tuple[float, float]:
        return self.ranges.get(key, DEFAULT_RANGES[key])


@dataclass
class SynthFace:
    image: np.ndarray
    attributes: AttributeVector
    bits: dict
    masks: dict


class _Canvas:
    def __init__(self, side: int):
        ss = SUPERSAMPLE
        self.side = side
        coords = (np.arange(side * ss) + 0.5) / ss
        self.y, self.x = np.meshgrid(coords, coords, indexing="ij")
        self.rgb = np.zeros((side * ss, side * ss, 3))

    def paint(self, cover: np.ndarray, color) -> None:
        self.rgb[cover] = color

    def downsample(self) -> np.ndarray:
        ss = SUPERSAMPLE
        s = self.side
        return self.rgb.reshape(s, ss, s, ss, 3).mean(axis=(1, 3))

    def footprint(self, cover: np.ndarray) -> np.ndarray:
        """HR pixels touched by any covered subsample."""
        ss = SUPERSAMPLE
        s = self.side
        return cover.reshape(s, ss, s, ss).any(axis=(1, 3))

    # -- shapes ------------------------------------------------------
    def ellipse(self, cy, cx, ry, rx) -> np.ndarray:
        return ((self.y - cy) / ry) ** 2 + ((self.x - cx) / rx) ** 2 <= 1.0

    def rect(self, y0, x0, y1, x1) -> np.ndarray:
        return (self.y >= y0) & (self.y <= y1) & (self.x >= x0) & (self.x <= x1)

    def segment(self, p0, p1, width) -> np.ndarray:
        (y0, x0), (y1, x1) = p0, p1
        dy, dx = y1 - y0, x1 - x0
        t = np.clip(((self.y - y0) * dy + (self.x - x0) * dx) / (dy * dy + dx * dx), 0.0, 1.0)
        d2 = (self.y - (y0 + t * dy)) ** 2 + (self.x - (x0 + t * dx)) ** 2
        return d2 <= (width / 2.0) ** 2


def _draw_face(spec: SynthSpec, rng: np.random.Generator, bits: dict) -> tuple[np.ndarray, dict]:
    u = lambda key: rng.uniform(*spec.range(key))  # noqa: E731
    s = spec.side / 128.0
    cv = _Canvas(spec.side)
    cx = spec.side / 2 + rng.uniform(-2, 2) * s

    # background: smooth vertical gradient
    top, bottom = rng.uniform(40, 220, 3), rng.uniform(40, 220, 3)
    t = cv.y / spec.side
    cv.rgb[:] = top[None, None, :] * (1 - t[..., None]) + bottom[None, None, :] * t[..., None]

    skin = rng.uniform([170, 120, 90], [235, 190, 160])
    hair = rng.uniform(20, 110, 3)
    dark = skin * 0.55
    head_ry, head_rx = u("head_ry") * s, u("head_rx") * s
    head_cy = 66 * s
    cv.paint(cv.ellipse(head_cy - 8 * s, cx, head_ry * 0.9, head_rx * 1.05), hair)
    cv.paint(cv.ellipse(head_cy, cx, head_ry, head_rx), skin)

    masks: dict[str, np.ndarray] = {}
    eye_dx, eye_y = u("eye_dx") * s, u("eye_y") * s
    eye_rx, eye_ry = u("eye_rx") * s, u("eye_ry") * s
    if bits.get("narrow_eyes"):
        eye_ry *= u("narrow_factor")
    eye_cover = np.zeros_like(cv.y, dtype=bool)
    for side_sign in (-1, 1):
        ex = cx + side_sign * eye_dx
        cv.paint(cv.segment((eye_y - 8 * s, ex - 6 * s), (eye_y - 9 * s, ex + 6 * s), 2.2 * s), hair)
        sclera = cv.ellipse(eye_y, ex, eye_ry, eye_rx)
        cv.paint(sclera, (245, 245, 240))
        cv.paint(sclera & cv.ellipse(eye_y, ex, 2.6 * s, 2.6 * s), (35, 25, 20))
        eye_cover |= sclera
    if bits.get("narrow_eyes"):
        masks["narrow_eyes"] = eye_cover

    nose_w = u("nose_w") * s
    if bits.get("big_nose"):
        nose_w *= u("big_nose_factor")
    nose = cv.ellipse(76 * s, cx, 8 * s, nose_w) & (cv.y >= 70 * s)
    cv.paint(nose, skin * 0.8)
    nostrils = cv.ellipse(80 * s, cx - nose_w * 0.45, 1.3 * s, 1.6 * s) | cv.ellipse(80 * s, cx + nose_w * 0.45, 1.3 * s, 1.6 * s)
    cv.paint(nostrils, dark)
    if bits.get("big_nose"):
        masks["big_nose"] = nose | nostrils

    mouth_y, mouth_rx = u("mouth_y") * s, u("mouth_rx") * s
    if bits.get("mustache"):
        stroke = cv.segment((mouth_y - 6 * s, cx - 1.5 * s), (mouth_y - 4 * s, cx - mouth_rx), 3.2 * s)
        stroke |= cv.segment((mouth_y - 6 * s, cx + 1.5 * s), (mouth_y - 4 * s, cx + mouth_rx), 3.2 * s)
        cv.paint(stroke, hair)
        masks["mustache"] = stroke
    if bits.get("mouth_open"):
        lips = cv.ellipse(mouth_y, cx, 5.5 * s, mouth_rx)
        cv.paint(lips, (170, 60, 70))
        inner = cv.ellipse(mouth_y, cx, 3.8 * s, mouth_rx * 0.8)
        cv.paint(inner, (50, 15, 20))
        cv.paint(inner & (cv.y <= mouth_y - 1.8 * s), (240, 240, 235))
        masks["mouth_open"] = lips
    else:
        cv.paint(cv.ellipse(mouth_y, cx, 1.8 * s, mouth_rx), (170, 60, 70))
    if bits.get("goatee"):
        goatee = cv.ellipse(mouth_y + 11 * s, cx, 5.5 * s, 6 * s)
        cv.paint(goatee, hair)
        masks["goatee"] = goatee

    if bits.get("eyeglasses"):
        hw, hh, fw = u("glasses_half_w") * s, u("glasses_half_h") * s, u("glasses_frame") * s
        frame = np.zeros_like(cv.y, dtype=bool)
        for side_sign in (-1, 1):
            ex = cx + side_sign * eye_dx
            outer = cv.rect(eye_y - hh, ex - hw, eye_y + hh, ex + hw)
            inner = cv.rect(eye_y - hh + fw, ex - hw + fw, eye_y + hh - fw, ex + hw - fw)
            frame |= outer & ~inner
        frame |= cv.segment((eye_y - 1 * s, cx - eye_dx + hw), (eye_y - 1 * s, cx + eye_dx - hw), fw)
        cv.paint(frame, rng.uniform(5, 40, 3))
        masks["eyeglasses"] = frame

    img = np.clip(np.floor(cv.downsample() + 0.5), 0, 255).astype(np.uint8)
    # region masks: HR footprint grown by one pixel
    hr_masks = {k: ndimage.binary_dilation(cv.footprint(v)) for k, v in masks.items()}
    return img, hr_masks


def render_face(spec: SynthSpec, index: int) -> SynthFace:
    """Draw face ``index`` of the dataset described by ``spec``."""
    rng = np.random.default_rng([spec.seed, index])
    bits = {}
    for a in spec.attributes:
        bits[a] = int(spec.force[a]) if a in spec.force else int(rng.random() < spec.probability)
    img, masks = _draw_face(spec, rng, bits)
    values = np.zeros(len(ATTRIBUTE_NAMES), dtype=np.float32)
    for short, bit in bits.items():
        values[ATTRIBUTE_NAMES.index(SYNTH_ATTRIBUTES[short])] = bit
    return SynthFace(img, AttributeVector(values), bits, masks)


def synth_face_dataset(spec: SynthSpec, out_dir=None, scale: int = 8, ext: str = ".png"):
    """Render ``spec.count`` faces.

    With ``out_dir`` the images, ``attributes.csv`` and per-attribute region
    masks (``masks/<stem>_<attr>.png``) are written to disk.  Returns the
    manifest and the list of rendered faces.
    """
    faces = [render_face(spec, i) for i in range(spec.count)]
    records = [Record(f"face_{i:05d}{ext}", f.attributes) for i, f in enumerate(faces)]
    root = Path(out_dir) if out_dir is not None else Path(".")
    manifest = DatasetManifest(root, records, list(ATTRIBUTE_NAMES), "train", spec.side, scale)
    if out_dir is not None:
        root.mkdir(parents=True, exist_ok=True)
        for rec, face in zip(records, faces):
            write_image(root / rec.filename, face.image)
            stem = Path(rec.filename).stem
            for attr, m in face.masks.items():
                write_image(root / "masks" / f"{stem}_{attr}.png", (m * 255).astype(np.uint8))
        write_manifest(root / "attributes.csv", records, ATTRIBUTE_NAMES)
    return manifest, faces
