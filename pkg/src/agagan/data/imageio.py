"""Image file IO: PNG through Pillow, binary PPM/PGM with no dependencies."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _write_pnm(path: Path, img: np.ndarray) -> None:
    magic = b"P6" if img.ndim == 3 else b"P5"
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + f"\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def _read_pnm(path: Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255 or magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported PNM variant {magic!r} maxval={maxval}")
    channels = 3 if magic == b"P6" else 1
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h * channels, offset=pos + 1)
    return data.reshape((h, w, 3) if channels == 3 else (h, w)).copy()


def read_image(path) -> np.ndarray:
    """Decode to uint8 (H, W, 3) or (H, W)."""
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pgm", ".pnm"):
        return _read_pnm(path)
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("RGB", "L"):
            im = im.convert("RGB")
        return np.asarray(im, dtype=np.uint8).copy()


def write_image(path, img: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise ValueError(f"write_image expects uint8 data, got {img.dtype}")
    if path.suffix.lower() in (".ppm", ".pgm", ".pnm"):
        _write_pnm(path, img)
        return
    from PIL import Image

    Image.fromarray(img).save(path)
