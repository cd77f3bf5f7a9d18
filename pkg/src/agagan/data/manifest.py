"""Attribute-annotated image manifests (CSV: filename plus one +/-1 column per attribute)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..attributes import N_ATTRIBUTES, AttributeVector
from .imageio import read_image


class DataError(ValueError):
    """Malformed dataset files or records."""


@dataclass
class Record:
    filename: str
    attributes: AttributeVector


@dataclass
class DatasetManifest:
    root: Path
    records: list[Record]
    attribute_names: list[str]
    split: str = "train"
    hr_side: int = 128
    scale: int = 8
    extras: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def image_path(self, i: int) -> Path:
        return self.root / self.records[i].filename

    def load_image(self, i: int) -> np.ndarray:
        return read_image(self.image_path(i))

    def attribute_matrix(self) -> np.ndarray:
        return np.stack([r.attributes.values for r in self.records]).astype(np.float32)


def load_manifest(
    csv_path,
    image_root=None,
    expected_attr_count: int = N_ATTRIBUTES,
    drop: tuple[str, ...] | list[str] = (),
    split: str = "train",
    hr_side: int = 128,
    scale: int = 8,
    check_images: bool = True,
) -> DatasetManifest:
    csv_path = Path(csv_path)
    root = Path(image_root) if image_root is not None else csv_path.parent
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{csv_path}: empty attribute file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0].lower() != "filename":
        raise DataError(f"{csv_path}: header must start with 'filename', got {header[:1]}")
    names = header[1:]
    unknown = [d for d in drop if d not in names]
    if unknown:
        raise DataError(f"{csv_path}: drop-list names not in header: {unknown}")
    keep = [i for i, n in enumerate(names) if n not in drop]
    if len(keep) != expected_attr_count:
        raise DataError(
            f"{csv_path}: {len(names)} attribute columns minus {len(drop)} dropped leaves {len(keep)}, "
            f"expected {expected_attr_count}"
        )
    records: list[Record] = []
    seen: set[str] = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{csv_path}:{lineno}: {len(row)} fields, header has {len(header)}")
        fname = row[0].strip()
        if fname in seen:
            raise DataError(f"{csv_path}:{lineno}: duplicate filename {fname!r}")
        seen.add(fname)
        try:
            signed = np.array([int(row[1 + i].strip()) for i in keep])
        except ValueError as exc:
            raise DataError(f"{csv_path}:{lineno}: non-integer attribute value") from exc
        if not np.all(np.isin(signed, (-1, 1))):
            raise DataError(f"{csv_path}:{lineno}: attribute values must be -1 or +1")
        records.append(Record(fname, AttributeVector.from_signed(signed)))

    manifest = DatasetManifest(root, records, [names[i] for i in keep], split, hr_side, scale)
    if check_images:
        for i, rec in enumerate(records):
            try:
                img = manifest.load_image(i)
            except Exception as exc:  # noqa: BLE001 - any decode failure is a data error
                raise DataError(f"{rec.filename}: unreadable image ({exc})") from exc
            if img.shape != (hr_side, hr_side, 3):
                raise DataError(f"{rec.filename}: expected {hr_side}x{hr_side}x3, got {img.shape}")
    return manifest


def write_manifest(path, records, attribute_names) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["filename", *attribute_names])
        for rec in records:
            w.writerow([rec.filename, *rec.attributes.to_signed().tolist()])
