"""Per-image and mean values of the six quality metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .brisque import brisque
from .fsim import fsim
from .fullref import psnr, sre, ssim, uiq

METRIC_NAMES = ("psnr", "ssim", "fsim", "sre", "uiq", "brisque")

_FULL_REF = {"psnr": psnr, "ssim": ssim, "fsim": fsim, "sre": sre, "uiq": uiq}


def compute_metrics(ref, test, metrics=METRIC_NAMES, brisque_model=None) -> dict[str, float]:
    """All requested metrics for one (reference, test) pair on the [0, 255] scale."""
    out = {}
    for name in metrics:
        if name == "brisque":
            out[name] = brisque(test, brisque_model)
        elif name in _FULL_REF:
            out[name] = float(_FULL_REF[name](ref, test))
        else:
            raise ValueError(f"unknown metric {name!r}")
    return out


@dataclass
class MetricReport:
    label: str
    metrics: tuple[str, ...] = METRIC_NAMES
    names: list[str] = field(default_factory=list)
    rows: list[dict[str, float]] = field(default_factory=list)

    def add(self, name: str, values: dict[str, float]) -> None:
        self.names.append(name)
        self.rows.append({m: float(values[m]) for m in self.metrics})

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def count(self) -> int:
        return len(self.rows)

    def column(self, metric: str) -> np.ndarray:
        return np.array([r[metric] for r in self.rows])

    def means(self) -> dict[str, float]:
        if not self.rows:
            raise ValueError(f"report {self.label!r} is empty")
        return {m: float(np.mean(self.column(m))) for m in self.metrics}

    def write_csv(self, path, append: bool = False) -> None:
        """Rows ``row,image,<metrics>`` with a trailing ``mean`` summary row."""
        path = Path(path)
        fresh = not (append and path.exists())
        with open(path, "a" if append else "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if fresh:
                w.writerow(["row", "image", *self.metrics])
            for name, r in zip(self.names, self.rows):
                w.writerow([self.label, name, *(repr(r[m]) for m in self.metrics)])
            means = self.means()
            w.writerow([self.label, "mean", *(repr(means[m]) for m in self.metrics)])


def read_report_csv(path) -> dict[str, MetricReport]:
    """Inverse of :meth:`MetricReport.write_csv`; summary rows are recomputed, not trusted."""
    reports: dict[str, MetricReport] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        metrics = tuple(header[2:])
        for row in reader:
            label, name = row[0], row[1]
            rep = reports.setdefault(label, MetricReport(label, metrics))
            if name != "mean":
                rep.add(name, dict(zip(metrics, map(float, row[2:]))))
    return reports
