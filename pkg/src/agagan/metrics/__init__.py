"""Full-reference (PSNR, SSIM, FSIM, SRE, UIQ) and no-reference (BRISQUE) quality metrics."""

from .brisque import BrisqueModel, BrisqueModelError, brisque, brisque_features, brisque_score, load_model, mscn
from .fsim import fsim, phase_congruency
from .fullref import psnr, sre, ssim, to_luma, uiq
from .report import METRIC_NAMES, MetricReport, compute_metrics, read_report_csv

__all__ = [
    "METRIC_NAMES",
    "BrisqueModel",
    "BrisqueModelError",
    "MetricReport",
    "brisque",
    "brisque_features",
    "brisque_score",
    "compute_metrics",
    "fsim",
    "load_model",
    "mscn",
    "phase_congruency",
    "psnr",
    "read_report_csv",
    "sre",
    "ssim",
    "to_luma",
    "uiq",
]
