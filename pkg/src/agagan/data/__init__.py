"""Dataset ingestion, degradation, normalization and synthetic faces."""

from .imageio import read_image, write_image
from .manifest import DataError, DatasetManifest, Record, load_manifest, write_manifest
from .resize import bicubic_resize, cubic_kernel, degrade, resize_matrix, to_uint8
from .synth import SynthFace, SynthSpec, render_face, synth_face_dataset
from .transforms import denormalize, mask_attributes, normalize, to_hwc, to_nchw

__all__ = [
    "DataError",
    "DatasetManifest",
    "Record",
    "SynthFace",
    "SynthSpec",
    "bicubic_resize",
    "cubic_kernel",
    "degrade",
    "denormalize",
    "load_manifest",
    "mask_attributes",
    "normalize",
    "read_image",
    "render_face",
    "resize_matrix",
    "synth_face_dataset",
    "to_hwc",
    "to_nchw",
    "to_uint8",
    "write_image",
    "write_manifest",
]
