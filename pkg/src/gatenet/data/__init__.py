"""Synthetic data, netpbm I/O and the augmentation recipe."""

from .netpbm import NetpbmError, load_image, load_map, load_mask, save_image, save_map, save_mask
from .synth import Sample, Shape, SynthSpec, read_dataset, synth_generate, write_dataset
from .transforms import AugmentationConfig, augment, batches, hflip, photometric, resize, rotate, stack

__all__ = [
    "AugmentationConfig",
    "NetpbmError",
    "Sample",
    "Shape",
    "SynthSpec",
    "augment",
    "batches",
    "hflip",
    "load_image",
    "load_map",
    "load_mask",
    "photometric",
    "read_dataset",
    "resize",
    "rotate",
    "save_image",
    "save_map",
    "save_mask",
    "stack",
    "synth_generate",
    "write_dataset",
]
