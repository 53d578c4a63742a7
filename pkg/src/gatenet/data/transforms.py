"""Augmentation, resizing and mini-batching of samples."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..autograd.ops import interp_matrix
from .synth import Sample


@dataclass(frozen=True)
class AugmentationConfig:
    hflip_prob: float = 0.5
    max_rotation: float = 15.0
    jitter: tuple = (0.8, 1.2)
    size: int = None


def hflip(sample):
    return Sample(np.ascontiguousarray(sample.image[:, :, ::-1]), np.ascontiguousarray(sample.mask[:, ::-1]))


def rotate(sample, degrees):
    """Rotate about the image centre; bilinear for the image, nearest for the mask."""
    if degrees == 0:
        return Sample(sample.image.copy(), sample.mask.copy())
    h, w = sample.mask.shape
    th = np.deg2rad(degrees)
    c, s = np.cos(th), np.sin(th)
    rot = np.array([[c, -s], [s, c]])
    centre = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    offset = centre - rot @ centre
    image = np.stack([
        ndimage.affine_transform(ch, rot, offset=offset, order=1, mode="nearest") for ch in sample.image
    ]).astype(sample.image.dtype)
    mask = ndimage.affine_transform(sample.mask, rot, offset=offset, order=0, mode="constant", cval=0)
    return Sample(np.clip(image, 0.0, 1.0), (mask > 0).astype(np.uint8))


def _blend(image, other, factor):
    return image * factor + other * (1.0 - factor)


def photometric(image, brightness=1.0, saturation=1.0, contrast=1.0):
    """Brightness, saturation and contrast jitter, clamped to [0, 1]."""
    out = image * brightness
    grey = (0.299 * out[0] + 0.587 * out[1] + 0.114 * out[2])[None]
    out = _blend(out, grey, saturation)
    mean = (0.299 * out[0] + 0.587 * out[1] + 0.114 * out[2]).mean()
    out = _blend(out, mean, contrast)
    return np.clip(out, 0.0, 1.0).astype(image.dtype)


def augment(sample, cfg, rng):
    """Random flip, rotation and colour jitter drawn from ``rng``.

    The mask only sees the geometric steps.
    """
    flip = rng.random() < cfg.hflip_prob
    angle = rng.uniform(-cfg.max_rotation, cfg.max_rotation)
    b, s, c = rng.uniform(cfg.jitter[0], cfg.jitter[1], size=3)
    out = hflip(sample) if flip else sample
    out = rotate(out, angle)
    out = Sample(photometric(out.image, b, s, c), out.mask)
    if cfg.size is not None:
        out = resize(out, cfg.size)
    return out


def resize(sample, size):
    """Bilinear image / nearest-neighbour mask resize to (size, size)."""
    if size <= 0 or size % 2:
        raise ValueError(f"resize target must be a positive even integer, got {size}")
    h, w = sample.mask.shape
    if (h, w) == (size, size):
        return Sample(sample.image.copy(), sample.mask.copy())
    ah = interp_matrix(h, size)
    aw = interp_matrix(w, size)
    image = np.einsum("ih,chw,jw->cij", ah, sample.image.astype(np.float64), aw)
    rows = np.minimum(((np.arange(size) + 0.5) * h / size).astype(int), h - 1)
    cols = np.minimum(((np.arange(size) + 0.5) * w / size).astype(int), w - 1)
    mask = sample.mask[rows][:, cols]
    return Sample(np.clip(image, 0.0, 1.0).astype(sample.image.dtype), mask.copy())


def stack(samples):
    images = np.stack([s.image for s in samples])
    masks = np.stack([s.mask for s in samples])[:, None].astype(images.dtype)
    return images, masks


def batches(dataset, batch_size, shuffle_seed=None):
    """Yield (images, masks) arrays; the last partial batch is kept."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    n = len(dataset)
    order = np.arange(n) if shuffle_seed is None else np.random.default_rng(shuffle_seed).permutation(n)
    for k in range(0, n, batch_size):
        yield stack([dataset[i] for i in order[k: k + batch_size]])
