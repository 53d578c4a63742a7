"""Seeded synthetic salient-object scenes with exact masks."""

import colorsys
import os
from dataclasses import dataclass

import numpy as np

from ..autograd.ops import interp_matrix
from . import netpbm

SHAPE_KINDS = ("ellipse", "rectangle", "blob")


@dataclass
class Sample:
    image: np.ndarray  # float32 (3, S, S) in [0, 1]
    mask: np.ndarray  # uint8 (S, S) in {0, 1}

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ValueError(f"image must be (3, h, w), got {self.image.shape}")
        if self.mask.shape != self.image.shape[1:]:
            raise ValueError(f"mask shape {self.mask.shape} does not match image {self.image.shape[1:]}")


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    count: int = 100
    size: int = 64
    shapes: tuple = SHAPE_KINDS
    distractors: tuple = (0, 3)
    contrast: tuple = (0.1, 0.6)
    fg_fraction: tuple = (0.02, 0.6)

    def validate(self):
        if self.size <= 0 or self.size % 2:
            raise ValueError(f"size must be a positive even integer, got {self.size}")
        if self.count <= 0:
            raise ValueError(f"count must be positive, got {self.count}")
        if not self.shapes or any(k not in SHAPE_KINDS for k in self.shapes):
            raise ValueError(f"shapes must be a non-empty subset of {SHAPE_KINDS}")
        lo, hi = self.contrast
        if not 0 < lo <= hi <= 1:
            raise ValueError(f"invalid contrast range {self.contrast}")


@dataclass(frozen=True)
class Shape:
    """An analytic planar shape in pixel units (x right, y down).

    ``params`` is (cx, cy, a, b, theta) for ellipses and rectangles
    (a, b are half-extents) and a flat tuple of polygon vertices
    (x0, y0, x1, y1, ...) for blobs.
    """

    kind: str
    params: tuple

    def contains(self, x, y):
        """Vectorised inside test for points (x, y)."""
        if self.kind == "blob":
            return _polygon_contains(np.asarray(self.params).reshape(-1, 2), x, y)
        cx, cy, a, b, th = self.params
        dx, dy = x - cx, y - cy
        c, s = np.cos(th), np.sin(th)
        u = dx * c + dy * s
        v = -dx * s + dy * c
        if self.kind == "ellipse":
            return (u / a) ** 2 + (v / b) ** 2 <= 1.0
        return (np.abs(u) <= a) & (np.abs(v) <= b)

    def rasterize(self, size):
        """Boolean mask sampled at pixel centres."""
        yy, xx = np.mgrid[0:size, 0:size] + 0.5
        return self.contains(xx, yy)


def _polygon_contains(verts, x, y):
    inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
    n = len(verts)
    for k in range(n):
        x0, y0 = verts[k]
        x1, y1 = verts[(k + 1) % n]
        if y0 == y1:
            continue
        crosses = (y0 > y) != (y1 > y)
        xint = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (x < xint)
    return inside


def _random_shape(rng, kind, size, scale):
    cx, cy = rng.uniform(0.2 * size, 0.8 * size, size=2)
    r = scale * size
    if kind == "blob":
        n = int(rng.integers(6, 11))
        ang = np.sort(rng.uniform(0, 2 * np.pi, n))
        rad = r * rng.uniform(0.6, 1.0, n)
        verts = np.stack([cx + rad * np.cos(ang), cy + rad * np.sin(ang)], axis=1)
        return Shape("blob", tuple(float(v) for v in verts.ravel()))
    a = r * rng.uniform(0.5, 1.0)
    b = r * rng.uniform(0.4, 1.0)
    th = rng.uniform(0, np.pi)
    return Shape(kind, (float(cx), float(cy), float(a), float(b), float(th)))


def value_noise(rng, size, octaves=3, base_cells=4):
    """Smooth fractal noise in roughly [-1, 1] from bilinearly upsampled grids."""
    out = np.zeros((size, size))
    amp = 1.0
    total = 0.0
    cells = base_cells
    for _ in range(octaves):
        grid = rng.uniform(-1, 1, size=(cells, cells))
        m = interp_matrix(cells, size)
        out += amp * (m @ grid @ m.T)
        total += amp
        amp *= 0.5
        cells *= 2
    return out / total


def _hsv(h, s, v):
    return np.array(colorsys.hsv_to_rgb(h % 1.0, s, v))


def _paint(image, region, color, texture):
    image[:, region] = (color[:, None] + texture[region][None, :])


def generate_sample(rng, spec):
    size = spec.size
    lo, hi = spec.fg_fraction
    shapes = None
    for _ in range(100):
        n = int(rng.integers(1, 4))
        cand = [_random_shape(rng, spec.shapes[int(rng.integers(len(spec.shapes)))], size,
                              rng.uniform(0.12, 0.3)) for _ in range(n)]
        mask = np.zeros((size, size), dtype=bool)
        for sh in cand:
            mask |= sh.rasterize(size)
        if lo <= mask.mean() <= hi:
            shapes = cand
            break
    if shapes is None:
        raise RuntimeError("could not place foreground shapes within the fraction bounds")

    bg_hue = rng.uniform()
    bg = _hsv(bg_hue, rng.uniform(0.1, 0.5), rng.uniform(0.3, 0.7))
    image = np.empty((3, size, size))
    image[:] = bg[:, None, None] + 0.08 * value_noise(rng, size)[None]

    dmin, dmax = spec.distractors
    for _ in range(int(rng.integers(dmin, dmax + 1))):
        sh = _random_shape(rng, spec.shapes[int(rng.integers(len(spec.shapes)))], size, rng.uniform(0.05, 0.12))
        region = sh.rasterize(size) & ~mask
        shift = rng.uniform(0.02, 0.06) * rng.choice([-1.0, 1.0], size=3)
        image[:, region] += shift[:, None]

    contrast = rng.uniform(*spec.contrast)
    # each channel moves toward the side with more room; uneven weights shift the hue
    direction = np.where(bg < 0.5, 1.0, -1.0)
    weights = rng.uniform(0.5, 1.5, size=3)
    weights /= weights.mean()
    fg = np.clip(bg + direction * contrast * weights, 0.0, 1.0)
    texture = 0.05 * value_noise(rng, size, octaves=2, base_cells=8)
    _paint(image, mask, fg, texture)
    image = np.clip(image, 0.0, 1.0).astype(np.float32)
    return Sample(image=image, mask=mask.astype(np.uint8)), shapes


def synth_generate(spec, return_shapes=False):
    """Build ``spec.count`` samples; a pure function of ``spec``."""
    spec.validate()
    samples, shape_lists = [], []
    for k in range(spec.count):
        rng = np.random.default_rng([spec.seed, k])
        s, shapes = generate_sample(rng, spec)
        samples.append(s)
        shape_lists.append(shapes)
    return (samples, shape_lists) if return_shapes else samples


def write_dataset(samples, out_dir):
    """Store samples as ``images/NNNN.ppm`` and ``masks/NNNN.pgm``."""
    img_dir = os.path.join(out_dir, "images")
    mask_dir = os.path.join(out_dir, "masks")
    os.makedirs(img_dir, exist_ok=True)
    os.makedirs(mask_dir, exist_ok=True)
    for k, s in enumerate(samples):
        netpbm.save_image(os.path.join(img_dir, f"{k:04d}.ppm"), s.image)
        netpbm.save_mask(os.path.join(mask_dir, f"{k:04d}.pgm"), s.mask)


def read_dataset(root):
    img_dir = os.path.join(root, "images")
    mask_dir = os.path.join(root, "masks")
    if not os.path.isdir(img_dir) or not os.path.isdir(mask_dir):
        raise FileNotFoundError(f"{root} must contain images/ and masks/")
    names = sorted(f[:-4] for f in os.listdir(img_dir) if f.endswith(".ppm"))
    masks = {f[:-4] for f in os.listdir(mask_dir) if f.endswith(".pgm")}
    missing = sorted(set(names) ^ masks)
    if missing:
        raise FileNotFoundError(f"unpaired files in {root}: {missing}")
    if not names:
        raise FileNotFoundError(f"no samples found in {root}")
    return [
        Sample(netpbm.load_image(os.path.join(img_dir, n + ".ppm")), netpbm.load_mask(os.path.join(mask_dir, n + ".pgm")))
        for n in names
    ]
