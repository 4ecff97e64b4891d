"""Deterministic synthetic traffic-light crops with known generative factors.

Each crop is centred on its lit bulb. The dark housing extends towards where
the unlit bulbs sit (down for red, both ways for yellow, up for green), so the
colour class shows up in both hue and layout.
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .detect_eval import Annotation, BoundingBox

COLORS = ("red", "yellow", "green")
INLAYS = ("circle", "arrow")

_BASE_HUE = {"red": 0.0, "yellow": 0.13, "green": 0.38}
# unlit bulb slots relative to the lit one, in bulb pitches (+ is downwards)
_SLOTS = {"red": (1, 2), "yellow": (-1, 1), "green": (-2, -1)}

HOUSING_LEVEL = 0.01
UNLIT_LEVEL = 0.06
LENS_DIM = 0.15
SATURATION = 1.0
SUPERSAMPLE = 4
SCENE_SCALE = 4
SCENE_GRAY = 0.5

FACTOR_LIMITS = {
    "bulb_radius": (0.05, 0.45),
    "background_brightness": (0.0, 1.0),
    "blur_sigma": (0.0, math.inf),
    "hue_shift": (-0.1, 0.1),
}

DEFAULT_RANGES = {
    "bulb_radius": (0.15, 0.40),
    "background_brightness": (0.0, 0.3),
    "blur_sigma": (0.0, 0.6),
    "hue_shift": (-0.05, 0.05),
}


@dataclass(frozen=True)
class CropFactors:
    color_class: str
    bulb_radius: float = 0.3
    background_brightness: float = 0.0
    blur_sigma: float = 0.0
    inlay: str = "circle"
    hue_shift: float = 0.0

    def __post_init__(self):
        if self.color_class not in COLORS:
            raise ValueError(f"color_class: {self.color_class!r} not in {COLORS}")
        if self.inlay not in INLAYS:
            raise ValueError(f"inlay: {self.inlay!r} not in {INLAYS}")
        for name, (lo, hi) in FACTOR_LIMITS.items():
            v = getattr(self, name)
            if not (math.isfinite(v) and lo <= v <= hi):
                raise ValueError(f"{name}: {v} outside [{lo}, {hi}]")

    def as_row(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ImageCrop:
    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3:
            raise ValueError(f"pixels must be H x W x 3, got {p.shape}")
        if p.shape[0] < 4 or p.shape[1] < 4:
            raise ValueError(f"crop must be at least 4x4, got {p.shape[:2]}")
        if not (np.all(p >= 0.0) and np.all(p <= 1.0)):
            raise ValueError("pixel intensities must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class DatasetSpec:
    n_per_class: int
    size: int = 16
    seed: int = 0
    factor_ranges: dict = field(default_factory=lambda: dict(DEFAULT_RANGES))
    arrow_prob: float = 0.25
    exclude_classes: tuple = ()

    def __post_init__(self):
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be >= 1")
        if self.size < 8:
            raise ValueError("size must be >= 8")
        if not 0.0 <= self.arrow_prob <= 1.0:
            raise ValueError("arrow_prob must be in [0, 1]")
        for name, rng in self.factor_ranges.items():
            if name not in FACTOR_LIMITS:
                raise ValueError(f"unknown factor range {name!r}")
            lo, hi = rng
            flo, fhi = FACTOR_LIMITS[name]
            if not (flo <= lo <= hi <= fhi):
                raise ValueError(f"{name}: range {rng} not within [{flo}, {fhi}]")
        for c in self.exclude_classes:
            if c not in COLORS:
                raise ValueError(f"exclude_classes: unknown class {c!r}")

    @property
    def classes(self) -> tuple:
        return tuple(c for c in COLORS if c not in self.exclude_classes)


def bulb_color(color_class: str, hue_shift: float) -> np.ndarray:
    hue = (_BASE_HUE[color_class] + hue_shift) % 1.0
    return np.array(colorsys.hsv_to_rgb(hue, SATURATION, 1.0))


def _coverage(mask: np.ndarray, size: int) -> np.ndarray:
    return mask.reshape(size, SUPERSAMPLE, size, SUPERSAMPLE).mean(axis=(1, 3))


def _shape_masks(f: CropFactors, size: int):
    """Fractional coverage of housing, unlit lenses, lit lens and inlay."""
    n = size * SUPERSAMPLE
    u = (np.arange(n) + 0.5) / n
    y, x = np.meshgrid(u, u, indexing="ij")
    r = f.bulb_radius
    pitch = 2.3 * r
    slots = _SLOTS[f.color_class]
    half_w = 1.3 * r + 0.04
    top = 0.5 + min(0, *slots) * pitch - 1.15 * r
    bottom = 0.5 + max(0, *slots) * pitch + 1.15 * r
    housing = (np.abs(x - 0.5) <= half_w) & (y >= top) & (y <= bottom)

    unlit = np.zeros_like(housing)
    for s in slots:
        unlit |= (x - 0.5) ** 2 + (y - 0.5 - s * pitch) ** 2 <= r * r
    dx, dy = x - 0.5, y - 0.5
    lens = dx * dx + dy * dy <= r * r
    if f.inlay == "circle":
        inlay = dx * dx + dy * dy <= (0.75 * r) ** 2
    else:
        # left-pointing isoceles triangle, tip at -0.75r, base at +0.6r
        tip, base, half_h = -0.75 * r, 0.6 * r, 0.6 * r
        t = (dx - tip) / (base - tip)
        inlay = (t >= 0) & (t <= 1) & (np.abs(dy) <= half_h * t)
    return [_coverage(m, size) for m in (housing, unlit, lens, inlay)]


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, kernel radius ceil(3 sigma), reflect padding."""
    if sigma <= 0:
        return img
    rad = int(math.ceil(3.0 * sigma))
    k = np.exp(-0.5 * (np.arange(-rad, rad + 1) / sigma) ** 2)
    k /= k.sum()
    out = img
    for axis in (0, 1):
        pad = [(0, 0)] * img.ndim
        pad[axis] = (rad, rad)
        p = np.pad(out, pad, mode="symmetric")
        acc = np.zeros_like(out)
        for i, w in enumerate(k):
            sl = [slice(None)] * img.ndim
            sl[axis] = slice(i, i + out.shape[axis])
            acc += w * p[tuple(sl)]
        out = acc
    return out


def render_crop(factors: CropFactors, size: int) -> ImageCrop:
    if size < 8:
        raise ValueError(f"size: {size} < 8")
    housing, unlit, lens, inlay = _shape_masks(factors, size)
    color = bulb_color(factors.color_class, factors.hue_shift)

    img = np.full((size, size, 3), factors.background_brightness)
    img += housing[..., None] * (HOUSING_LEVEL - img)
    img += unlit[..., None] * (UNLIT_LEVEL - img)
    img += lens[..., None] * (LENS_DIM * color - img)
    img += inlay[..., None] * (color - img)
    img = gaussian_blur(img, factors.blur_sigma)
    return ImageCrop(np.clip(img, 0.0, 1.0))


def sample_factors(color_class: str, spec: DatasetSpec, rng: np.random.Generator) -> CropFactors:
    ranges = {**DEFAULT_RANGES, **spec.factor_ranges}
    vals = {name: float(rng.uniform(*ranges[name])) for name in sorted(DEFAULT_RANGES)}
    inlay = "arrow" if rng.random() < spec.arrow_prob else "circle"
    return CropFactors(color_class=color_class, inlay=inlay, **vals)


def object_id(index: int) -> str:
    return f"obj{index:05d}"


def image_id(index: int) -> str:
    return f"img{index:05d}"


def crop_rng(seed: int, index: int) -> np.random.Generator:
    """Per-crop stream; independent of generation order."""
    return np.random.default_rng([int(seed) & (2**64 - 1), index])


def generate_dataset(spec: DatasetSpec):
    """Render ``n_per_class`` crops per kept class.

    Returns ``(crops, factors, annotations)``. Indices (and hence ids and random
    streams) are assigned over all three classes before exclusion, so removing a
    class leaves the remaining crops untouched.
    """
    crops, table, annotations = [], [], []
    scene = spec.size * SCENE_SCALE
    for ci, color in enumerate(COLORS):
        if color in spec.exclude_classes:
            continue
        for j in range(spec.n_per_class):
            index = ci * spec.n_per_class + j
            rng = crop_rng(spec.seed, index)
            f = sample_factors(color, spec, rng)
            x0, y0 = (int(v) for v in rng.integers(0, scene - spec.size + 1, size=2))
            box = BoundingBox(x0 / scene, y0 / scene, (x0 + spec.size) / scene, (y0 + spec.size) / scene)
            crops.append(render_crop(f, spec.size))
            table.append(f)
            annotations.append(Annotation(image_id(index), object_id(index), box))
    return crops, table, annotations


def render_scene(crop: ImageCrop, box: BoundingBox) -> np.ndarray:
    """Full frame: the crop pasted into a gray canvas at ``box``."""
    h = crop.height * SCENE_SCALE
    img = np.full((h, h, 3), SCENE_GRAY)
    x0, y0 = round(box.x1 * h), round(box.y1 * h)
    img[y0 : y0 + crop.height, x0 : x0 + crop.width] = crop.pixels
    return img
