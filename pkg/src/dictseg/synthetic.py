"""Synthetic fine-grained segmentation data with controllable difficulty.

Each image is a Voronoi partition of blob regions. Two dials shape the
task:

* `homogeneity` in [0,1] pulls all class mean colors toward a shared
  neutral gray, making classes look alike (inter-class similarity).
* `heterogeneity` in [0,1] scales per-pixel noise, giving each class an
  internal texture (intra-class variability).

Classes come in twin pairs (2k, 2k+1) that share a base hue: the twins'
mean colors differ only by a small constant shift, while their noise
amplitudes differ strongly (matte vs coarse texture). Telling twins
apart therefore requires reading texture, not just color, once
heterogeneity is up. Class 0 is the background region.

Every image contains every class (each class owns at least one Voronoi
seed), and generation is deterministic per (seed, split, index), so a
dataset is byte-identical across runs regardless of generation order.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .pnm import write_pgm, write_ppm
from .rng import Rng

MAX_CLASSES = 8

_PAIR_COLORS = np.array(
    [
        (0.78, 0.30, 0.26),  # red pair
        (0.26, 0.68, 0.34),  # green pair
        (0.28, 0.38, 0.78),  # blue pair
        (0.74, 0.70, 0.26),  # yellow pair
    ]
)
_TWIN_SHIFT = 0.08
# Twin texture amplitudes: even classes are matte, odd ones coarse.
_TWIN_AMPLITUDE = (0.35, 1.0)
_NOISE_SCALE = 0.18
_NEUTRAL = 0.5
_EXTRA_SEEDS = 4

SPLITS = ("train", "val", "test")


@dataclass
class SyntheticConfig:
    image_size: int = 64
    n_classes: int = 4
    samples_train: int = 200
    samples_val: int = 40
    samples_test: int = 40
    seed: int = 42
    heterogeneity: float = 0.5
    homogeneity: float = 0.5
    ignore_border: int = 0

    def __post_init__(self):
        if self.n_classes < 2 or self.n_classes > MAX_CLASSES:
            raise ConfigError(
                f"n_classes must be in [2, {MAX_CLASSES}], got {self.n_classes}"
            )
        if self.image_size < 16 or self.image_size % 16 != 0:
            raise ConfigError(
                f"image_size must be a positive multiple of 16, got {self.image_size}"
            )
        for dial in ("heterogeneity", "homogeneity"):
            v = getattr(self, dial)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{dial} must lie in [0,1], got {v}")
        if self.ignore_border < 0 or 2 * self.ignore_border >= self.image_size:
            raise ConfigError(f"ignore_border {self.ignore_border} too large")

    def samples(self, split: str) -> int:
        return {s: getattr(self, f"samples_{s}") for s in SPLITS}[split]


def class_mean_colors(config: SyntheticConfig) -> np.ndarray:
    """Mean RGB per class after applying the homogeneity dial, (N, 3)."""
    n = config.n_classes
    template = np.empty((n, 3))
    for c in range(n):
        template[c] = _PAIR_COLORS[c // 2] + (c % 2) * _TWIN_SHIFT
    return _NEUTRAL + (1.0 - config.homogeneity) * (template - _NEUTRAL)


def class_noise_std(config: SyntheticConfig) -> np.ndarray:
    """Per-class texture noise standard deviation, (N,)."""
    n = config.n_classes
    amps = np.array([_TWIN_AMPLITUDE[c % 2] for c in range(n)])
    return _NOISE_SCALE * config.heterogeneity * amps


def _voronoi_labels(config: SyntheticConfig, rng: Rng) -> np.ndarray:
    """Blob label map: nearest-seed regions, every class owns >= 1 seed."""
    size = config.image_size
    n = config.n_classes
    k = n + _EXTRA_SEEDS
    flat = rng.derive("seeds").permutation(size * size)[:k]
    seeds_y = flat // size
    seeds_x = flat % size
    classes = np.concatenate(
        [np.arange(n), rng.derive("classes").integers(0, n, k - n)]
    )
    ys, xs = np.mgrid[0:size, 0:size]
    d2 = (ys[..., None] - seeds_y) ** 2 + (xs[..., None] - seeds_x) ** 2
    return classes[np.argmin(d2, axis=-1)].astype(np.int64)


def make_sample(config: SyntheticConfig, split: str, index: int):
    """One (image, label) pair; image float64 (3,H,W) in [0,1], label (H,W)."""
    rng = Rng(config.seed).derive(f"synth.{split}.{index:05d}")
    labels = _voronoi_labels(config, rng)
    means = class_mean_colors(config)
    stds = class_noise_std(config)
    noise = rng.derive("texture").normal(labels.shape + (3,))
    image = means[labels] + noise * stds[labels][..., None]
    image = np.clip(image, 0.0, 1.0).transpose(2, 0, 1)
    if config.ignore_border > 0:
        b = config.ignore_border
        bordered = labels.copy()
        bordered[:b, :] = 255
        bordered[-b:, :] = 255
        bordered[:, :b] = 255
        bordered[:, -b:] = 255
        labels = bordered
    return image, labels


def generate(config: SyntheticConfig, root: str) -> dict:
    """Write train/val/test splits under `root`; returns paths per split."""
    out: dict[str, list[tuple[str, str]]] = {}
    for split in SPLITS:
        directory = os.path.join(root, split)
        os.makedirs(directory, exist_ok=True)
        pairs = []
        for index in range(config.samples(split)):
            image, labels = make_sample(config, split, index)
            ppm = os.path.join(directory, f"{index:05d}.ppm")
            pgm = os.path.join(directory, f"{index:05d}.pgm")
            write_ppm(ppm, image)
            write_pgm(pgm, labels)
            pairs.append((ppm, pgm))
        out[split] = pairs
    return out
