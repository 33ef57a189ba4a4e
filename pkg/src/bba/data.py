"""Synthetic two-domain grating benchmark and its on-disk format.

Class ``k`` is a sinusoidal grating at orientation ``k*pi/K``. Every class in
a polarity group shares one spatial frequency, so polarity is a coherent
visual property. The target domain rescales contrast, adds a left-to-right
illumination gradient of amplitude ``brightness_shift``, pastes up to
``occluders`` flat patches, optionally translates each image by a random
integer offset, and uses stronger noise. Each dataset is standardised to zero
mean, unit variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import binio
from .polarity import PolarityMap

H = W = 16
NUM_CLASSES = 8


@dataclass
class ShiftConfig:
    brightness_shift: float = 4.0
    contrast_scale: float = 0.7
    noise_sigma_source: float = 0.3
    noise_sigma_target: float = 0.8
    max_translation: int = 0  # shifts flip grating phase; see README
    samples_per_class: int = 200
    test_per_class: int = 100
    occluders: int = 3  # max number of occluding patches per target image
    occluder_size: int = 4
    freq_positive: float = 1.5  # cycles per image width
    freq_negative: float = 2.5
    seed: int = 0

    def validate(self, height=H):
        if self.contrast_scale <= 0:
            raise ValueError("data.contrast_scale must be positive")
        if self.noise_sigma_source < 0 or self.noise_sigma_target < 0:
            raise ValueError("data noise sigmas must be non-negative")
        if not 0 <= self.max_translation < height / 4:
            raise ValueError(f"data.max_translation must lie in [0, {height / 4})")
        if self.samples_per_class < 1 or self.test_per_class < 1:
            raise ValueError("data sample counts must be positive")
        if self.occluders < 0 or not 1 <= self.occluder_size <= height:
            raise ValueError("data.occluders must be >= 0 and data.occluder_size within the image")
        if self.freq_positive <= 0 or self.freq_negative <= 0:
            raise ValueError("data frequencies must be positive")


@dataclass
class Dataset:
    images: np.ndarray  # N x (H*W)
    labels: np.ndarray  # N
    domain: str  # "source" | "target"
    height: int = H
    width: int = W
    num_classes: int = NUM_CLASSES
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.domain not in ("source", "target"):
            raise ValueError(f"unknown domain tag {self.domain!r}")
        if self.images.shape != (len(self.labels), self.height * self.width):
            raise ValueError("images must be N x (H*W) with one label per row")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels out of range")

    def __len__(self):
        return len(self.labels)


def default_polarity(num_classes=NUM_CLASSES) -> PolarityMap:
    return PolarityMap.halves(num_classes)


def grating(k, freq, shift=(0, 0), num_classes=NUM_CLASSES, size=H):
    """Unit-amplitude grating for class ``k`` sampled on a ``size`` grid,
    translated by ``shift = (dy, dx)`` pixels."""
    theta = k * np.pi / num_classes
    ii, jj = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    c = (size - 1) / 2.0
    y = ii - shift[0] - c
    x = jj - shift[1] - c
    return np.cos(2 * np.pi * freq / size * (x * np.cos(theta) + y * np.sin(theta)))


def illumination(size=H):
    """Shading field rising linearly from -1 (left) to +1 (right); a constant
    offset would be removed by standardisation, a gradient is not."""
    ramp = np.linspace(-1.0, 1.0, size)
    return np.tile(ramp, (size, 1))


def _occlude(img, count, size, rng):
    """Paste ``count`` flat patches of random intensity at random positions, in place."""
    for _ in range(count):
        r, c = rng.integers(0, img.shape[0] - size + 1, size=2)
        img[r:r + size, c:c + size] = rng.uniform(-1.0, 1.0)


def _standardize(X):
    return (X - X.mean()) / X.std()


def _make_domain(cfg: ShiftConfig, domain, per_class, rng, pmap):
    noise = cfg.noise_sigma_source if domain == "source" else cfg.noise_sigma_target
    n = per_class * NUM_CLASSES
    labels = np.repeat(np.arange(NUM_CLASSES), per_class)
    groups = pmap.group_of(labels)
    X = np.empty((n, H * W))
    T = cfg.max_translation
    for i, (k, g) in enumerate(zip(labels, groups)):
        freq = cfg.freq_positive if g == 0 else cfg.freq_negative
        if domain == "source":
            img = grating(k, freq)
        else:
            shift = rng.integers(-T, T + 1, size=2) if T > 0 else (0, 0)
            img = cfg.contrast_scale * grating(k, freq, shift) + cfg.brightness_shift * illumination()
            if cfg.occluders:
                _occlude(img, int(rng.integers(0, cfg.occluders + 1)), cfg.occluder_size, rng)
        X[i] = img.reshape(-1)
    X += noise * rng.standard_normal(X.shape)
    order = rng.permutation(n)
    return Dataset(_standardize(X[order]), labels[order], domain)


def generate_domain_pair(cfg: ShiftConfig | None = None, split="train"):
    """Return ``(source, target)`` datasets for ``split`` in {"train", "test"}.

    Each (split, domain) pair draws from its own child stream of ``cfg.seed``.
    """
    cfg = cfg or ShiftConfig()
    cfg.validate()
    if split not in ("train", "test"):
        raise ValueError(f"unknown split {split!r}")
    per_class = cfg.samples_per_class if split == "train" else cfg.test_per_class
    pmap = default_polarity()
    out = []
    for d, domain in enumerate(("source", "target")):
        ss = np.random.SeedSequence(cfg.seed, spawn_key=(0 if split == "train" else 1, d))
        ds = _make_domain(cfg, domain, per_class, np.random.default_rng(ss), pmap)
        ds.meta = {"split": split, "seed": cfg.seed, "labels_eval_only": domain == "target"}
        out.append(ds)
    return tuple(out)


def save_dataset(ds: Dataset, path) -> None:
    meta = {
        "domain": ds.domain,
        "height": ds.height,
        "width": ds.width,
        "num_classes": ds.num_classes,
        "n": len(ds),
        "meta": ds.meta,
    }
    binio.write(path, "dataset", meta, {"images": ds.images.astype(np.float64),
                                        "labels": ds.labels.astype(np.int64)})


def load_dataset(path) -> Dataset:
    meta, arrays = binio.read(path, kind="dataset")
    if len(arrays["labels"]) != meta["n"]:
        raise binio.FormatError(f"{path}: header says {meta['n']} samples, found {len(arrays['labels'])}")
    return Dataset(arrays["images"], arrays["labels"], meta["domain"], meta["height"],
                   meta["width"], meta["num_classes"], meta.get("meta", {}))


def shift_config_dict(cfg: ShiftConfig) -> dict:
    return asdict(cfg)
