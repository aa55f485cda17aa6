"""Synthetic noise injection, patch cropping and unpaired corpus construction."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence, Union

import numpy as np

from .core import ImagePatch, NoiseMap, UnpairedCorpus, check_channels


@dataclass(frozen=True)
class GaussianNoiseSpec:
    sigma: float
    seed: int = 0
    mean: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.mean != 0.0:
            raise ValueError("Gaussian noise mean is fixed at 0")

    kind = "gaussian"


@dataclass(frozen=True)
class RainStreakSpec:
    """Parametric rain: ``count`` straight streaks per patch.

    Ranges are inclusive ``(low, high)`` pairs sampled uniformly; a range with
    ``low == high`` pins the parameter. Angles are in degrees measured from the
    horizontal axis.
    """

    count: int = 8
    length: tuple[float, float] = (8.0, 20.0)
    angle: tuple[float, float] = (60.0, 120.0)
    intensity: tuple[float, float] = (30.0, 80.0)
    thickness: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("streak count must be >= 0")
        for name in ("length", "angle", "intensity"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is inverted: ({lo}, {hi})")
        if self.intensity[0] <= 0:
            raise ValueError("streak intensities must be positive")
        if self.length[0] <= 0 or self.thickness <= 0:
            raise ValueError("streak length and thickness must be positive")

    kind = "rain"


NoiseSpec = Union[GaussianNoiseSpec, RainStreakSpec]


def spec_to_dict(spec: NoiseSpec) -> dict:
    d = asdict(spec)
    d["kind"] = spec.kind
    return d


def spec_from_dict(d: dict) -> NoiseSpec:
    d = dict(d)
    kind = d.pop("kind", "gaussian")
    if kind == "gaussian":
        return GaussianNoiseSpec(**d)
    if kind == "rain":
        for k in ("length", "angle", "intensity"):
            if k in d:
                d[k] = tuple(d[k])
        return RainStreakSpec(**d)
    raise ValueError(f"unknown noise kind {kind!r}")


def _inject(patch: ImagePatch, noise: np.ndarray) -> tuple[ImagePatch, NoiseMap]:
    summed = patch.values + noise
    # record fl(clean + n) - clean so that noisy - clean reproduces it bit-for-bit
    truth = summed - patch.values
    return ImagePatch(np.clip(summed, 0.0, 255.0)), NoiseMap(truth)


def add_gaussian_noise(patch: ImagePatch, spec: GaussianNoiseSpec) -> tuple[ImagePatch, NoiseMap]:
    rng = np.random.default_rng(spec.seed)
    noise = rng.normal(0.0, spec.sigma, size=patch.shape)
    return _inject(patch, noise)


def rasterize_segment(shape: tuple[int, int], p0, p1, thickness: float,
                      intensity: float) -> np.ndarray:
    """Anti-aliased line segment between pixel-centre coordinates ``(y, x)``.

    Coverage falls off linearly from 1 at distance ``thickness / 2 - 0.5`` to 0
    at ``thickness / 2 + 0.5``, so a 1-pixel-thick axis-aligned segment whose
    endpoints sit on pixel centres lights exactly the pixels it passes through.
    """
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    d = p1 - p0
    seg_len2 = float(d @ d)
    if seg_len2 == 0.0:
        t = np.zeros_like(yy)
    else:
        t = np.clip(((yy - p0[0]) * d[0] + (xx - p0[1]) * d[1]) / seg_len2, 0.0, 1.0)
    dist = np.hypot(yy - (p0[0] + t * d[0]), xx - (p0[1] + t * d[1]))
    coverage = np.clip(thickness / 2.0 + 0.5 - dist, 0.0, 1.0)
    return intensity * coverage


def sample_streaks(shape: tuple[int, int], spec: RainStreakSpec, rng) -> list[dict]:
    h, w = shape
    streaks = []
    for _ in range(spec.count):
        length = rng.uniform(*spec.length)
        theta = np.deg2rad(rng.uniform(*spec.angle))
        centre = np.array([rng.uniform(0, h - 1), rng.uniform(0, w - 1)])
        half = (length - 1.0) / 2.0 * np.array([-np.sin(theta), np.cos(theta)])
        streaks.append(dict(p0=centre - half, p1=centre + half,
                            intensity=rng.uniform(*spec.intensity)))
    return streaks


def add_rain_streaks(patch: ImagePatch, spec: RainStreakSpec) -> tuple[ImagePatch, NoiseMap]:
    rng = np.random.default_rng(spec.seed)
    layer = np.zeros(patch.shape[:2])
    for s in sample_streaks(patch.shape[:2], spec, rng):
        layer += rasterize_segment(patch.shape[:2], s["p0"], s["p1"], spec.thickness,
                                   s["intensity"])
    noise = np.repeat(layer[:, :, None], patch.channels, axis=2)
    return _inject(patch, noise)


def add_noise(patch: ImagePatch, spec: NoiseSpec) -> tuple[ImagePatch, NoiseMap]:
    if isinstance(spec, GaussianNoiseSpec):
        return add_gaussian_noise(patch, spec)
    if isinstance(spec, RainStreakSpec):
        return add_rain_streaks(patch, spec)
    raise TypeError(f"unsupported noise spec {type(spec).__name__}")


def with_seed(spec: NoiseSpec, seed: int) -> NoiseSpec:
    d = asdict(spec)
    d["seed"] = int(seed)
    return type(spec)(**d)


def crop_patches(image: ImagePatch, size: int, count: int, seed: int) -> list[ImagePatch]:
    if size > min(image.height, image.width):
        raise ValueError(f"patch size {size} exceeds image {image.height}x{image.width}")
    rng = np.random.default_rng(seed)
    tops = rng.integers(0, image.height - size + 1, size=count)
    lefts = rng.integers(0, image.width - size + 1, size=count)
    return [ImagePatch(image.values[t:t + size, l:l + size]) for t, l in zip(tops, lefts)]


def smooth_images(count: int, size: int, seed: int, channels: int = 1,
                  low: float = 40.0, high: float = 215.0) -> list[ImagePatch]:
    """Smooth synthetic sources: a linear ramp plus a few broad Gaussian bumps.

    Values stay inside ``[low, high]`` so that sigma=25 noise rarely clips.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    out = []
    for _ in range(count):
        chans = []
        for _ in range(channels):
            a, b = rng.uniform(-1, 1, size=2)
            img = a * xx + b * yy
            for _ in range(rng.integers(1, 4)):
                cy, cx = rng.uniform(0, 1, size=2)
                width = rng.uniform(0.15, 0.5)
                amp = rng.uniform(-1.5, 1.5)
                img = img + amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width ** 2))
            lo, hi = img.min(), img.max()
            img = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
            span = rng.uniform(0.3, 1.0) * (high - low)
            offset = rng.uniform(low, high - span)
            chans.append(offset + span * img)
        out.append(ImagePatch(np.stack(chans, axis=-1)))
    return out


def build_unpaired_corpus(clean_sources: Sequence[ImagePatch], noise_spec: NoiseSpec,
                          split_ratio: float = 0.5, seed: int = 0,
                          patch_size: int | None = None,
                          patches_per_source: int = 1) -> UnpairedCorpus:
    """Split sources into two disjoint groups; noise the first, keep the second clean.

    When ``patch_size`` is given each source contributes ``patches_per_source``
    random crops; otherwise the sources are used whole.
    """
    n = len(clean_sources)
    if n < 2:
        raise ValueError(f"need at least 2 source images, got {n}")
    if not 0.0 < split_ratio < 1.0:
        raise ValueError(f"split_ratio must lie strictly between 0 and 1, got {split_ratio}")
    n_noisy = int(round(split_ratio * n))
    if n_noisy < 1 or n_noisy > n - 1:
        raise ValueError(f"split_ratio {split_ratio} leaves one set empty for {n} sources")
    check_channels(clean_sources)

    ss = np.random.SeedSequence(seed)
    perm_seed, crop_seed, noise_seed = ss.spawn(3)
    order = np.random.default_rng(perm_seed).permutation(n)
    noisy_idx = sorted(order[:n_noisy].tolist())
    clean_idx = sorted(order[n_noisy:].tolist())

    crop_seeds = crop_seed.generate_state(n)

    def patches_of(i):
        src = clean_sources[i]
        if patch_size is None:
            return [src]
        return crop_patches(src, patch_size, patches_per_source, int(crop_seeds[i]))

    noisy_src = [p for i in noisy_idx for p in patches_of(i)]
    clean_set = [p for i in clean_idx for p in patches_of(i)]
    noise_seeds = noise_seed.generate_state(len(noisy_src))
    noisy_set, truth = [], []
    for p, s in zip(noisy_src, noise_seeds):
        noisy, t = add_noise(p, with_seed(noise_spec, int(s)))
        noisy_set.append(noisy)
        truth.append(t)

    metadata = {
        "seed": int(seed),
        "split_ratio": float(split_ratio),
        "noise": spec_to_dict(noise_spec),
        "patch_size": patch_size,
        "patches_per_source": patches_per_source if patch_size is not None else 1,
        "noisy_sources": noisy_idx,
        "clean_sources": clean_idx,
    }
    return UnpairedCorpus(noisy_set, clean_set, metadata, truth)
