"""Second stage: turn a trained noise extractor into paired data and a denoiser."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .core import STORAGE_PEAK, ImagePatch, NoiseMap, Pair, PairedCorpus, check_channels, \
    to_tensor

log = logging.getLogger(__name__)


def extract_noise_maps(G, patches: Sequence[ImagePatch], mean_subtract: bool = False,
                       batch_size: int = 64) -> list[NoiseMap]:
    """Inference-mode noise maps in storage units (pixel values out of 255)."""
    check_channels(patches)
    if patches and patches[0].channels != G.config.channels:
        raise ValueError(f"generator expects {G.config.channels} channels, "
                         f"got {patches[0].channels}")
    was_training = G.training
    G.eval()
    out = []
    try:
        with torch.no_grad():
            for i in range(0, len(patches), batch_size):
                chunk = list(patches[i:i + batch_size])
                shapes = {p.shape for p in chunk}
                groups = [chunk] if len(shapes) == 1 else [[p] for p in chunk]
                for group in groups:
                    g = G(to_tensor(group, mean_subtract)).to(torch.float64).numpy()
                    out.extend(NoiseMap(m.transpose(1, 2, 0) * STORAGE_PEAK) for m in g)
    finally:
        G.train(was_training)
    return out


def extract_noise(G, noisy: ImagePatch, mean_subtract: bool = False):
    """Return ``(noise, clean_estimate)`` with ``clean_estimate = noisy - noise``, unclipped."""
    noise = extract_noise_maps(G, [noisy], mean_subtract)[0]
    noise.check_matches(noisy)
    estimate = noisy.values - noise.values
    # re-derive so that noisy - estimate reproduces the returned map bit for bit
    return NoiseMap(noisy.values - estimate), ImagePatch(estimate)


def _add_noise_map(clean: ImagePatch, noise: np.ndarray) -> tuple[ImagePatch, NoiseMap]:
    summed = clean.values + noise
    # recorded as fl(clean + g) - clean so noisy - clean reproduces it exactly off the clip
    recorded = summed - clean.values
    return ImagePatch(np.clip(summed, 0.0, STORAGE_PEAK)), NoiseMap(recorded)


def _fit_noise(noise: np.ndarray, shape, rng) -> np.ndarray:
    """Random crop of a noise map down to ``shape``; the map must be at least as large."""
    h, w = shape[:2]
    nh, nw = noise.shape[:2]
    if nh < h or nw < w or noise.shape[2] != shape[2]:
        raise ValueError(f"noise map {noise.shape} cannot cover patch {tuple(shape)}")
    if (nh, nw) == (h, w):
        return noise
    top = int(rng.integers(0, nh - h + 1))
    left = int(rng.integers(0, nw - w + 1))
    return noise[top:top + h, left:left + w]


def construct_pairs(G, noisy_set: Sequence[ImagePatch], clean_set: Sequence[ImagePatch],
                    seed: int = 0, mean_subtract: bool = False) -> PairedCorpus:
    """One pair per clean patch, noise drawn from a uniformly chosen noisy patch."""
    if not noisy_set or not clean_set:
        raise ValueError("construct_pairs needs non-empty noisy and clean sets")
    rng = np.random.default_rng(seed)
    sources = rng.integers(0, len(noisy_set), size=len(clean_set))
    needed = sorted(set(sources.tolist()))
    maps = dict(zip(needed, extract_noise_maps(G, [noisy_set[i] for i in needed], mean_subtract)))
    pairs = []
    for clean, src in zip(clean_set, sources):
        noise = _fit_noise(maps[int(src)].values, clean.shape, rng)
        noisy, recorded = _add_noise_map(clean, noise)
        pairs.append(Pair(noisy, clean, recorded))
    meta = {"seed": int(seed), "noise_sources": sources.tolist(), "kind": "denoise"}
    return PairedCorpus(pairs, meta)


def bicubic_downsample(patch: ImagePatch, r: int) -> ImagePatch:
    if patch.height % r or patch.width % r:
        raise ValueError(f"{patch.height}x{patch.width} is not divisible by scale {r}")
    t = torch.from_numpy(patch.values.transpose(2, 0, 1)[None].copy())
    lr = F.interpolate(t, size=(patch.height // r, patch.width // r), mode="bicubic",
                       align_corners=False, antialias=True)
    return ImagePatch(lr[0].numpy().transpose(1, 2, 0))


def construct_sr_pairs(G, hr_set: Sequence[ImagePatch], noisy_lr_set: Sequence[ImagePatch],
                       r: int, seed: int = 0, mean_subtract: bool = False) -> PairedCorpus:
    """Pairs of (noisy LR, clean HR): downsample each HR image, then add extracted noise."""
    if r not in (2, 3, 4):
        raise ValueError(f"scale factor must be 2, 3 or 4, got {r}")
    if not hr_set or not noisy_lr_set:
        raise ValueError("construct_sr_pairs needs non-empty HR and noisy LR sets")
    lr_clean = [bicubic_downsample(hr, r) for hr in hr_set]
    base = construct_pairs(G, noisy_lr_set, lr_clean, seed, mean_subtract)
    pairs = [Pair(p.noisy, hr, p.noise, base=p.clean) for p, hr in zip(base.pairs, hr_set)]
    meta = dict(base.metadata, kind="sr", scale=r)
    return PairedCorpus(pairs, meta)


# ---------------------------------------------------------------------------
# downstream denoiser

@dataclass(frozen=True)
class DenoiserConfig:
    depth: int = 7
    channels: int = 32
    epochs: int = 30
    lr: float = 1e-3
    batch_size: int = 16
    patch_size: int = 32

    def __post_init__(self):
        if self.depth < 3:
            raise ValueError(f"denoiser depth must be >= 3, got {self.depth}")
        if self.epochs < 1 or self.batch_size < 1 or self.patch_size < 1 or self.lr <= 0:
            raise ValueError("invalid denoiser training settings")


class ResidualDenoiser(nn.Module):
    """DnCNN: zero-padded 3x3 convs predicting the noise residual."""

    def __init__(self, depth: int = 7, features: int = 32, image_channels: int = 1):
        super().__init__()
        self.image_channels = image_channels
        layers = [nn.Conv2d(image_channels, features, 3, padding=1), nn.ReLU(inplace=True)]
        for _ in range(depth - 2):
            layers += [nn.Conv2d(features, features, 3, padding=1, bias=False),
                       nn.BatchNorm2d(features), nn.ReLU(inplace=True)]
        layers.append(nn.Conv2d(features, image_channels, 3, padding=1))
        self.body = nn.Sequential(*layers)
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                if m.bias is not None:
                    nn.init.zeros_(m.bias)
        nn.init.zeros_(self.body[-1].weight)

    def forward(self, x):
        return self.body(x)


@dataclass
class DenoiserResult:
    model: ResidualDenoiser
    config: DenoiserConfig
    history: list[dict] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.history[-1]["loss"] if self.history else math.nan


def _crop_batch(noisy, noise, idx, size, rng):
    _, _, h, w = noisy.shape
    if size >= h and size >= w:
        return noisy[idx], noise[idx]
    size_h, size_w = min(size, h), min(size, w)
    xs, ys = [], []
    for i in idx:
        top = int(rng.integers(0, h - size_h + 1))
        left = int(rng.integers(0, w - size_w + 1))
        xs.append(noisy[i, :, top:top + size_h, left:left + size_w])
        ys.append(noise[i, :, top:top + size_h, left:left + size_w])
    return torch.stack(xs), torch.stack(ys)


def train_denoiser(pairs: PairedCorpus, config: DenoiserConfig = DenoiserConfig(),
                   seed: int = 0) -> DenoiserResult:
    """Fit the residual denoiser to predict each pair's recorded noise map."""
    if len(pairs) == 0:
        raise ValueError("cannot train a denoiser on an empty corpus")
    noisy_patches = [p.noisy for p in pairs.pairs]
    channels = check_channels(noisy_patches)
    if len({p.shape for p in noisy_patches}) != 1:
        raise ValueError("denoiser training expects equally sized pairs")
    noisy = to_tensor(noisy_patches)
    noise = torch.from_numpy(
        np.stack([p.noise.values for p in pairs.pairs]).transpose(0, 3, 1, 2) / STORAGE_PEAK
    ).float()

    torch.manual_seed(seed)
    model = ResidualDenoiser(config.depth, config.channels, channels)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    rng = np.random.default_rng(seed)
    result = DenoiserResult(model, config)
    step = 0
    for epoch in range(config.epochs):
        model.train()
        order = rng.permutation(len(noisy))
        for s in range(0, len(order), config.batch_size):
            x, y = _crop_batch(noisy, noise, order[s:s + config.batch_size], config.patch_size, rng)
            opt.zero_grad(set_to_none=True)
            loss = F.mse_loss(model(x), y)
            if not torch.isfinite(loss):
                raise FloatingPointError(f"denoiser loss became non-finite at step {step}")
            loss.backward()
            opt.step()
            result.history.append({"epoch": epoch, "step": step, "loss": loss.item()})
            step += 1
        log.info("denoiser epoch %d loss %.6f", epoch, result.history[-1]["loss"])
    model.eval()
    return result


def predict_noise(model: ResidualDenoiser, noisy: ImagePatch) -> NoiseMap:
    if noisy.channels != model.image_channels:
        raise ValueError(f"denoiser expects {model.image_channels} channels, got {noisy.channels}")
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            pred = model(to_tensor([noisy]))[0].to(torch.float64).numpy()
    finally:
        model.train(was_training)
    return NoiseMap(pred.transpose(1, 2, 0) * STORAGE_PEAK)


def denoise(model, noisy: ImagePatch) -> ImagePatch:
    """``clip(noisy - predicted_noise, 0, 255)``."""
    if isinstance(model, DenoiserResult):
        model = model.model
    pred = predict_noise(model, noisy)
    return ImagePatch(np.clip(noisy.values - pred.values, 0.0, STORAGE_PEAK))


def save_denoiser(result: DenoiserResult, directory) -> Path:

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(result.model.state_dict(), directory / "denoiser.pt")
    meta = {"config": asdict(result.config), "image_channels": result.model.image_channels,
            "final_loss": result.final_loss}
    (directory / "denoiser.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return directory


def load_denoiser(directory) -> ResidualDenoiser:

    directory = Path(directory)
    meta_path = directory / "denoiser.json"
    if not meta_path.is_file():
        raise FileNotFoundError(f"no denoiser checkpoint at {directory}")
    meta = json.loads(meta_path.read_text())
    cfg = DenoiserConfig(**meta["config"])
    model = ResidualDenoiser(cfg.depth, cfg.channels, meta["image_channels"])
    model.load_state_dict(torch.load(directory / "denoiser.pt", weights_only=True))
    model.eval()
    return model
