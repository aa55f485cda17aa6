"""Noise-extraction generator and patch discriminator."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
from torch import nn


@dataclass(frozen=True)
class GeneratorConfig:
    """DnCNN-style stack of ``depth`` valid 3x3 convolutions.

    The input is reflection-padded by ``padding`` pixels per side; each valid
    3x3 conv trims one pixel per side, so ``padding == depth`` restores the
    input size.
    """

    depth: int = 7
    mid_channels: int = 32
    channels: int = 1
    kernel: int = 3
    padding: int | None = None
    init_std: float = 0.02
    zero_init_last: bool = False

    def __post_init__(self):
        if self.padding is None:
            object.__setattr__(self, "padding", self.depth)
        if self.depth < 2:
            raise ValueError(f"generator depth must be >= 2, got {self.depth}")
        if self.kernel != 3:
            raise ValueError("generator kernel must be 3")
        if self.padding != self.depth:
            raise ValueError(
                f"padding must equal depth ({self.depth}) to preserve spatial size, got {self.padding}")
        if self.channels not in (1, 3) or self.mid_channels < 1:
            raise ValueError("invalid channel configuration")


PAPER_GENERATOR = GeneratorConfig(depth=17, mid_channels=64)
DESK_GENERATOR = GeneratorConfig(depth=7, mid_channels=32)


@dataclass(frozen=True)
class DiscriminatorConfig:
    channels: tuple[int, ...] = (64, 128, 64, 1)
    kernels: tuple[int, ...] = (5, 5, 3, 3)
    strides: tuple[int, ...] = (2, 2, 1, 1)
    in_channels: int = 1
    leaky_slope: float = 0.2
    init_std: float = 0.02

    def __post_init__(self):
        for name in ("channels", "kernels", "strides"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not len(self.channels) == len(self.kernels) == len(self.strides) == 4:
            raise ValueError("discriminator has exactly 4 conv layers")
        if self.channels[-1] != 1:
            raise ValueError("final discriminator layer must have 1 output channel")


PAPER_DISCRIMINATOR = DiscriminatorConfig()


def discriminator_output_size(n: int, config: DiscriminatorConfig = PAPER_DISCRIMINATOR) -> int:
    """Spatial size after the four valid convolutions; raises if any layer is empty."""
    size = n
    for i, (k, s) in enumerate(zip(config.kernels, config.strides)):
        if size < k:
            raise ValueError(f"input {n} too small: layer {i + 1} sees {size} < kernel {k}")
        size = (size - k) // s + 1
    return size


def _init_conv(m: nn.Module, std: float):
    if isinstance(m, nn.Conv2d):
        nn.init.normal_(m.weight, 0.0, std)
        if m.bias is not None:
            nn.init.zeros_(m.bias)
    elif isinstance(m, nn.BatchNorm2d):
        nn.init.ones_(m.weight)
        nn.init.zeros_(m.bias)


class Generator(nn.Module):
    """Maps a noisy batch (N, C, H, W) to its noise map of the same shape."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        c, f = config.channels, config.mid_channels
        layers = [nn.Conv2d(c, f, 3), nn.ReLU(inplace=True)]
        for _ in range(config.depth - 2):
            layers += [nn.Conv2d(f, f, 3), nn.BatchNorm2d(f), nn.ReLU(inplace=True)]
        layers.append(nn.Conv2d(f, c, 3))
        self.pad = nn.ReflectionPad2d(config.padding)
        self.body = nn.Sequential(*layers)
        self.apply(lambda m: _init_conv(m, config.init_std))
        if config.zero_init_last:
            nn.init.zeros_(self.body[-1].weight)

    def forward(self, x):
        if x.shape[1] != self.config.channels:
            raise ValueError(f"expected {self.config.channels} channels, got {x.shape[1]}")
        if min(x.shape[-2:]) <= self.config.padding:
            raise ValueError(
                f"input {tuple(x.shape[-2:])} too small for reflection padding {self.config.padding}")
        return self.body(self.pad(x))


class Discriminator(nn.Module):
    """Four valid convolutions producing an un-squashed score map."""

    def __init__(self, config: DiscriminatorConfig = PAPER_DISCRIMINATOR):
        super().__init__()
        self.config = config
        layers = []
        cin = config.in_channels
        for i, (cout, k, s) in enumerate(zip(config.channels, config.kernels, config.strides)):
            layers.append(nn.Conv2d(cin, cout, k, stride=s))
            if i < 3:
                layers.append(nn.LeakyReLU(config.leaky_slope, inplace=True))
            cin = cout
        self.body = nn.Sequential(*layers)
        self.apply(lambda m: _init_conv(m, config.init_std))

    def forward(self, x):
        discriminator_output_size(min(x.shape[-2:]), self.config)
        return self.body(x)


def build_generator(config: GeneratorConfig = DESK_GENERATOR) -> Generator:
    return Generator(config)


def build_discriminator(config: DiscriminatorConfig = PAPER_DISCRIMINATOR) -> Discriminator:
    return Discriminator(config)


def forward_generator(G: Generator, batch: torch.Tensor) -> torch.Tensor:
    """Inference pass: batch-norm uses running statistics, no autograd graph."""
    was_training = G.training
    G.eval()
    try:
        with torch.no_grad():
            return G(batch)
    finally:
        G.train(was_training)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


# ---------------------------------------------------------------------------
# checkpoints

@dataclass
class Checkpoint:
    generator: Generator
    discriminator: Discriminator | None
    manifest: dict = field(default_factory=dict)
    optimizer_state: dict | None = None


def save_checkpoint(directory, G: Generator, D: Discriminator | None = None,
                    manifest: dict | None = None, optimizer_state: dict | None = None) -> Path:
    """Write ``state.pt`` (parameter and optimiser tensors) and ``checkpoint.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    state = {"generator": G.state_dict()}
    if D is not None:
        state["discriminator"] = D.state_dict()
    if optimizer_state is not None:
        state["optimizers"] = optimizer_state
    torch.save(state, directory / "state.pt")
    meta = dict(manifest or {})
    meta["generator_config"] = asdict(G.config)
    if D is not None:
        meta["discriminator_config"] = asdict(D.config)
    (directory / "checkpoint.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return directory


def load_checkpoint(directory) -> Checkpoint:
    directory = Path(directory)
    meta_path = directory / "checkpoint.json"
    if not meta_path.is_file():
        raise FileNotFoundError(f"no checkpoint at {directory}")
    meta = json.loads(meta_path.read_text())
    state = torch.load(directory / "state.pt", weights_only=True)
    G = Generator(GeneratorConfig(**meta["generator_config"]))
    G.load_state_dict(state["generator"])
    D = None
    if "discriminator" in state:
        D = Discriminator(DiscriminatorConfig(**meta["discriminator_config"]))
        D.load_state_dict(state["discriminator"])
    return Checkpoint(G, D, meta, state.get("optimizers"))
