"""Domain types shared across the package: patches, noise maps, corpora, schedules.

Pixel data is held as ``float64`` arrays of shape ``(H, W, C)`` in the 8-bit
storage range ``[0, 255]``. Conversion to the network working range happens in
:func:`to_tensor` / :func:`from_tensor`.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

STORAGE_PEAK = 255.0


class PatchFileError(Exception):
    """Base class for raster loading failures."""


class MissingFileError(PatchFileError, FileNotFoundError):
    pass


class UnsupportedFormatError(PatchFileError):
    pass


class CorruptDataError(PatchFileError):
    pass


def _as_hwc(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"expected a 2-D or 3-D array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class ImagePatch:
    """A single- or three-channel raster. ``values`` has shape (H, W, C)."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_hwc(self.values)
        h, w, c = arr.shape
        if h < 1 or w < 1:
            raise ValueError(f"patch must be at least 1x1, got {h}x{w}")
        if c not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {c}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def __repr__(self):
        return f"ImagePatch({self.height}, {self.width}, {self.channels})"


@dataclass(frozen=True, eq=False)
class NoiseMap:
    """Additive residual with the shape of its source patch; any sign allowed."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_hwc(self.values)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def check_matches(self, patch: ImagePatch) -> None:
        if self.shape != patch.shape:
            raise ValueError(f"noise map shape {self.shape} != patch shape {patch.shape}")


@dataclass(frozen=True)
class UnpairedCorpus:
    """Content-disjoint noisy set and clean set.

    ``noisy_truth`` optionally carries the synthetic noise injected into each
    noisy patch; it is never used for training, only for evaluation.
    """

    noisy_set: tuple[ImagePatch, ...]
    clean_set: tuple[ImagePatch, ...]
    metadata: dict = field(default_factory=dict)
    noisy_truth: tuple[NoiseMap, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "noisy_set", tuple(self.noisy_set))
        object.__setattr__(self, "clean_set", tuple(self.clean_set))
        if self.noisy_truth is not None:
            truth = tuple(self.noisy_truth)
            if len(truth) != len(self.noisy_set):
                raise ValueError("noisy_truth must align with noisy_set")
            object.__setattr__(self, "noisy_truth", truth)
        check_channels(self.noisy_set + self.clean_set)

    @property
    def channels(self) -> int:
        return (self.noisy_set or self.clean_set)[0].channels


@dataclass(frozen=True)
class Pair:
    """One training pair.

    ``base`` is the clean image the noise was added to. It equals ``clean``
    for denoising pairs; for noisy-SR pairs it is the downsampled LR image
    while ``clean`` is the HR target.
    """

    noisy: ImagePatch
    clean: ImagePatch
    noise: NoiseMap
    base: ImagePatch | None = None

    def __post_init__(self):
        if self.base is None:
            object.__setattr__(self, "base", self.clean)
        self.noise.check_matches(self.noisy)
        self.noise.check_matches(self.base)


@dataclass(frozen=True)
class PairedCorpus:
    pairs: tuple[Pair, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))

    def __len__(self):
        return len(self.pairs)

    def check_identity(self, peak: float = STORAGE_PEAK) -> None:
        """Assert noisy - clean == noise at every pixel where clipping did not bind."""
        for i, p in enumerate(self.pairs):
            noisy, clean, noise = p.noisy.values, p.base.values, p.noise.values
            free = (noisy > 0) & (noisy < peak)
            if not np.array_equal((noisy - clean)[free], noise[free]):
                raise AssertionError(f"pair {i}: noisy - clean differs from recorded noise")


@dataclass(frozen=True)
class TrainSchedule:
    """Phase boundaries and target loss weights for SCGAN training.

    Phase 1 runs on epochs ``[0, ep1)``, phase 2 on ``[ep1, ep2)`` and phase 3
    on ``[ep2, ep3)``; training stops after ``ep3`` epochs.
    """

    ep1: int = 10
    ep2: int = 20
    ep3: int = 30
    w1_target: float = 1.0
    w2_target: float = 1.0
    w3_target: float = 1.0
    batch_size: int = 16
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    ramp: bool = False

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def total_epochs(self) -> int:
        return self.ep3

    def violations(self) -> list[str]:
        out = []
        if not 0 < self.ep1 <= self.ep2 <= self.ep3:
            out.append(
                f"schedule requires 0 < ep1 <= ep2 <= ep3, got ({self.ep1}, {self.ep2}, {self.ep3})"
            )
        for name in ("w1_target", "w2_target", "w3_target"):
            if getattr(self, name) < 0:
                out.append(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.batch_size < 1:
            out.append(f"batch_size must be >= 1, got {self.batch_size}")
        for name in ("lr_g", "lr_d"):
            if getattr(self, name) <= 0:
                out.append(f"{name} must be positive, got {getattr(self, name)}")
        return out

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def check_channels(patches: Sequence[ImagePatch]) -> int | None:
    """Return the common channel count, rejecting mixed collections."""
    counts = {p.channels for p in patches}
    if len(counts) > 1:
        raise ValueError(f"mixed channel counts in one collection: {sorted(counts)}")
    return counts.pop() if counts else None


# ---------------------------------------------------------------------------
# raster I/O

def load_patch(path) -> ImagePatch:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such file: {path}")
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise UnsupportedFormatError(f"{path}: unsupported format {im.format}")
            if im.mode == "P":
                im = im.convert("RGB")
            if im.mode == "L":
                arr = np.asarray(im)
            elif im.mode in ("RGB", "RGBA"):
                arr = np.asarray(im.convert("RGB"))
            else:
                raise UnsupportedFormatError(f"{path}: unsupported pixel mode {im.mode}")
    except UnidentifiedImageError as exc:
        raise UnsupportedFormatError(f"{path}: not a recognised raster") from exc
    except (OSError, SyntaxError, ValueError) as exc:
        if isinstance(exc, PatchFileError):
            raise
        raise CorruptDataError(f"{path}: {exc}") from exc
    return ImagePatch(arr.astype(np.float64))


def save_patch(patch: ImagePatch, path) -> None:
    """Write a patch as 8-bit PNG (values rounded and clipped to [0, 255])."""
    arr = np.clip(np.rint(patch.values), 0, 255).astype(np.uint8)
    if patch.channels == 1:
        arr = arr[:, :, 0]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path, format="PNG")


def save_raw_array(values: np.ndarray, path) -> None:
    """float32 little-endian raw dump plus ``<path>.json`` sidecar with the shape."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(values, dtype="<f4").tofile(path)
    sidecar = {"shape": list(values.shape), "dtype": "float32", "byteorder": "little"}
    path.with_name(path.name + ".json").write_text(json.dumps(sidecar))


def load_raw_array(path) -> np.ndarray:
    path = Path(path)
    sidecar = json.loads(path.with_name(path.name + ".json").read_text())
    arr = np.fromfile(path, dtype="<f4")
    return arr.reshape(sidecar["shape"]).astype(np.float64)


# ---------------------------------------------------------------------------
# normalisation and tensor conversion

def normalize(patch: ImagePatch, mode: str = "scale") -> ImagePatch:
    """Map a patch into a working range.

    ``"scale"`` divides by 255; ``"mean"`` subtracts the per-channel mean and
    keeps the pixel units.
    """
    v = patch.values
    if mode == "scale":
        return ImagePatch(v / STORAGE_PEAK)
    if mode == "mean":
        return ImagePatch(v - v.mean(axis=(0, 1), keepdims=True))
    raise ValueError(f"unknown normalisation mode {mode!r}")


def to_tensor(patches: Sequence[ImagePatch], mean_subtract: bool = False,
              dtype=torch.float32) -> torch.Tensor:
    """Stack patches into an NCHW tensor in the [0, 1] working range."""
    check_channels(patches)
    arr = np.stack([p.values for p in patches]) / STORAGE_PEAK
    if mean_subtract:
        arr = arr - arr.mean(axis=(1, 2), keepdims=True)
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2))).to(dtype)


def from_tensor(t: torch.Tensor) -> list[np.ndarray]:
    """NCHW working-range tensor -> list of (H, W, C) arrays in storage units."""
    arr = t.detach().to(torch.float64).cpu().numpy().transpose(0, 2, 3, 1)
    return list(arr * STORAGE_PEAK)


# ---------------------------------------------------------------------------
# corpus directories

def _write_patch_dir(patches, directory: Path, prefix: str = "") -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for i, p in enumerate(patches):
        save_patch(p, directory / f"{prefix}{i:04d}.png")


def _read_patch_dir(directory: Path) -> list[ImagePatch]:
    files = sorted(directory.glob("*.png"))
    return [load_patch(f) for f in files]


def save_unpaired_corpus(corpus: UnpairedCorpus, directory) -> Path:
    directory = Path(directory)
    _write_patch_dir(corpus.noisy_set, directory / "noisy")
    _write_patch_dir(corpus.clean_set, directory / "clean")
    if corpus.noisy_truth is not None:
        for i, n in enumerate(corpus.noisy_truth):
            save_raw_array(n.values, directory / "truth" / f"{i:04d}.f32")
    manifest = dict(corpus.metadata)
    manifest.update(n_noisy=len(corpus.noisy_set), n_clean=len(corpus.clean_set),
                    channels=corpus.channels)
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return directory


def load_unpaired_corpus(directory) -> UnpairedCorpus:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise MissingFileError(f"corpus manifest not found: {manifest_path}")
    metadata = json.loads(manifest_path.read_text())
    noisy = _read_patch_dir(directory / "noisy")
    clean = _read_patch_dir(directory / "clean")
    truth = None
    truth_dir = directory / "truth"
    if truth_dir.is_dir():
        truth = [NoiseMap(load_raw_array(f)) for f in sorted(truth_dir.glob("*.f32"))]
        if len(truth) != len(noisy):
            truth = None
    return UnpairedCorpus(noisy, clean, metadata, truth)


def save_paired_corpus(corpus: PairedCorpus, directory) -> Path:
    """Write ``pairs/NNNN_{noisy,clean}.png`` and ``pairs/NNNN_noise.f32`` + manifest.

    PNGs are 8-bit, so the exact float identity only survives in the raw noise
    arrays.
    """
    directory = Path(directory)
    pairs_dir = directory / "pairs"
    pairs_dir.mkdir(parents=True, exist_ok=True)
    for i, p in enumerate(corpus.pairs):
        save_patch(p.noisy, pairs_dir / f"{i:04d}_noisy.png")
        save_patch(p.clean, pairs_dir / f"{i:04d}_clean.png")
        save_raw_array(p.noise.values, pairs_dir / f"{i:04d}_noise.f32")
        if p.base is not p.clean:
            save_patch(p.base, pairs_dir / f"{i:04d}_base.png")
    manifest = dict(corpus.metadata)
    manifest["n_pairs"] = len(corpus)
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return directory


def load_paired_corpus(directory) -> PairedCorpus:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise MissingFileError(f"paired corpus manifest not found: {manifest_path}")
    metadata = json.loads(manifest_path.read_text())
    pairs = []
    for i in range(metadata["n_pairs"]):
        stem = directory / "pairs" / f"{i:04d}"
        base = Path(f"{stem}_base.png")
        pairs.append(Pair(load_patch(f"{stem}_noisy.png"), load_patch(f"{stem}_clean.png"),
                          NoiseMap(load_raw_array(f"{stem}_noise.f32")),
                          load_patch(base) if base.is_file() else None))
    return PairedCorpus(pairs, metadata)


def data_path(path: str | os.PathLike) -> Path:
    """Resolve relative paths against ``$SCGAN_DATA_DIR`` when it is set."""
    p = Path(path)
    base = os.environ.get("SCGAN_DATA_DIR")
    if base and not p.is_absolute():
        return Path(base) / p
    return p


def jsonable(obj: Any):
    """Best-effort conversion of numpy scalars/arrays for json.dumps."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj
