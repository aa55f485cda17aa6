"""Run configuration: preset loading, defaulting and validation."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .core import TrainSchedule, data_path
from .models import DiscriminatorConfig, GeneratorConfig
from .pipeline import DenoiserConfig
from .synthesis import spec_from_dict

PRESETS = ("desk", "paper")

# Keys whose values name existing inputs; checked for existence at validation.
INPUT_PATH_KEYS = (("corpus", "dir"), ("corpus", "sources_dir"), ("pairs", "clean_dir"),
                   ("pairs_dir",), ("denoiser_dir",), ("input_dir",))


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def schema() -> dict:
    return json.loads(resources.files("scgan").joinpath("presets/schema.json").read_text())


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError([f"unknown preset {name!r}; choose from {', '.join(PRESETS)}"])
    return json.loads(resources.files("scgan").joinpath(f"presets/{name}.json").read_text())


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class RunConfig:
    """Fully defaulted configuration for one run. ``document`` is the resolved JSON."""

    document: dict
    seed: int
    out: Path | None
    generator: GeneratorConfig
    discriminator: DiscriminatorConfig
    schedule: TrainSchedule
    denoiser: DenoiserConfig
    noise: object
    checkpoint_every: int | None = None
    mean_subtract: bool = False
    extras: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return self.document.get(name) or {}

    def path(self, *keys) -> Path | None:
        node = self.document
        for k in keys:
            node = (node or {}).get(k)
        return data_path(node) if node else None


def _construct(label, cls, kwargs, errors):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"{label}: {exc}")
        return None


def validate_config(document: dict, preset: str | None = None,
                    check_paths: bool = True) -> RunConfig:
    """Merge ``document`` over its preset and check it; raises :class:`ConfigError`
    listing every violation found."""
    if not isinstance(document, dict):
        raise ConfigError(["configuration must be a JSON object"])
    errors = []
    name = preset or document.get("preset") or "desk"
    try:
        base = load_preset(name)
    except ConfigError as exc:
        raise ConfigError(exc.errors) from None
    doc = _merge(base, document)
    doc["preset"] = name

    for err in sorted(jsonschema.Draft7Validator(schema()).iter_errors(doc), key=str):
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        errors.append(f"{where}: {err.message}")
    if "seed" not in doc or not isinstance(doc.get("seed"), int):
        errors.append("seed: an explicit integer seed is required")
    if errors:
        raise ConfigError(errors)

    sched = doc["schedule"]
    # mirror the dataclass checks so all schedule problems are listed at once
    if not 0 < sched["ep1"] <= sched["ep2"] <= sched["ep3"]:
        errors.append(f"schedule: requires 0 < ep1 <= ep2 <= ep3, got "
                      f"({sched['ep1']}, {sched['ep2']}, {sched['ep3']})")
    for k in ("w1_target", "w2_target", "w3_target"):
        if sched[k] < 0:
            errors.append(f"schedule.{k}: loss weights must be non-negative, got {sched[k]}")
    schedule = None
    if not errors:
        schedule = _construct("schedule", TrainSchedule, sched, errors)

    channels = (doc["corpus"].get("synthetic_sources") or {}).get("channels", 1)
    generator = _construct("generator", GeneratorConfig, {**doc["generator"], "channels": channels},
                           errors)
    discriminator = _construct("discriminator", DiscriminatorConfig,
                               {**doc["discriminator"], "in_channels": channels}, errors)
    denoiser = _construct("denoiser", DenoiserConfig, doc["denoiser"], errors)
    noise = None
    try:
        noise = spec_from_dict({"seed": 0, **doc["corpus"]["noise"]})
    except (TypeError, ValueError) as exc:
        errors.append(f"corpus.noise: {exc}")
    ratio = doc["corpus"].get("split_ratio", 0.5)
    if not 0 < ratio < 1:
        errors.append(f"corpus.split_ratio: must lie strictly between 0 and 1, got {ratio}")
    corpus = doc["corpus"]
    if not corpus.get("dir") and not corpus.get("sources_dir") and not corpus.get("synthetic_sources"):
        errors.append("corpus: one of dir, sources_dir or synthetic_sources is required")

    if check_paths:
        for keys in INPUT_PATH_KEYS:
            node = doc
            for k in keys:
                node = (node or {}).get(k)
            if node and not data_path(node).exists():
                errors.append(f"{'.'.join(keys)}: path does not exist: {data_path(node)}")

    if errors:
        raise ConfigError(errors)
    return RunConfig(
        document=doc, seed=doc["seed"], out=Path(doc["out"]) if doc.get("out") else None,
        generator=generator, discriminator=discriminator, schedule=schedule,
        denoiser=denoiser, noise=noise, checkpoint_every=doc.get("checkpoint_every"),
        mean_subtract=bool(corpus.get("mean_subtract", False)),
    )


def resolved_document(cfg: RunConfig) -> dict:
    """The defaulted document; feeding it back to :func:`validate_config` is a no-op."""
    doc = copy.deepcopy(cfg.document)
    doc["generator"] = {k: v for k, v in asdict(cfg.generator).items()
                        if k not in ("channels", "kernel")}
    doc["discriminator"] = {k: list(v) if isinstance(v, tuple) else v
                            for k, v in asdict(cfg.discriminator).items() if k != "in_channels"}
    doc["schedule"] = cfg.schedule.to_dict()
    doc["denoiser"] = asdict(cfg.denoiser)
    return doc


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON ({exc})"]) from None
