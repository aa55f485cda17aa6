"""Three-phase alternating optimisation of the generator and discriminator."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .core import TrainSchedule, UnpairedCorpus, to_tensor
from .losses import FIELDS, LossBreakdown, discriminator_loss, generator_terms, \
    total_generator_objective
from .models import (DESK_GENERATOR, PAPER_DISCRIMINATOR, Discriminator, DiscriminatorConfig,
                     Generator, GeneratorConfig, load_checkpoint, save_checkpoint)

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("epoch", "step") + FIELDS + ("w1", "w2", "w3")

# Which self-consistency weights each ablation variant may switch on.
ABLATION_MASKS = {
    "net1": (0.0, 0.0, 0.0),
    "net2": (1.0, 1.0, 0.0),
    "net3": (1.0, 1.0, 1.0),
}


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class PhaseState:
    epoch: int
    phase: int
    weights: tuple[float, float, float]


def phase_of(epoch: int, schedule: TrainSchedule) -> int:
    if epoch < schedule.ep1:
        return 1
    if epoch < schedule.ep2:
        return 2
    return 3


def phase_weights(epoch: int, schedule: TrainSchedule, mask=(1.0, 1.0, 1.0)):
    """Loss weights (w1, w2, w3) active during ``epoch``.

    Step changes at ``ep1`` and ``ep2`` by default. With ``schedule.ramp`` the
    newly enabled weights instead climb linearly over their phase, reaching
    the target on its last epoch.
    """
    if not 0 <= epoch <= schedule.ep3:
        raise ValueError(f"epoch {epoch} outside [0, {schedule.ep3}]")
    t1, t2, t3 = schedule.w1_target, schedule.w2_target, schedule.w3_target
    phase = phase_of(epoch, schedule)
    if phase == 1:
        w = (0.0, 0.0, 0.0)
    elif phase == 2:
        f = (epoch - schedule.ep1 + 1) / (schedule.ep2 - schedule.ep1) if schedule.ramp else 1.0
        w = (t1 * f, t2 * f, 0.0)
    else:
        f = 1.0
        if schedule.ramp and schedule.ep3 > schedule.ep2:
            f = min(1.0, (epoch - schedule.ep2 + 1) / (schedule.ep3 - schedule.ep2))
        w = (t1, t2, t3 * f)
    return tuple(float(wi * mi) for wi, mi in zip(w, mask))


def phase_state(epoch: int, schedule: TrainSchedule, mask=(1.0, 1.0, 1.0)) -> PhaseState:
    return PhaseState(epoch, phase_of(epoch, schedule), phase_weights(epoch, schedule, mask))


def make_optimizers(G, D, schedule: TrainSchedule, betas=(0.5, 0.999)):
    return {
        "g": torch.optim.Adam(G.parameters(), lr=schedule.lr_g, betas=betas),
        "d": torch.optim.Adam(D.parameters(), lr=schedule.lr_d, betas=betas),
    }


def _set_requires_grad(model, flag: bool):
    for p in model.parameters():
        p.requires_grad_(flag)


def train_step(G: Generator, D: Discriminator, noisy_batch: torch.Tensor,
               clean_batch: torch.Tensor, weights, optimizers) -> LossBreakdown:
    """One discriminator update followed by one generator update."""
    if len(noisy_batch) == 0 or len(clean_batch) == 0:
        raise ValueError("empty batch")
    if noisy_batch.shape[1:] != clean_batch.shape[1:]:
        raise ValueError("noisy and clean batches must share C, H, W")
    w1, w2, w3 = weights
    G.train()
    D.train()

    g_noisy = G(noisy_batch)

    _set_requires_grad(D, True)
    optimizers["d"].zero_grad(set_to_none=True)
    try:
        l_d = discriminator_loss(D(clean_batch), D((noisy_batch - g_noisy).detach()))
    except ValueError as err:
        raise TrainingDiverged(f"non-finite loss component l_gan_d: {err}") from err
    _check("l_gan_d", l_d)
    l_d.backward()
    optimizers["d"].step()

    _set_requires_grad(D, False)
    optimizers["g"].zero_grad(set_to_none=True)
    try:
        terms = generator_terms(G, D, noisy_batch, clean_batch, g_noisy=g_noisy)
    except ValueError as err:
        raise TrainingDiverged(f"non-finite loss component l_gan_g: {err}") from err
    for name, value in terms.items():
        _check(name, value)
    total = total_generator_objective(terms, w1, w2, w3)
    _check("total_g", total)
    total.backward()
    optimizers["g"].step()
    _set_requires_grad(D, True)

    return LossBreakdown(l_gan_d=l_d.item(), total_g=total.item(),
                         **{k: v.item() for k, v in terms.items()})


def _check(name, value):
    if not torch.isfinite(value).all():
        raise TrainingDiverged(f"non-finite loss component {name}: {value.item()}")


def epoch_batches(n_noisy: int, n_clean: int, batch_size: int, seed: int, epoch: int):
    """Index batches for one epoch: independent shuffles, clean indices cycled."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, epoch]))
    noisy_order = rng.permutation(n_noisy)
    steps = math.ceil(n_noisy / batch_size)
    reps = math.ceil(steps * batch_size / n_clean)
    clean_order = np.concatenate([rng.permutation(n_clean) for _ in range(reps)])
    for s in range(steps):
        nb = noisy_order[s * batch_size:(s + 1) * batch_size]
        cb = clean_order[s * batch_size:s * batch_size + len(nb)]
        yield nb, cb


@dataclass
class TrainResult:
    generator: Generator
    discriminator: Discriminator
    history: list[dict] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    epochs_completed: int = 0


def _append_metrics(path: Path, rows: list[dict]):
    new = not path.exists()
    with path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        if new:
            writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_metrics(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return [{k: (int(v) if k in ("epoch", "step") else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def train(corpus: UnpairedCorpus, schedule: TrainSchedule,
          gen_config: GeneratorConfig | None = None,
          disc_config: DiscriminatorConfig | None = None,
          seed: int = 0, out_dir=None, checkpoint_every: int | None = None,
          resume_from=None, loss_mask=(1.0, 1.0, 1.0), mean_subtract: bool = False,
          betas=(0.5, 0.999), stop_after: int | None = None) -> TrainResult:
    """Train SCGAN for ``schedule.ep3`` epochs.

    With ``out_dir`` set, metrics go to ``out_dir/metrics.csv`` and checkpoints
    to ``out_dir/checkpoints/epoch_NNNN`` every ``checkpoint_every`` epochs and
    at each phase boundary. ``stop_after`` ends the run early after that many
    total epochs (used to simulate interruption).
    """
    if not corpus.noisy_set or not corpus.clean_set:
        raise ValueError("corpus needs non-empty noisy and clean sets")
    channels = corpus.channels
    gen_config = gen_config or DESK_GENERATOR
    if gen_config.channels != channels:
        gen_config = GeneratorConfig(**{**asdict(gen_config), "channels": channels})
    disc_config = disc_config or PAPER_DISCRIMINATOR
    if disc_config.in_channels != channels:
        disc_config = DiscriminatorConfig(**{**asdict(disc_config), "in_channels": channels})

    start_epoch, step = 0, 0
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        G, D = ckpt.generator, ckpt.discriminator
        if D is None or ckpt.optimizer_state is None:
            raise ValueError(f"{resume_from} is not a resumable training checkpoint")
        optimizers = make_optimizers(G, D, schedule, betas)
        for k, opt in optimizers.items():
            opt.load_state_dict(ckpt.optimizer_state[k])
        start_epoch = ckpt.manifest["epochs_completed"]
        step = ckpt.manifest["global_step"]
        seed = ckpt.manifest["seed"]
        loss_mask = tuple(ckpt.manifest["loss_mask"])
        mean_subtract = ckpt.manifest["mean_subtract"]
    else:
        torch.manual_seed(seed)
        G, D = Generator(gen_config), Discriminator(disc_config)
        optimizers = make_optimizers(G, D, schedule, betas)

    noisy = to_tensor(corpus.noisy_set, mean_subtract)
    clean = to_tensor(corpus.clean_set, mean_subtract)
    if noisy.shape[1:] != clean.shape[1:]:
        raise ValueError("noisy and clean patches must share one shape")

    out_dir = Path(out_dir) if out_dir is not None else None
    metrics_path = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = out_dir / "metrics.csv"
        if resume_from is None and metrics_path.exists():
            metrics_path.unlink()
    result = TrainResult(G, D, epochs_completed=start_epoch)
    boundaries = {schedule.ep1, schedule.ep2, schedule.ep3}
    end_epoch = schedule.ep3 if stop_after is None else min(stop_after, schedule.ep3)

    for epoch in range(start_epoch, end_epoch):
        weights = phase_weights(epoch, schedule, loss_mask)
        rows = []
        for nb, cb in epoch_batches(len(noisy), len(clean), schedule.batch_size, seed, epoch):
            lb = train_step(G, D, noisy[nb], clean[cb], weights, optimizers)
            row = {"epoch": epoch, "step": step, **lb.as_dict(),
                   "w1": weights[0], "w2": weights[1], "w3": weights[2]}
            rows.append(row)
            step += 1
        result.history.extend(rows)
        result.epochs_completed = epoch + 1
        last = rows[-1]
        log.info("epoch %d phase %d  l_d=%.4f l_g=%.4f clean=%.5f pn=%.5f rec=%.5f",
                 epoch, phase_of(epoch, schedule), last["l_gan_d"], last["l_gan_g"],
                 last["l_clean"], last["l_pn"], last["l_rec"])
        if metrics_path is not None:
            _append_metrics(metrics_path, rows)
            done = epoch + 1
            if done in boundaries or (checkpoint_every and done % checkpoint_every == 0):
                manifest = {
                    "epochs_completed": done,
                    "global_step": step,
                    "seed": seed,
                    "schedule": schedule.to_dict(),
                    "phase": phase_of(min(done, schedule.ep3), schedule),
                    "weights": list(phase_weights(min(done, schedule.ep3), schedule, loss_mask)),
                    "loss_mask": list(loss_mask),
                    "mean_subtract": mean_subtract,
                }
                opt_state = {k: o.state_dict() for k, o in optimizers.items()}
                path = save_checkpoint(out_dir / "checkpoints" / f"epoch_{done:04d}", G, D,
                                       manifest, opt_state)
                result.checkpoints.append(path)
    return result
