"""Least-squares adversarial loss and the three self-consistency losses.

Every squared norm is reduced with a mean over elements so that the loss
weights do not depend on patch size.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import asdict, dataclass

import torch
from torch import nn

FIELDS = ("l_gan_d", "l_gan_g", "l_clean", "l_pn", "l_rec", "total_g")


@dataclass(frozen=True)
class LossBreakdown:
    l_gan_d: float = 0.0
    l_gan_g: float = 0.0
    l_clean: float = 0.0
    l_pn: float = 0.0
    l_rec: float = 0.0
    total_g: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def _check_finite(**tensors):
    for name, t in tensors.items():
        if not torch.isfinite(t).all():
            raise ValueError(f"{name} contains non-finite values")


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def adversarial_losses(d_real: torch.Tensor, d_fake: torch.Tensor):
    """Return ``(l_d, l_g)``: real scores target 1, fake 0 for D; fake targets 1 for G."""
    _check_finite(d_real=d_real, d_fake=d_fake)
    l_d = ((d_real - 1) ** 2).mean() + (d_fake ** 2).mean()
    l_g = ((d_fake - 1) ** 2).mean()
    return l_d, l_g


def discriminator_loss(d_real, d_fake):
    return adversarial_losses(d_real, d_fake)[0]


def generator_adversarial_loss(d_fake):
    _check_finite(d_fake=d_fake)
    return ((d_fake - 1) ** 2).mean()


def clean_consistency_loss(g_on_clean: torch.Tensor) -> torch.Tensor:
    return (g_on_clean ** 2).mean()


def pure_noise_consistency_loss(g_first: torch.Tensor, g_second: torch.Tensor) -> torch.Tensor:
    """``mean((G(G(x)) - G(x))**2)``; the caller decides whether ``g_first`` is detached."""
    _same_shape(g_first, g_second)
    return ((g_second - g_first) ** 2).mean()


def reconstruction_consistency_loss(g_reextracted: torch.Tensor,
                                    g_original: torch.Tensor) -> torch.Tensor:
    """``mean((G(J_c + G(x)) - G(x))**2)``."""
    _same_shape(g_reextracted, g_original)
    return ((g_reextracted - g_original) ** 2).mean()


def total_generator_objective(breakdown, w1: float, w2: float, w3: float):
    """Weighted sum ``l_gan_g + w1*l_clean + w2*l_pn + w3*l_rec``.

    ``breakdown`` may be a :class:`LossBreakdown` or any object/dict carrying
    tensor-valued components, so the same function builds the differentiable
    objective inside a training step.
    """
    for name, w in (("w1", w1), ("w2", w2), ("w3", w3)):
        if w < 0:
            raise ValueError(f"{name} must be non-negative, got {w}")
    get = breakdown.get if isinstance(breakdown, dict) else lambda k: getattr(breakdown, k)
    return get("l_gan_g") + w1 * get("l_clean") + w2 * get("l_pn") + w3 * get("l_rec")


@contextmanager
def frozen_running_stats(model: nn.Module):
    """Batch-norm layers keep normalising with batch statistics but stop
    updating their running averages."""
    saved = []
    for m in model.modules():
        if isinstance(m, nn.modules.batchnorm._BatchNorm):
            saved.append((m, m.momentum))
            m.momentum = 0.0
    try:
        yield model
    finally:
        for m, momentum in saved:
            m.momentum = momentum


def generator_terms(G, D, noisy: torch.Tensor, clean: torch.Tensor, g_noisy=None) -> dict:
    """All generator-side loss tensors for one batch.

    ``g_noisy`` (= G(noisy)) may be supplied to reuse a forward pass. Its
    detached copy is the target for the pure-noise and reconstruction terms,
    while gradients still flow through it as an input to the second G call.
    Only the G(noisy) pass feeds the batch-norm running statistics.
    """
    if g_noisy is None:
        g_noisy = G(noisy)
    target = g_noisy.detach()
    l_gan_g = generator_adversarial_loss(D(noisy - g_noisy))
    with frozen_running_stats(G):
        l_clean = clean_consistency_loss(G(clean))
        l_pn = pure_noise_consistency_loss(target, G(g_noisy))
        l_rec = reconstruction_consistency_loss(G(clean + g_noisy), target)
    return {"l_gan_g": l_gan_g, "l_clean": l_clean, "l_pn": l_pn, "l_rec": l_rec}
