"""Unsupervised image noise modelling with a self-consistent GAN.

A generator learns to extract additive noise maps from noisy images using only
an unpaired set of clean images; the extracted maps are then added to clean
images to build paired data for a conventional denoiser.
"""

__version__ = "0.1.0"

from .core import (ImagePatch, NoiseMap, Pair, PairedCorpus, TrainSchedule, UnpairedCorpus,
                   load_patch, normalize, save_patch)
from .evaluation import noise_stats, psnr, run_ablation
from .losses import (LossBreakdown, adversarial_losses, clean_consistency_loss,
                     pure_noise_consistency_loss, reconstruction_consistency_loss,
                     total_generator_objective)
from .models import (DiscriminatorConfig, GeneratorConfig, build_discriminator, build_generator,
                     forward_generator)
from .pipeline import (DenoiserConfig, construct_pairs, construct_sr_pairs, denoise,
                       extract_noise, train_denoiser)
from .synthesis import (GaussianNoiseSpec, RainStreakSpec, add_gaussian_noise, add_rain_streaks,
                        build_unpaired_corpus, crop_patches)
from .training import phase_weights, train, train_step
