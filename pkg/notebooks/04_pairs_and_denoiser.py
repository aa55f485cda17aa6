# # From a noise model to a denoiser
#
# A trained extractor turns unpaired data into pairs: noise pulled from a
# noisy patch is added onto an unrelated clean one. A residual CNN trained on
# those pairs is then compared against the noisy input on held-out data.
# Training here is cut short; the numbers improve with the desk preset.

# In[1]:

import numpy as np

from scgan.core import TrainSchedule
from scgan.evaluation import make_held_out, mean_psnr
from scgan.models import GeneratorConfig
from scgan.pipeline import (DenoiserConfig, bicubic_downsample, construct_pairs,
                            construct_sr_pairs, denoise, extract_noise, train_denoiser)
from scgan.synthesis import GaussianNoiseSpec, build_unpaired_corpus, smooth_images
from scgan.training import train

corpus = build_unpaired_corpus(smooth_images(200, 32, seed=1), GaussianNoiseSpec(25.0), 0.5, seed=2)
schedule = TrainSchedule(ep1=10, ep2=20, ep3=30, w1_target=10.0, w2_target=5.0, w3_target=5.0,
                         lr_g=1e-3, lr_d=1e-3)
G = train(corpus, schedule, GeneratorConfig(depth=7, mid_channels=32), seed=0).generator

# Extraction returns the noise and the clean estimate; they add back up exactly.

# In[2]:

noise, estimate = extract_noise(G, corpus.noisy_set[0])
print(np.array_equal(corpus.noisy_set[0].values - estimate.values, noise.values))

# In[3]:

pairs = construct_pairs(G, corpus.noisy_set, corpus.clean_set, seed=0)
pairs.check_identity()
print(len(pairs), "pairs; first noise sources:", pairs.metadata["noise_sources"][:8])

# For super-resolution the clean side is a bicubic downsample of an HR patch.

# In[4]:

hr = smooth_images(4, 64, seed=3)
sr = construct_sr_pairs(G, hr, corpus.noisy_set, 2, seed=0)
print(sr.pairs[0].noisy.shape, sr.pairs[0].clean.shape)
print(np.allclose(bicubic_downsample(hr[0], 2).values.mean(), hr[0].values.mean(), atol=1.0))

# In[5]:

result = train_denoiser(pairs, DenoiserConfig(epochs=20), seed=0)
held = make_held_out(smooth_images(20, 32, seed=99), GaussianNoiseSpec(25.0), seed=100)
before = mean_psnr(held.noisy, held.clean)
after = mean_psnr([denoise(result, n) for n in held.noisy], held.clean)
print("noisy %.2f dB, denoised %.2f dB" % (before, after))
