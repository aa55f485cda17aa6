# # Synthetic noise and unpaired corpora
#
# The noise model is trained without aligned pairs: one half of the sources
# gets noise added, the other half stays clean. This script builds both kinds
# of corpus used in the tests, Gaussian and rain streaks, and checks the
# bookkeeping that makes the pairs trustworthy later on.

# In[1]:

import numpy as np

from scgan.core import ImagePatch
from scgan.evaluation import mean_psnr
from scgan.synthesis import (GaussianNoiseSpec, RainStreakSpec, add_gaussian_noise,
                             add_rain_streaks, build_unpaired_corpus, smooth_images)

# Smooth gradients with a few soft blobs stand in for natural image patches.

# In[2]:

sources = smooth_images(200, 32, seed=1)
print(len(sources), sources[0].shape, sources[0].values.min().round(1), sources[0].values.max().round(1))

# ## Gaussian noise
#
# At sigma 25 on 8-bit content the noisy PSNR lands near 20.5 dB. The
# recorded noise map is exactly noisy - clean wherever the clip did not bind.

# In[3]:

full_range = [ImagePatch(np.rint(p.values)) for p in smooth_images(20, 64, seed=5, low=0, high=255)]
noisy = [add_gaussian_noise(p, GaussianNoiseSpec(25.0, seed=i))[0] for i, p in enumerate(full_range)]
print("noisy PSNR %.2f dB" % mean_psnr(noisy, full_range))

n, truth = add_gaussian_noise(sources[0], GaussianNoiseSpec(25.0, seed=0))
inside = (n.values > 0) & (n.values < 255)
print("exact off the clip:", np.array_equal((n.values - sources[0].values)[inside], truth.values[inside]))

# ## Rain streaks
#
# Streaks are anti-aliased line segments with a random length, angle and
# brightness. Their noise map is never negative.

# In[4]:

rainy, streaks = add_rain_streaks(sources[3], RainStreakSpec(count=8, seed=2))
print("streak map min %.2f, mean %.2f" % (streaks.values.min(), streaks.values.mean()))

# ## Splitting into noisy and clean halves
#
# Sources are shuffled and split, so no clean patch has a noisy twin.

# In[5]:

corpus = build_unpaired_corpus(sources, GaussianNoiseSpec(25.0), 0.5, seed=2)
m = corpus.metadata
print(len(corpus.noisy_set), "noisy /", len(corpus.clean_set), "clean")
print("overlap:", set(m["noisy_sources"]) & set(m["clean_sources"]))
