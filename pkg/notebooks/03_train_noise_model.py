# # Training the noise extractor
#
# Training runs in three phases: adversarial loss only, then the clean and
# pure-noise terms, then the reconstruction term. This is the desk-sized model
# on half the schedule, about a minute and a half; the desk preset trains longer.

# In[1]:

import logging
import tempfile
from pathlib import Path

from scgan.core import TrainSchedule
from scgan.evaluation import evaluate_generator, make_held_out
from scgan.models import GeneratorConfig
from scgan.synthesis import GaussianNoiseSpec, build_unpaired_corpus, smooth_images
from scgan.training import phase_weights, read_metrics, train

logging.basicConfig(level=logging.INFO, format="%(message)s")

# The schedule decides which weights are live in each epoch.

# In[2]:

schedule = TrainSchedule(ep1=10, ep2=20, ep3=30, w1_target=10.0, w2_target=5.0, w3_target=5.0,
                         batch_size=16, lr_g=1e-3, lr_d=1e-3)
print([phase_weights(e, schedule) for e in (0, 10, 20)])

# In[3]:

corpus = build_unpaired_corpus(smooth_images(200, 32, seed=1), GaussianNoiseSpec(25.0), 0.5, seed=2)
out = Path(tempfile.mkdtemp()) / "train"
result = train(corpus, schedule, GeneratorConfig(depth=7, mid_channels=32), seed=0, out_dir=out,
               checkpoint_every=10)
print([p.name for p in result.checkpoints])

# The metrics log holds one row per step with every loss component.

# In[4]:

rows = read_metrics(out / "metrics.csv")
print(len(rows), "steps; last row:", {k: round(v, 4) for k, v in rows[-1].items()})

# ## Held-out behaviour
#
# With sigma 25 the target noise std is 25/255 = 0.098 in working units.

# In[5]:

held = make_held_out(smooth_images(20, 32, seed=99), GaussianNoiseSpec(25.0), seed=100)
summary = evaluate_generator(result.generator, held)
for k in ("extracted_mean", "extracted_std", "clean_response_mean_abs", "psnr_gain_db"):
    print(k, round(summary[k], 4))
