# # Which losses matter
#
# Net-1 trains with the adversarial loss alone, Net-2 adds the clean and
# pure-noise terms, Net-3 uses everything. All three share seed and batch
# order, so differences come from the losses only. Two scores summarise each
# variant: how much it responds to clean input, and how strongly its noise
# maps follow image edges. Lower is better for both.

# In[1]:

import tempfile
from pathlib import Path

from scgan.core import TrainSchedule
from scgan.evaluation import grid_triples, make_held_out, report, run_ablation
from scgan.models import GeneratorConfig
from scgan.synthesis import GaussianNoiseSpec, build_unpaired_corpus, smooth_images

corpus = build_unpaired_corpus(smooth_images(100, 32, seed=1), GaussianNoiseSpec(25.0), 0.5, seed=2)
held = make_held_out(smooth_images(20, 32, seed=99), GaussianNoiseSpec(25.0), seed=100)
out = Path(tempfile.mkdtemp())

# In[2]:

results = run_ablation(corpus, TrainSchedule(ep1=3, ep2=6, ep3=9, lr_g=1e-3, lr_d=1e-3), held,
                       GeneratorConfig(depth=5, mid_channels=16), seed=0, out_dir=out / "ablation")
for name, r in results.items():
    s = r.summary
    print(name, "clean response %.4f  edge corr %.3f" % (s["clean_response_mean_abs"],
                                                         s["edge_correlation"]))

# The report collects loss curves, noisy / noise / estimate grids and a table.

# In[3]:

grids = {n: grid_triples(r.generator, held.noisy) for n, r in results.items()}
path = report({n: r.history for n, r in results.items()}, {n: r.summary for n, r in results.items()},
              out / "report", grids)
print(sorted(p.name for p in path.iterdir()))
