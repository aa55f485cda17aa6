# # The same flow from the command line
#
# Every stage is also a `scgan` subcommand driven by one JSON config. Here the
# config shrinks the desk preset so the whole chain runs in seconds. Each
# command writes `run.json` with the resolved config next to its outputs.

# In[1]:

import json
import tempfile
from pathlib import Path

from scgan.cli import cli_main

work = Path(tempfile.mkdtemp())
config = {
    "seed": 0,
    "out": str(work / "run"),
    "corpus": {"synthetic_sources": {"count": 40, "size": 32, "seed": 1}},
    "generator": {"depth": 5, "mid_channels": 8},
    "schedule": {"ep1": 1, "ep2": 2, "ep3": 3},
    "denoiser": {"depth": 3, "channels": 8, "epochs": 2},
    "held_out": {"count": 10, "seed": 99},
}
(work / "config.json").write_text(json.dumps(config))

# In[2]:

for command in ("synth", "train", "extract", "pairs", "denoise-train", "eval", "report"):
    code = cli_main([command, "--config", str(work / "config.json")])
    print(command, "->", code)

# Errors map to distinct exit codes: 2 for usage, 3 for config problems and
# 4 when a checkpoint is missing.

# In[3]:

print(cli_main(["nonsense"]))
print(cli_main(["extract", "--config", str(work / "config.json"), "--checkpoint", str(work / "x")]))
print(sorted(p.name for p in (work / "run").iterdir()))
