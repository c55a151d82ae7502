# %% [markdown]
# The staged pipeline with a small budget. The same runs are available as
# `scgan all --out DIR --set key=value ...` from the shell.

# %%
import json
from pathlib import Path

from scgan.config import parse_config
from scgan.errors import PrerequisiteError
from scgan.pipeline import run_all, run_stage

out = Path("notebook_out/pipeline")
small = {
    "n_train": "2048", "n_test": "1024",
    "encoder.iterations": "300", "mapper.iterations": "300", "decoder.iterations": "300",
}
cfg = parse_config(overrides={"dataset": "four_circles", **small})
print(cfg.to_text())

# %%
try:
    run_stage("cluster", cfg, Path("notebook_out/empty"))
except PrerequisiteError as exc:
    print(exc.prefix, exc)

# %%
run_all(cfg, out)

# %%
# second call finds every stage up to date
run_all(cfg, out)

# %%
print((out / "summary.txt").read_text())
{k: v["wall_time_s"] for k, v in json.loads((out / "manifest.txt").read_text()).items()}
