"""Run the full command line pipeline on a two frame plume."""

import json

import numpy as np
from _common import OUT

from fluidstyle import VectorGrid
from fluidstyle.cli import main
from fluidstyle.fixtures import dot_texture, plume_grid
from fluidstyle.io import save_image, write_grid

work = OUT / "cli"
work.mkdir(exist_ok=True)
grid = plume_grid(12)
for f in range(2):
    write_grid(work / f"density_{f:04d}.lnsg", grid)
write_grid(work / "velocity_0000.lnsg", VectorGrid(grid.spec, np.tile([0.0, 0.2, 0.0], grid.spec.dims + (1,))))
save_image(work / "style.png", dot_texture(12, 4))
cfg = {
    "inputs": {
        "density": "density_{frame:04d}.lnsg",
        "velocity": "velocity_0000.lnsg",
        "style_image": "style.png",
        "particles": "out/particles_{frame:04d}.lnsp",
    },
    "stylize": {"iterations": 20, "density_reg": 0.01, "views": ["+z", "-x"]},
    "resample": {"threshold": 0.05, "redistribute_steps": 5},
    "frames": "0..1",
    "output_dir": "out",
}
(work / "run.json").write_text(json.dumps(cfg, indent=2))
run = str(work / "run.json")
for cmd in ("resample", "reconstruct", "stylize", "render"):
    print(f"$ fluidstyle {cmd} --config {run}")
    assert main([cmd, "--config", run]) == 0
print("outputs:", sorted(x.name for x in (work / "out").iterdir()))
