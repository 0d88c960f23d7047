"""Render the bundled plume along every axis in smoke and liquid mode."""

from _common import OUT

from fluidstyle import RenderConfig, ViewConfig, render
from fluidstyle.fixtures import plume_fixture
from fluidstyle.io import save_image
from fluidstyle.render import AXES

grid = plume_fixture()
for mode in ("smoke", "liquid"):
    for axis in sorted(AXES):
        img = render(grid, ViewConfig(axis), RenderConfig(mode, gamma=1.0, emission=2.0))
        tag = axis.replace("+", "p").replace("-", "m")
        save_image(OUT / f"plume_{mode}_{tag}.png", img)
        print(mode, axis, img.pixels.shape, f"mean={img.pixels.mean():.3f}")
