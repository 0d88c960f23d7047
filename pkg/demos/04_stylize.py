"""Stylize the tiny 2D instance and compare the density regularizer on and off."""

import numpy as np
from _common import OUT

from fluidstyle import ViewConfig, render
from fluidstyle.fixtures import tiny_instance
from fluidstyle.io import save_image
from fluidstyle.stylize import StylizeConfig, stylize_frame

inst = tiny_instance()
total = inst.particles["rho0"].sum()
for w in (0.0, 1000.0):
    cfg = StylizeConfig(bank=inst.bank, target=inst.target, h=inst.h, render=inst.render, density_reg=w, iterations=200)
    res = stylize_frame(inst.particles, inst.spec, cfg)
    first, last = res.trace[0]["style"], res.trace[-1]["style"]
    drift = abs(res.deltas["density"].sum()) / total
    print(f"density_reg={w:g}: style {first:.3e} -> {last:.3e}, mass drift {drift:.4f}")
    save_image(OUT / f"tiny_reg{int(w)}.png", render(res.density, ViewConfig(), inst.render))
