"""Stylize a short sequence with keyframes every second frame and temporal smoothing."""

import numpy as np

from fluidstyle import TemporalConfig
from fluidstyle.fixtures import tiny_instance
from fluidstyle.stylize import StylizeConfig
from fluidstyle.temporal import stylize_sequence

inst = tiny_instance()
# the same particles drifting slowly to the right
frames = [inst.particles.replace(positions=inst.particles.positions + [0.1 * t, 0.0]) for t in range(6)]
cfg = StylizeConfig(bank=inst.bank, target=inst.target, h=inst.h, render=inst.render, iterations=40)

for tc in (TemporalConfig(radius=0, stride=1), TemporalConfig(sigma=1.5, radius=3, stride=2)):
    seq = stylize_sequence(frames, inst.spec, cfg, tc)
    d = np.array([f["density"] for f in seq.deltas])
    jump = np.abs(np.diff(d, axis=0)).max()
    print(f"stride={tc.stride} radius={tc.radius}: keyframes {seq.keyframes}, largest frame-to-frame change {jump:.4f}")
