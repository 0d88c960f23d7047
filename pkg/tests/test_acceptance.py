"""Acceptance criteria, one test each.

Every test prints a single ``[PASS]``/``[FAIL]`` line with the measured
quantities, then asserts the criterion at its stated tolerance.
"""

import json

import numpy as np
import pytest

import oracles
from fluidstyle import GridSpec, Image, ParticleSet, RenderConfig, ScalarGrid, StyleTarget, VectorGrid, ViewConfig
from fluidstyle.cli import main as cli_main
from fluidstyle.fields import gaussian_weights, kernel_cubic, psnr
from fluidstyle.fixtures import dot_texture, plume_fixture, tiny_instance
from fluidstyle.io import load_image, read_bank, read_grid, read_particles, save_image, write_bank, write_grid, write_particles
from fluidstyle.render import AXES, render, render_backward, render_forward
from fluidstyle.resim import MultiScaleParams, multiscale_density, redistribute_positions, rest_density_grid, sample_particles
from fluidstyle.style import _forward, default_bank, feature_forward, gram, reg_density, reg_position, style_loss, style_loss_and_grad
from fluidstyle.stylize import Fluid, StylizeConfig, stylize_fluids, stylize_frame
from fluidstyle.temporal import TemporalConfig, smooth_temporal, stylize_sequence
from fluidstyle.transfer import p2g, p2g_backward, p2g_forward, sph_density, sph_density_backward, sph_density_forward

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail}")
        return ok

    return emit


def test_1_kernel_exactness(report):
    values = {0.0: 2.0 / 3.0, 1.0: 1.0 / 6.0, 2.0: 0.0}
    err = max(abs(kernel_cubic(r, 1.0) - v) for r, v in values.items())
    assert report(1, "kernel exactness", err <= 1e-15, f"max |W - exact| = {err:.1e} (tol 1e-15)")


def _rel(a, f):
    return oracles.rel_err(a, f)


def _grad_p2g(seed):
    rng = np.random.default_rng(seed)
    spec = GridSpec((8, 8, 8))
    pos = rng.uniform(0, 7, (30, 3))
    vals = rng.uniform(-1, 2, 30)
    c = rng.standard_normal(spec.size)
    _, cache = p2g_forward(pos, vals, 1.4, spec)
    # exclusion zone: nodes with summed kernel weight below 1e-6 (support fringe)
    c[cache.denom < 1e-6] = 0.0
    gv, gx = p2g_backward(cache, c)
    fv = oracles.fd_grad(lambda v: c @ p2g(pos, v, 1.4, spec).flat, vals)
    fx = oracles.fd_grad(lambda x: c @ p2g(x, vals, 1.4, spec).flat, pos)
    return max(_rel(gv, fv), _rel(gx, fx))


def _grad_sph(seed):
    rng = np.random.default_rng(seed)
    spec = GridSpec((8, 8, 8))
    pos = rng.uniform(0, 7, (30, 3))
    m = rng.uniform(0.5, 2, 30)
    c = rng.standard_normal(spec.size)
    _, cache = sph_density_forward(pos, m, 1.2, spec)
    fx = oracles.fd_grad(lambda x: c @ sph_density(x, m, 1.2, spec).flat, pos)
    return _rel(sph_density_backward(cache, c), fx)


def _grad_render(seed, mode):
    rng = np.random.default_rng(seed)
    spec = GridSpec((8, 8, 8), spacing=0.5)
    d = rng.uniform(0.05, 1.0, spec.dims)
    # clamped voxels sit at -0.5, outside the exclusion band |d| < step around the kink
    d[rng.random(spec.dims) < 0.15] = -0.5
    grid = ScalarGrid(spec, d)
    view = ViewConfig(sorted(AXES)[seed % 6])
    cfg = RenderConfig("liquid" if mode == "liquid" else "smoke", 0.9, 1.2)
    cols = None
    if mode == "color":
        cols = [ScalarGrid(spec, rng.uniform(0.1, 1, spec.dims)) for _ in range(3)]
    img, cache = render_forward(grid, view, cfg, cols)
    c = rng.standard_normal(img.pixels.shape)
    back = render_backward(cache, c)
    gd = back[0] if cols else back
    fd = oracles.fd_grad(lambda v: np.sum(c * render(ScalarGrid(spec, v), view, cfg, cols).pixels), d)
    err = _rel(gd.values, fd)
    if cols:
        for ch in range(3):
            def f(v, ch=ch):
                cc = list(cols)
                cc[ch] = ScalarGrid(spec, v)
                return np.sum(c * render(grid, view, cfg, cc).pixels)

            err = max(err, _rel(back[1][ch].values, oracles.fd_grad(f, cols[ch].values)))
    return err


def _grad_style(seed):
    rng = np.random.default_rng(seed)
    bank = default_bank(0)
    target = StyleTarget.from_image(dot_texture(), bank)
    img = Image(rng.uniform(0, 1, (16, 16, 1)))
    _, grad = style_loss_and_grad(img, bank, target)
    _, tape = _forward(img, bank, need_tape=True)
    fd = np.zeros_like(img.pixels)
    keep = np.ones(img.pixels.shape, dtype=bool)
    for idx in np.ndindex(img.pixels.shape):
        vals = []
        for s in (1e-5, -1e-5):
            px = img.pixels.copy()
            px[idx] += s
            vals.append(style_loss(Image(px), bank, target))
            _, t = _forward(Image(px), bank, need_tape=True)
            # exclusion zone: the step flips a ReLU somewhere in the bank
            if any(np.any(a != b) for a, b in zip(t.masks, tape.masks)):
                keep[idx] = False
        fd[idx] = (vals[0] - vals[1]) / 2e-5
    return _rel(grad[keep], fd[keep]), 1.0 - keep.mean()


def _grad_reg_density(seed):
    rng = np.random.default_rng(seed)
    # exclusion zone: |delta| near 0 where the log term is not differentiable
    d = rng.choice([-1.0, 1.0], 30) * rng.uniform(0.05, 1.0, 30)
    _, g = reg_density(d)
    return _rel(g, oracles.fd_grad(lambda x: reg_density(x)[0], d))


def _grad_reg_position(seed):
    rng = np.random.default_rng(seed)
    spec = GridSpec((8, 8, 8))
    pos = rng.uniform(1, 6, (30, 3))
    rho0 = ScalarGrid(spec, rng.uniform(0, 1, spec.dims))
    _, g = reg_position(pos, 1.3, rho0)
    return _rel(g, oracles.fd_grad(lambda x: reg_position(x, 1.3, rho0)[0], pos))


def test_2_gradient_suite(report):
    errs = {
        "p2g": max(_grad_p2g(s) for s in range(2)),
        "sph_density": max(_grad_sph(s) for s in range(2)),
        "render_smoke": max(_grad_render(s, "smoke") for s in range(2)),
        "render_liquid": max(_grad_render(s, "liquid") for s in range(2)),
        "render_color": max(_grad_render(s, "color") for s in range(2)),
        "reg_density": max(_grad_reg_density(s) for s in range(3)),
        "reg_position": max(_grad_reg_position(s) for s in range(2)),
    }
    style = [_grad_style(s) for s in range(2)]
    errs["style_loss"] = max(e for e, _ in style)
    excluded = max(x for _, x in style)
    worst = max(errs.values())
    detail = ", ".join(f"{k}={v:.1e}" for k, v in errs.items()) + f"; ReLU-flip pixels excluded <= {excluded:.1%} (tol 1e-4)"
    assert report(2, "gradient suite", worst < 1e-4, detail)


def test_3_oracle_equivalence(report):
    worst = {"p2g": 0.0, "sph_density": 0.0, "gram": 0.0, "feature_forward": 0.0, "render": 0.0}
    bank = default_bank(0)
    layers = [(l.weight, l.bias, l.pool) for l in bank.layers]
    for seed in range(50):
        rng = np.random.default_rng(seed)
        dims = (5, 4, 3) if seed % 2 else (6, 5, 1)
        spec = GridSpec(dims, spacing=rng.uniform(0.7, 1.3), origin=rng.uniform(-1, 1, 3))
        pos = rng.uniform(spec.lower(), spec.upper(), (8, spec.dim))
        vals, m, h = rng.uniform(-1, 2, 8), rng.uniform(0.5, 2, 8), rng.uniform(0.6, 1.6)
        worst["p2g"] = max(worst["p2g"], np.max(np.abs(p2g(pos, vals, h, spec).flat - oracles.p2g(pos, vals, h, dims, spec.spacing, spec.origin))))
        worst["sph_density"] = max(worst["sph_density"], np.max(np.abs(sph_density(pos, m, h, spec).flat - oracles.sph(pos, m, h, dims, spec.spacing, spec.origin))))

        px = rng.uniform(0, 1, (8, 8, 3 if seed % 3 else 1))
        ours = feature_forward(Image(px), bank)
        ref = oracles.features(px, layers, bank.style_layers)
        for k in ref:
            worst["feature_forward"] = max(worst["feature_forward"], np.max(np.abs(ours[k] - ref[k])))
            g = oracles.gram(ref[k])
            worst["gram"] = max(worst["gram"], np.max(np.abs(gram(ours[k]) - g)) / max(1.0, np.abs(g).max()))

        vol = rng.uniform(-0.2, 1, (5, 4, 3))
        vs = GridSpec((5, 4, 3), spacing=rng.uniform(0.4, 1.2))
        axis = sorted(AXES)[seed % 6]
        gamma, em = rng.uniform(0.3, 2), rng.uniform(0.2, 1.5)
        cols = [rng.uniform(0, 1, vs.dims) for _ in range(3)]
        for mode in ("smoke", "liquid"):
            img = render(ScalarGrid(vs, vol), ViewConfig(axis), RenderConfig(mode, gamma, em))
            ref = oracles.render(vol, axis, mode, gamma, em, vs.spacing)
            worst["render"] = max(worst["render"], np.max(np.abs(img.pixels - ref)))
        img = render(ScalarGrid(vs, vol), ViewConfig(axis), RenderConfig("smoke", gamma, em), [ScalarGrid(vs, c) for c in cols])
        ref = oracles.render(vol, axis, "smoke", gamma, em, vs.spacing, cols)
        worst["render"] = max(worst["render"], np.max(np.abs(img.pixels - ref)))
    ok = max(worst.values()) < 1e-12
    detail = ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + " over 50 instances (tol 1e-12; gram relative to max(1, |G|))"
    assert report(3, "oracle equivalence", ok, detail)


def test_4_multiscale_reconstruction(report):
    grid = plume_fixture()
    spec = grid.spec
    p = sample_particles(grid, 0.0)
    rho0 = rest_density_grid(p.positions, spec.spacing, spec)
    moved = redistribute_positions(p, rho0, spec.spacing, steps=20, step_size=0.1)
    p = ParticleSet(moved.positions, {"mass": p.masses()})
    l2, ps = [], []
    for n_s in range(4):
        rec = multiscale_density(p, grid, MultiScaleParams(2.0 * spec.spacing, n_s)).reconstruction
        l2.append(float(np.linalg.norm(rec.values - grid.values)))
        ps.append(psnr(grid, rec))
    ok = ps[3] >= ps[0] and all(b <= a for a, b in zip(l2, l2[1:]))
    detail = f"{p.count} particles; l2 = {', '.join(f'{v:.4f}' for v in l2)}; PSNR n_s=0 {ps[0]:.2f} dB -> n_s=3 {ps[3]:.2f} dB"
    assert report(4, "multi-scale reconstruction", ok, detail)


def test_5_density_regularizer(report):
    inst = tiny_instance()
    total = inst.particles["rho0"].sum()
    ratio = {}
    for w in (0.0, 1000.0):
        cfg = StylizeConfig(bank=inst.bank, target=inst.target, h=inst.h, render=inst.render, density_reg=w, iterations=200)
        d = stylize_frame(inst.particles, inst.spec, cfg).deltas["density"]
        ratio[w] = abs(d.sum()) / total
    ok = ratio[1000.0] < 0.01 < ratio[0.0]
    detail = f"|sum d|/sum rho: weight 0 -> {ratio[0.0]:.4f}, weight 1e3 -> {ratio[1000.0]:.4f} (threshold 0.01)"
    assert report(5, "mass-conservation regularizer", ok, detail)


def test_6_convergence(report):
    inst = tiny_instance()
    cfg = StylizeConfig(bank=inst.bank, target=inst.target, h=inst.h, render=inst.render, iterations=200)
    trace = stylize_frame(inst.particles, inst.spec, cfg).trace
    ratio = trace[-1]["style"] / trace[0]["style"]
    img = render(p2g(inst.particles.positions, inst.particles["rho0"], inst.h, inst.spec), ViewConfig(), inst.render)
    fixed = StylizeConfig(bank=inst.bank, target=StyleTarget.from_image(img, inst.bank), h=inst.h, render=inst.render, iterations=200)
    res = stylize_frame(inst.particles, inst.spec, fixed)
    zero_loss = max(abs(t["loss"]) for t in res.trace)
    drift = float(np.max(np.abs(res.deltas["density"])))
    ok = ratio < 0.5 and zero_loss <= 1e-8 and drift <= 1e-8
    detail = f"seed {inst.seed}: final/initial style = {ratio:.3f} (< 0.5); fixed-point run max loss {zero_loss:.1e}, max |delta| {drift:.1e} (<= 1e-8)"
    assert report(6, "convergence sanity", ok, detail)


def test_7_temporal_coherence(report):
    rng = np.random.default_rng(0)
    wsum = max(abs(gaussian_weights(s, r).sum() - 1.0) for s in (0.5, 1.5, 3.0) for r in (0, 3, 6))
    contraction = True
    for _ in range(20):
        seq = rng.standard_normal((int(rng.integers(1, 12)), 25)) * rng.uniform(0.1, 10)
        out = np.array(smooth_temporal(list(seq), TemporalConfig(sigma=rng.uniform(0.5, 3), radius=int(rng.integers(0, 6)))))
        contraction &= bool(np.all(np.max(np.abs(out), 0) <= np.max(np.abs(seq), 0) * (1 + 1e-12)))

    inst = tiny_instance()
    img = render(p2g(inst.particles.positions, inst.particles["rho0"], inst.h, inst.spec), ViewConfig(), inst.render)
    static_cfg = StylizeConfig(bank=inst.bank, target=StyleTarget.from_image(img, inst.bank), h=inst.h, render=inst.render, iterations=50)
    seq = stylize_sequence([inst.particles] * 4, inst.spec, static_cfg, TemporalConfig(stride=1, warm_start=True))
    d = [f["density"] for f in seq.deltas]
    static = max(float(np.max(np.abs(a - b))) for a in d for b in d)

    cfg = StylizeConfig(bank=inst.bank, target=inst.target, h=inst.h, render=inst.render, iterations=20)
    seq = stylize_sequence([inst.particles] * 4, inst.spec, cfg, TemporalConfig(stride=2, radius=0))
    interp = float(np.max(np.abs(seq.deltas[1]["density"] - 0.5 * (seq.deltas[0]["density"] + seq.deltas[2]["density"]))))
    hold = float(np.max(np.abs(seq.deltas[3]["density"] - seq.deltas[2]["density"])))

    # not asserted: with a target the initial state does not already match, later
    # warm-started frames keep optimizing and drift from earlier ones
    moving = stylize_sequence([inst.particles] * 4, inst.spec, cfg, TemporalConfig(stride=1, warm_start=True))
    dm = [f["density"] for f in moving.deltas]
    drift = max(float(np.max(np.abs(a - b))) for a in dm for b in dm)

    ok = wsum < 1e-12 and contraction and static <= 1e-8 and interp == 0.0 and hold == 0.0
    detail = (
        f"|sum w - 1| = {wsum:.1e}; contraction {contraction}; static 4-frame (target = initial render) pairwise {static:.1e} (<= 1e-8); "
        f"stride-2 midpoint error {interp:.1e}, trailing hold {hold:.1e}; info: drift with a non-stationary target {drift:.1e}"
    )
    assert report(7, "temporal coherence", ok, detail)


def test_8_multi_fluid_locality(report):
    inst = tiny_instance()
    spec = GridSpec((40, 16, 1))
    a = inst.particles
    b = tiny_instance(seed=8).particles
    b = b.replace(positions=b.positions + np.array([21.0, 0.0]))
    gap = b.positions[:, 0].min() - a.positions[:, 0].max()
    cfg = StylizeConfig(bank=inst.bank, target=inst.target, h=inst.h, render=inst.render, iterations=50, density_reg=0.1)
    cfg_b = StylizeConfig(bank=inst.bank, target=StyleTarget.from_image(Image(np.random.default_rng(2).uniform(0, 1, (16, 16))), inst.bank), h=inst.h, render=inst.render, iterations=50)
    joint = stylize_fluids([Fluid(a, cfg), Fluid(b, cfg_b)], spec)
    alone = [stylize_fluids([Fluid(a, cfg)], spec)[0], stylize_fluids([Fluid(b, cfg_b)], spec)[0]]
    diff = max(float(np.max(np.abs(j.deltas["density"] - s.deltas["density"]))) for j, s in zip(joint, alone))
    ok = gap > 4 * inst.h and diff < 1e-10
    assert report(8, "multi-fluid locality", ok, f"gap {gap:.2f} > 4h = {4 * inst.h:.1f}; max |joint - alone| = {diff:.1e} (tol 1e-10)")


def test_9_io_and_determinism(report, tmp_path):
    rng = np.random.default_rng(9)
    checks = {}
    spec = GridSpec((5, 4, 3), 0.7, (1.0, -2.0, 0.5))
    g = ScalarGrid(spec, rng.standard_normal(spec.dims))
    write_grid(tmp_path / "g.lnsg", g)
    checks["grid"] = read_grid(tmp_path / "g.lnsg").values.tobytes() == g.values.tobytes()
    v = VectorGrid(spec, rng.standard_normal(spec.dims + (3,)))
    write_grid(tmp_path / "v.lnsg", v)
    checks["vector grid"] = read_grid(tmp_path / "v.lnsg").values.tobytes() == v.values.tobytes()
    p = ParticleSet(rng.standard_normal((11, 3)), {"rho0": rng.random(11), "rho1": rng.standard_normal(11), "mass": rng.random(11) + 1})
    write_particles(tmp_path / "p.lnsp", p)
    q = read_particles(tmp_path / "p.lnsp")
    checks["particles"] = q.positions.tobytes() == p.positions.tobytes() and all(q[k].tobytes() == p[k].tobytes() for k in p.channels)
    bank = default_bank(4)
    write_bank(tmp_path / "b.lnsb", bank)
    bb = read_bank(tmp_path / "b.lnsb")
    checks["bank"] = all(x.weight.tobytes() == y.weight.tobytes() and x.bias.tobytes() == y.bias.tobytes() for x, y in zip(bank.layers, bb.layers))
    px = rng.integers(0, 256, (6, 7, 3)) / 255.0
    save_image(tmp_path / "i.png", Image(px))
    checks["png"] = load_image(tmp_path / "i.png").pixels.tobytes() == px.tobytes()

    grid = plume_fixture()
    write_grid(tmp_path / "density_0000.lnsg", grid)
    save_image(tmp_path / "style.png", dot_texture())
    base = {
        "inputs": {"density": "density_{frame:04d}.lnsg", "style_image": "style.png", "particles": "prep/particles_{frame:04d}.lnsp"},
        "stylize": {"iterations": 5, "density_reg": 0.01},
        "resample": {"threshold": 0.05, "redistribute_steps": 3},
    }
    (tmp_path / "run.json").write_text(json.dumps(base))
    codes = [cli_main(["resample", "--config", str(tmp_path / "run.json"), "--output-dir", str(tmp_path / "prep")])]
    for d in ("a", "b"):
        codes.append(cli_main(["stylize", "--config", str(tmp_path / "run.json"), "--seed", "3", "--output-dir", str(tmp_path / d)]))
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in ("stylized_0000.lnsp", "loss_trace.csv"))
    checks["cli stylize x2"] = codes == [0, 0, 0] and same
    ok = all(checks.values())
    assert report(9, "I/O and determinism", ok, ", ".join(f"{k}: {'bitwise' if v else 'MISMATCH'}" for k, v in checks.items()))
