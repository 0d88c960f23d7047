"""Command line driver: ``fluidstyle {resample,reconstruct,stylize,render}``.

Exit status is 0 on success, 2 for configuration or input errors and 3 when
an optimization diverges.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .config import RunConfig, load_config, parse_frames
from .errors import ConfigError, DivergenceError, FormatError, InvalidArgument
from .fields import GridSpec, Image, ParticleSet, ScalarGrid, psnr
from .io import load_image, read_bank, read_grid, read_particles, save_image, write_grid, write_particles
from .render import RenderConfig, ViewConfig, render
from .resim import (
    MultiScaleParams,
    advect_particles,
    level_radii,
    multiscale_density,
    reconstruct_density,
    redistribute_positions,
    rest_density_grid,
    sample_particles,
)
from .style import StyleTarget, default_bank
from .stylize import StylizeConfig, apply_deltas
from .temporal import TemporalConfig, stylize_sequence

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3


def _out_dir(args, cfg: RunConfig) -> Path:
    if args.output_dir:
        d = Path(args.output_dir)
    elif cfg.output_dir:
        d = cfg.path(cfg.output_dir, key="output_dir")
    else:
        d = Path(".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _read(fn, path):
    if not Path(path).exists():
        raise ConfigError(f"{path}: file not found")
    return fn(path)


def _scalar(grid, path) -> ScalarGrid:
    if not isinstance(grid, ScalarGrid):
        raise ConfigError(f"{path}: expected a scalar grid")
    return grid


def _grid_spec(cfg: RunConfig, frames) -> GridSpec:
    if cfg.grid is not None:
        return GridSpec(cfg.grid.dims, cfg.grid.spacing, cfg.grid.origin)
    if cfg.inputs.density is not None:
        path = cfg.path(cfg.inputs.density, frames[0], "inputs.density")
        return _read(read_grid, path).spec
    raise ConfigError("grid: needed when inputs.density is not given")


def _particles_template(cfg: RunConfig, out: Path) -> tuple[str, Path]:
    if cfg.inputs.particles is not None:
        return cfg.inputs.particles, cfg.base_dir
    return "particles_{frame:04d}.lnsp", out


def _radii(cfg: RunConfig, spec: GridSpec, particles: ParticleSet):
    return level_radii(cfg.multiscale.r * spec.spacing, max(len(particles.density_levels()), 1))


def cmd_resample(args, cfg: RunConfig) -> int:
    frames = parse_frames(args.frames, cfg.frames)
    out = _out_dir(args, cfg)
    rs = cfg.resample
    params = MultiScaleParams(cfg.multiscale.r, cfg.multiscale.n_s)
    particles = None
    rest = None
    for n, f in enumerate(frames):
        grid = _scalar(_read(read_grid, cfg.path(cfg.inputs.density, f, "inputs.density")), f"density frame {f}")
        spec = grid.spec
        h = rs.h if rs.h is not None else spec.spacing
        if particles is None:
            particles = sample_particles(grid, rs.threshold)
            rest = float(rest_density_grid(particles.positions, h, spec, particles.masses()).values.max(initial=0.0))
        elif cfg.inputs.velocity is not None:
            vel = _read(read_grid, cfg.path(cfg.inputs.velocity, frames[n - 1], "inputs.velocity"))
            particles = particles.replace(positions=advect_particles(particles, vel, rs.dt))
        rho0 = rest_density_grid(particles.positions, h, spec, particles.masses(), rest=rest)
        moved = redistribute_positions(particles, rho0, h, rs.redistribute_steps, rs.step_size)
        particles = ParticleSet(moved.positions, {"mass": particles.masses()})
        ms = multiscale_density(particles, grid, MultiScaleParams(params.r * spec.spacing, params.n_s))
        write_particles(out / f"particles_{f:04d}.lnsp", ms.particles)
        print(f"frame={f} particles={particles.count} PSNR={psnr(grid, ms.reconstruction):.6f}")
    return EXIT_OK


def cmd_reconstruct(args, cfg: RunConfig) -> int:
    frames = parse_frames(args.frames, cfg.frames)
    out = _out_dir(args, cfg)
    template, root = _particles_template(cfg, out)
    spec = _grid_spec(cfg, frames)
    for f in frames:
        p = _read(read_particles, root / template.format(frame=f))
        recon = reconstruct_density(p, _radii(cfg, spec, p), spec)
        write_grid(out / f"reconstruction_{f:04d}.lnsg", recon)
        ref_t = cfg.inputs.reference or cfg.inputs.density
        line = f"frame={f}"
        if ref_t is not None:
            ref = _scalar(_read(read_grid, cfg.path(ref_t, f, "inputs.reference")), f"reference frame {f}")
            if ref.spec != spec:
                raise ConfigError(f"reference frame {f} does not match the reconstruction grid")
            line += f" PSNR={psnr(ref, recon):.6f}"
        print(line)
    return EXIT_OK


def _style_target(cfg: RunConfig, bank, spec: GridSpec, view: ViewConfig) -> StyleTarget:
    path = cfg.path(cfg.inputs.style_image, key="inputs.style_image")
    image = _read(load_image, path)
    probe = render(spec.zeros(), view, RenderConfig())
    size = (probe.width, probe.height)
    if (image.width, image.height) != size:
        q = np.round(np.clip(image.pixels, 0, 1) * 255).astype(np.uint8)
        pil = PILImage.fromarray(q[:, :, 0] if image.channels == 1 else q)
        image = Image(np.asarray(pil.resize(size, PILImage.BILINEAR), dtype=np.float64) / 255.0)
    return StyleTarget.from_image(image, bank, str(path))


def cmd_stylize(args, cfg: RunConfig) -> int:
    frames = parse_frames(args.frames, cfg.frames)
    out = _out_dir(args, cfg)
    template, root = _particles_template(cfg, out)
    spec = _grid_spec(cfg, frames)
    st = cfg.stylize
    bank = _read(read_bank, cfg.path(cfg.inputs.bank, key="inputs.bank")) if cfg.inputs.bank else default_bank(args.seed)
    views = tuple(ViewConfig(v) for v in st.views)
    target = _style_target(cfg, bank, spec, views[0])
    iterations = st.iterations if args.iterations is None else args.iterations
    config = StylizeConfig(
        bank=bank,
        target=target,
        h=st.h if st.h is not None else cfg.multiscale.r * spec.spacing,
        views=views,
        render=RenderConfig(cfg.render.mode, cfg.render.gamma, cfg.render.emission),
        attributes=tuple(st.attributes),
        attribute_weights=dict(st.attribute_weights) or None,
        layer_weights=st.layer_weights,
        density_reg=st.density_reg,
        position_reg=st.position_reg,
        iterations=iterations,
        lr=st.lr,
        beta1=st.beta1,
        beta2=st.beta2,
        adam_eps=st.adam_eps,
    )
    tc = cfg.temporal
    temporal = TemporalConfig(tc.sigma, tc.radius, tc.stride, tc.warm_start)
    particles = [_read(read_particles, root / template.format(frame=f)) for f in frames]
    result = stylize_sequence(particles, spec, config, temporal)
    for f, p, d in zip(frames, particles, result.deltas):
        styled = apply_deltas(p, d)
        extra = {}
        if "color" in d:
            extra.update({f"delta_color_{c}": d["color"][:, i] for i, c in enumerate("rgb")})
        if "position" in d:
            extra.update({f"delta_pos_{c}": d["position"][:, i] for i, c in enumerate("xyz"[: p.dim])})
        write_particles(out / f"stylized_{f:04d}.lnsp", styled.replace(**extra))
    with open(out / "loss_trace.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "iteration", "loss", "style", "reg_density", "reg_position"])
        for k in result.keyframes:
            for rec in result.traces[k]:
                w.writerow([frames[k], rec["iteration"], repr(rec["loss"]), repr(rec["style"]), repr(rec["reg_density"]), repr(rec["reg_position"])])
    print(f"stylized {len(frames)} frames ({len(result.keyframes)} keyframes) into {out}")
    return EXIT_OK


def cmd_render(args, cfg: RunConfig) -> int:
    frames = parse_frames(args.frames, cfg.frames)
    out = _out_dir(args, cfg)
    rc = RenderConfig(cfg.render.mode, cfg.render.gamma, cfg.render.emission)
    views = [ViewConfig(v) for v in cfg.stylize.views]
    source = args.source or ("particles" if cfg.inputs.particles else "grid")
    spec = _grid_spec(cfg, frames) if source == "particles" else None
    for f in frames:
        if source == "grid":
            grid = _scalar(_read(read_grid, cfg.path(cfg.inputs.density, f, "inputs.density")), f"density frame {f}")
        else:
            p = _read(read_particles, cfg.path(cfg.inputs.particles, f, "inputs.particles"))
            grid = reconstruct_density(p, _radii(cfg, spec, p), spec)
        for v in views:
            tag = v.axis.replace("+", "p").replace("-", "m")
            save_image(out / f"render_{f:04d}_{tag}.png", render(grid, v, rc))
    print(f"rendered {len(frames)} frames from {source} into {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fluidstyle", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=0, help="seed for the default filter bank")
        p.add_argument("--frames", default=None, help="inclusive frame range a..b")
        p.add_argument("--output-dir", default=None)
        return p

    common(sub.add_parser("resample", help="grid sequence -> particle sequence")).set_defaults(fn=cmd_resample)
    common(sub.add_parser("reconstruct", help="particles -> grid, with PSNR against a reference")).set_defaults(fn=cmd_reconstruct)
    p = common(sub.add_parser("stylize", help="stylize a particle sequence"))
    p.add_argument("--iterations", type=int, default=None, help="override stylize.iterations")
    p.set_defaults(fn=cmd_stylize)
    p = common(sub.add_parser("render", help="grid or particles -> PNG frames"))
    p.add_argument("--source", choices=("grid", "particles"), default=None)
    p.set_defaults(fn=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "iterations", None) is not None and args.iterations < 0:
            raise ConfigError("--iterations must be >= 0")
        cfg = load_config(args.config)
        return args.fn(args, cfg)
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, FormatError, InvalidArgument) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"error: {getattr(e, 'filename', '') or ''}: {e.strerror or e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
