"""Command-line interface: ``penning-md <subcommand> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .core import make_wall
from .errors import PenningError
from .experiment import ExperimentConfig, load_config, preset, preset_descriptions, save_config, validate
from .io import TrajectoryFile, write_csv


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="experiment config (JSON)")
    p.add_argument("--preset", help="named figure preset instead of --config")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for ensemble members")
    p.add_argument("--out", type=Path, help="output directory")


def _crystal_args(p: argparse.ArgumentParser):
    p.add_argument("--n-ions", type=int, help="ion count (default: from config, else 20)")
    p.add_argument("--omega-r-hz", type=float, help="wall frequency in Hz (default: config omega_i_hz)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--alpha", type=float, help="wall strength delta/beta")
    g.add_argument("--delta", type=float, help="wall strength delta")
    p.add_argument("--starts", type=int, default=24, help="random starts for the ground-state search")


def _configs(args) -> list[ExperimentConfig]:
    if args.config and args.preset:
        raise PenningError("give either --config or --preset, not both")
    if args.config:
        cfgs = [load_config(args.config)]
    elif args.preset:
        cfgs = preset(args.preset)
    else:
        raise PenningError("need --config or --preset")
    if args.seed is not None:
        for c in cfgs:
            c.ensemble.seed = args.seed
            validate(c)
    return cfgs


def _crystal(args):
    from .equilibrium import lowest_equilibrium
    cfg = load_config(args.config) if args.config else None
    trap = cfg.trap_config() if cfg else None
    if trap is None:
        from .core import NIST_TRAP
        trap = NIST_TRAP
    n = args.n_ions or (cfg.n_ions if cfg else 20)
    f = args.omega_r_hz or (cfg.wall.omega_i_hz if cfg else 200e3)
    w = 2 * np.pi * f
    if args.delta is not None:
        wall = make_wall(trap, w, delta=args.delta)
    elif args.alpha is not None:
        wall = make_wall(trap, w, alpha=args.alpha)
    elif cfg and cfg.wall.alpha_policy == "fixed_delta":
        wall = make_wall(trap, w, delta=cfg.wall.strength)
    else:
        wall = make_wall(trap, w, alpha=cfg.wall.strength if cfg else 0.5)
    seed = args.seed if args.seed is not None else 0
    eq = lowest_equilibrium(trap, wall, n, args.starts, rng=np.random.default_rng(seed))
    return trap, wall, eq


def cmd_equilibrium(args) -> int:
    trap, wall, eq = _crystal(args)
    n = eq.n_ions
    print(f"N = {n}, omega_r = 2pi x {wall.omega_r / 2 / np.pi:.6g} Hz, beta = {wall.beta:.6g}, "
          f"delta/beta = {wall.alpha:.4g}")
    print(f"potential = {eq.potential:.12e} J, gradient norm = {eq.gradient_norm:.3e} N, planar = {eq.planar}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        p = eq.positions.reshape(3, n)
        write_csv(args.out / "equilibrium.csv", ["ion", "x_m", "y_m", "z_m"],
                  [(i, p[0, i], p[1, i], p[2, i]) for i in range(n)],
                  comments=[f"potential_J={eq.potential!r}", f"planar={eq.planar}"])
        print(f"wrote {args.out / 'equilibrium.csv'}")
    return 0


def cmd_modes(args) -> int:
    from .modes import analyze_modes
    from .guiding_center import gc_exb_frequencies, planar_stiffness
    trap, wall, eq = _crystal(args)
    ma = analyze_modes(eq, trap, wall)
    s = ma.spectrum
    counts = s.branch_counts()
    print(f"N = {eq.n_ions}: " + ", ".join(f"{k} {v}" for k, v in counts.items()))
    for br in counts:
        f = s.frequencies[s.branch_mask(br)] / (2 * np.pi)
        print(f"  {br:10s} {f.min():14.3f} .. {f.max():14.3f} Hz")
    rows = [(k, s.frequencies[k] / (2 * np.pi), str(s.branches[k]), bool(s.com_flags[k]))
            for k in range(s.n_modes)]
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        write_csv(args.out / "modes.csv", ["mode", "frequency_hz", "branch", "com"], rows)
        if args.guiding_center:
            gc = gc_exb_frequencies(planar_stiffness(ma.energy_matrix.stiffness), trap, wall.omega_r)
            write_csv(args.out / "modes_guiding_center.csv", ["mode", "frequency_hz"],
                      [(k, x / (2 * np.pi)) for k, x in enumerate(gc)])
        print(f"wrote {args.out / 'modes.csv'}")
    return 0


def _run(args, members=None) -> int:
    from .runner import run_experiment
    cfgs = _configs(args)
    for cfg in cfgs:
        out = args.out / cfg.output.dir if (args.out and len(cfgs) > 1) else (args.out or Path(cfg.output.dir))
        print(f"[{cfg.name}] N = {cfg.n_ions}, {cfg.ensemble.n_members if members is None else len(members)} "
              f"member(s), {cfg.total_duration * 1e3:.4g} ms -> {out}", flush=True)
        b = run_experiment(cfg, out, threads=args.threads, members=members)
        print(f"[{cfg.name}] done in {b.manifest['wall_clock_s']:.1f} s; "
              f"{len(b.catalog)} configuration(s); outputs: {', '.join(sorted(b.manifest['outputs']))}")
    return 0


def cmd_simulate(args) -> int:
    return _run(args, members=[args.member])


def cmd_ensemble(args) -> int:
    return _run(args)


def cmd_psd(args) -> int:
    from .analysis import drumhead_psd
    traj = TrajectoryFile.read(args.trajectory).to_trajectory()
    mask = traj.times >= args.start_s - 0.5 * traj.dt
    psd = drumhead_psd(traj, mask, min_duration=args.min_duration_s)
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "spectrum.csv", ["frequency_hz", "density_m2_per_hz"],
              zip(psd.frequencies.tolist(), psd.density.tolist()),
              comments=[f"resolution_hz={psd.resolution!r}", f"source={Path(args.trajectory).name}"])
    k = int(np.argmax(psd.density[1:])) + 1
    print(f"resolution {psd.resolution:.6g} Hz; strongest peak at {psd.frequencies[k]:.6g} Hz; "
          f"wrote {out / 'spectrum.csv'}")
    return 0


def cmd_presets(args) -> int:
    if args.preset is None:
        for k, d in preset_descriptions().items():
            print(f"{k:8s} {d}")
        return 0
    if args.dump:
        out = args.out or Path(".")
        out.mkdir(parents=True, exist_ok=True)
        for cfg in preset(args.preset):
            if args.seed is not None:
                cfg.ensemble.seed = args.seed
            save_config(cfg, out / f"{cfg.name}.json")
            print(f"wrote {out / (cfg.name + '.json')}")
        return 0
    return _run(args)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="penning-md", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("equilibrium", help="ground-state crystal for one wall setting")
    _common(p)
    _crystal_args(p)
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("modes", help="normal modes of the ground-state crystal")
    _common(p)
    _crystal_args(p)
    p.add_argument("--guiding-center", action="store_true", help="also write guiding-center E x B frequencies")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("simulate", help="run one ensemble member of a config")
    _common(p)
    p.add_argument("--member", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ensemble", help="run every ensemble member and reduce")
    _common(p)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("psd", help="drumhead power spectrum of a saved trajectory")
    _common(p)
    p.add_argument("trajectory", type=Path)
    p.add_argument("--start-s", type=float, default=0.0, help="ignore frames before this time")
    p.add_argument("--min-duration-s", type=float, default=10e-3)
    p.set_defaults(func=cmd_psd)

    p = sub.add_parser("presets", help="list, dump (--dump) or run figure presets")
    _common(p)
    p.add_argument("--dump", action="store_true", help="write the preset configs as JSON instead of running")
    p.set_defaults(func=cmd_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PenningError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
