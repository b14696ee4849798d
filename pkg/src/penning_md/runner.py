"""Ensemble orchestration: init -> phases (cool / ramp / hold / record) -> analysis -> files."""

from __future__ import annotations

import hashlib
import json
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import drumhead_psd, kinetic_series, pe_offset_series
from .core import CrystalState, TrapConfig, to_lab_frame, to_mK
from .dynamics import Trajectory, evolve, theta_r_at, wall_at
from .equilibrium import (ConfigurationCatalog, EquilibriumConfig, _make_config, classify_configuration,
                          lowest_equilibrium, relax_from_snapshot, same_configuration)
from .errors import PenningError
from .experiment import ExperimentConfig, config_from_dict
from .guiding_center import characteristic_scales
from .io import TrajectoryFile, write_csv
from .modes import CYCLOTRON, DRUMHEAD, EXB, analyze_modes, project_frames
from .thermal import init_modes_at_temperature, metropolis_sample

EXPORT_TARGETS = ("energies", "spectrum", "trajectories", "catalog")


class MemberError(PenningError):
    """Failure inside one ensemble member, tagged with the member index and phase."""

    def __init__(self, member: int, phase: str, cause: BaseException):
        super().__init__(f"member {member}, phase {phase!r}: {type(cause).__name__}: {cause}")
        self.member = member
        self.phase = phase
        self.cause = cause


def member_rng(seed: int, member: int) -> np.random.Generator:
    """Sub-stream of member ``member`` derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence([seed, member]))


def concatenate(trajs: list[Trajectory]) -> Trajectory:
    first, last = trajs[0], trajs[-1]
    return Trajectory(np.concatenate([t.times for t in trajs]),
                      np.concatenate([t.positions for t in trajs]),
                      np.concatenate([t.velocities for t in trajs]),
                      first.schedule, first.trap, first.dt, first.stride, last.final_state,
                      sum(t.n_scatter for t in trajs))


@dataclass
class MemberResult:
    member: int
    final_config: EquilibriumConfig
    times: np.ndarray
    ke_parallel: np.ndarray
    ke_perp: np.ndarray
    pe_times: np.ndarray
    pe_offset: np.ndarray
    crystallized: bool = False
    window_times: np.ndarray | None = None
    mode_energies: np.ndarray | None = None  # (F_window, 3N)
    frequencies: np.ndarray | None = None
    branches: np.ndarray | None = None
    com_flags: np.ndarray | None = None
    psd_freq: np.ndarray | None = None
    psd_density: np.ndarray | None = None
    n_scatter: int = 0
    trajectory_file: str | None = None


def _initial_state(cfg: ExperimentConfig, trap: TrapConfig, eq: EquilibriumConfig, rng) -> CrystalState:
    sched = cfg.schedule()
    wall = wall_at(sched, trap, 0.0)
    init = cfg.init
    n = cfg.n_ions
    if init.kind == "equilibrium":
        rot = CrystalState(eq.positions.copy(), np.zeros(3 * n), 0.0, "rotating")
    elif init.kind == "mode_thermal":
        ma = analyze_modes(eq, trap, wall)
        rot = init_modes_at_temperature(eq, ma.spectrum, ma.transform, init.temperature_k, rng)
    else:
        return metropolis_sample(trap, wall, n, init.temperature_k, init.metropolis_sweeps, rng,
                                 start=eq.positions)
    return to_lab_frame(rot, theta_r_at(sched, 0.0), wall.omega_r)


def run_member(cfg_dict: dict, member: int, eq_positions: np.ndarray, reference_pe: float,
               out_dir: str | None) -> MemberResult:
    """Full pipeline for one ensemble member (picklable entry point for worker processes)."""
    cfg = config_from_dict(cfg_dict)
    phase = "init"
    try:
        trap = cfg.trap_config()
        sched = cfg.schedule()
        ic = cfg.integrator_config()
        n = cfg.n_ions
        rng = member_rng(cfg.ensemble.seed, member)
        wall_i = wall_at(sched, trap, 0.0)
        eq = _make_config(np.asarray(eq_positions, float), trap, wall_i, characteristic_scales(trap, wall_i.beta).l0)
        state = _initial_state(cfg, trap, eq, rng)

        segments = []
        psd_mask_parts = []
        for ph in cfg.phases:
            phase = ph.name
            tr = evolve(state, trap, sched, ic, ph.duration_s, cfg.laser.beams(ph.beams), rng)
            segments.append(tr)
            psd_mask_parts.append(np.full(tr.n_frames, ph.name == cfg.analysis.psd_phase))
            state = tr.final_state
        traj = concatenate(segments)

        phase = "analysis"
        t_end = state.time
        wall_f = wall_at(sched, trap, t_end)
        final = relax_from_snapshot(state, trap, wall_f, theta_r_at(sched, t_end))
        ke_par, ke_perp = kinetic_series(traj)
        post = traj.times >= sched.end_time - 0.5 * ic.dt
        pe = pe_offset_series(traj, reference_pe, post) if cfg.analysis.pe_offset else np.zeros(0)
        res = MemberResult(member, final, traj.times, ke_par, ke_perp,
                           traj.times[post] if cfg.analysis.pe_offset else np.zeros(0), pe,
                           n_scatter=traj.n_scatter)

        window = traj.times >= t_end - cfg.analysis.average_window_s - 0.5 * ic.dt
        if cfg.analysis.energies:
            ma = analyze_modes(final, trap, wall_f)
            pos, vel = traj.rotating(window)
            l0 = characteristic_scales(trap, wall_f.beta).l0
            rms = np.sqrt(np.sum((pos - final.positions) ** 2, axis=1) / n)
            if np.median(rms) <= 0.3 * l0:
                res.crystallized = True
                res.window_times = traj.times[window]
                res.mode_energies = project_frames(pos, vel, final, ma.spectrum, ma.transform)
                res.frequencies = ma.spectrum.frequencies
                res.branches = ma.spectrum.branches
                res.com_flags = ma.spectrum.com_flags

        if cfg.analysis.psd_phase is not None:
            psd = drumhead_psd(traj, np.concatenate(psd_mask_parts))
            res.psd_freq, res.psd_density = psd.frequencies, psd.density

        if cfg.output.save_trajectories and out_dir is not None:
            phase = "write"
            path = Path(out_dir) / f"member_{member:04d}.traj"
            TrajectoryFile.from_trajectory(traj, seed=cfg.ensemble.seed, member=member,
                                           extra={"phases": [p.name for p in cfg.phases]}).write(path)
            res.trajectory_file = path.name
        return res
    except MemberError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with context
        raise MemberError(member, phase, exc) from exc


@dataclass
class Bundle:
    config: ExperimentConfig
    out_dir: Path
    members: list[MemberResult]
    catalog: ConfigurationCatalog
    member_config_index: list[int]
    reference_pe: float
    reference_eq: EquilibriumConfig
    manifest: dict = field(default_factory=dict)

    @property
    def trap(self) -> TrapConfig:
        return self.config.trap_config()


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, threads: int = 1,
                   members: list[int] | None = None, export: bool = True) -> Bundle:
    """Run every ensemble member of ``cfg`` and write the output bundle to ``out_dir``."""
    t0 = time.time()
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    out = Path(out_dir if out_dir is not None else cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    trap = cfg.trap_config()
    sched = cfg.schedule()
    wall_i = wall_at(sched, trap, 0.0)
    wall_f = wall_at(sched, trap, cfg.total_duration)
    eq_rng = np.random.default_rng(np.random.SeedSequence([cfg.ensemble.seed, 2**32]))
    eq_i = lowest_equilibrium(trap, wall_i, cfg.n_ions, cfg.init.equilibrium_starts, rng=eq_rng)
    ref = lowest_equilibrium(trap, wall_f, cfg.n_ions, cfg.init.equilibrium_starts, rng=eq_rng)
    # the scaled initial crystal is a candidate ground state for fixed-alpha ramps
    if wall_f.omega_r != wall_i.omega_r:
        scaled = relax_from_snapshot(CrystalState(eq_i.positions * (wall_i.beta / wall_f.beta) ** (1 / 3),
                                                  np.zeros(3 * cfg.n_ions), 0.0, "rotating"), trap, wall_f)
        if scaled.potential < ref.potential:
            ref = scaled

    idx = list(range(cfg.ensemble.n_members)) if members is None else list(members)
    cfg_dict = cfg.to_dict()
    args = [(cfg_dict, m, eq_i.positions, ref.potential, str(out)) for m in idx]
    if threads > 1 and len(idx) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_member, *zip(*args)))
    else:
        results = [run_member(*a) for a in args]

    catalog = ConfigurationCatalog()
    member_index = []
    for r in results:  # fixed reduction order
        classify_configuration(r.final_config, catalog)
    for r in results:
        member_index.append(_catalog_index(r.final_config, catalog))

    bundle = Bundle(cfg, out, results, catalog, member_index, ref.potential, ref)
    bundle.manifest = {
        "name": cfg.name,
        "config": cfg_dict,
        "master_seed": cfg.ensemble.seed,
        "members": [{"member": m, "seed_sequence": [cfg.ensemble.seed, m],
                     "trajectory": r.trajectory_file, "crystallized": r.crystallized,
                     "configuration": ci, "n_scatter": r.n_scatter}
                    for m, r, ci in zip(idx, results, member_index)],
        "versions": _versions(),
        "threads": threads,
        "started": started,
        "wall_clock_s": None,
        "outputs": {},
    }
    if export:
        for target in EXPORT_TARGETS:
            try:
                export_plotdata(bundle, target)
            except MissingComponentError:
                pass
    bundle.manifest["wall_clock_s"] = time.time() - t0
    _write_manifest(bundle)
    return bundle


def _catalog_index(cfg: EquilibriumConfig, catalog: ConfigurationCatalog) -> int:
    for k, (entry, _) in enumerate(catalog.entries):
        if same_configuration(entry, cfg, catalog.match_tolerance):
            return k
    return -1


def _versions() -> dict:
    import numba
    import scipy
    return {"penning_md": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(bundle: Bundle):
    for p in sorted(bundle.out_dir.glob("*")):
        if p.is_file() and p.name != "manifest.json":
            bundle.manifest["outputs"][p.name] = _sha256(p)
    (bundle.out_dir / "manifest.json").write_text(json.dumps(bundle.manifest, indent=2, default=_json_default)
                                                  + "\n", encoding="utf-8")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


# --------------------------------------------------------------------------- export

class MissingComponentError(PenningError):
    """The bundle lacks the data needed for the requested export."""


def export_plotdata(bundle: Bundle, target: str) -> list[Path]:
    """Write the CSV tables for ``target`` (energies, spectrum, trajectories or catalog)."""
    if target not in EXPORT_TARGETS:
        raise ValueError(f"unknown export target {target!r}; choose from {EXPORT_TARGETS}")
    return {"energies": _export_energies, "spectrum": _export_spectrum,
            "trajectories": _export_trajectories, "catalog": _export_catalog}[target](bundle)


def _reference_members(bundle: Bundle) -> list[MemberResult]:
    """Crystallized members in the most common configuration."""
    if not bundle.catalog.entries:
        return []
    return [r for r, ci in zip(bundle.members, bundle.member_config_index) if ci == 0 and r.crystallized]


def _export_energies(bundle: Bundle) -> list[Path]:
    out = bundle.out_dir
    written = []
    n = bundle.config.n_ions
    # thermodynamic series, all members, all frames
    r0 = bundle.members[0]
    ke_par = np.mean([r.ke_parallel for r in bundle.members], axis=0)
    ke_perp = np.mean([r.ke_perp for r in bundle.members], axis=0)
    pe = {}
    if r0.pe_times.size:
        pe_mean = np.mean([r.pe_offset for r in bundle.members], axis=0)
        pe = dict(zip(r0.pe_times.tolist(), pe_mean))
    rows = [(t, to_mK(a) / n, to_mK(b) / n, (to_mK(pe[t]) / n) if t in pe else "")
            for t, a, b in zip(r0.times.tolist(), ke_par, ke_perp)]
    p = out / "thermo.csv"
    write_csv(p, ["time_s", "ke_parallel_mK_per_ion", "ke_perp_mK_per_ion", "pe_offset_mK_per_ion"], rows,
              comments=[f"members={len(bundle.members)}",
                        "pe_offset relative to the lowest equilibrium at the final wall; blank during the ramp"])
    written.append(p)

    refs = _reference_members(bundle)
    if refs:
        e = np.mean([r.mode_energies for r in refs], axis=0)  # (F, 3N)
        spec_br = refs[0].branches
        com = refs[0].com_flags
        exb = spec_br == EXB
        exb_nc = exb & ~com
        rows = [(t, to_mK(row[exb].mean()), to_mK(row[spec_br == DRUMHEAD].mean()),
                 to_mK(row[spec_br == CYCLOTRON].mean()), to_mK(row[exb_nc].mean()) if exb_nc.any() else 0.0)
                for t, row in zip(refs[0].window_times.tolist(), e)]
        p = out / "energies.csv"
        write_csv(p, ["time_s", "exb_mK", "drumhead_mK", "cyclotron_mK", "exb_noCOM_mK"], rows,
                  comments=[f"ensemble mean over {len(refs)} members in the most common configuration",
                            "mean energy per mode of each branch"])
        written.append(p)
        per_member = np.array([r.mode_energies.mean(axis=0) for r in refs])
        rows = []
        for k in range(per_member.shape[1]):
            col = to_mK(per_member[:, k])
            rows.append((k, refs[0].frequencies[k] / (2 * np.pi), str(spec_br[k]), bool(com[k]),
                         col.mean(), col.std(), col.min(), col.max()))
        p = out / "modes.csv"
        write_csv(p, ["mode", "frequency_hz", "branch", "com", "mean_mK", "std_mK", "min_mK", "max_mK"], rows,
                  comments=[f"time average over the last {bundle.config.analysis.average_window_s} s",
                            f"members={len(refs)}"])
        written.append(p)
    return written


def _export_spectrum(bundle: Bundle) -> list[Path]:
    with_psd = [r for r in bundle.members if r.psd_density is not None]
    if not with_psd:
        raise MissingComponentError("no spectrum recorded (set analysis.psd_phase)")
    freqs = with_psd[0].psd_freq
    dens = np.mean([r.psd_density for r in with_psd], axis=0)
    res = float(freqs[1] - freqs[0])
    p = bundle.out_dir / "spectrum.csv"
    write_csv(p, ["frequency_hz", "density_m2_per_hz"], zip(freqs.tolist(), dens.tolist()),
              comments=[f"resolution_hz={res!r}", f"members={len(with_psd)}"])
    written = [p]
    refs = _reference_members(bundle)
    if refs:
        f = refs[0].frequencies[refs[0].branches == DRUMHEAD] / (2 * np.pi)
        p = bundle.out_dir / "spectrum_lines.csv"
        write_csv(p, ["drumhead_frequency_hz"], [(x,) for x in np.sort(f)])
        written.append(p)
    return written


def _export_trajectories(bundle: Bundle) -> list[Path]:
    saved = [r for r in bundle.members if r.trajectory_file]
    if not saved:
        raise MissingComponentError("no trajectories saved (set output.save_trajectories)")
    written = []
    for r in saved:
        traj = TrajectoryFile.read(bundle.out_dir / r.trajectory_file).to_trajectory()
        pos, _ = traj.rotating()
        n = traj.n_ions
        rows = ((t, i, pos[k, i], pos[k, n + i], pos[k, 2 * n + i])
                for k, t in enumerate(traj.times.tolist()) for i in range(n))
        p = bundle.out_dir / f"trajectory_member_{r.member:04d}.csv"
        write_csv(p, ["time_s", "ion", "x_m", "y_m", "z_m"], rows, comments=["co-rotating frame"])
        written.append(p)
    return written


def _export_catalog(bundle: Bundle) -> list[Path]:
    if not bundle.catalog.entries:
        raise MissingComponentError("empty configuration catalog")
    lowest = min(e.potential for e, _ in bundle.catalog.entries)
    rows = [(k, c, e.potential, to_mK(e.potential - lowest), e.planar)
            for k, (e, c) in enumerate(bundle.catalog.entries)]
    p = bundle.out_dir / "catalog.csv"
    write_csv(p, ["index", "count", "potential_J", "relative_pe_mK", "planar"], rows,
              comments=["configurations at the final wall, sorted by count"])
    return [p]
