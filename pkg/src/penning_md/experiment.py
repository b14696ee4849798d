"""Experiment configuration: JSON schema, validation and figure presets.

Field names follow the trap and laser parameter table: frequencies are
given in Hz (not rad/s) and carry an ``_hz`` suffix, lengths ``_m``,
durations ``_s``, temperatures ``_k``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import scipy.constants as const

from .cooling import BeamConfig, axial_beams, planar_beam
from .core import BE9_MASS, IonSpecies, TrapConfig, compute_beta
from .dynamics import IntegratorConfig, WallSchedule
from .errors import ConfigError

SCHEMA_VERSION = 1

INIT_KINDS = ("equilibrium", "mode_thermal", "metropolis")
BEAM_NAMES = ("axial", "planar")


@dataclass
class TrapSection:
    b_field_t: float = 4.4588
    omega_z_hz: float = 1.58e6
    ion_mass_kg: float = BE9_MASS
    ion_charge_e: float = 1.0

    def build(self) -> TrapConfig:
        species = IonSpecies(self.ion_mass_kg, self.ion_charge_e * const.e, "")
        return TrapConfig(self.b_field_t, 2 * np.pi * self.omega_z_hz, species)


@dataclass
class WallSection:
    kind: str = "constant"
    omega_i_hz: float = 200e3
    omega_f_hz: float | None = None
    alpha_policy: str = "fixed_alpha"
    strength: float = 0.5  # delta/beta for fixed_alpha, delta for fixed_delta


@dataclass
class InitSection:
    kind: str = "equilibrium"
    temperature_k: float = 1e-3
    metropolis_sweeps: int = 2000
    equilibrium_starts: int = 24


@dataclass
class LaserSection:
    wavelength_m: float = 313e-9
    gamma0_hz: float = 18e6
    saturation_parallel: float = 5e-3
    detuning_parallel_hz: float = -9e6
    saturation_perp: float = 1.0
    detuning_perp_hz: float = -40e6
    waist_m: float = 30e-6
    offset_y_m: float = 20e-6

    def beams(self, names) -> list[BeamConfig]:
        out: list[BeamConfig] = []
        g = 2 * np.pi * self.gamma0_hz
        if "axial" in names:
            out += axial_beams(self.saturation_parallel, 2 * np.pi * self.detuning_parallel_hz,
                               self.wavelength_m, g)
        if "planar" in names:
            out.append(planar_beam(self.saturation_perp, 2 * np.pi * self.detuning_perp_hz, self.waist_m,
                                   self.offset_y_m, self.wavelength_m, g))
        return out


@dataclass
class Phase:
    """One contiguous stretch of evolution. The wall ramp starts with the phase named ``ramp``."""
    name: str
    duration_s: float
    beams: list[str] = field(default_factory=list)


@dataclass
class IntegratorSection:
    dt_s: float = 1e-9
    record_stride: int = 250


@dataclass
class EnsembleSection:
    n_members: int = 1
    seed: int = 0


@dataclass
class AnalysisSection:
    average_window_s: float = 1e-3
    energies: bool = True
    catalog: bool = True
    psd_phase: str | None = None
    pe_offset: bool = False


@dataclass
class OutputSection:
    dir: str = "penning_out"
    save_trajectories: bool = False


@dataclass
class ExperimentConfig:
    n_ions: int
    phases: list[Phase]
    name: str = "experiment"
    schema_version: int = SCHEMA_VERSION
    trap: TrapSection = field(default_factory=TrapSection)
    wall: WallSection = field(default_factory=WallSection)
    init: InitSection = field(default_factory=InitSection)
    laser: LaserSection = field(default_factory=LaserSection)
    integrator: IntegratorSection = field(default_factory=IntegratorSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    output: OutputSection = field(default_factory=OutputSection)

    # derived objects
    def trap_config(self) -> TrapConfig:
        return self.trap.build()

    def ramp_phase(self) -> Phase | None:
        return next((p for p in self.phases if p.name == "ramp"), None)

    def phase_start(self, name: str) -> float:
        t = 0.0
        for p in self.phases:
            if p.name == name:
                return t
            t += p.duration_s
        raise KeyError(name)

    @property
    def total_duration(self) -> float:
        return float(sum(p.duration_s for p in self.phases))

    def schedule(self) -> WallSchedule:
        w = self.wall
        wi = 2 * np.pi * w.omega_i_hz
        ramp = self.ramp_phase()
        if w.kind == "constant" or ramp is None:
            return WallSchedule("constant", wi, alpha_policy=w.alpha_policy, delta_or_alpha=w.strength)
        return WallSchedule(w.kind, wi, 2 * np.pi * w.omega_f_hz, ramp.duration_s, w.alpha_policy, w.strength,
                            self.phase_start("ramp"))

    def integrator_config(self) -> IntegratorConfig:
        return IntegratorConfig(self.integrator.dt_s, "boris", self.integrator.record_stride)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


# --------------------------------------------------------------------------- loading

def _section(cls, data: Any, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(path, "expected an object")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")
    return cls(**data)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build and validate a config from parsed JSON."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected an object")
    data = copy.deepcopy(data)
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r} (expected {SCHEMA_VERSION})")
    for req in ("n_ions", "phases"):
        if req not in data:
            raise ConfigError(req, "required field missing")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    if not isinstance(data["phases"], list):
        raise ConfigError("phases", "expected a list")
    phases = []
    for k, p in enumerate(data["phases"]):
        phases.append(_section(Phase, p, f"phases[{k}]"))
    try:
        cfg = ExperimentConfig(
            n_ions=data["n_ions"], phases=phases, name=data.get("name", "experiment"),
            schema_version=version,
            trap=_section(TrapSection, data.get("trap"), "trap"),
            wall=_section(WallSection, data.get("wall"), "wall"),
            init=_section(InitSection, data.get("init"), "init"),
            laser=_section(LaserSection, data.get("laser"), "laser"),
            integrator=_section(IntegratorSection, data.get("integrator"), "integrator"),
            ensemble=_section(EnsembleSection, data.get("ensemble"), "ensemble"),
            analysis=_section(AnalysisSection, data.get("analysis"), "analysis"),
            output=_section(OutputSection, data.get("output"), "output"),
        )
    except TypeError as exc:  # missing required Phase fields etc.
        raise ConfigError("<root>", str(exc)) from exc
    validate(cfg)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    return config_from_dict(data)


def save_config(cfg: ExperimentConfig, path: str | Path):
    Path(path).write_text(cfg.to_json() + "\n", encoding="utf-8")


# --------------------------------------------------------------------------- validation

def _positive(value, name, *, integer=False, allow_zero=False):
    if integer and (not isinstance(value, (int, np.integer)) or isinstance(value, bool)):
        raise ConfigError(name, f"expected an integer, got {value!r}")
    if not isinstance(value, (int, float, np.number)) or isinstance(value, bool):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if not np.isfinite(value):
        raise ConfigError(name, "must be finite")
    if allow_zero and value < 0:
        raise ConfigError(name, f"must be >= 0, got {value!r}")
    if not allow_zero and not value > 0:
        raise ConfigError(name, f"must be > 0, got {value!r}")


def validate(cfg: ExperimentConfig):
    """Check every physical invariant; raises ConfigError naming the offending field."""
    _positive(cfg.n_ions, "n_ions", integer=True)
    t = cfg.trap
    _positive(t.b_field_t, "trap.b_field_t")
    _positive(t.omega_z_hz, "trap.omega_z_hz")
    _positive(t.ion_mass_kg, "trap.ion_mass_kg")
    _positive(t.ion_charge_e, "trap.ion_charge_e")
    trap = t.build()

    w = cfg.wall
    if w.kind not in ("constant", "linear", "half_cosine"):
        raise ConfigError("wall.kind", f"unknown schedule {w.kind!r}")
    if w.alpha_policy not in ("fixed_alpha", "fixed_delta"):
        raise ConfigError("wall.alpha_policy", f"unknown policy {w.alpha_policy!r}")
    _positive(w.omega_i_hz, "wall.omega_i_hz")
    _positive(w.strength, "wall.strength", allow_zero=True)
    ends = [("wall.omega_i_hz", w.omega_i_hz)]
    if w.kind != "constant":
        if w.omega_f_hz is None:
            raise ConfigError("wall.omega_f_hz", "required for a ramp")
        _positive(w.omega_f_hz, "wall.omega_f_hz")
        if cfg.ramp_phase() is None:
            raise ConfigError("phases", "a ramp schedule needs a phase named 'ramp'")
        ends.append(("wall.omega_f_hz", w.omega_f_hz))
    # beta is concave in omega_r, so checking the ramp ends covers every schedule time
    for name, f in ends:
        beta = compute_beta(trap, 2 * np.pi * f)
        if not beta > 0:
            raise ConfigError(name, f"beta = {beta:.4g} <= 0 at {f:g} Hz (no planar confinement)")
        delta = w.strength * beta if w.alpha_policy == "fixed_alpha" else w.strength
        if not delta < beta:
            raise ConfigError("wall.strength", f"delta = {delta:.4g} >= beta = {beta:.4g} at {f:g} Hz")

    i = cfg.init
    if i.kind not in INIT_KINDS:
        raise ConfigError("init.kind", f"unknown init kind {i.kind!r}; choose from {INIT_KINDS}")
    if i.kind != "equilibrium":
        _positive(i.temperature_k, "init.temperature_k")
    _positive(i.metropolis_sweeps, "init.metropolis_sweeps", integer=True)
    _positive(i.equilibrium_starts, "init.equilibrium_starts", integer=True)

    las = cfg.laser
    _positive(las.wavelength_m, "laser.wavelength_m")
    _positive(las.gamma0_hz, "laser.gamma0_hz")
    _positive(las.saturation_parallel, "laser.saturation_parallel", allow_zero=True)
    _positive(las.saturation_perp, "laser.saturation_perp", allow_zero=True)
    _positive(las.waist_m, "laser.waist_m")
    for name in ("detuning_parallel_hz", "detuning_perp_hz", "offset_y_m"):
        v = getattr(las, name)
        if not isinstance(v, (int, float)) or not np.isfinite(v):
            raise ConfigError(f"laser.{name}", f"expected a finite number, got {v!r}")

    if not cfg.phases:
        raise ConfigError("phases", "at least one phase is required")
    seen = set()
    for k, p in enumerate(cfg.phases):
        _positive(p.duration_s, f"phases[{k}].duration_s")
        if p.name in seen:
            raise ConfigError(f"phases[{k}].name", f"duplicate phase name {p.name!r}")
        seen.add(p.name)
        for b in p.beams:
            if b not in BEAM_NAMES:
                raise ConfigError(f"phases[{k}].beams", f"unknown beam {b!r}; choose from {BEAM_NAMES}")
        if p.name == "ramp" and p.beams:
            raise ConfigError(f"phases[{k}].beams", "the ramp phase runs without cooling")

    ig = cfg.integrator
    _positive(ig.dt_s, "integrator.dt_s")
    _positive(ig.record_stride, "integrator.record_stride", integer=True)
    steps = 2 * np.pi / trap.omega_c / ig.dt_s
    if steps < 50:
        raise ConfigError("integrator.dt_s", f"resolves the cyclotron period with {steps:.1f} < 50 steps")
    for k, p in enumerate(cfg.phases):
        nsteps = p.duration_s / ig.dt_s
        if abs(nsteps - round(nsteps)) > 1e-6 * max(nsteps, 1):
            raise ConfigError(f"phases[{k}].duration_s", "must be a whole number of time steps")

    e = cfg.ensemble
    _positive(e.n_members, "ensemble.n_members", integer=True)
    if not isinstance(e.seed, (int, np.integer)) or isinstance(e.seed, bool) or not 0 <= e.seed < 2**64:
        raise ConfigError("ensemble.seed", f"expected an unsigned 64-bit integer, got {e.seed!r}")

    a = cfg.analysis
    _positive(a.average_window_s, "analysis.average_window_s")
    if a.psd_phase is not None and a.psd_phase not in seen:
        raise ConfigError("analysis.psd_phase", f"no phase named {a.psd_phase!r}")


# --------------------------------------------------------------------------- presets

def _preset_fig1() -> list[ExperimentConfig]:
    """Ramp-protocol comparison: N=50, 200 -> 190 kHz over 1 ms, then 1 ms hold."""
    out = []
    for kind, policy, label in (("linear", "fixed_delta", "linear_fixed_delta"),
                                ("linear", "fixed_alpha", "linear_fixed_alpha"),
                                ("half_cosine", "fixed_alpha", "half_cosine_fixed_alpha")):
        strength = 0.5 if policy == "fixed_alpha" else 0.5 * compute_beta(TrapConfig(), 2 * np.pi * 200e3)
        out.append(ExperimentConfig(
            name=f"fig1_{label}", n_ions=50,
            phases=[Phase("ramp", 1e-3), Phase("hold", 1e-3)],
            wall=WallSection(kind, 200e3, 190e3, policy, strength),
            analysis=AnalysisSection(energies=False, catalog=False, pe_offset=True),
            output=OutputSection(dir=f"fig1/{label}", save_trajectories=True)))
    return out


def _preset_fig2() -> list[ExperimentConfig]:
    """Wall-strength scan: N=20, half-cosine 200 -> 180 kHz over 1 ms."""
    return [ExperimentConfig(
        name=f"fig2_alpha{a:.1f}", n_ions=20,
        phases=[Phase("ramp", 1e-3), Phase("hold", 1e-3)],
        wall=WallSection("half_cosine", 200e3, 180e3, "fixed_alpha", a),
        analysis=AnalysisSection(energies=False, catalog=False, pe_offset=True),
        output=OutputSection(dir=f"fig2/alpha{a:.1f}")) for a in (0.1, 0.2, 0.3, 0.4, 0.5)]


def _preset_fig3() -> list[ExperimentConfig]:
    """Adiabatic E x B cooling (ensemble scaled from 128 to 16 members)."""
    return [ExperimentConfig(
        name="fig3", n_ions=54,
        phases=[Phase("ramp", 20e-3), Phase("hold", 1e-3)],
        wall=WallSection("half_cosine", 200e3, 180e3, "fixed_alpha", 1 / 3),
        init=InitSection("mode_thermal", 1e-3),
        ensemble=EnsembleSection(16, 2024),
        output=OutputSection(dir="fig3"))]


def _preset_fig4() -> list[ExperimentConfig]:
    """Ramp, 1 ms axial cooling, then 12.5 ms free evolution for the drumhead spectrum."""
    return [ExperimentConfig(
        name="fig4", n_ions=54,
        phases=[Phase("ramp", 20e-3), Phase("cool", 1e-3, ["axial"]), Phase("record", 12.5e-3)],
        wall=WallSection("half_cosine", 200e3, 180e3, "fixed_alpha", 1 / 3),
        init=InitSection("mode_thermal", 1e-3),
        ensemble=EnsembleSection(4, 2025),
        analysis=AnalysisSection(psd_phase="record"),
        output=OutputSection(dir="fig4"))]


def _preset_fig5() -> list[ExperimentConfig]:
    """Cooling a 100 mK thermal cloud near the one-to-two-plane transition (ensemble scaled to 8)."""
    return [ExperimentConfig(
        name="fig5_195kHz", n_ions=100,
        phases=[Phase("cool", 20e-3, ["axial", "planar"])],
        wall=WallSection("constant", 195e3, None, "fixed_alpha", 0.5),
        init=InitSection("metropolis", 0.1),
        integrator=IntegratorSection(record_stride=2500),
        ensemble=EnsembleSection(8, 2026),
        output=OutputSection(dir="fig5"))]


def _preset_quick() -> list[ExperimentConfig]:
    """Small smoke run (N=7, 0.2 ms ramp) for checking an installation."""
    return [ExperimentConfig(
        name="quick", n_ions=7,
        phases=[Phase("ramp", 0.2e-3), Phase("hold", 0.1e-3)],
        wall=WallSection("half_cosine", 200e3, 190e3, "fixed_alpha", 0.5),
        init=InitSection("mode_thermal", 1e-3, equilibrium_starts=4),
        ensemble=EnsembleSection(2, 1),
        analysis=AnalysisSection(average_window_s=0.1e-3, pe_offset=True),
        output=OutputSection(dir="quick"))]


PRESETS = {
    "fig1": _preset_fig1,
    "fig2": _preset_fig2,
    "fig3": _preset_fig3,
    "fig4": _preset_fig4,
    "fig5": _preset_fig5,
    "quick": _preset_quick,
}


def preset(name: str) -> list[ExperimentConfig]:
    """Validated configs for a named figure reproduction."""
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfgs = PRESETS[name]()
    for c in cfgs:
        validate(c)
    return cfgs


def preset_descriptions() -> dict[str, str]:
    return {k: (f.__doc__ or "").strip() for k, f in PRESETS.items()}
