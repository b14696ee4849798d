"""Stochastic Doppler cooling with photon recoil.

Two-level saturated-Lorentzian scattering; each step an ion scatters from a
beam with probability ``rate * dt`` and receives ``hbar k`` along the beam
plus ``hbar k`` in an isotropically random emission direction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from . import _kernels
from .core import HBAR, KB, CrystalState, TrapConfig
from .errors import PenningError, TimeStepError

GAMMA0 = 2 * np.pi * 18e6
WAVELENGTH = 313e-9


@dataclass(frozen=True)
class BeamConfig:
    geometry: Literal["axial", "planar"]
    wavelength: float
    linewidth: float
    saturation: float
    detuning: float
    direction: tuple[float, float, float]
    waist: float = 0.0
    offset_y: float = 0.0

    def __post_init__(self):
        if not self.linewidth > 0:
            raise ValueError("linewidth must be positive")
        if self.saturation < 0:
            raise ValueError("saturation must be non-negative")
        if self.geometry == "planar" and not self.waist > 0:
            raise ValueError("planar beam needs a positive waist")
        if self.geometry not in ("axial", "planar"):
            raise ValueError(f"unknown beam geometry {self.geometry!r}")
        norm = float(np.linalg.norm(self.direction))
        if not np.isclose(norm, 1.0):
            object.__setattr__(self, "direction", tuple(float(c) / norm for c in self.direction))

    @property
    def wavenumber(self) -> float:
        return 2 * np.pi / self.wavelength

    def row(self) -> np.ndarray:
        waist = self.waist if self.geometry == "planar" else 0.0
        return np.array([*self.direction, self.wavenumber, self.linewidth, self.saturation,
                         self.detuning, waist, 0.0, self.offset_y, 0.0])


@dataclass(frozen=True)
class ScatterSample:
    occurred: bool
    recoil_momentum: np.ndarray


def axial_beams(saturation: float = 5e-3, detuning: float = -GAMMA0 / 2,
                wavelength: float = WAVELENGTH, linewidth: float = GAMMA0) -> list[BeamConfig]:
    """Counter-propagating pair along +/- z."""
    return [BeamConfig("axial", wavelength, linewidth, saturation, detuning, (0.0, 0.0, s))
            for s in (1.0, -1.0)]


def planar_beam(saturation: float = 1.0, detuning: float = -2 * np.pi * 40e6, waist: float = 30e-6,
                offset_y: float = 20e-6, wavelength: float = WAVELENGTH,
                linewidth: float = GAMMA0) -> BeamConfig:
    """Gaussian beam along lab +x, centred at lab y = offset_y."""
    return BeamConfig("planar", wavelength, linewidth, saturation, detuning, (1.0, 0.0, 0.0),
                      waist=waist, offset_y=offset_y)


def beam_table(beams: Sequence[BeamConfig] | None, trap: TrapConfig) -> tuple[np.ndarray, np.ndarray]:
    """Packed beam rows and per-beam recoil speeds for the compiled loop."""
    if not beams:
        return np.zeros((0, 11)), np.zeros(0)
    rows = np.array([b.row() for b in beams])
    recoil = np.array([HBAR * b.wavenumber / trap.mass for b in beams])
    return rows, recoil


def scattering_rate(velocity, position, beam: BeamConfig) -> float:
    """Photon scattering rate (1/s) for one ion."""
    v = np.asarray(velocity, dtype=float)
    r = np.asarray(position, dtype=float)
    return float(_kernels.scatter_rate(v[0], v[1], v[2], r[0], r[1], r[2], beam.row()))


def apply_cooling_step(state: CrystalState, beams: Sequence[BeamConfig], dt: float,
                       rng: np.random.Generator, trap: TrapConfig) -> CrystalState:
    """Return a copy of ``state`` after one scattering pass of duration ``dt``."""
    if state.frame != "lab":
        raise PenningError("laser beams act on lab-frame states")
    out = state.copy()
    rows, recoil = beam_table(beams, trap)
    if rows.shape[0] == 0:
        return out
    _kernels.seed_rng(int(rng.integers(2**32)))
    status, _ = _kernels.cooling_pass(out.positions, out.velocities, state.n_ions, rows, dt, recoil)
    if status == _kernels.STEP_TOO_LARGE:
        raise TimeStepError(f"scattering probability per step >= 0.1 at dt = {dt:.3e} s")
    return out


def sample_scatter(velocity, position, beam: BeamConfig, dt: float, rng: np.random.Generator,
                   trap: TrapConfig) -> ScatterSample:
    """Single-ion, single-beam scattering draw (reference path, numpy RNG)."""
    p = scattering_rate(velocity, position, beam) * dt
    if p >= 0.1:
        raise TimeStepError(f"scattering probability {p:.3f} per step >= 0.1")
    if rng.random() >= p:
        return ScatterSample(False, np.zeros(3))
    hk = HBAR * beam.wavenumber
    emit = rng.standard_normal(3)
    emit /= np.linalg.norm(emit)
    return ScatterSample(True, hk * (np.asarray(beam.direction) + emit))


def doppler_limit(gamma0: float) -> float:
    """Two-level Doppler temperature ``hbar gamma0 / (2 k_B)`` in K."""
    if not gamma0 > 0:
        raise ValueError("gamma0 must be positive")
    return HBAR * gamma0 / (2 * KB)
