"""Initial conditions: thermal mode excitation and Metropolis position sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from numba import njit

from .core import KB, CrystalState, TrapConfig, WallParams, to_lab_frame
from .equilibrium import EquilibriumConfig, check_confinement, find_equilibrium
from .errors import TuningError
from .modes import CanonicalTransform, ModeSpectrum, state_from_amplitudes


@dataclass(frozen=True)
class EnsembleSpec:
    n_members: int
    seed: int
    init_kind: Literal["mode_thermal", "metropolis"]
    temperature: float

    def __post_init__(self):
        if self.n_members < 1:
            raise ValueError("n_members must be >= 1")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.init_kind not in ("mode_thermal", "metropolis"):
            raise ValueError(f"unknown init kind {self.init_kind!r}")

    def member_rng(self, member: int) -> np.random.Generator:
        """Independent stream per member, derived from (seed, member)."""
        return np.random.default_rng(np.random.SeedSequence([self.seed, member]))


def init_modes_at_temperature(eq: EquilibriumConfig, spectrum: ModeSpectrum, transform: CanonicalTransform,
                              temperature: float, rng: np.random.Generator,
                              modes: Sequence[int] | np.ndarray | None = None) -> CrystalState:
    """Rotating-frame state with every selected mode at energy ``k_B T`` and a random phase.

    ``modes`` (indices or boolean mask) restricts the excitation; other
    modes are left at rest.
    """
    n_modes = spectrum.n_modes
    phases = rng.uniform(0.0, 2 * np.pi, n_modes)
    energy = np.full(n_modes, KB * temperature)
    if modes is not None:
        sel = np.zeros(n_modes, dtype=bool)
        sel[np.asarray(modes)] = True
        energy[~sel] = 0.0
    amp = np.sqrt(2.0 * energy / spectrum.frequencies)
    return state_from_amplitudes(amp * np.cos(phases), amp * np.sin(phases), eq, spectrum, transform)


@njit(cache=True)
def _delta_u(pos, n, i, nx, ny, nz, kq2, kx, ky, kz):
    ox, oy, oz = pos[i], pos[n + i], pos[2 * n + i]
    du = 0.5 * (kx * (nx * nx - ox * ox) + ky * (ny * ny - oy * oy) + kz * (nz * nz - oz * oz))
    for j in range(n):
        if j == i:
            continue
        px, py, pz = pos[j], pos[n + j], pos[2 * n + j]
        rn = math.sqrt((nx - px) ** 2 + (ny - py) ** 2 + (nz - pz) ** 2)
        ro = math.sqrt((ox - px) ** 2 + (oy - py) ** 2 + (oz - pz) ** 2)
        if rn == 0.0:
            return np.inf
        du += kq2 * (1.0 / rn - 1.0 / ro)
    return du


@njit(cache=True)
def _sweeps(pos, n, n_sweeps, step, inv_kt, kq2, kx, ky, kz, seed, record, out):
    """Sequential single-ion Gaussian-proposal sweeps; returns accepted count."""
    np.random.seed(seed)
    accepted = 0
    frame = 0
    for s in range(n_sweeps):
        for i in range(n):
            nx = pos[i] + step * np.random.standard_normal()
            ny = pos[n + i] + step * np.random.standard_normal()
            nz = pos[2 * n + i] + step * np.random.standard_normal()
            du = _delta_u(pos, n, i, nx, ny, nz, kq2, kx, ky, kz)
            if du <= 0.0 or np.random.random() < math.exp(-du * inv_kt):
                pos[i] = nx
                pos[n + i] = ny
                pos[2 * n + i] = nz
                accepted += 1
        if record > 0 and (s + 1) % record == 0 and frame < out.shape[0]:
            for k in range(3 * n):
                out[frame, k] = pos[k]
            frame += 1
    return accepted


def metropolis_accept(delta_u: float, temperature: float, u: float) -> bool:
    """Acceptance rule ``u < min(1, exp(-dU / k_B T))``."""
    return delta_u <= 0 or u < math.exp(-delta_u / (KB * temperature))


@dataclass
class MetropolisResult:
    positions: np.ndarray
    acceptance: float
    step: float
    samples: np.ndarray | None = None


def metropolis_positions(trap: TrapConfig, wall: WallParams, n_ions: int, temperature: float, n_steps: int,
                         rng: np.random.Generator, *, start: np.ndarray | None = None,
                         target: float = 0.4, record_every: int = 0) -> MetropolisResult:
    """Sample positions from ``exp(-U / k_B T)``.

    ``n_steps`` counts sweeps (N proposals each); the first 20% tune the
    proposal width toward ``target`` acceptance and are discarded.
    """
    check_confinement(wall)
    if n_steps < 10:
        raise ValueError("n_steps must be >= 10 sweeps")
    m, wz2 = trap.mass, trap.omega_z**2
    kx, ky, kz = m * wz2 * (wall.beta + wall.delta), m * wz2 * (wall.beta - wall.delta), m * wz2
    pos = (find_equilibrium(trap, wall, n_ions).positions if start is None else np.array(start, float)).copy()
    inv_kt = 1.0 / (KB * temperature)
    # thermal amplitude in the softest trap direction as the initial width
    step = math.sqrt(KB * temperature / ky)
    burn = max(n_steps // 5, 1)
    empty = np.zeros((0, 3 * n_ions))
    block = max(1, min(50, burn // 10))
    done = 0
    while done < burn:
        k = min(block, burn - done)
        acc = _sweeps(pos, n_ions, k, step, inv_kt, trap.kq2, kx, ky, kz, int(rng.integers(2**32)), 0, empty)
        rate = acc / (k * n_ions)
        step *= math.exp(2.0 * (rate - target))
        done += k
    prod = n_steps - burn
    n_rec = prod // record_every if record_every else 0
    out = np.zeros((n_rec, 3 * n_ions))
    acc = _sweeps(pos, n_ions, prod, step, inv_kt, trap.kq2, kx, ky, kz, int(rng.integers(2**32)),
                  record_every, out)
    rate = acc / max(prod * n_ions, 1)
    if not 0.1 <= rate <= 0.9:
        raise TuningError(f"Metropolis acceptance {rate:.3f} outside [0.1, 0.9] after tuning")
    return MetropolisResult(pos, rate, step, out if record_every else None)


def maxwell_boltzmann(n_ions: int, temperature: float, mass: float, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(0.0, math.sqrt(KB * temperature / mass), 3 * n_ions)


def metropolis_sample(trap: TrapConfig, wall: WallParams, n_ions: int, temperature: float, n_steps: int,
                      rng: np.random.Generator, **kwargs) -> CrystalState:
    """Thermal lab-frame state at wall angle 0: Metropolis positions, Maxwell-Boltzmann
    velocities drawn in the co-rotating frame."""
    res = metropolis_positions(trap, wall, n_ions, temperature, n_steps, rng, **kwargs)
    vel = maxwell_boltzmann(n_ions, temperature, trap.mass, rng)
    return to_lab_frame(CrystalState(res.positions, vel, 0.0, "rotating"), 0.0, wall.omega_r)
