"""Trap model, rotating-frame potential, lab-frame forces and frame changes.

Coordinates are flat arrays ordered ``(x_1..x_N, y_1..y_N, z_1..z_N)``.
All quantities are SI.

Rotation sense: for ``q*B > 0`` the crystal (and the rotating wall) turn in
the sense of the magnetron drift, i.e. with angular velocity ``-omega_r z``.
Lab coordinates map to the co-rotating frame through ``R(theta_r)``
applied directly, ``r_rot = R(theta_r) r_lab``. In that frame the
effective radial trap is ``1/2 m wz^2 beta r^2`` and the velocity-dependent
force is ``m (wc - 2 wr) v x z``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
import scipy.constants as const

from .errors import CoincidentIonsError, PenningError

KB = const.k
HBAR = const.hbar
COULOMB_CONST = 1.0 / (4.0 * np.pi * const.epsilon_0)
# 9Be+ : neutral atomic mass minus one electron (CODATA via scipy)
BE9_MASS = 9.0121831 * const.atomic_mass - const.electron_mass

Frame = Literal["lab", "rotating"]


@dataclass(frozen=True)
class IonSpecies:
    mass: float
    charge: float
    label: str = ""

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("ion mass must be positive")
        if self.charge == 0:
            raise ValueError("ion charge must be nonzero")


BE9 = IonSpecies(mass=BE9_MASS, charge=const.e, label="9Be+")


@dataclass(frozen=True)
class TrapConfig:
    b_field: float = 4.4588
    omega_z: float = 2 * np.pi * 1.58e6
    species: IonSpecies = BE9
    coulomb_const: float = COULOMB_CONST

    def __post_init__(self):
        if not self.b_field > 0:
            raise ValueError("b_field must be positive")
        if not self.omega_z > 0:
            raise ValueError("omega_z must be positive")
        if not self.omega_c > 0:
            raise ValueError("cyclotron frequency q B / m must be positive")

    @property
    def mass(self) -> float:
        return self.species.mass

    @property
    def charge(self) -> float:
        return self.species.charge

    @property
    def omega_c(self) -> float:
        return self.species.charge * self.b_field / self.species.mass

    @property
    def kq2(self) -> float:
        """Coulomb coupling ``k_e q^2`` in J m."""
        return self.coulomb_const * self.species.charge**2


NIST_TRAP = TrapConfig()


def compute_beta(trap: TrapConfig, omega_r: float) -> float:
    """Planar confinement parameter ``wr (wc - wr) / wz^2 - 1/2``."""
    return omega_r * (trap.omega_c - omega_r) / trap.omega_z**2 - 0.5


@dataclass(frozen=True)
class WallParams:
    omega_r: float
    delta: float
    beta: float

    @property
    def alpha(self) -> float:
        return self.delta / self.beta if self.beta > 0 else float("nan")

    @property
    def confining(self) -> bool:
        return self.beta > 0 and 0 <= self.delta < self.beta


def make_wall(trap: TrapConfig, omega_r: float, *, delta: float | None = None,
              alpha: float | None = None) -> WallParams:
    """Wall parameters at ``omega_r`` with either ``delta`` or ``alpha = delta/beta`` given."""
    if (delta is None) == (alpha is None):
        raise ValueError("give exactly one of delta, alpha")
    beta = compute_beta(trap, omega_r)
    if delta is None:
        delta = alpha * beta
    return WallParams(omega_r=omega_r, delta=float(delta), beta=float(beta))


@dataclass
class CrystalState:
    positions: np.ndarray
    velocities: np.ndarray
    time: float = 0.0
    frame: Frame = "lab"

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        if self.positions.shape != self.velocities.shape or self.positions.ndim != 1:
            raise ValueError("positions and velocities must be flat arrays of equal length")
        if self.positions.size % 3:
            raise ValueError("coordinate arrays must have length 3N")
        if self.frame not in ("lab", "rotating"):
            raise ValueError(f"unknown frame {self.frame!r}")

    @property
    def n_ions(self) -> int:
        return self.positions.size // 3

    def copy(self) -> "CrystalState":
        return replace(self, positions=self.positions.copy(), velocities=self.velocities.copy())


def _require_frame(state: CrystalState, frame: Frame):
    if state.frame != frame:
        raise PenningError(f"operation requires a {frame}-frame state, got {state.frame}")


def _pair_geometry(positions: np.ndarray):
    n = positions.size // 3
    r = positions.reshape(3, n)
    d = r[:, :, None] - r[:, None, :]  # d[:, i, j] = r_i - r_j
    dist = np.sqrt(np.einsum("aij,aij->ij", d, d))
    np.fill_diagonal(dist, np.inf)
    if n > 1 and dist.min() == 0.0:
        i, j = np.unravel_index(np.argmin(dist), dist.shape)
        raise CoincidentIonsError(int(min(i, j)), int(max(i, j)))
    return r, d, dist


def _trap_stiffness(trap: TrapConfig, wall: WallParams) -> np.ndarray:
    kz = trap.mass * trap.omega_z**2
    return np.array([kz * (wall.beta + wall.delta), kz * (wall.beta - wall.delta), kz])


def rotating_potential(positions: np.ndarray, trap: TrapConfig, wall: WallParams) -> float:
    """Co-rotating-frame potential energy: pair Coulomb sum plus the quadratic trap."""
    r, _, dist = _pair_geometry(np.asarray(positions, dtype=float))
    coulomb = 0.5 * trap.kq2 * np.sum(1.0 / dist)
    trap_term = 0.5 * np.sum(_trap_stiffness(trap, wall)[:, None] * r**2)
    return float(coulomb + trap_term)


def rotating_gradient(positions: np.ndarray, trap: TrapConfig, wall: WallParams) -> np.ndarray:
    r, d, dist = _pair_geometry(np.asarray(positions, dtype=float))
    inv3 = 1.0 / dist**3
    # Antisymmetric pair terms: sum_j (r_i - r_j)/|r_ij|^3 cancels exactly pairwise.
    coul = -trap.kq2 * np.einsum("aij,ij->ai", d, inv3)
    grad = coul + _trap_stiffness(trap, wall)[:, None] * r
    return grad.ravel()


def rotating_hessian(positions: np.ndarray, trap: TrapConfig, wall: WallParams) -> np.ndarray:
    """Analytic 3N x 3N Hessian of the rotating-frame potential (the stiffness matrix)."""
    r, d, dist = _pair_geometry(np.asarray(positions, dtype=float))
    n = r.shape[1]
    inv3 = 1.0 / dist**3
    inv5 = 1.0 / dist**5
    hess = np.zeros((3, n, 3, n))
    for a in range(3):
        for b in range(3):
            off = trap.kq2 * (3.0 * d[a] * d[b] * inv5 - (a == b) * inv3)
            # off[i, j] = d^2 (1/r_ij) / d r_i^a d r_i^b; the (i, j) block carries the minus sign
            hess[a, :, b, :] = -off
            hess[a, np.arange(n), b, np.arange(n)] = off.sum(axis=1)
    k = _trap_stiffness(trap, wall)
    for a in range(3):
        hess[a, np.arange(n), a, np.arange(n)] += k[a]
    hess = hess.reshape(3 * n, 3 * n)
    # (a, b) and (b, a) products round differently; make the symmetry exact
    return 0.5 * (hess + hess.T)


def potential_energy_rotating(state: CrystalState, trap: TrapConfig, wall: WallParams) -> float:
    _require_frame(state, "rotating")
    return rotating_potential(state.positions, trap, wall)


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def force_lab(state: CrystalState, trap: TrapConfig, wall_strength: float, theta_r: float) -> np.ndarray:
    """Lab-frame acceleration (m/s^2) of every ion, flat 3N array.

    Static quadrupole ``1/2 m wz^2 (z^2 - (x^2+y^2)/2)``, rotating wall
    ``1/2 m wz^2 delta [(x^2-y^2) cos 2t - 2xy sin 2t]``, Coulomb repulsion
    and the Lorentz force ``q v x B`` with ``B`` along +z.
    """
    _require_frame(state, "lab")
    n = state.n_ions
    r, d, dist = _pair_geometry(state.positions)
    v = state.velocities.reshape(3, n)
    m = trap.mass
    wz2 = trap.omega_z**2
    c2, s2 = np.cos(2 * theta_r), np.sin(2 * theta_r)
    x, y, z = r
    acc = np.empty((3, n))
    acc[0] = wz2 * (0.5 * x - wall_strength * (x * c2 - y * s2))
    acc[1] = wz2 * (0.5 * y - wall_strength * (-y * c2 - x * s2))
    acc[2] = -wz2 * z
    acc += trap.kq2 / m * np.einsum("aij,ij->ai", d, 1.0 / dist**3)
    wc = trap.omega_c
    acc[0] += wc * v[1]
    acc[1] -= wc * v[0]
    return acc.ravel()


def to_rotating_frame(state: CrystalState, theta_r: float, omega_r: float) -> CrystalState:
    """Lab -> co-rotating frame: ``r' = R(theta) r``, ``v' = R(theta) v + omega_r z x r'``."""
    _require_frame(state, "lab")
    n = state.n_ions
    rot = rotation_matrix(theta_r)
    pos = state.positions.reshape(3, n).copy()
    vel = state.velocities.reshape(3, n).copy()
    pos[:2] = rot @ pos[:2]
    vel[:2] = rot @ vel[:2]
    vel[0] -= omega_r * pos[1]
    vel[1] += omega_r * pos[0]
    return CrystalState(pos.ravel(), vel.ravel(), state.time, "rotating")


def to_lab_frame(state: CrystalState, theta_r: float, omega_r: float) -> CrystalState:
    """Inverse of :func:`to_rotating_frame`."""
    _require_frame(state, "rotating")
    n = state.n_ions
    rot_inv = rotation_matrix(-theta_r)
    pos = state.positions.reshape(3, n).copy()
    vel = state.velocities.reshape(3, n).copy()
    vel[0] += omega_r * pos[1]
    vel[1] -= omega_r * pos[0]
    pos[:2] = rot_inv @ pos[:2]
    vel[:2] = rot_inv @ vel[:2]
    return CrystalState(pos.ravel(), vel.ravel(), state.time, "lab")


def rotating_frame_arrays(positions: np.ndarray, velocities: np.ndarray, theta: np.ndarray,
                          omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized frame change for stacks of frames, shape (F, 3N)."""
    f, n3 = positions.shape
    n = n3 // 3
    pos = positions.reshape(f, 3, n).copy()
    vel = velocities.reshape(f, 3, n).copy()
    c = np.cos(theta)[:, None]
    s = np.sin(theta)[:, None]
    x, y = pos[:, 0].copy(), pos[:, 1].copy()
    pos[:, 0] = c * x - s * y
    pos[:, 1] = s * x + c * y
    vx, vy = vel[:, 0].copy(), vel[:, 1].copy()
    w = np.asarray(omega, dtype=float)[:, None]
    vel[:, 0] = c * vx - s * vy - w * pos[:, 1]
    vel[:, 1] = s * vx + c * vy + w * pos[:, 0]
    return pos.reshape(f, n3), vel.reshape(f, n3)


def rotating_energy(state: CrystalState, trap: TrapConfig, wall: WallParams) -> float:
    """Conserved rotating-frame energy ``sum 1/2 m v'^2 + U`` (constant wall)."""
    _require_frame(state, "rotating")
    ke = 0.5 * trap.mass * np.dot(state.velocities, state.velocities)
    return ke + rotating_potential(state.positions, trap, wall)


@dataclass(frozen=True)
class EnergyReport:
    ke_parallel: float
    ke_perp: float
    pe: float

    @property
    def total(self) -> float:
        return self.ke_parallel + self.ke_perp + self.pe


def energy_report(state: CrystalState, trap: TrapConfig, wall: WallParams,
                  reference_pe: float | None) -> EnergyReport:
    """Kinetic energies along/across B and potential energy above the reference equilibrium.

    ``reference_pe`` is the rotating-frame potential of the zero-temperature
    equilibrium at the current wall (an ``EquilibriumConfig.potential``).
    """
    _require_frame(state, "rotating")
    if reference_pe is None:
        raise PenningError("energy_report needs the reference equilibrium potential")
    n = state.n_ions
    v = state.velocities.reshape(3, n)
    m = trap.mass
    return EnergyReport(
        ke_parallel=0.5 * m * float(np.sum(v[2] ** 2)),
        ke_perp=0.5 * m * float(np.sum(v[0] ** 2 + v[1] ** 2)),
        pe=rotating_potential(state.positions, trap, wall) - float(reference_pe),
    )


def to_mK(energy):
    """Energy in J to the 'temperature' E / k_B in mK."""
    return np.asarray(energy) / KB * 1e3
