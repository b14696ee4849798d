"""Linear normal modes in canonical coordinates.

Energy matrix ``E = diag(K, M)`` on ``(q, qdot)`` (co-rotating frame),
canonical momenta ``p = M qdot + B q`` with ``p_x = m xdot - C y``,
``p_y = m ydot + C x`` and ``C = m (wc - 2 wr) / 2``, Hamiltonian matrix
``H = T^-T E T^-1``. Modes are normalized so that each carries
``E = w (Q^2 + P^2) / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CrystalState, TrapConfig, WallParams, rotating_hessian
from .equilibrium import EquilibriumConfig
from .errors import InstabilityError, PenningError
from .guiding_center import characteristic_scales

EXB, DRUMHEAD, CYCLOTRON = "exb", "drumhead", "cyclotron"


@dataclass(frozen=True)
class EnergyMatrix:
    stiffness: np.ndarray
    mass: np.ndarray
    assembled: np.ndarray


@dataclass(frozen=True)
class CanonicalTransform:
    t_matrix: np.ndarray
    c_coefficient: float

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.t_matrix)


@dataclass
class ModeSpectrum:
    frequencies: np.ndarray  # (3N,) rad/s ascending
    e_vectors: np.ndarray  # (6N, 3N) canonical "Q" directions
    f_vectors: np.ndarray  # (6N, 3N) canonical "P" directions
    branches: np.ndarray  # (3N,) of EXB / DRUMHEAD / CYCLOTRON
    com_flags: np.ndarray  # (3N,) bool
    hamiltonian: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.frequencies.size

    def branch_mask(self, branch: str) -> np.ndarray:
        return self.branches == branch

    def branch_counts(self) -> dict[str, int]:
        return {b: int(np.sum(self.branches == b)) for b in (EXB, DRUMHEAD, CYCLOTRON)}


@dataclass
class ModeEnergies:
    energies: np.ndarray
    actions: np.ndarray
    linearization_warning: bool = False


def build_energy_matrix(eq: EquilibriumConfig, trap: TrapConfig, wall: WallParams) -> EnergyMatrix:
    k = rotating_hessian(eq.positions, trap, wall)
    n3 = k.shape[0]
    mass = trap.mass * np.eye(n3)
    assembled = np.zeros((2 * n3, 2 * n3))
    assembled[:n3, :n3] = k
    assembled[n3:, n3:] = mass
    return EnergyMatrix(stiffness=k, mass=mass, assembled=assembled)


def canonical_transform(trap: TrapConfig, omega_r: float, n_ions: int) -> CanonicalTransform:
    n, n3 = n_ions, 3 * n_ions
    c = 0.5 * trap.mass * (trap.omega_c - 2.0 * omega_r)
    b = np.zeros((n3, n3))
    b[:n, n:2 * n] = -c * np.eye(n)
    b[n:2 * n, :n] = c * np.eye(n)
    t = np.zeros((2 * n3, 2 * n3))
    t[:n3, :n3] = np.eye(n3)
    t[n3:, :n3] = b
    t[n3:, n3:] = trap.mass * np.eye(n3)
    return CanonicalTransform(t_matrix=t, c_coefficient=c)


def canonical_hamiltonian(e: EnergyMatrix, transform: CanonicalTransform) -> np.ndarray:
    t = transform.t_matrix
    if t.shape != e.assembled.shape:
        raise ValueError("energy matrix and transform shapes differ")
    try:
        t_inv = np.linalg.inv(t)
    except np.linalg.LinAlgError as exc:
        raise PenningError("canonical transform is singular") from exc
    h = t_inv.T @ e.assembled @ t_inv
    return 0.5 * (h + h.T)


def _scaling(h: np.ndarray) -> tuple[np.ndarray, float]:
    """Diagonal symplectic rescaling making both blocks O(1); returns (s, l*p)."""
    n3 = h.shape[0] // 2
    kq = np.mean(np.abs(np.diag(h)[:n3]))
    kp = np.mean(np.abs(np.diag(h)[n3:]))
    length = kq ** -0.5
    mom = kp ** -0.5
    s = np.concatenate([np.full(n3, length), np.full(n3, mom)])
    return s, length * mom


def _symplectic_basis(h: np.ndarray):
    """Frequencies and real (e, f) pairs with e^T H e = f^T H f = w, e^T H f = 0."""
    n6 = h.shape[0]
    n3 = n6 // 2
    s, lp = _scaling(h)
    hs = h * s[:, None] * s[None, :]
    w_h = np.linalg.eigvalsh(hs)
    if w_h[0] <= 1e-12 * w_h[-1]:
        raise InstabilityError(f"Hamiltonian matrix is not positive definite (eigenvalue {w_h[0]:.3e})",
                               w_h[0])
    j = np.block([[np.zeros((n3, n3)), np.eye(n3)], [-np.eye(n3), np.zeros((n3, n3))]])
    a = j @ hs / lp
    lam, vec = np.linalg.eig(a)
    pos = lam.imag > 0
    if pos.sum() != n3:
        raise InstabilityError("dynamics eigenvalues are not in +/- i w pairs", lam[np.argmax(np.abs(lam.real))])
    lam, vec = lam[pos], vec[:, pos]
    order = np.argsort(lam.imag)
    omega = lam.imag[order]
    vec = vec[:, order]
    # H-orthonormalize within (near-)degenerate clusters
    i = 0
    while i < n3:
        k = i + 1
        while k < n3 and omega[k] - omega[k - 1] <= 1e-8 * omega[k]:
            k += 1
        for p in range(i, k):
            v = vec[:, p]
            for r in range(i, p):
                u = vec[:, r]
                v = v - (u.conj() @ hs @ v) / (u.conj() @ hs @ u) * u
            vec[:, p] = v
        i = k
    norm = np.real(np.einsum("ik,ij,jk->k", vec.conj(), hs, vec))
    vec = vec * np.sqrt(2.0 * omega / norm)[None, :]
    e_vec = vec.real * s[:, None]
    f_vec = vec.imag * s[:, None]
    return omega, e_vec, f_vec


def single_ion_planar_frequencies(trap: TrapConfig, wall: WallParams) -> tuple[float, float]:
    """(E x B, cyclotron) single-ion rotating-frame planar frequencies."""
    m, wz2 = trap.mass, trap.omega_z**2
    k = np.diag([m * wz2 * (wall.beta + wall.delta), m * wz2 * (wall.beta - wall.delta), m * wz2])
    e = EnergyMatrix(k, m * np.eye(3), np.block([[k, np.zeros((3, 3))], [np.zeros((3, 3)), m * np.eye(3)]]))
    h = canonical_hamiltonian(e, canonical_transform(trap, wall.omega_r, 1))
    omega, e_vec, f_vec = _symplectic_basis(h)
    axial = np.abs(e_vec[2]) + np.abs(f_vec[2])
    planar = np.sort(omega[np.argsort(axial)[:2]])
    return float(planar[0]), float(planar[1])


def diagonalize(h: np.ndarray, trap: TrapConfig, wall: WallParams) -> ModeSpectrum:
    """Normal modes of the Hamiltonian matrix, with branch labels and COM flags."""
    omega, e_vec, f_vec = _symplectic_basis(h)
    n3 = omega.size
    n = n3 // 3
    pos_e, pos_f = e_vec[:n3], f_vec[:n3]
    weight = pos_e**2 + pos_f**2
    total = weight.sum(axis=0)
    axial_w = weight[2 * n:].sum(axis=0) / total
    w_exb, w_cyc = single_ion_planar_frequencies(trap, wall)
    split = np.sqrt(w_exb * w_cyc)
    branches = np.where(axial_w > 0.5, DRUMHEAD, np.where(omega < split, EXB, CYCLOTRON)).astype(object)

    com = np.zeros(n3, dtype=bool)
    ones = np.ones(n) / np.sqrt(n)
    overlap_z = ((ones @ pos_e[2 * n:]) ** 2 + (ones @ pos_f[2 * n:]) ** 2) / total
    overlap_xy = sum((ones @ blk[a * n:(a + 1) * n]) ** 2 for blk in (pos_e, pos_f) for a in (0, 1)) / total
    for branch, ov in ((DRUMHEAD, overlap_z), (EXB, overlap_xy), (CYCLOTRON, overlap_xy)):
        idx = np.flatnonzero(branches == branch)
        if idx.size:
            com[idx[np.argmax(ov[idx])]] = True
    return ModeSpectrum(frequencies=omega, e_vectors=e_vec, f_vectors=f_vec,
                        branches=np.array(branches, dtype=str), com_flags=com, hamiltonian=h)


@dataclass
class ModeAnalysis:
    """Bundle of everything needed to project states onto modes."""
    eq: EquilibriumConfig
    trap: TrapConfig
    wall: WallParams
    energy_matrix: EnergyMatrix
    transform: CanonicalTransform
    spectrum: ModeSpectrum


def analyze_modes(eq: EquilibriumConfig, trap: TrapConfig, wall: WallParams) -> ModeAnalysis:
    em = build_energy_matrix(eq, trap, wall)
    tr = canonical_transform(trap, wall.omega_r, eq.n_ions)
    spec = diagonalize(canonical_hamiltonian(em, tr), trap, wall)
    return ModeAnalysis(eq, trap, wall, em, tr, spec)


def canonical_coordinates(positions: np.ndarray, velocities: np.ndarray, eq: EquilibriumConfig,
                          transform: CanonicalTransform) -> np.ndarray:
    """Rotating-frame deviations ``(q - q_eq, qdot)`` -> canonical ``Z_c``; accepts (3N,) or (F, 3N)."""
    dq = np.asarray(positions) - eq.positions
    zv = np.concatenate([dq, np.asarray(velocities)], axis=-1)
    return zv @ transform.t_matrix.T


def mode_amplitudes(zc: np.ndarray, spectrum: ModeSpectrum) -> tuple[np.ndarray, np.ndarray]:
    hz = zc @ spectrum.hamiltonian  # H symmetric
    q = hz @ spectrum.e_vectors / spectrum.frequencies
    p = hz @ spectrum.f_vectors / spectrum.frequencies
    return q, p


def project_frames(positions: np.ndarray, velocities: np.ndarray, eq: EquilibriumConfig,
                   spectrum: ModeSpectrum, transform: CanonicalTransform) -> np.ndarray:
    """Per-mode energies (J) for a stack of rotating-frame frames, shape (F, 3N)."""
    q, p = mode_amplitudes(canonical_coordinates(positions, velocities, eq, transform), spectrum)
    return 0.5 * spectrum.frequencies * (q**2 + p**2)


def relative_mode_energies(positions: np.ndarray, velocities: np.ndarray, ref_positions: np.ndarray,
                           ref_velocities: np.ndarray, spectrum: ModeSpectrum,
                           transform: CanonicalTransform) -> np.ndarray:
    """Per-mode energies (J) of the difference between two rotating-frame trajectories.

    In the linear regime this isolates a small excitation riding on a driven
    reference motion (for instance the lag of a zero-temperature crystal
    following a wall ramp).
    """
    dz = np.concatenate([np.asarray(positions) - ref_positions,
                         np.asarray(velocities) - ref_velocities], axis=-1)
    q, p = mode_amplitudes(dz @ transform.t_matrix.T, spectrum)
    return 0.5 * spectrum.frequencies * (q**2 + p**2)


def project_mode_energies(state: CrystalState, eq: EquilibriumConfig, spectrum: ModeSpectrum,
                          transform: CanonicalTransform, trap: TrapConfig | None = None,
                          wall: WallParams | None = None) -> ModeEnergies:
    if state.frame != "rotating":
        raise PenningError("mode projection needs a rotating-frame state")
    energies = project_frames(state.positions, state.velocities, eq, spectrum, transform)
    warn = False
    if trap is not None and wall is not None:
        l0 = characteristic_scales(trap, wall.beta).l0
        n = eq.n_ions
        rms = np.sqrt(np.sum((state.positions - eq.positions) ** 2) / n)
        warn = bool(rms > 0.3 * l0)
    return ModeEnergies(energies=energies, actions=energies / spectrum.frequencies, linearization_warning=warn)


def state_from_amplitudes(q: np.ndarray, p: np.ndarray, eq: EquilibriumConfig, spectrum: ModeSpectrum,
                          transform: CanonicalTransform, time: float = 0.0) -> CrystalState:
    """Rotating-frame state with canonical mode amplitudes (Q, P) about ``eq``."""
    zc = spectrum.e_vectors @ q + spectrum.f_vectors @ p
    zv = np.linalg.solve(transform.t_matrix, zc)
    n3 = eq.positions.size
    return CrystalState(eq.positions + zv[:n3], zv[n3:], time, "rotating")


def adiabatic_energy_prediction(e_initial: float, omega_initial: float, omega_final: float) -> float:
    """Energy after a slow frequency change at constant action E / w."""
    return e_initial * (omega_final / omega_initial)


def exb_energy_prediction(e_initial: float, beta_initial: float, beta_final: float) -> float:
    """E x B energy after a slow change of planar confinement (frequencies scale with beta)."""
    return e_initial * (beta_final / beta_initial)
