"""Guiding-center E x B frequencies and the beta scaling laws."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TrapConfig
from .errors import InstabilityError


@dataclass(frozen=True)
class CharacteristicScales:
    l0: float
    e0: float


@dataclass(frozen=True)
class NonlinearityEstimate:
    epsilon: float
    q_rms: float


def characteristic_scales(trap: TrapConfig, beta: float) -> CharacteristicScales:
    """``l0 = (k q^2 / (beta m wz^2 / 2))^(1/3)`` and ``E0 = m wz^2 l0^2``."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    l0 = (trap.kq2 / (0.5 * beta * trap.mass * trap.omega_z**2)) ** (1.0 / 3.0)
    return CharacteristicScales(l0=l0, e0=trap.mass * trap.omega_z**2 * l0**2)


def nonlinearity(displacements: np.ndarray, trap: TrapConfig, beta: float) -> NonlinearityEstimate:
    """RMS ion displacement from equilibrium over the characteristic length."""
    d = np.asarray(displacements, dtype=float)
    n = d.size // 3
    q_rms = float(np.sqrt(np.sum(d**2) / n))
    return NonlinearityEstimate(epsilon=q_rms / characteristic_scales(trap, beta).l0, q_rms=q_rms)


def planar_stiffness(stiffness: np.ndarray) -> np.ndarray:
    """(x, y) sub-block of a 3N x 3N stiffness matrix."""
    n = stiffness.shape[0] // 3
    return stiffness[: 2 * n, : 2 * n]


def gc_exb_frequencies(planar_stiffness: np.ndarray, trap: TrapConfig, omega_r: float) -> np.ndarray:
    """E x B frequencies (rad/s, ascending, length N) of ``J K / (m (wc - 2 wr))``."""
    k = np.asarray(planar_stiffness, dtype=float)
    n = k.shape[0] // 2
    weff = trap.omega_c - 2.0 * omega_r
    if weff == 0:
        raise ValueError("guiding-center limit undefined at wc = 2 wr")
    j = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    lam = np.linalg.eigvals(j @ k / (trap.mass * weff))
    scale = np.max(np.abs(lam)) if lam.size else 1.0
    real_part = np.abs(lam.real)
    if np.any(real_part > 1e-6 * scale):
        worst = lam[np.argmax(real_part)]
        raise InstabilityError(f"guiding-center eigenvalue {worst} has a real part", worst)
    freqs = np.sort(np.abs(lam.imag))
    # eigenvalues come in +/- i w pairs; keep one of each
    return freqs[::2].copy()


def scaling_predictions(beta: float, beta_prime: float) -> dict[str, float]:
    """Multiplicative factors for a change of planar confinement at fixed anisotropy."""
    if not (beta > 0 and beta_prime > 0):
        raise ValueError("both beta values must be positive")
    r = beta / beta_prime
    return {
        "position_factor": r ** (1.0 / 3.0),
        "stiffness_factor": 1.0 / r,
        "frequency_factor": 1.0 / r,
        "displacement_factor": r**0.5,
        "nonlinearity_factor": r ** (1.0 / 6.0),
    }
