"""Post-processing of trajectories: branch energies, PE offsets, drumhead spectra."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import rotating_potential
from .dynamics import Trajectory, wall_at
from .errors import ConfigurationMismatchError, ResolutionError
from .guiding_center import characteristic_scales
from .modes import CYCLOTRON, DRUMHEAD, EXB, ModeAnalysis, project_frames


@dataclass
class BranchEnergySeries:
    """Mean energy per mode (J) of each branch, one entry per frame."""
    times: np.ndarray
    exb: np.ndarray
    drumhead: np.ndarray
    cyclotron: np.ndarray
    exb_without_com: np.ndarray
    mode_energies: np.ndarray  # (F, 3N)

    def window_average(self, start: float, stop: float = np.inf) -> dict[str, float]:
        sel = (self.times >= start) & (self.times <= stop)
        if not sel.any():
            raise ValueError("empty averaging window")
        return {k: float(getattr(self, k)[sel].mean())
                for k in ("exb", "drumhead", "cyclotron", "exb_without_com")}

    def mode_average(self, start: float, stop: float = np.inf) -> np.ndarray:
        sel = (self.times >= start) & (self.times <= stop)
        return self.mode_energies[sel].mean(axis=0)


def _check_match(pos_rot: np.ndarray, ma: ModeAnalysis, tol: float = 0.3):
    l0 = characteristic_scales(ma.trap, ma.wall.beta).l0
    n = ma.eq.n_ions
    rms = np.sqrt(np.sum((pos_rot - ma.eq.positions) ** 2, axis=1) / n)
    if np.median(rms) > tol * l0:
        raise ConfigurationMismatchError(
            f"median RMS deviation {np.median(rms) / l0:.2f} l0 from the reference equilibrium")


def branch_energies(traj: Trajectory, ma: ModeAnalysis, frames: np.ndarray | None = None,
                    window: float | None = None) -> BranchEnergySeries:
    """Project frames onto the modes of ``ma`` and average per branch.

    ``frames`` selects a subset (boolean mask); ``window`` keeps only the
    trailing window of that length.
    """
    mask = np.ones(traj.n_frames, bool) if frames is None else np.asarray(frames, bool).copy()
    if window is not None:
        mask &= traj.times >= traj.times[mask].max() - window - 0.5 * traj.dt
    pos, vel = traj.rotating(mask)
    _check_match(pos, ma)
    e = project_frames(pos, vel, ma.eq, ma.spectrum, ma.transform)
    return branch_series(traj.times[mask], e, ma)


def branch_series(times: np.ndarray, mode_energies: np.ndarray, ma: ModeAnalysis) -> BranchEnergySeries:
    spec = ma.spectrum
    exb = spec.branch_mask(EXB)
    exb_nc = exb & ~spec.com_flags
    return BranchEnergySeries(
        times=np.asarray(times),
        exb=mode_energies[:, exb].mean(axis=1),
        drumhead=mode_energies[:, spec.branch_mask(DRUMHEAD)].mean(axis=1),
        cyclotron=mode_energies[:, spec.branch_mask(CYCLOTRON)].mean(axis=1),
        exb_without_com=mode_energies[:, exb_nc].mean(axis=1) if exb_nc.any() else np.zeros(len(times)),
        mode_energies=mode_energies,
    )


def pe_offset_series(traj: Trajectory, reference_pe: float, frames: np.ndarray | None = None) -> np.ndarray:
    """Rotating-frame potential energy above ``reference_pe`` for each selected frame (J)."""
    mask = np.ones(traj.n_frames, bool) if frames is None else np.asarray(frames, bool)
    pos, _ = traj.rotating(mask)
    out = np.empty(pos.shape[0])
    for k, (t, p) in enumerate(zip(traj.times[mask], pos)):
        out[k] = rotating_potential(p, traj.trap, wall_at(traj.schedule, traj.trap, t)) - reference_pe
    return out


def kinetic_series(traj: Trajectory, frames: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(KE_parallel, KE_perp) in J per frame, rotating-frame velocities."""
    mask = np.ones(traj.n_frames, bool) if frames is None else np.asarray(frames, bool)
    _, vel = traj.rotating(mask)
    n = traj.n_ions
    m = traj.trap.mass
    ke_par = 0.5 * m * np.sum(vel[:, 2 * n:] ** 2, axis=1)
    ke_perp = 0.5 * m * np.sum(vel[:, :2 * n] ** 2, axis=1)
    return ke_par, ke_perp


@dataclass
class PowerSpectrum:
    frequencies: np.ndarray  # Hz
    density: np.ndarray  # m^2 / Hz, one-sided, summed over ions
    resolution: float  # Hz

    def peak_near(self, f: float, half_width_bins: int) -> float:
        """Frequency of the largest bin within ``half_width_bins`` of ``f``."""
        k = int(round(f / self.resolution))
        lo, hi = max(k - half_width_bins, 0), min(k + half_width_bins + 1, self.frequencies.size)
        return float(self.frequencies[lo + np.argmax(self.density[lo:hi])])


def one_sided_psd(signal: np.ndarray, sample_spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """Rectangular-window periodogram along axis 0, normalized so that
    ``sum(density) * df`` equals the mean-removed variance."""
    x = np.asarray(signal, dtype=float)
    x = x - x.mean(axis=0)
    m = x.shape[0]
    spec = np.abs(np.fft.rfft(x, axis=0)) ** 2 / m**2
    if m % 2 == 0:
        spec[1:-1] *= 2.0
    else:
        spec[1:] *= 2.0
    df = 1.0 / (m * sample_spacing)
    return np.fft.rfftfreq(m, sample_spacing), spec / df


def drumhead_psd(trajectories: Trajectory | Sequence[Trajectory], frames: np.ndarray | None = None,
                 min_duration: float = 10e-3) -> PowerSpectrum:
    """Ensemble-averaged axial power spectrum, summed over ions."""
    trajs = [trajectories] if isinstance(trajectories, Trajectory) else list(trajectories)
    total = None
    for tr in trajs:
        mask = np.ones(tr.n_frames, bool) if frames is None else np.asarray(frames, bool)
        t = tr.times[mask]
        spacing = tr.dt * tr.stride
        duration = t.size * spacing
        if duration < min_duration * (1 - 1e-9):
            raise ResolutionError(f"record of {duration * 1e3:.3f} ms is shorter than {min_duration * 1e3:.3f} ms")
        pos, _ = tr.rotating(mask)
        n = tr.n_ions
        freqs, dens = one_sided_psd(pos[:, 2 * n:], spacing)
        dens = dens.sum(axis=1)
        total = dens if total is None else total + dens
    return PowerSpectrum(freqs, total / len(trajs), float(freqs[1] - freqs[0]))


def match_peaks(psd: PowerSpectrum, theory_hz: np.ndarray, max_bins: int = 2,
                search_bins: int = 10) -> np.ndarray:
    """Offset (in bins) of the strongest nearby spectral peak from each theoretical line.

    The search window around each line is ``search_bins`` wide but never
    reaches halfway to a neighbouring line.
    """
    theory = np.sort(np.asarray(theory_hz, dtype=float))
    offsets = np.empty(theory.size)
    for k, f in enumerate(theory):
        gaps = np.abs(np.delete(theory, k) - f)
        half = search_bins
        if gaps.size:
            half = max(max_bins, min(search_bins, int(gaps.min() / psd.resolution / 2)))
        offsets[k] = (psd.peak_near(f, half) - f) / psd.resolution
    return offsets


def ensemble_reduce(per_member: Sequence[np.ndarray] | np.ndarray) -> dict[str, np.ndarray]:
    """Mean and member-level scatter along the member axis."""
    a = np.asarray(per_member, dtype=float)
    if a.shape[0] < 1:
        raise ValueError("need at least one member")
    return {"mean": a.mean(axis=0), "std": a.std(axis=0), "min": a.min(axis=0), "max": a.max(axis=0)}
