"""Rotating-wall schedules and lab-frame time integration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from . import _kernels
from .cooling import BeamConfig, beam_table
from .core import CrystalState, TrapConfig, WallParams, compute_beta, rotating_frame_arrays
from .errors import ConfinementError, IonEscapeError, PenningError, TimeStepError
from .guiding_center import characteristic_scales

_KINDS = {"constant": _kernels.KIND_CONSTANT, "linear": _kernels.KIND_LINEAR,
          "half_cosine": _kernels.KIND_HALF_COSINE}
_POLICIES = {"fixed_delta": _kernels.POLICY_FIXED_DELTA, "fixed_alpha": _kernels.POLICY_FIXED_ALPHA}


@dataclass(frozen=True)
class WallSchedule:
    """Wall frequency ramp from ``omega_i`` to ``omega_f`` starting at ``t_start``.

    ``delta_or_alpha`` is the wall strength delta (``fixed_delta``) or the
    ratio delta/beta (``fixed_alpha``).
    """
    kind: Literal["constant", "linear", "half_cosine"]
    omega_i: float
    omega_f: float | None = None
    ramp_time: float = 0.0
    alpha_policy: Literal["fixed_delta", "fixed_alpha"] = "fixed_alpha"
    delta_or_alpha: float = 0.5
    t_start: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.alpha_policy not in _POLICIES:
            raise ValueError(f"unknown alpha policy {self.alpha_policy!r}")
        if self.kind == "constant":
            object.__setattr__(self, "omega_f", self.omega_i)
        elif not self.ramp_time > 0:
            raise ValueError("ramp_time must be positive for a ramp")
        if self.omega_f is None:
            raise ValueError("omega_f required for a ramp")
        if not self.omega_i > 0 or not self.omega_f > 0:
            raise ValueError("wall frequencies must be positive")
        if self.delta_or_alpha < 0:
            raise ValueError("wall strength must be non-negative")

    @classmethod
    def constant(cls, omega_r: float, *, alpha: float | None = None, delta: float | None = None):
        if (alpha is None) == (delta is None):
            raise ValueError("give exactly one of alpha, delta")
        if alpha is not None:
            return cls("constant", omega_r, alpha_policy="fixed_alpha", delta_or_alpha=alpha)
        return cls("constant", omega_r, alpha_policy="fixed_delta", delta_or_alpha=delta)

    @property
    def end_time(self) -> float:
        return self.t_start + (self.ramp_time if self.kind != "constant" else 0.0)

    def kernel_args(self):
        return (_KINDS[self.kind], float(self.omega_i), float(self.omega_f),
                float(self.ramp_time) if self.kind != "constant" else 1.0, float(self.t_start),
                _POLICIES[self.alpha_policy], float(self.delta_or_alpha))

    def describe(self) -> dict:
        return {"kind": self.kind, "omega_i": self.omega_i, "omega_f": self.omega_f,
                "ramp_time": self.ramp_time, "alpha_policy": self.alpha_policy,
                "delta_or_alpha": self.delta_or_alpha, "t_start": self.t_start}


def omega_r_at(schedule: WallSchedule, t):
    """Wall frequency (rad/s); constant before ``t_start`` and after the ramp."""
    k, wi, wf, ramp, ts, _, _ = schedule.kernel_args()
    if np.ndim(t):
        return np.array([_kernels.omega_at(k, wi, wf, ramp, ts, float(x)) for x in np.ravel(t)]).reshape(np.shape(t))
    return _kernels.omega_at(k, wi, wf, ramp, ts, float(t))


def theta_r_at(schedule: WallSchedule, t):
    """Integrated wall angle (rad), analytic."""
    k, wi, wf, ramp, ts, _, _ = schedule.kernel_args()
    if np.ndim(t):
        return np.array([_kernels.theta_at(k, wi, wf, ramp, ts, float(x)) for x in np.ravel(t)]).reshape(np.shape(t))
    return _kernels.theta_at(k, wi, wf, ramp, ts, float(t))


def delta_at(schedule: WallSchedule, trap: TrapConfig, t: float) -> float:
    w = omega_r_at(schedule, t)
    beta = compute_beta(trap, w)
    if not beta > 0:
        raise ConfinementError(f"beta = {beta:.4g} <= 0 at t = {t:.4e} s")
    if schedule.alpha_policy == "fixed_delta":
        return float(schedule.delta_or_alpha)
    return float(schedule.delta_or_alpha * beta)


def wall_at(schedule: WallSchedule, trap: TrapConfig, t: float) -> WallParams:
    w = float(omega_r_at(schedule, t))
    return WallParams(omega_r=w, delta=delta_at(schedule, trap, t), beta=compute_beta(trap, w))


def check_schedule(schedule: WallSchedule, trap: TrapConfig):
    """Confinement (0 <= delta < beta) at both ramp ends; beta is concave in omega_r."""
    for t in (0.0, schedule.end_time):
        wall = wall_at(schedule, trap, t)
        if not wall.delta < wall.beta:
            raise ConfinementError(f"delta = {wall.delta:.4g} >= beta = {wall.beta:.4g} at t = {t:.4e} s")


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-9
    scheme: Literal["boris"] = "boris"
    record_stride: int = 250

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme != "boris":
            raise ValueError("only the Boris scheme is implemented")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    def check(self, trap: TrapConfig):
        steps = 2 * np.pi / trap.omega_c / self.dt
        if steps < 50:
            raise PenningError(f"dt resolves the cyclotron period with only {steps:.1f} steps (< 50)")


@dataclass
class Trajectory:
    """Lab-frame frames recorded every ``stride`` steps (initial state not included)."""
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    schedule: WallSchedule
    trap: TrapConfig
    dt: float
    stride: int
    final_state: CrystalState
    n_scatter: int = 0

    @property
    def n_frames(self) -> int:
        return self.times.size

    @property
    def n_ions(self) -> int:
        return self.positions.shape[1] // 3

    def rotating(self, times_mask=None) -> tuple[np.ndarray, np.ndarray]:
        """Frames in the co-rotating frame: (positions, velocities)."""
        t = self.times if times_mask is None else self.times[times_mask]
        pos = self.positions if times_mask is None else self.positions[times_mask]
        vel = self.velocities if times_mask is None else self.velocities[times_mask]
        return rotating_frame_arrays(pos, vel, theta_r_at(self.schedule, t), omega_r_at(self.schedule, t))

    def window(self, start: float, stop: float = np.inf) -> np.ndarray:
        return (self.times >= start - 0.5 * self.dt) & (self.times <= stop + 0.5 * self.dt)


def evolve(state: CrystalState, trap: TrapConfig, schedule: WallSchedule, integrator: IntegratorConfig,
           duration: float, cooling: Sequence[BeamConfig] | None = None,
           rng: np.random.Generator | None = None, *, record: bool = True) -> Trajectory:
    """Integrate the lab-frame equations of motion for ``duration`` seconds.

    The wall angle and strength follow ``schedule`` in absolute simulation
    time, so successive calls continue the same ramp. ``rng`` seeds the
    scattering stream; it is only consumed when beams are present.
    """
    if state.frame != "lab":
        raise PenningError("evolve needs a lab-frame state")
    integrator.check(trap)
    check_schedule(schedule, trap)
    n = state.n_ions
    dt = integrator.dt
    nsteps = int(round(duration / dt))
    stride = integrator.record_stride
    n_frames = nsteps // stride if record else 0
    out_t = np.empty(n_frames)
    out_pos = np.empty((n_frames, 3 * n))
    out_vel = np.empty((n_frames, 3 * n))
    rows, recoil = beam_table(cooling, trap)
    if rows.shape[0]:
        rng = rng if rng is not None else np.random.default_rng()
        _kernels.seed_rng(int(rng.integers(2**32)))
    beta_min = min(compute_beta(trap, schedule.omega_i), compute_beta(trap, schedule.omega_f))
    r_escape = 100 * characteristic_scales(trap, beta_min).l0
    pos = state.positions.copy()
    vel = state.velocities.copy()
    status, step, frames, scatters = _kernels.integrate(
        pos, vel, n, float(state.time), nsteps, dt, stride if record else nsteps + 1,
        trap.omega_z**2, trap.omega_c, trap.kq2 / trap.mass,
        *schedule.kernel_args(), rows, recoil, r_escape, out_t, out_pos, out_vel)
    t_now = state.time + (step + 1) * dt
    if status == _kernels.ESCAPED:
        r = pos.reshape(3, n)
        raise IonEscapeError(t_now, float(np.max(np.sqrt((r**2).sum(axis=0)))))
    if status == _kernels.STEP_TOO_LARGE:
        raise TimeStepError(f"scattering probability per step >= 0.1 at t = {t_now:.4e} s")
    final = CrystalState(pos, vel, state.time + nsteps * dt, "lab")
    return Trajectory(out_t, out_pos, out_vel, schedule, trap, dt, stride, final, scatters)
