"""Compiled inner loops: wall schedule, Doppler scattering and the Boris integrator.

Beam table rows (float64, 11 columns):
    dir_x, dir_y, dir_z, wavenumber, gamma0, saturation, detuning, waist, cx, cy, cz
``waist <= 0`` means a uniform-intensity beam.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

OK, ESCAPED, STEP_TOO_LARGE = 0, 1, 2

KIND_CONSTANT, KIND_LINEAR, KIND_HALF_COSINE = 0, 1, 2
POLICY_FIXED_DELTA, POLICY_FIXED_ALPHA = 0, 1


@njit(cache=True)
def omega_at(kind, wi, wf, ramp, t_start, t):
    if kind == KIND_CONSTANT:
        return wi
    s = t - t_start
    if s <= 0.0:
        return wi
    if s >= ramp:
        return wf
    if kind == KIND_LINEAR:
        return wi + (wf - wi) * s / ramp
    return 0.5 * (wi + wf) + 0.5 * (wi - wf) * math.cos(math.pi * s / ramp)


@njit(cache=True)
def _ramp_angle(kind, wi, wf, ramp, s):
    if kind == KIND_LINEAR:
        return wi * s + 0.5 * (wf - wi) * s * s / ramp
    return 0.5 * (wi + wf) * s + 0.5 * (wi - wf) * (ramp / math.pi) * math.sin(math.pi * s / ramp)


@njit(cache=True)
def theta_at(kind, wi, wf, ramp, t_start, t):
    if kind == KIND_CONSTANT:
        return wi * t
    if t <= t_start:
        return wi * t
    s = t - t_start
    if s <= ramp:
        return wi * t_start + _ramp_angle(kind, wi, wf, ramp, s)
    return wi * t_start + _ramp_angle(kind, wi, wf, ramp, ramp) + wf * (s - ramp)


@njit(cache=True)
def delta_at(policy, value, w, wc, wz2):
    if policy == POLICY_FIXED_DELTA:
        return value
    return value * (w * (wc - w) / wz2 - 0.5)


@njit(cache=True, inline="always")
def _rate(vx, vy, vz, x, y, z, dx, dy, dz, k, gamma0, sat, detuning, waist, cx, cy, cz):
    s_local = sat
    if waist > 0.0:
        rx, ry, rz = x - cx, y - cy, z - cz
        along = rx * dx + ry * dy + rz * dz
        perp2 = rx * rx + ry * ry + rz * rz - along * along
        s_local = sat * math.exp(-2.0 * perp2 / (waist * waist))
    x2 = 2.0 * (detuning - k * (dx * vx + dy * vy + dz * vz)) / gamma0
    return 0.5 * gamma0 * s_local / (1.0 + s_local + x2 * x2)


@njit(cache=True)
def scatter_rate(vx, vy, vz, x, y, z, beam):
    if beam[5] <= 0.0:
        return 0.0
    return _rate(vx, vy, vz, x, y, z, beam[0], beam[1], beam[2], beam[3], beam[4], beam[5],
                 beam[6], beam[7], beam[8], beam[9], beam[10])


@njit(cache=True)
def cooling_pass(pos, vel, n, beams, dt, recoil):
    """One Poisson-linearized scattering pass (beam-major, ion index ascending).

    ``recoil[b]`` is the recoil speed hbar k / m for beam b. Returns
    (status, scatter_count).
    """
    count = 0
    # one uniform per (beam, ion), drawn as a block: much cheaper than scalar draws
    u = np.random.random(beams.shape[0] * n)
    for b in range(beams.shape[0]):
        dx, dy, dz = beams[b, 0], beams[b, 1], beams[b, 2]
        k, gamma0, sat, detuning = beams[b, 3], beams[b, 4], beams[b, 5], beams[b, 6]
        waist, cx, cy, cz = beams[b, 7], beams[b, 8], beams[b, 9], beams[b, 10]
        if sat <= 0.0:
            continue
        vr = recoil[b]
        for i in range(n):
            p = dt * _rate(vel[i], vel[n + i], vel[2 * n + i], pos[i], pos[n + i], pos[2 * n + i],
                           dx, dy, dz, k, gamma0, sat, detuning, waist, cx, cy, cz)
            if p >= 0.1:
                return STEP_TOO_LARGE, count
            if u[b * n + i] < p:
                count += 1
                cz_ = 2.0 * np.random.random() - 1.0
                phi = 2.0 * math.pi * np.random.random()
                sz = math.sqrt(max(0.0, 1.0 - cz_ * cz_))
                vel[i] += vr * (dx + sz * math.cos(phi))
                vel[n + i] += vr * (dy + sz * math.sin(phi))
                vel[2 * n + i] += vr * (dz + cz_)
    return OK, count


@njit(cache=True)
def seed_rng(seed):
    np.random.seed(seed)


@njit(cache=True, fastmath=True)
def _electric_accel(pos, acc, n, wz2, delta, theta, kqm):
    c2 = math.cos(2.0 * theta)
    s2 = math.sin(2.0 * theta)
    for i in range(n):
        x = pos[i]
        y = pos[n + i]
        acc[i] = wz2 * (0.5 * x - delta * (x * c2 - y * s2))
        acc[n + i] = wz2 * (0.5 * y + delta * (y * c2 + x * s2))
        acc[2 * n + i] = -wz2 * pos[2 * n + i]
    for i in range(n):
        xi, yi, zi = pos[i], pos[n + i], pos[2 * n + i]
        for j in range(i + 1, n):
            dx = xi - pos[j]
            dy = yi - pos[n + j]
            dz = zi - pos[2 * n + j]
            r2 = dx * dx + dy * dy + dz * dz
            f = kqm / (r2 * math.sqrt(r2))
            acc[i] += f * dx
            acc[n + i] += f * dy
            acc[2 * n + i] += f * dz
            acc[j] -= f * dx
            acc[n + j] -= f * dy
            acc[2 * n + j] -= f * dz


@njit(cache=True)
def integrate(pos, vel, n, t0, nsteps, dt, stride, wz2, wc, kqm,
              kind, wi, wf, ramp, t_start, policy, value,
              beams, recoil, r_escape, out_t, out_pos, out_vel):
    """Advance ``pos``/``vel`` in place by ``nsteps`` lab-frame steps.

    Drift dt/2, Boris kick (half electric, Cayley rotation about B, half
    electric) with the field at t + dt/2, drift dt/2, then scattering.
    Returns (status, step, n_frames, n_scatter).
    """
    acc = np.empty(3 * n)
    # standard Boris: tan(angle/2) = wc dt/2, which makes the discrete E x B drift exact
    tan_half = 0.5 * wc * dt
    sin_full = 2.0 * tan_half / (1.0 + tan_half * tan_half)
    cos_full = (1.0 - tan_half * tan_half) / (1.0 + tan_half * tan_half)
    half = 0.5 * dt
    r2_escape = r_escape * r_escape
    frame = 0
    scatters = 0
    cooling = beams.shape[0] > 0
    for step in range(nsteps):
        t_mid = t0 + (step + 0.5) * dt
        for k in range(3 * n):
            pos[k] += half * vel[k]
        w = omega_at(kind, wi, wf, ramp, t_start, t_mid)
        delta = delta_at(policy, value, w, wc, wz2)
        theta = theta_at(kind, wi, wf, ramp, t_start, t_mid)
        _electric_accel(pos, acc, n, wz2, delta, theta, kqm)
        for i in range(n):
            vx = vel[i] + half * acc[i]
            vy = vel[n + i] + half * acc[n + i]
            # clockwise Cayley rotation about B (q B > 0)
            rx = cos_full * vx + sin_full * vy
            ry = -sin_full * vx + cos_full * vy
            vel[i] = rx + half * acc[i]
            vel[n + i] = ry + half * acc[n + i]
            vel[2 * n + i] += dt * acc[2 * n + i]
        for k in range(3 * n):
            pos[k] += half * vel[k]
        if cooling:
            status, c = cooling_pass(pos, vel, n, beams, dt, recoil)
            scatters += c
            if status != 0:
                return status, step, frame, scatters
        if (step + 1) % stride == 0:
            for i in range(n):
                r2 = pos[i] ** 2 + pos[n + i] ** 2 + pos[2 * n + i] ** 2
                if r2 > r2_escape:
                    return ESCAPED, step, frame, scatters
            if frame < out_t.shape[0]:
                out_t[frame] = t0 + (step + 1) * dt
                for k in range(3 * n):
                    out_pos[frame, k] = pos[k]
                    out_vel[frame, k] = vel[k]
            frame += 1
    return OK, nsteps, frame, scatters
