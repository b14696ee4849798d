"""Trajectory files and CSV export.

Trajectory file layout::

    8 bytes   magic  b"PMDTRAJ\\0"
    4 bytes   header length H (little-endian uint32)
    H bytes   UTF-8 JSON header
    32 bytes  SHA-256 of the header bytes
    frames    little-endian float64, each row (time, 3N positions, 3N velocities)

Positions and velocities are lab-frame, as integrated. The header carries
the wall schedule and trap so the co-rotating frame can be reconstructed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import CrystalState, IonSpecies, TrapConfig
from .dynamics import Trajectory, WallSchedule
from .errors import PenningError

MAGIC = b"PMDTRAJ\0"
FORMAT_VERSION = 1


class TrajectoryFileError(PenningError):
    """Corrupt or incompatible trajectory file."""


def _trap_to_dict(trap: TrapConfig) -> dict:
    return {"b_field": trap.b_field, "omega_z": trap.omega_z, "mass": trap.mass, "charge": trap.charge,
            "coulomb_const": trap.coulomb_const, "species": trap.species.label}


def _trap_from_dict(d: dict) -> TrapConfig:
    species = IonSpecies(d["mass"], d["charge"], d.get("species", ""))
    return TrapConfig(d["b_field"], d["omega_z"], species, d["coulomb_const"])


@dataclass
class TrajectoryFile:
    header: dict
    frames: np.ndarray  # (F, 1 + 6N), float64

    @property
    def n_ions(self) -> int:
        return int(self.header["n_ions"])

    @classmethod
    def from_trajectory(cls, traj: Trajectory, *, seed: int | None = None, member: int | None = None,
                        extra: dict | None = None) -> "TrajectoryFile":
        frames = np.column_stack([traj.times, traj.positions, traj.velocities]).astype("<f8")
        header = {
            "format": "penning-md-trajectory",
            "version": FORMAT_VERSION,
            "n_ions": traj.n_ions,
            "dt": traj.dt,
            "stride": traj.stride,
            "n_frames": traj.n_frames,
            "duration": traj.n_frames * traj.stride * traj.dt,
            "schedule": traj.schedule.describe(),
            "trap": _trap_to_dict(traj.trap),
            "seed": seed,
            "member": member,
            "n_scatter": traj.n_scatter,
        }
        if extra:
            header.update(extra)
        return cls(header, frames)

    def to_trajectory(self) -> Trajectory:
        n = self.n_ions
        f = self.frames
        sched = WallSchedule(**self.header["schedule"])
        trap = _trap_from_dict(self.header["trap"])
        times = f[:, 0].copy()
        pos = f[:, 1:1 + 3 * n].copy()
        vel = f[:, 1 + 3 * n:].copy()
        final = CrystalState(pos[-1].copy(), vel[-1].copy(), float(times[-1]), "lab") if len(times) else \
            CrystalState(np.zeros(3 * n), np.zeros(3 * n), 0.0, "lab")
        return Trajectory(times, pos, vel, sched, trap, self.header["dt"], self.header["stride"], final,
                          self.header.get("n_scatter", 0))

    def write(self, path: str | Path):
        head = json.dumps(self.header, sort_keys=True).encode("utf-8")
        data = np.ascontiguousarray(self.frames, dtype="<f8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(head)))
            fh.write(head)
            fh.write(hashlib.sha256(head).digest())
            fh.write(data.tobytes())

    @classmethod
    def read(cls, path: str | Path) -> "TrajectoryFile":
        raw = Path(path).read_bytes()
        if raw[:8] != MAGIC:
            raise TrajectoryFileError(f"{path}: not a trajectory file")
        (hlen,) = struct.unpack("<I", raw[8:12])
        head = raw[12:12 + hlen]
        digest = raw[12 + hlen:44 + hlen]
        if hashlib.sha256(head).digest() != digest:
            raise TrajectoryFileError(f"{path}: header checksum mismatch")
        header = json.loads(head.decode("utf-8"))
        if header.get("version") != FORMAT_VERSION:
            raise TrajectoryFileError(f"{path}: unsupported version {header.get('version')!r}")
        n = int(header["n_ions"])
        width = 1 + 6 * n
        body = raw[44 + hlen:]
        if len(body) % (8 * width):
            raise TrajectoryFileError(f"{path}: truncated frame data")
        frames = np.frombuffer(body, dtype="<f8").reshape(-1, width).copy()
        if frames.shape[0] != header["n_frames"]:
            raise TrajectoryFileError(f"{path}: expected {header['n_frames']} frames, found {frames.shape[0]}")
        if not np.isclose(header["n_frames"] * header["stride"] * header["dt"], header["duration"], rtol=1e-12):
            raise TrajectoryFileError(f"{path}: frame count x stride x dt does not match duration")
        return cls(header, frames)


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()):
    """Flat CSV with LF line endings; ``comments`` become leading ``# `` lines."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (bool, np.bool_)):
        return int(bool(v))
    return v


def read_csv(path: str | Path) -> tuple[list[str], list[str], np.ndarray | list]:
    """(comments, header, rows) of a CSV written by :func:`write_csv`."""
    comments, lines = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("# "):
                comments.append(line[2:].rstrip("\n"))
            else:
                lines.append(line)
    reader = csv.reader(lines)
    header = next(reader)
    return comments, header, list(reader)
