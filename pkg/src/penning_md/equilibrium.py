"""Zero-temperature equilibria of the rotating-frame potential and their classification."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import pdist

from .core import (CrystalState, TrapConfig, WallParams, rotating_gradient, rotating_hessian,
                   rotating_potential, to_rotating_frame)
from .errors import ConfinementError, ConvergenceError
from .guiding_center import characteristic_scales

GRADIENT_TOL = 1e-10  # in units of k q^2 / l0^2
PLANAR_TOL = 1e-6  # in units of l0


@dataclass
class EquilibriumConfig:
    positions: np.ndarray
    potential: float
    gradient_norm: float
    planar: bool

    @property
    def n_ions(self) -> int:
        return self.positions.size // 3


def check_confinement(wall: WallParams):
    if not wall.beta > 0:
        raise ConfinementError(f"beta = {wall.beta:.4g} <= 0: no planar confinement")
    if not 0 <= wall.delta < wall.beta:
        raise ConfinementError(f"need 0 <= delta < beta, got delta = {wall.delta:.4g}, beta = {wall.beta:.4g}")


def lattice_seed(n_ions: int, wall: WallParams, l0: float) -> np.ndarray:
    """Triangular-lattice disk, stretched along the weak (y) axis, spacing ~ l0."""
    if n_ions == 1:
        return np.zeros(3)
    m = int(np.ceil(np.sqrt(n_ions))) + 3
    i, j = np.meshgrid(np.arange(-m, m + 1), np.arange(-m, m + 1))
    x = (i + 0.5 * j).ravel().astype(float)
    y = (np.sqrt(3) / 2 * j).ravel()
    # offset breaks the lattice point symmetry so no two sites tie on radius
    x += 0.123
    y += 0.0456
    aspect = np.sqrt((1 + wall.alpha) / (1 - wall.alpha)) if wall.beta > 0 else 1.0
    order = np.argsort((x * aspect) ** 2 + y**2)[:n_ions]
    pts = np.zeros((3, n_ions))
    pts[0] = x[order]
    pts[1] = y[order]
    pts[:2] -= pts[:2].mean(axis=1, keepdims=True)
    return (pts * l0).ravel()


def _scaled_problem(trap: TrapConfig, wall: WallParams, l0: float):
    e_unit = trap.kq2 / l0
    f_unit = trap.kq2 / l0**2
    h_unit = trap.kq2 / l0**3

    def fun(u):
        return rotating_potential(u * l0, trap, wall) / e_unit

    def jac(u):
        return rotating_gradient(u * l0, trap, wall) / f_unit

    def hess(u):
        return rotating_hessian(u * l0, trap, wall) / h_unit

    return fun, jac, hess


def _newton_polish(u, fun, jac, hess, tol, max_iter=50):
    """Damped Newton on the scaled potential.

    Returns (u, converged, negative_directions) where the last entry holds
    the unstable Hessian eigenvectors as columns, or None at a minimum.
    """
    for _ in range(max_iter):
        g = jac(u)
        h = hess(u)
        w, v = np.linalg.eigh(h)
        scale = max(np.max(np.abs(w)), 1.0)
        neg = w < -1e-9 * scale
        if np.linalg.norm(g) < tol:
            return u, True, (v[:, neg] if neg.any() else None)
        if neg.any():
            return u, False, v[:, neg]
        keep = w > 1e-12 * scale
        gv = v.T @ g
        step = -(v[:, keep] @ (gv[keep] / w[keep]))
        f0 = fun(u)
        t = 1.0
        while t > 1e-8:
            trial = u + t * step
            try:
                if fun(trial) <= f0 + 1e-14 * abs(f0) or np.linalg.norm(jac(trial)) < np.linalg.norm(g):
                    break
            except ArithmeticError:
                pass
            t *= 0.5
        u = u + t * step
    g = jac(u)
    return u, bool(np.linalg.norm(g) < tol), None


def _minimize(u0, trap, wall, l0, max_iter):
    fun, jac, hess = _scaled_problem(trap, wall, l0)
    u = np.array(u0, dtype=float) / l0
    best = u
    for attempt in range(20):
        res = minimize(fun, u, jac=jac, method="L-BFGS-B",
                       options={"maxiter": max_iter, "gtol": 1e-9, "ftol": 1e-16, "maxcor": 30})
        u = res.x
        best = u
        u, ok, neg = _newton_polish(u, fun, jac, hess, GRADIENT_TOL)
        best = u
        if ok and neg is None:
            return u * l0, float(np.linalg.norm(jac(u)))
        if neg is not None:
            # saddle (typically a planar crystal that should buckle): push off along every unstable
            # direction, with alternating signs and growing amplitude so repeated visits differ
            signs = np.where(np.arange(neg.shape[1]) % 2 == 0, 1.0, -1.0)
            u = u + 1e-2 * (1 + attempt) * (neg @ signs)
    raise ConvergenceError("equilibrium search did not converge", best=best * l0)


def _make_config(positions, trap, wall, l0) -> EquilibriumConfig:
    n = positions.size // 3
    g = rotating_gradient(positions, trap, wall)
    return EquilibriumConfig(
        positions=positions,
        potential=rotating_potential(positions, trap, wall),
        gradient_norm=float(np.linalg.norm(g)),
        planar=bool(np.max(np.abs(positions[2 * n:])) < PLANAR_TOL * l0),
    )


def find_equilibrium(trap: TrapConfig, wall: WallParams, n_ions: int, seed=None,
                     *, rng: np.random.Generator | None = None, z_jitter: float = 1e-3,
                     max_iter: int = 20000) -> EquilibriumConfig:
    """Local minimum of the rotating-frame potential.

    ``seed`` may be a flat 3N position array; by default a triangular-lattice
    disk is used. A small random axial jitter (``z_jitter`` l0) lets planar
    seeds buckle when the single-plane crystal is unstable.
    """
    check_confinement(wall)
    l0 = characteristic_scales(trap, wall.beta).l0
    if n_ions == 1:
        pos = np.zeros(3)
        return _make_config(pos, trap, wall, l0)
    if seed is None:
        seed = lattice_seed(n_ions, wall, l0)
    seed = np.array(seed, dtype=float)
    if seed.size != 3 * n_ions:
        raise ValueError("seed length must be 3N")
    if z_jitter:
        rng = rng if rng is not None else np.random.default_rng(0)
        seed[2 * n_ions:] += z_jitter * l0 * rng.standard_normal(n_ions)
    pos, _ = _minimize(seed, trap, wall, l0, max_iter)
    return _make_config(pos, trap, wall, l0)


def lowest_equilibrium(trap: TrapConfig, wall: WallParams, n_ions: int, n_starts: int = 24,
                       *, rng: np.random.Generator | None = None) -> EquilibriumConfig:
    """Lowest-energy local minimum over the lattice seed plus random Gaussian-disk starts.

    For anisotropic walls the lattice seed alone can land in a metastable
    configuration; a few dozen random starts find the ground state for N of
    order tens.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    best = find_equilibrium(trap, wall, n_ions, rng=rng)
    if n_ions < 3:
        return best
    l0 = characteristic_scales(trap, wall.beta).l0
    spread = np.sqrt(n_ions / 4.0) * l0
    for _ in range(n_starts - 1):
        seed = np.concatenate([rng.normal(0.0, spread, 2 * n_ions), rng.normal(0.0, 0.01 * l0, n_ions)])
        try:
            cand = find_equilibrium(trap, wall, n_ions, seed, rng=rng)
        except ConvergenceError:
            continue
        if cand.potential < best.potential - 1e-12 * abs(best.potential):
            best = cand
    return best


def relax_from_snapshot(state: CrystalState, trap: TrapConfig, wall: WallParams,
                        theta_r: float | None = None) -> EquilibriumConfig:
    """Minimize from a snapshot's positions (velocities ignored).

    Lab-frame snapshots need the wall angle ``theta_r`` to be rotated into
    the co-rotating frame.
    """
    if state.frame == "lab":
        if theta_r is None:
            raise ValueError("lab-frame snapshot needs theta_r")
        state = to_rotating_frame(state, theta_r, wall.omega_r)
    check_confinement(wall)
    l0 = characteristic_scales(trap, wall.beta).l0
    pos, _ = _minimize(state.positions, trap, wall, l0, 20000)
    return _make_config(pos, trap, wall, l0)


def distance_spectrum(positions: np.ndarray) -> np.ndarray:
    n = positions.size // 3
    return np.sort(pdist(positions.reshape(3, n).T))


def same_configuration(a: EquilibriumConfig, b: EquilibriumConfig, tol: float) -> bool:
    """Permutation- and rotation-invariant match on energy and sorted pair distances."""
    if a.n_ions != b.n_ions:
        return False
    if abs(a.potential - b.potential) >= tol * abs(b.potential):
        return False
    da, db = distance_spectrum(a.positions), distance_spectrum(b.positions)
    return bool(np.all(np.abs(da - db) <= tol * db))


@dataclass
class ConfigurationCatalog:
    entries: list = field(default_factory=list)  # [EquilibriumConfig, count] pairs
    match_tolerance: float = 1e-4

    def __len__(self):
        return len(self.entries)

    @property
    def counts(self) -> list[int]:
        return [c for _, c in self.entries]

    def most_common(self) -> EquilibriumConfig:
        return self.entries[0][0]

    def lowest_energy(self) -> EquilibriumConfig:
        return min((e for e, _ in self.entries), key=lambda e: e.potential)


def classify_configuration(candidate: EquilibriumConfig, catalog: ConfigurationCatalog) -> int:
    """Index of the matching catalog entry (after re-sorting by count), inserting if novel."""
    for entry in catalog.entries:
        if same_configuration(candidate, entry[0], catalog.match_tolerance):
            entry[1] += 1
            target = entry
            break
    else:
        target = [candidate, 1]
        catalog.entries.append(target)
    # stable sort keeps first-seen order among ties
    catalog.entries.sort(key=lambda e: -e[1])
    return next(i for i, e in enumerate(catalog.entries) if e is target)
