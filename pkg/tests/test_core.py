import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import BE9_ION_MASS, KE, beta_oracle, finite_difference_jacobian, pair_potential_loop, \
    two_ion_separation
from penning_md.core import (BE9_MASS, KB, NIST_TRAP, CrystalState, IonSpecies, TrapConfig, WallParams,
                             compute_beta, energy_report, force_lab, make_wall, potential_energy_rotating,
                             rotating_energy, rotating_frame_arrays, rotating_gradient, rotating_hessian,
                             rotating_potential, rotation_matrix, to_lab_frame, to_mK, to_rotating_frame)
from penning_md.errors import CoincidentIonsError, PenningError
from penning_md.guiding_center import characteristic_scales

TRAP = NIST_TRAP
WR = 2 * np.pi * 200e3


def _random_cloud(seed, n, scale=20e-6):
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, scale, 3 * n), rng.normal(0.0, 50.0, 3 * n)


def _stiffness(wall):
    m, wz2 = TRAP.mass, TRAP.omega_z**2
    return m * wz2 * (wall.beta + wall.delta), m * wz2 * (wall.beta - wall.delta), m * wz2


# --- constants and configuration -------------------------------------------------

def test_ion_mass_is_atomic_mass_minus_electron():
    assert BE9_MASS == pytest.approx(BE9_ION_MASS, rel=1e-15)
    assert TRAP.mass == BE9_MASS
    assert TRAP.omega_c == pytest.approx(TRAP.charge * 4.4588 / BE9_ION_MASS, rel=1e-15)


def test_trap_and_species_invariants():
    with pytest.raises(ValueError):
        IonSpecies(mass=-1.0, charge=1.0)
    with pytest.raises(ValueError):
        IonSpecies(mass=1.0, charge=0.0)
    with pytest.raises(ValueError):
        TrapConfig(b_field=0.0)
    with pytest.raises(ValueError):
        TrapConfig(omega_z=-1.0)
    assert TRAP.kq2 == pytest.approx(KE * TRAP.charge**2, rel=1e-15)


# --- compute_beta -------------------------------------------------------------

@given(f=st.floats(50e3, 3e6))
def test_beta_matches_formula(f):
    w = 2 * np.pi * f
    assert compute_beta(TRAP, w) == pytest.approx(
        beta_oracle(TRAP.b_field, TRAP.omega_z, TRAP.mass, TRAP.charge, w), rel=1e-12, abs=1e-15)


def test_beta_zero_at_root():
    wc, wz = TRAP.omega_c, TRAP.omega_z
    w = 0.5 * (wc - np.sqrt(wc**2 - 2 * wz**2))
    assert abs(compute_beta(TRAP, w)) < 1e-9


def test_beta_180khz_near_quoted_value():
    assert compute_beta(TRAP, 2 * np.pi * 180e3) == pytest.approx(0.034, abs=0.002)


def test_beta_can_be_negative():
    assert compute_beta(TRAP, 2 * np.pi * 10e3) < 0


def test_make_wall_alpha_and_delta():
    w = make_wall(TRAP, WR, alpha=0.5)
    assert w.alpha == pytest.approx(0.5, rel=1e-15)
    assert w.delta == pytest.approx(0.5 * compute_beta(TRAP, WR))
    assert make_wall(TRAP, WR, delta=0.01).delta == 0.01
    with pytest.raises(ValueError):
        make_wall(TRAP, WR)
    with pytest.raises(ValueError):
        make_wall(TRAP, WR, alpha=0.1, delta=0.1)


# --- rotating-frame potential ----------------------------------------------------

def test_single_ion_at_origin_has_zero_energy():
    wall = make_wall(TRAP, WR, alpha=0.5)
    s = CrystalState(np.zeros(3), np.zeros(3), frame="rotating")
    assert potential_energy_rotating(s, TRAP, wall) == 0.0


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 8), alpha=st.floats(0.0, 0.9))
def test_potential_matches_pair_loop(seed, n, alpha):
    wall = make_wall(TRAP, WR, alpha=alpha)
    pos, _ = _random_cloud(seed, n)
    ref = pair_potential_loop(pos, TRAP.kq2, *_stiffness(wall))
    assert rotating_potential(pos, TRAP, wall) == pytest.approx(ref, rel=1e-12)


def test_two_ion_analytic_stationary_point():
    wall = make_wall(TRAP, WR, alpha=0.5)
    d = two_ion_separation(TRAP.kq2, TRAP.mass, TRAP.omega_z, wall.beta, wall.delta)
    pos = np.array([0, 0, d / 2, -d / 2, 0, 0.0])
    l0 = characteristic_scales(TRAP, wall.beta).l0
    assert np.linalg.norm(rotating_gradient(pos, TRAP, wall)) < 1e-9 * TRAP.kq2 / l0**2


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 8), angle=st.floats(-np.pi, np.pi))
def test_isotropic_potential_rotation_invariant(seed, n, angle):
    wall = make_wall(TRAP, WR, delta=0.0)
    pos, _ = _random_cloud(seed, n)
    r = pos.reshape(3, n).copy()
    r[:2] = rotation_matrix(angle) @ r[:2]
    u0 = rotating_potential(pos, TRAP, wall)
    assert abs(rotating_potential(r.ravel(), TRAP, wall) - u0) < 1e-12 * abs(u0)


def test_coincident_ions_name_the_pair():
    wall = make_wall(TRAP, WR, alpha=0.5)
    pos = np.array([0.0, 1e-5, 1e-5, 0.0, 2e-5, 2e-5, 0.0, 0.0, 0.0])
    with pytest.raises(CoincidentIonsError) as info:
        rotating_potential(pos, TRAP, wall)
    assert info.value.pair == (1, 2)
    with pytest.raises(CoincidentIonsError):
        force_lab(CrystalState(pos, np.zeros(9)), TRAP, 0.0, 0.0)


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 6))
def test_gradient_and_hessian_match_finite_differences(seed, n):
    wall = make_wall(TRAP, WR, alpha=0.4)
    pos, _ = _random_cloud(seed, n)
    h = 1e-10
    g_fd = finite_difference_jacobian(lambda x: np.array([rotating_potential(x, TRAP, wall)]), pos, h)[0]
    g = rotating_gradient(pos, TRAP, wall)
    assert np.max(np.abs(g - g_fd)) < 1e-5 * np.max(np.abs(g))
    hess = rotating_hessian(pos, TRAP, wall)
    h_fd = finite_difference_jacobian(lambda x: rotating_gradient(x, TRAP, wall), pos, 1e-10)
    assert np.allclose(hess, hess.T, rtol=0, atol=1e-14 * np.max(np.abs(hess)))
    assert np.max(np.abs(hess - h_fd)) < 1e-5 * np.max(np.abs(hess))


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 10))
def test_coulomb_forces_sum_to_zero(seed, n):
    wall = make_wall(TRAP, WR, alpha=0.0)
    pos, _ = _random_cloud(seed, n)
    g = rotating_gradient(pos, TRAP, wall).reshape(3, n)
    kx, ky, kz = _stiffness(wall)
    coul = g - np.array([kx, ky, kz])[:, None] * pos.reshape(3, n)
    assert np.all(np.abs(coul.sum(axis=1)) <= 1e-12 * np.abs(coul).max())


# --- lab-frame forces -----------------------------------------------------------

def test_ion_at_rest_at_origin_feels_nothing():
    s = CrystalState(np.zeros(3), np.zeros(3))
    assert np.all(force_lab(s, TRAP, 0.05, 0.3) == 0.0)


def test_lorentz_acceleration_direction():
    v = 100.0
    s = CrystalState(np.zeros(3), np.array([v, 0.0, 0.0]))
    a = force_lab(s, TRAP, 0.0, 0.0)
    assert a[1] == pytest.approx(-TRAP.charge * v * TRAP.b_field / TRAP.mass, rel=1e-14)
    assert a[0] == 0.0 and a[2] == 0.0


def test_rigidly_rotating_pair_is_centripetal():
    wall = make_wall(TRAP, WR, alpha=0.5)
    d = two_ion_separation(TRAP.kq2, TRAP.mass, TRAP.omega_z, wall.beta, wall.delta)
    rot = CrystalState(np.array([0, 0, d / 2, -d / 2, 0, 0.0]), np.zeros(6), frame="rotating")
    lab = to_lab_frame(rot, 0.0, WR)
    a = force_lab(lab, TRAP, wall.delta, 0.0).reshape(3, 2)
    expected = -WR**2 * lab.positions.reshape(3, 2)
    assert np.max(np.abs(a - expected)) < 1e-9 * WR**2 * d / 2


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6), theta=st.floats(-10, 10),
       alpha=st.floats(0.0, 0.9))
def test_frame_consistency(seed, n, theta, alpha):
    wall = make_wall(TRAP, WR, alpha=alpha)
    pos, vel = _random_cloud(seed, n)
    lab = CrystalState(pos, vel)
    a_lab = force_lab(lab, TRAP, wall.delta, theta).reshape(3, n)
    rot = to_rotating_frame(lab, theta, WR)
    r, v = rot.positions.reshape(3, n), rot.velocities.reshape(3, n)
    # frame angular velocity Omega = -omega_r z: a' = R a - 2 Omega x v' - Omega x (Omega x r')
    a_rot = np.empty((3, n))
    a_rot[:2] = rotation_matrix(theta) @ a_lab[:2]
    a_rot[2] = a_lab[2]
    a_rot[0] += -2 * WR * v[1] + WR**2 * r[0]
    a_rot[1] += 2 * WR * v[0] + WR**2 * r[1]
    w = TRAP.omega_c - 2 * WR
    expect = -rotating_gradient(rot.positions, TRAP, wall).reshape(3, n) / TRAP.mass
    expect[0] += w * v[1]
    expect[1] -= w * v[0]
    scale = np.max(np.abs(a_rot))
    assert np.max(np.abs(a_rot - expect)) < 1e-9 * scale


@pytest.mark.parametrize("alpha", [0.0, 0.3, 0.5])
def test_effective_trap_coefficients_from_lab_force(alpha):
    wall = make_wall(TRAP, WR, alpha=alpha)
    u = 1e-8
    coeffs = []
    for axis in (0, 1):
        r_rot = np.zeros(3)
        r_rot[axis] = u
        lab = to_lab_frame(CrystalState(r_rot, np.zeros(3), frame="rotating"), 0.7, WR)
        a = force_lab(lab, TRAP, wall.delta, 0.7)
        a_rot = np.append(rotation_matrix(0.7) @ a[:2], a[2])
        # co-moving ion (v' = 0): only the centrifugal term survives the frame change
        a_rot[:2] += WR**2 * r_rot[:2]
        coeffs.append(-TRAP.mass * a_rot[axis] / u)
    kz = TRAP.mass * TRAP.omega_z**2
    assert coeffs[0] == pytest.approx(kz * wall.beta * (1 + alpha), rel=1e-8)
    assert coeffs[1] == pytest.approx(kz * wall.beta * (1 - alpha), rel=1e-8)


# --- frame transforms --------------------------------------------------------

def test_identity_transform():
    pos, vel = _random_cloud(1, 4)
    s = to_rotating_frame(CrystalState(pos, vel), 0.0, 0.0)
    assert np.array_equal(s.positions, pos) and np.array_equal(s.velocities, vel)
    assert s.frame == "rotating"


def test_corotating_point_is_at_rest():
    r = 1e-5
    rot = to_rotating_frame(CrystalState(np.array([r, 0, 0.0]), np.array([0, -WR * r, 0.0])), 0.0, WR)
    assert np.allclose(rot.velocities, 0.0, atol=1e-12 * WR * r)


def test_quarter_turn_maps_x_y_to_y_minus_x():
    # the crystal turns in the -z sense, so a wall angle of -pi/2 is a quarter turn clockwise
    lab = CrystalState(np.array([1.0, 2.0, 3.0]), np.zeros(3))
    rot = to_rotating_frame(lab, -np.pi / 2, 0.0)
    assert np.allclose(rot.positions, [2.0, -1.0, 3.0], atol=1e-15)


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6), theta=st.floats(-50, 50),
       f=st.floats(1e3, 1e6))
def test_frame_round_trip(seed, n, theta, f):
    pos, vel = _random_cloud(seed, n)
    lab = CrystalState(pos, vel, 1.0)
    back = to_lab_frame(to_rotating_frame(lab, theta, 2 * np.pi * f), theta, 2 * np.pi * f)
    assert np.allclose(back.positions, pos, rtol=0, atol=1e-12 * np.abs(pos).max())
    assert np.allclose(back.velocities, vel, rtol=0, atol=1e-12 * (np.abs(vel).max() + 2 * np.pi * f
                                                                    * np.abs(pos).max()))
    assert back.time == 1.0 and back.frame == "lab"


def test_vectorized_frames_match_single_transform():
    pos, vel = _random_cloud(3, 5)
    frames_p = np.stack([pos, 2 * pos])
    frames_v = np.stack([vel, -vel])
    th = np.array([0.3, 1.9])
    om = np.array([WR, 0.9 * WR])
    p, v = rotating_frame_arrays(frames_p, frames_v, th, om)
    for k in range(2):
        s = to_rotating_frame(CrystalState(frames_p[k], frames_v[k]), th[k], om[k])
        assert np.allclose(p[k], s.positions, rtol=1e-14)
        assert np.allclose(v[k], s.velocities, rtol=1e-14)


def test_frame_tags_are_enforced():
    s = CrystalState(np.zeros(3), np.zeros(3), frame="rotating")
    wall = make_wall(TRAP, WR, alpha=0.5)
    with pytest.raises(PenningError):
        to_rotating_frame(s, 0.0, WR)
    with pytest.raises(PenningError):
        force_lab(s, TRAP, 0.0, 0.0)
    with pytest.raises(PenningError):
        potential_energy_rotating(CrystalState(np.zeros(3), np.zeros(3)), TRAP, wall)
    with pytest.raises(ValueError):
        CrystalState(np.zeros(3), np.zeros(6))
    with pytest.raises(ValueError):
        CrystalState(np.zeros(4), np.zeros(4))


# --- energy bookkeeping ----------------------------------------------------------

@pytest.fixture(scope="module")
def pair_eq():
    wall = make_wall(TRAP, WR, alpha=0.5)
    d = two_ion_separation(TRAP.kq2, TRAP.mass, TRAP.omega_z, wall.beta, wall.delta)
    pos = np.array([0, 0, d / 2, -d / 2, 0, 0.0])
    return wall, pos, rotating_potential(pos, TRAP, wall)


def test_energy_report_at_equilibrium_is_zero(pair_eq):
    wall, pos, ref = pair_eq
    rep = energy_report(CrystalState(pos, np.zeros(6), frame="rotating"), TRAP, wall, ref)
    assert (rep.ke_parallel, rep.ke_perp, rep.pe) == (0.0, 0.0, 0.0)


def test_energy_report_axial_displacement(pair_eq):
    wall, pos, ref = pair_eq
    u = 1e-9
    p = pos.copy()
    p[4] += u
    rep = energy_report(CrystalState(p, np.zeros(6), frame="rotating"), TRAP, wall, ref)
    direct = pair_potential_loop(p, TRAP.kq2, *_stiffness(wall)) - pair_potential_loop(
        pos, TRAP.kq2, *_stiffness(wall))
    assert rep.ke_parallel == 0.0
    assert rep.pe > 0
    assert rep.pe == pytest.approx(direct, rel=1e-5)
    k_eff = rotating_hessian(pos, TRAP, wall)[4, 4]
    assert rep.pe == pytest.approx(0.5 * k_eff * u**2, rel=1e-4)


def test_energy_report_splits_kinetic_energy(pair_eq):
    wall, pos, ref = pair_eq
    v = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    rep = energy_report(CrystalState(pos, v, frame="rotating"), TRAP, wall, ref)
    assert rep.ke_perp == pytest.approx(0.5 * TRAP.mass * 30.0)
    assert rep.ke_parallel == pytest.approx(0.5 * TRAP.mass * 61.0)
    assert rep.total == pytest.approx(0.5 * TRAP.mass * 91.0)
    assert rotating_energy(CrystalState(pos, v, frame="rotating"), TRAP, wall) == pytest.approx(
        ref + 0.5 * TRAP.mass * 91.0)


def test_energy_report_requires_reference(pair_eq):
    wall, pos, _ = pair_eq
    with pytest.raises(PenningError):
        energy_report(CrystalState(pos, np.zeros(6), frame="rotating"), TRAP, wall, None)


def test_mK_conversion():
    assert to_mK(KB * 1e-3) == pytest.approx(1.0, rel=1e-15)
    assert np.allclose(to_mK(np.array([KB, 2 * KB])), [1e3, 2e3])


def test_wall_params_alpha():
    assert WallParams(1.0, 0.02, 0.04).alpha == 0.5
    assert np.isnan(WallParams(1.0, 0.02, -0.1).alpha)
    assert not WallParams(1.0, 0.05, 0.04).confining
