import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import KB, single_ion_rotating_frequencies
from penning_md.core import NIST_TRAP, compute_beta, make_wall, rotating_hessian
from penning_md.equilibrium import find_equilibrium, lowest_equilibrium
from penning_md.errors import InstabilityError
from penning_md.guiding_center import (characteristic_scales, gc_exb_frequencies, nonlinearity,
                                       planar_stiffness, scaling_predictions)
from penning_md.modes import EXB, analyze_modes

TRAP = NIST_TRAP
WR = 2 * np.pi * 200e3


def test_characteristic_scales_formula():
    sc = characteristic_scales(TRAP, 0.090)
    l0 = (TRAP.kq2 / (0.5 * 0.090 * TRAP.mass * TRAP.omega_z**2)) ** (1 / 3)
    assert sc.l0 == pytest.approx(l0, rel=1e-15)
    assert sc.e0 == pytest.approx(TRAP.mass * TRAP.omega_z**2 * l0**2, rel=1e-15)
    assert sc.l0 == pytest.approx(1.5e-5, rel=0.05)
    e0_mK = sc.e0 / KB * 1e3
    assert np.isfinite(e0_mK) and e0_mK > 0


@given(beta=st.floats(1e-3, 1.0))
def test_l0_power_law(beta):
    ratio = characteristic_scales(TRAP, beta / 2).l0 / characteristic_scales(TRAP, beta).l0
    assert ratio == pytest.approx(2 ** (1 / 3), rel=1e-12)


def test_scales_need_positive_beta():
    with pytest.raises(ValueError):
        characteristic_scales(TRAP, 0.0)


@given(s=st.floats(0.1, 10.0))
def test_frequencies_linear_in_stiffness(crystal20, s):
    k = planar_stiffness(crystal20[1].energy_matrix.stiffness)
    f1 = gc_exb_frequencies(k, TRAP, WR)
    assert np.allclose(gc_exb_frequencies(s * k, TRAP, WR), s * f1, rtol=1e-9)


def test_single_ion_matches_full_planar_problem(wall200):
    k = planar_stiffness(rotating_hessian(np.zeros(3), TRAP, wall200))
    gc = gc_exb_frequencies(k, TRAP, WR)
    planar, _ = single_ion_rotating_frequencies(TRAP.mass, TRAP.charge, TRAP.b_field, TRAP.omega_z, WR,
                                                wall200.beta, wall200.delta)
    assert gc.size == 1
    assert gc[0] == pytest.approx(planar[0], rel=0.02)


@pytest.mark.parametrize("n", [7, 20, 30])
def test_gc_matches_full_exb_branch(n, wall200):
    eq = lowest_equilibrium(TRAP, wall200, n)
    ma = analyze_modes(eq, TRAP, wall200)
    gc = gc_exb_frequencies(planar_stiffness(ma.energy_matrix.stiffness), TRAP, WR)
    full = ma.spectrum.frequencies[ma.spectrum.branch_mask(EXB)]
    assert gc.size == n
    assert np.max(np.abs(gc / full - 1)) < 0.05


def test_unstable_stiffness_raises():
    k = np.diag([1.0, -1.0])
    with pytest.raises(InstabilityError):
        gc_exb_frequencies(k, TRAP, WR)
    with pytest.raises(ValueError):
        gc_exb_frequencies(np.eye(2), TRAP, TRAP.omega_c / 2)


def test_planar_stiffness_block():
    k = np.arange(81.0).reshape(9, 9)
    assert np.array_equal(planar_stiffness(k), k[:6, :6])


def test_scaling_predictions_identity():
    f = scaling_predictions(0.07, 0.07)
    assert all(v == pytest.approx(1.0, rel=1e-15) for v in f.values())


def test_scaling_predictions_quoted_factors():
    assert scaling_predictions(100.0, 1.0)["nonlinearity_factor"] == pytest.approx(2.154, abs=0.001)
    b200 = compute_beta(TRAP, 2 * np.pi * 200e3)
    b180 = compute_beta(TRAP, 2 * np.pi * 180e3)
    f = scaling_predictions(0.090, 0.090 * 0.378)
    assert f["frequency_factor"] == pytest.approx(0.378, rel=1e-12)
    # with the computed beta values the reduction is again roughly 60%
    assert scaling_predictions(b200, b180)["frequency_factor"] == pytest.approx(0.378, abs=0.01)


@given(b=st.floats(1e-3, 1.0), bp=st.floats(1e-3, 1.0))
def test_scaling_factor_relations(b, bp):
    f = scaling_predictions(b, bp)
    assert f["position_factor"] ** 3 == pytest.approx(b / bp, rel=1e-12)
    assert f["stiffness_factor"] == pytest.approx(bp / b, rel=1e-12)
    assert f["frequency_factor"] == f["stiffness_factor"]
    assert f["displacement_factor"] ** 2 == pytest.approx(b / bp, rel=1e-12)
    assert f["nonlinearity_factor"] == pytest.approx(f["displacement_factor"] / f["position_factor"], rel=1e-12)
    with pytest.raises(ValueError):
        scaling_predictions(-b, bp)


def test_measured_scaling_matches_prediction():
    n = 20
    w1 = make_wall(TRAP, WR, alpha=0.5)
    w2 = make_wall(TRAP, 2 * np.pi * 185e3, alpha=0.5)
    eq1 = lowest_equilibrium(TRAP, w1, n)
    f = scaling_predictions(w1.beta, w2.beta)
    eq2 = find_equilibrium(TRAP, w2, n, eq1.positions * f["position_factor"], z_jitter=0.0)
    assert np.max(np.abs(eq2.positions - f["position_factor"] * eq1.positions)) < \
        1e-6 * np.max(np.abs(eq2.positions))
    k1 = planar_stiffness(rotating_hessian(eq1.positions, TRAP, w1))
    k2 = planar_stiffness(rotating_hessian(eq2.positions, TRAP, w2))
    assert np.max(np.abs(k2 - f["stiffness_factor"] * k1)) < 1e-8 * np.max(np.abs(k2))


def test_nonlinearity_parameter():
    d = np.zeros(12)
    d[0] = 3e-6
    d[5] = 4e-6
    est = nonlinearity(d, TRAP, 0.09)
    assert est.q_rms == pytest.approx(5e-6 / 2)
    assert est.epsilon == pytest.approx(est.q_rms / characteristic_scales(TRAP, 0.09).l0)
    assert nonlinearity(np.zeros(6), TRAP, 0.09).epsilon == 0.0
