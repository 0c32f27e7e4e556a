import math

import numpy as np
import pytest

from dvopt import machine_model as mm
from dvopt.design_space import derive_geometry, default_spec
from dvopt.sampling import SamplingConfig, lhs_feasible


def test_grid_definition():
    assert mm.U_GRID[0] == -1.0 and mm.U_GRID[-1] == 0.0
    assert mm.W_GRID[0] == 0.0 and mm.W_GRID[-1] == 1.0
    assert len(mm.U_GRID) == len(mm.W_GRID) == 9
    assert mm.MEASURE_VALUES == 165


def test_current_limit_formula(mid_design):
    a_slot = derive_geometry(mid_design).a_slot
    expected = 12.0 * a_slot * 0.45 / 8.0
    assert mm.current_limit(mid_design) == pytest.approx(expected, rel=1e-12)
    # reference value: a 200 mm^2 slot with 8 turns allows 135 A peak
    assert 12.0 * 200.0 * 0.45 / 8.0 == pytest.approx(135.0)


def test_current_limit_inverse_in_turns(mid_design):
    v2 = mid_design.copy()
    v2[13] = 4.0
    assert mm.current_limit(v2) == pytest.approx(2.0 * mm.current_limit(mid_design))


def test_flux_at_zero_current_is_magnet_flux(mid_design):
    psi_d, psi_q = mm.flux_linkage(mid_design, 0.0, 0.0)
    psi_pm, _, _, _ = mm.flux_model_params(mid_design)
    assert psi_d == psi_pm
    assert psi_q == 0.0


def test_magnet_flux_hand_chain(mid_design):
    # Independent evaluation of the whole chain for the canonical design.
    tau_p = math.pi * 65.0 / 3.0                    # mm
    beta = (25.0 * math.cos(math.radians(45.0))
            + 19.0 * math.cos(math.radians(45.0))) / tau_p
    n_ph = 8 * 2 * 3
    kwn = 0.933 * n_ph
    phi_m = 1.2 * 0.9 * beta * (tau_p * 1e-3) * (90.0 * 1e-3) * (2.0 / math.pi)
    psi_pm_hand = kwn * phi_m
    psi_pm, _, _, _ = mm.flux_model_params(mid_design)
    assert psi_pm == pytest.approx(psi_pm_hand, rel=1e-12)


def test_inductance_hand_chain(mid_design):
    kwn = 0.933 * 48
    g_d = 0.9e-3 + (5.5e-3 + 5.5e-3) / 1.05
    l_d_hand = (3.0 / math.pi) * 4e-7 * math.pi * kwn**2 * 0.065 * 0.090 / (9 * g_d)
    _, _, l_d, l_q = mm.flux_model_params(mid_design)
    assert l_d == pytest.approx(l_d_hand, rel=1e-12)
    g_q = 0.9e-3 + 0.3 * 11.0e-3 / 1.05
    assert l_q == pytest.approx(l_d_hand * g_d / g_q, rel=1e-12)


def test_small_current_linearization(mid_design):
    _, psi_sat, _, l_q = mm.flux_model_params(mid_design)
    i_q = 0.05 * psi_sat / l_q
    _, psi_q = mm.flux_linkage(mid_design, 0.0, i_q)
    assert psi_q == pytest.approx(l_q * i_q, rel=0.01)


def test_q_flux_is_odd(mid_design):
    _, up = mm.flux_linkage(mid_design, 0.0, 123.0)
    _, dn = mm.flux_linkage(mid_design, 0.0, -123.0)
    assert up == pytest.approx(-dn, rel=1e-12)


def test_saturation_bounds(feasible_designs):
    for v in feasible_designs:
        psi_pm, psi_sat, _, _ = mm.flux_model_params(v)
        i_max = mm.current_limit(v)
        psi_d, psi_q = mm.flux_linkage(v, -i_max, i_max)
        assert abs(psi_d - psi_pm) < psi_sat
        assert abs(psi_q) < psi_sat


def test_q_inductance_exceeds_d(feasible_designs):
    for v in feasible_designs:
        _, _, l_d, l_q = mm.flux_model_params(v)
        assert l_q > l_d


def test_stack_length_scaling(mid_design):
    s = 1.3
    v2 = mid_design.copy()
    v2[12] *= s
    p1 = mm.flux_model_params(mid_design)
    p2 = mm.flux_model_params(v2)
    for a, b in zip(p1, p2):
        assert b == pytest.approx(s * a, rel=1e-12)
    m1 = mm.evaluate_measures(mid_design)
    m2 = mm.evaluate_measures(v2)
    # identical I_max-normalized grid, scaled fluxes
    assert np.allclose(m2.psi_d, s * m1.psi_d, rtol=1e-12)
    assert np.allclose(m2.psi_q, s * m1.psi_q, rtol=1e-12)


def test_loss_coefficient_values():
    c_hy, c_ed = mm.iron_loss_coefficients(10.0, 1.0)
    assert c_hy == pytest.approx(0.2, rel=1e-12)
    assert c_ed == pytest.approx(5.0e-4, rel=1e-12)
    assert mm.iron_loss_coefficients(5.0, 0.0) == (0.0, 0.0)


def test_loss_coefficient_ratio_is_constant(feasible_designs):
    for v in feasible_designs[:10]:
        c_hy, c_ed = mm.loss_coefficients(v)
        assert c_hy / c_ed == pytest.approx(400.0, rel=1e-9)


def test_loss_coefficients_match_geometry_chain(mid_design):
    geo = derive_geometry(mid_design)
    m_fe = 7650.0 * geo.v_fe * 1e-9
    b0 = 1.2 * 0.9 * geo.beta
    c_hy, c_ed = mm.loss_coefficients(mid_design)
    assert c_hy == pytest.approx(2.0e-2 * m_fe * b0**2, rel=1e-12)
    assert c_ed == pytest.approx(5.0e-5 * m_fe * b0**2, rel=1e-12)


def test_measures_grid_corner(mid_design):
    m = mm.evaluate_measures(mid_design)
    assert m.psi_d[-1, 0] == m.psi_ref
    assert m.psi_q[-1, 0] == 0.0


def test_measures_deterministic(mid_design):
    a = mm.evaluate_measures(mid_design)
    b = mm.evaluate_measures(mid_design)
    assert np.array_equal(a.psi_d, b.psi_d)
    assert np.array_equal(a.psi_q, b.psi_q)
    assert (a.c_hy, a.c_ed, a.psi_ref) == (b.c_hy, b.c_ed, b.psi_ref)


def test_measure_invariants_thousand_design_sweep():
    spec = default_spec()
    designs = lhs_feasible(SamplingConfig(n_samples=1000, seed=99), spec)
    for v in designs:
        m = mm.evaluate_measures(v)
        assert np.all(np.diff(m.psi_d, axis=0) >= 0.0)       # along u
        assert np.all(np.diff(m.psi_q, axis=1) >= 0.0)       # along w
        assert np.all(m.psi_q[:, 0] == 0.0)
        assert m.psi_d[-1, 0] == m.psi_ref
        assert m.c_hy >= 0.0 and m.c_ed >= 0.0 and m.psi_ref > 0.0


def test_vector_round_trip(mid_design):
    m = mm.evaluate_measures(mid_design)
    m2 = mm.IntermediateMeasures.from_vector(m.to_vector())
    assert np.array_equal(m.psi_d, m2.psi_d)
    assert np.array_equal(m.psi_q, m2.psi_q)
    assert (m.c_hy, m.c_ed, m.psi_ref) == (m2.c_hy, m2.c_ed, m2.psi_ref)
    with pytest.raises(ValueError):
        mm.IntermediateMeasures.from_vector(np.zeros(10))
