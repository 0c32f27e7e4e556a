import numpy as np
import pytest

from dvopt import machine_model, sampling
from dvopt.design_space import default_spec

# Canonical mid-range design used by hand-evaluation tests:
# [p_pairs, r_rotor, g_air, slot_depth, yoke_h, tooth_w,
#  m1_w, m1_t, a1_deg, m2_w, m2_t, a2_deg, l_stk, n_t]
MID_DESIGN = np.array(
    [3, 65.0, 0.9, 22.5, 14.0, 7.0, 25.0, 5.5, 45.0, 19.0, 5.5, 45.0, 90.0, 8],
    dtype=float)


@pytest.fixture(scope="session")
def spec():
    return default_spec()


@pytest.fixture
def mid_design():
    return MID_DESIGN.copy()


@pytest.fixture(scope="session")
def feasible_designs(spec):
    cfg = sampling.SamplingConfig(n_samples=50, seed=20240811)
    return sampling.lhs_feasible(cfg, spec)


@pytest.fixture(scope="session")
def feasible_measures(feasible_designs):
    return [machine_model.evaluate_measures(v) for v in feasible_designs]
