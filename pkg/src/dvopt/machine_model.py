"""Closed-form reference model of the machine electromagnetics.

Maps a design vector to the measures a field solver would produce before any
KPI computation: d/q flux-linkage maps sampled on a fixed normalized current
grid, two iron-loss coefficients and the open-circuit flux linkage.  These
are the quantities the meta-model learns; the same structure feeds the
physics post-processing on both evaluation routes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .design_space import K_FILL, derive_geometry

MU0 = 4.0e-7 * math.pi
B_REMANENT = 1.2          # T, magnet remanence
K_LEAKAGE = 0.9           # rotor leakage factor on magnet flux
B_SAT = 1.8               # T, saturation flux density of the lamination
MU_R_MAGNET = 1.05        # relative recoil permeability of the magnets
Q_GAP_FACTOR = 0.3        # fraction of magnet height seen by the q-axis path
K_WINDING = 0.933         # fundamental winding factor
J_MAX = 12.0              # A/mm^2 peak current density in the copper
RHO_IRON = 7650.0         # kg/m^3
K_HYSTERESIS = 2.0e-2     # W/(kg*Hz*T^2)
K_EDDY = 5.0e-5           # W/(kg*Hz^2*T^2)

GRID_POINTS = 9
# Normalized current grid: u = i_d / I_max in [-1, 0], w = i_q / I_max in [0, 1].
U_GRID = np.linspace(-1.0, 0.0, GRID_POINTS)
W_GRID = np.linspace(0.0, 1.0, GRID_POINTS)

FLUX_VALUES = 2 * GRID_POINTS * GRID_POINTS   # 162
SCALAR_VALUES = 3                             # c_hy, c_ed, psi_ref
MEASURE_VALUES = FLUX_VALUES + SCALAR_VALUES  # 165


@dataclass
class IntermediateMeasures:
    """Learnable stand-in for a field solution.

    ``psi_d``/``psi_q`` are 9x9 grids indexed [u, w] over the normalized
    current grid (V*s); ``c_hy`` (W/Hz) and ``c_ed`` (W/Hz^2) are iron-loss
    coefficients; ``psi_ref`` is the open-circuit flux linkage (V*s).
    """

    psi_d: np.ndarray
    psi_q: np.ndarray
    c_hy: float
    c_ed: float
    psi_ref: float

    def to_vector(self) -> np.ndarray:
        """Flatten to the canonical 165-value layout (psi_d row-major, psi_q
        row-major, c_hy, c_ed, psi_ref)."""
        return np.concatenate([
            self.psi_d.ravel(),
            self.psi_q.ravel(),
            [self.c_hy, self.c_ed, self.psi_ref],
        ])

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "IntermediateMeasures":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (MEASURE_VALUES,):
            raise ValueError(f"expected {MEASURE_VALUES} values, got {vec.shape}")
        n = GRID_POINTS * GRID_POINTS
        return cls(
            psi_d=vec[:n].reshape(GRID_POINTS, GRID_POINTS).copy(),
            psi_q=vec[n:2 * n].reshape(GRID_POINTS, GRID_POINTS).copy(),
            c_hy=float(vec[2 * n]),
            c_ed=float(vec[2 * n + 1]),
            psi_ref=float(vec[2 * n + 2]),
        )


def current_limit(v: np.ndarray) -> float:
    """Peak phase current (A) allowed by the slot copper at J_MAX."""
    geo = derive_geometry(v)
    n_t = float(v[13])
    return J_MAX * geo.a_slot * K_FILL / n_t


def flux_model_params(v: np.ndarray) -> tuple[float, float, float, float]:
    """(psi_pm, psi_sat, L_d, L_q) of the saturating dq flux model, SI units."""
    (p_pairs, r_rotor, g_air, slot_depth, yoke_h, tooth_w,
     m1_w, m1_t, a1_deg, m2_w, m2_t, a2_deg, l_stk, n_t) = np.asarray(v, dtype=float).tolist()
    del slot_depth, yoke_h, tooth_w, m1_w, a1_deg, m2_w, a2_deg

    p = int(round(p_pairs))
    geo = derive_geometry(v)
    tau_p = geo.tau_p * 1e-3
    l = l_stk * 1e-3
    r = r_rotor * 1e-3

    n_ph = n_t * 2.0 * p             # series turns per phase (q = 1 layout)
    kwn = K_WINDING * n_ph

    phi_m = B_REMANENT * K_LEAKAGE * geo.beta * tau_p * l * (2.0 / math.pi)
    psi_pm = kwn * phi_m
    psi_sat = kwn * B_SAT * tau_p * l * (2.0 / math.pi)

    c_l = (3.0 / math.pi) * MU0
    mag_h = (m1_t + m2_t) * 1e-3
    g_d = g_air * 1e-3 + mag_h / MU_R_MAGNET
    g_q = g_air * 1e-3 + Q_GAP_FACTOR * mag_h / MU_R_MAGNET
    l_d = c_l * kwn**2 * r * l / (p**2 * g_d)
    l_q = c_l * kwn**2 * r * l / (p**2 * g_q)
    return psi_pm, psi_sat, l_d, l_q


def flux_linkage(v: np.ndarray, i_d, i_q):
    """d/q flux linkage (V*s) at the given currents (A peak).

    The unsaturated inductances are driven through a tanh saturation whose
    scale is set by the lamination saturation flux; accepts scalar or array
    currents.
    """
    psi_pm, psi_sat, l_d, l_q = flux_model_params(v)
    psi_d = psi_pm + psi_sat * np.tanh(l_d * i_d / psi_sat)
    psi_q = psi_sat * np.tanh(l_q * i_q / psi_sat)
    return psi_d, psi_q


def iron_loss_coefficients(m_fe_kg: float, b_peak: float) -> tuple[float, float]:
    """Hysteresis and eddy coefficients for a given iron mass and peak flux
    density: p_fe = c_hy * f + c_ed * f^2 at the reference flux level."""
    c_hy = K_HYSTERESIS * m_fe_kg * b_peak**2
    c_ed = K_EDDY * m_fe_kg * b_peak**2
    return c_hy, c_ed


def loss_coefficients(v: np.ndarray) -> tuple[float, float]:
    """Design-specific iron-loss coefficients (W/Hz, W/Hz^2)."""
    geo = derive_geometry(v)
    m_fe = RHO_IRON * geo.v_fe * 1e-9
    b0 = B_REMANENT * K_LEAKAGE * geo.beta
    return iron_loss_coefficients(m_fe, b0)


def evaluate_measures(v: np.ndarray) -> IntermediateMeasures:
    """Reference measures for one geometry-feasible design.

    Fills the flux grids point by point at the physical currents
    (u * I_max, w * I_max) of the fixed normalized grid.
    """
    i_max = current_limit(v)
    psi_d = np.empty((GRID_POINTS, GRID_POINTS))
    psi_q = np.empty((GRID_POINTS, GRID_POINTS))
    for iu, u in enumerate(U_GRID):
        for jw, w in enumerate(W_GRID):
            pd, pq = flux_linkage(v, u * i_max, w * i_max)
            psi_d[iu, jw] = pd
            psi_q[iu, jw] = pq
    c_hy, c_ed = loss_coefficients(v)
    psi_ref, _ = flux_linkage(v, 0.0, 0.0)
    return IntermediateMeasures(
        psi_d=psi_d, psi_q=psi_q, c_hy=c_hy, c_ed=c_ed, psi_ref=float(psi_ref)
    )


def model_constants() -> dict:
    """Constants that define the measure semantics (for artifact hashing)."""
    return {
        "mu0": MU0,
        "b_remanent": B_REMANENT,
        "k_leakage": K_LEAKAGE,
        "b_sat": B_SAT,
        "mu_r_magnet": MU_R_MAGNET,
        "q_gap_factor": Q_GAP_FACTOR,
        "k_winding": K_WINDING,
        "j_max": J_MAX,
        "rho_iron": RHO_IRON,
        "k_hysteresis": K_HYSTERESIS,
        "k_eddy": K_EDDY,
        "grid_points": GRID_POINTS,
        "u_grid": U_GRID.tolist(),
        "w_grid": W_GRID.tolist(),
    }
