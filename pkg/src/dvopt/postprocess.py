"""Physics post-processing: measures + geometry -> KPIs and constraints.

This is the single code path shared by both evaluation routes.  Whatever
produced the intermediate measures (reference model or meta-model), the same
interpolation, dq voltage equations, loss models and torque-speed solve turn
them into the two objectives (negated maximum shaft power, material cost)
and the six constraint values.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from . import machine_model
from .design_space import GeometryLimits, K_FILL, END_WINDING_FACTOR, derive_geometry, geometry_check
from .machine_model import GRID_POINTS, IntermediateMeasures

U_DC = 400.0                       # V, DC-link voltage
U_MAX = U_DC / math.sqrt(3.0)      # V peak phase, space-vector linear range
RHO_CU = 2.0e-8                    # Ohm*m, copper resistivity (warm)

T_REQUIRED = 180.0                 # N*m, torque demand at base speed
BASE_SPEED_RPM = 4000.0

SPEED_GRID_RPM = np.linspace(500.0, 16000.0, 33)

# Material prices (per kg) and densities (kg/m^3) for the cost objective.
PRICE_MAGNET, PRICE_COPPER, PRICE_IRON = 60.0, 10.0, 2.0
DENS_MAGNET, DENS_COPPER, DENS_IRON = 7500.0, 8960.0, 7650.0

N_CONSTRAINTS = 6                  # torque demand + five geometry checks

# Torque-speed solver discretization: current-angle sweep over the second
# quadrant, a descending amplitude scan, a bisection refinement of the
# voltage-limit boundary and local angle refinement around the best angle.
ANGLE_COUNT = 91
SCAN_LEVELS = 33
FINE_SCAN_LEVELS = 9
BISECT_ITERS = 14
ANGLE_REFINE_ROUNDS = 3
ANGLE_REFINE_POINTS = 13

_QUAD_TOL = 1e-9


class OutOfQuadrant(ValueError):
    """Currents outside the modeled quadrant i_d <= 0, i_q >= 0."""


@dataclass
class OperatingPoint:
    """One solved steady-state point on the torque-speed boundary."""

    omega_m: float      # rad/s mechanical
    i_d: float          # A peak
    i_q: float
    psi_d: float        # V*s
    psi_q: float
    torque: float       # N*m
    u_mag: float        # V peak phase
    p_fe: float         # W
    p_cu: float
    p_shaft: float
    feasible: bool = True   # False: voltage limit violated even at zero current


def rpm_to_rad_s(rpm: float) -> float:
    return rpm * 2.0 * math.pi / 60.0


def _interp_normalized(m: IntermediateMeasures, u, w):
    """Bilinear interpolation at normalized coordinates already inside
    [-1, 0] x [0, 1]; no validation (hot path)."""
    n = GRID_POINTS - 1
    x = (u + 1.0) * n
    y = w * n
    ix = np.minimum(x.astype(np.intp), n - 1)
    iy = np.minimum(y.astype(np.intp), n - 1)
    fx = x - ix
    fy = y - iy
    gx = 1.0 - fx
    gy = 1.0 - fy
    w00 = gx * gy
    w10 = fx * gy
    w01 = gx * fy
    w11 = fx * fy
    base = ix * GRID_POINTS + iy
    pd_flat = m.psi_d.reshape(-1)
    pq_flat = m.psi_q.reshape(-1)
    pd = (w00 * np.take(pd_flat, base)
          + w10 * np.take(pd_flat, base + GRID_POINTS)
          + w01 * np.take(pd_flat, base + 1)
          + w11 * np.take(pd_flat, base + GRID_POINTS + 1))
    pq = (w00 * np.take(pq_flat, base)
          + w10 * np.take(pq_flat, base + GRID_POINTS)
          + w01 * np.take(pq_flat, base + 1)
          + w11 * np.take(pq_flat, base + GRID_POINTS + 1))
    return pd, pq


def interp_flux(m: IntermediateMeasures, i_max: float, i_d, i_q):
    """Bilinear interpolation of the flux maps at physical currents.

    Exact at grid nodes.  Accepts scalars or arrays; raises OutOfQuadrant
    for currents outside i_d in [-I_max, 0], i_q in [0, I_max] beyond a tiny
    numerical slack.
    """
    u = np.asarray(i_d, dtype=float) / i_max
    w = np.asarray(i_q, dtype=float) / i_max
    if np.any(u < -1.0 - _QUAD_TOL) or np.any(u > _QUAD_TOL) \
            or np.any(w < -_QUAD_TOL) or np.any(w > 1.0 + _QUAD_TOL):
        raise OutOfQuadrant(
            f"currents outside modeled quadrant: u in [{np.min(u)}, {np.max(u)}], "
            f"w in [{np.min(w)}, {np.max(w)}]"
        )
    u = np.clip(u, -1.0, 0.0)
    w = np.clip(w, 0.0, 1.0)
    return _interp_normalized(m, u, w)


def torque(psi_d, psi_q, i_d, i_q, p_pairs: int):
    """Electromagnetic torque (N*m) from dq flux linkages and currents."""
    return 1.5 * p_pairs * (psi_d * i_q - psi_q * i_d)


def voltage_magnitude(psi_d, psi_q, i_d, i_q, omega_e, r_s: float):
    """Steady-state phase voltage magnitude (V peak) from the dq equations."""
    u_d = r_s * i_d - omega_e * psi_q
    u_q = r_s * i_q + omega_e * psi_d
    return np.sqrt(u_d**2 + u_q**2)


def stator_resistance(v: np.ndarray) -> float:
    """Per-phase stator resistance (Ohm) of the series winding."""
    geo = derive_geometry(v)
    p = int(round(v[0]))
    n_t = float(v[13])
    n_ph = n_t * 2.0 * p
    l_turn = 2.0 * (v[12] + END_WINDING_FACTOR * geo.tau_p) * 1e-3
    a_cond = geo.a_slot * K_FILL / (2.0 * n_t) * 1e-6
    return RHO_CU * n_ph * l_turn / a_cond


def losses(m: IntermediateMeasures, omega_e, psi_d, psi_q, i_d, i_q, r_s: float):
    """(iron, copper) losses in W at one operating point."""
    f = omega_e / (2.0 * math.pi)
    flux_ratio = (psi_d**2 + psi_q**2) / m.psi_ref**2
    p_fe = (m.c_hy * f + m.c_ed * f**2) * flux_ratio
    p_cu = 1.5 * r_s * (i_d**2 + i_q**2)
    return p_fe, p_cu


def _zero_point(m: IntermediateMeasures, v: np.ndarray, omega_m: float,
                r_s: float, p: int) -> OperatingPoint:
    omega_e = p * omega_m
    psi_d, psi_q = float(m.psi_d[-1, 0]), float(m.psi_q[-1, 0])
    u = float(voltage_magnitude(psi_d, psi_q, 0.0, 0.0, omega_e, r_s))
    p_fe, p_cu = losses(m, omega_e, psi_d, psi_q, 0.0, 0.0, r_s)
    return OperatingPoint(
        omega_m=omega_m, i_d=0.0, i_q=0.0, psi_d=psi_d, psi_q=psi_q,
        torque=0.0, u_mag=u, p_fe=float(p_fe), p_cu=float(p_cu),
        p_shaft=-float(p_fe), feasible=False,
    )


def _scan_angles(m: IntermediateMeasures, p: int, i_max: float, r_s: float,
                 omega_e: np.ndarray, angles: np.ndarray,
                 n_levels: int = SCAN_LEVELS):
    """Best feasible torque per speed over a set of current angles.

    ``angles`` is either shared across speeds (1-D) or per-speed (2-D).  For
    every angle a descending ``n_levels`` amplitude scan finds feasible
    current nodes; cells whose top feasible level is interior and whose
    torque could beat the best node get BISECT_ITERS bisection steps on the
    voltage-limit boundary.  Returns per-speed arrays (best torque,
    normalized amplitude, angle); torque is -inf where nothing is feasible.
    """
    n_speeds = len(omega_e)
    shared = angles.ndim == 1
    n_angles = angles.shape[-1]
    cos_g = np.minimum(np.cos(angles), 0.0)
    sin_g = np.clip(np.sin(angles), 0.0, 1.0)
    lam = np.linspace(0.0, 1.0, n_levels)                   # amplitude / I_max

    if shared:
        u = lam[:, None] * cos_g[None, :]                   # (K, A)
        w = lam[:, None] * sin_g[None, :]
    else:
        u = lam[None, :, None] * cos_g[:, None, :]          # (S, K, A)
        w = lam[None, :, None] * sin_g[:, None, :]
    pd, pq = _interp_normalized(m, u, w)
    i_d = i_max * u
    i_q = i_max * w
    t = torque(pd, pq, i_d, i_q, p)

    we = omega_e[:, None, None]
    if shared:
        u_d = r_s * i_d[None] - we * pq[None]
        u_q = r_s * i_q[None] + we * pd[None]
    else:
        u_d = r_s * i_d - we * pq
        u_q = r_s * i_q + we * pd
    ok = u_d**2 + u_q**2 <= U_MAX**2                        # (S, K, A)

    t_b = np.broadcast_to(t, ok.shape)
    t_masked = np.where(ok, t_b, -np.inf)
    angle_profile = t_masked.max(axis=1)                    # (S, A)
    t_nodes = t_masked.reshape(n_speeds, -1)
    node_arg = np.argmax(t_nodes, axis=1)
    rows = np.arange(n_speeds)
    best_t = t_nodes[rows, node_arg].copy()
    best_k, best_a = np.divmod(node_arg, n_angles)
    best_amp = lam[best_k]
    best_angle = angles[best_a] if shared else angles[rows, best_a]

    any_ok_sa = ok.any(axis=1)                              # (S, A)
    k_top = np.where(any_ok_sa,
                     n_levels - 1 - np.argmax(ok[:, ::-1, :], axis=1), 0)
    # A boundary cell is worth bisecting only if the torque just across the
    # boundary could beat the best feasible node of its speed.
    k_above = np.minimum(k_top + 1, n_levels - 1)
    if shared:
        t_pair = np.maximum(t[k_top, np.arange(n_angles)[None, :]],
                            t[k_above, np.arange(n_angles)[None, :]])
    else:
        cols = np.arange(n_angles)[None, :]
        t_pair = np.maximum(t[rows[:, None], k_top, cols],
                            t[rows[:, None], k_above, cols])
    margin = 0.02 * np.abs(best_t[:, None]) + 1e-9
    promising = t_pair >= best_t[:, None] - margin
    cells = any_ok_sa & (k_top < n_levels - 1) & promising
    spd_idx, ang_idx = np.nonzero(cells)
    if len(spd_idx):
        lo = lam[k_top[spd_idx, ang_idx]]
        hi = lam[k_top[spd_idx, ang_idx] + 1]
        cg = cos_g[ang_idx] if shared else cos_g[spd_idx, ang_idx]
        sg = sin_g[ang_idx] if shared else sin_g[spd_idx, ang_idx]
        we_f = omega_e[spd_idx]
        for _ in range(BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            pd, pq = _interp_normalized(m, mid * cg, mid * sg)
            u_d = r_s * (i_max * mid * cg) - we_f * pq
            u_q = r_s * (i_max * mid * sg) + we_f * pd
            feas = u_d**2 + u_q**2 <= U_MAX**2
            lo = np.where(feas, mid, lo)
            hi = np.where(feas, hi, mid)
        pd, pq = _interp_normalized(m, lo * cg, lo * sg)
        t_ref = torque(pd, pq, i_max * lo * cg, i_max * lo * sg, p)
        bounds = np.searchsorted(spd_idx, np.arange(n_speeds + 1))
        for s in range(n_speeds):
            start, stop = bounds[s], bounds[s + 1]
            if stop > start:
                j = start + int(np.argmax(t_ref[start:stop]))
                if t_ref[j] > best_t[s]:
                    best_t[s] = t_ref[j]
                    best_amp[s] = lo[j]
                    best_angle[s] = angles[ang_idx[j]] if shared else angles[s, ang_idx[j]]
    return best_t, best_amp, best_angle, angle_profile


def _refine_around(m, p, i_max, r_s, omega_e, centers, state):
    """Shrinking local angle sweeps around per-speed center angles; keeps the
    better of the incoming state and every refinement round."""
    best_t, best_amp, best_angle = state
    step = (0.5 * math.pi) / (ANGLE_COUNT - 1)
    frac = np.linspace(0.0, 1.0, ANGLE_REFINE_POINTS)
    track = centers.copy()
    for _ in range(ANGLE_REFINE_ROUNDS):
        lo_g = np.maximum(track - step, 0.5 * math.pi)
        hi_g = np.minimum(track + step, math.pi)
        local = lo_g[:, None] + (hi_g - lo_g)[:, None] * frac[None, :]
        cand_t, cand_amp, cand_angle, _ = _scan_angles(
            m, p, i_max, r_s, omega_e, local, n_levels=FINE_SCAN_LEVELS)
        track = np.where(np.isfinite(cand_t), cand_angle, track)
        better = cand_t > best_t
        best_t = np.where(better, cand_t, best_t)
        best_amp = np.where(better, cand_amp, best_amp)
        best_angle = np.where(better, cand_angle, best_angle)
        step = step * 2.0 / (ANGLE_REFINE_POINTS - 1)
    return best_t, best_amp, best_angle


def _solve_speeds(m: IntermediateMeasures, v: np.ndarray,
                  omegas: np.ndarray) -> list[OperatingPoint]:
    """Maximum-torque operating point at each mechanical speed.

    A coarse sweep of ANGLE_COUNT current angles over [90 deg, 180 deg] is
    followed by shrinking local angle sweeps around the two best local
    maxima of the angle profile, so the returned point converges to the
    best-torque corner even where the feasible region has a sharp
    voltage-limit tip.  All speeds are solved in one batched pass.
    """
    p = int(round(v[0]))
    i_max = machine_model.current_limit(v)
    r_s = stator_resistance(v)
    omegas = np.asarray(omegas, dtype=float)
    omega_e = p * omegas
    n_speeds = len(omegas)

    coarse = np.linspace(0.5 * math.pi, math.pi, ANGLE_COUNT)
    best_t, best_amp, best_angle, profile = _scan_angles(
        m, p, i_max, r_s, omega_e, coarse)
    state = (best_t, best_amp, best_angle)

    # Primary refinement around the winning coarse angle; a second pass
    # around the runner-up local maximum guards against profiles where a
    # sharper peak hides between coarse nodes.
    a_best = np.argmax(profile, axis=1)
    state = _refine_around(m, p, i_max, r_s, omega_e, coarse[a_best], state)

    masked = profile.copy()
    rows = np.arange(n_speeds)
    for off in (-1, 0, 1):
        cols = np.clip(a_best + off, 0, ANGLE_COUNT - 1)
        masked[rows, cols] = -np.inf
    a_second = np.argmax(masked, axis=1)
    has_second = np.isfinite(masked[rows, a_second])
    if has_second.any():
        centers = np.where(has_second, coarse[a_second], coarse[a_best])
        state = _refine_around(m, p, i_max, r_s, omega_e, centers, state)
    best_t, best_amp, best_angle = state

    solved = np.isfinite(best_t)
    cg = np.minimum(np.cos(best_angle), 0.0)
    sg = np.clip(np.sin(best_angle), 0.0, 1.0)
    amp = np.where(solved, best_amp, 0.0)
    pd, pq = _interp_normalized(m, amp * cg, amp * sg)
    i_d = i_max * amp * cg
    i_q = i_max * amp * sg
    u = voltage_magnitude(pd, pq, i_d, i_q, omega_e, r_s)
    p_fe, p_cu = losses(m, omega_e, pd, pq, i_d, i_q, r_s)

    results: list[OperatingPoint] = []
    for s, omega_m in enumerate(omegas):
        if not solved[s]:
            results.append(_zero_point(m, v, float(omega_m), r_s, p))
            continue
        t_best = float(best_t[s])
        results.append(OperatingPoint(
            omega_m=float(omega_m), i_d=float(i_d[s]), i_q=float(i_q[s]),
            psi_d=float(pd[s]), psi_q=float(pq[s]), torque=t_best,
            u_mag=float(u[s]), p_fe=float(p_fe[s]), p_cu=float(p_cu[s]),
            p_shaft=t_best * float(omega_m) - float(p_fe[s]),
        ))
    return results


def max_torque_at_speed(m: IntermediateMeasures, v: np.ndarray,
                        omega_m: float) -> OperatingPoint:
    """Best-torque operating point at one mechanical speed (rad/s).

    Returns a zero-torque point flagged infeasible when the voltage limit is
    violated even at zero current.
    """
    if omega_m < 0.0:
        raise ValueError("omega_m must be >= 0")
    return _solve_speeds(m, v, np.array([omega_m]))[0]


def torque_speed_curve(m: IntermediateMeasures, v: np.ndarray,
                       speeds_rpm: np.ndarray | None = None) -> list[OperatingPoint]:
    """Maximum-torque limit curve over the fixed 33-point speed grid."""
    rpm = SPEED_GRID_RPM if speeds_rpm is None else np.asarray(speeds_rpm, dtype=float)
    omegas = np.array([rpm_to_rad_s(r) for r in rpm])
    return _solve_speeds(m, v, omegas)


def material_cost(v: np.ndarray) -> float:
    """Material cost (currency units) from the three active-material volumes."""
    geo = derive_geometry(v)
    return (PRICE_MAGNET * DENS_MAGNET * geo.v_mag * 1e-9
            + PRICE_COPPER * DENS_COPPER * geo.v_cu * 1e-9
            + PRICE_IRON * DENS_IRON * geo.v_fe * 1e-9)


def evaluate_kpis(v: np.ndarray, m: IntermediateMeasures,
                  limits: GeometryLimits | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Objectives and constraints for one geometry-feasible design.

    Returns (kpis, constraints): kpis = [-max shaft power (W), material
    cost]; constraints = [torque shortfall at base speed, five geometry
    values], all satisfied when <= 0.
    """
    omegas = np.append(
        np.array([rpm_to_rad_s(r) for r in SPEED_GRID_RPM]),
        rpm_to_rad_s(BASE_SPEED_RPM),
    )
    ops = _solve_speeds(m, v, omegas)
    grid_ops, base_op = ops[:-1], ops[-1]

    p_max = max(op.p_shaft for op in grid_ops)
    kpis = np.array([-p_max, material_cost(v)])

    report = geometry_check(v, limits)
    constraints = np.empty(N_CONSTRAINTS)
    constraints[0] = T_REQUIRED - base_op.torque
    constraints[1:] = report.values
    return kpis, constraints


def kpi_definition() -> dict:
    """Everything that pins down the KPI semantics, for artifact hashing."""
    return {
        "objectives": ["neg_max_shaft_power_w", "material_cost"],
        "u_dc": U_DC,
        "rho_cu": RHO_CU,
        "t_required": T_REQUIRED,
        "base_speed_rpm": BASE_SPEED_RPM,
        "speed_grid_rpm": SPEED_GRID_RPM.tolist(),
        "prices": [PRICE_MAGNET, PRICE_COPPER, PRICE_IRON],
        "densities": [DENS_MAGNET, DENS_COPPER, DENS_IRON],
        "angle_count": ANGLE_COUNT,
        "scan_levels": SCAN_LEVELS,
        "bisect_iters": BISECT_ITERS,
        "machine_model": machine_model.model_constants(),
    }


def kpi_definition_hash() -> str:
    blob = json.dumps(kpi_definition(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
