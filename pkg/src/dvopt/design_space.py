"""Double-V rotor parameterization: bounds, derived geometry, feasibility checks.

A candidate machine is a vector of 14 values (two of them integer-valued)
describing rotor, stator and winding proportions of a three-phase interior
permanent-magnet machine with two V-shaped magnet layers per pole.  All
lengths are millimetres unless noted otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Shared geometry constants.  Both evaluation routes (reference model and
# meta-model) must see the same values; internal consistency is the contract.
K_FILL = 0.45               # slot copper fill factor
END_WINDING_FACTOR = 2.2    # end-winding length per pole pitch
SHAFT_ANNULUS_MM = 25.0     # radial band under the rotor surface excluded from iron
LAYER1_RADIUS_FRACTION = 0.60
LAYER2_RADIUS_FRACTION = 0.78


@dataclass(frozen=True)
class Parameter:
    """One design variable with box bounds."""

    name: str
    lower: float
    upper: float
    integer: bool = False


@dataclass(frozen=True)
class GeometryLimits:
    """Thresholds used by the five feasibility checks (mm)."""

    bridge_min: float = 1.5        # iron bridge above each magnet layer
    web_width: float = 3.0         # tangential web between adjacent poles
    iron_min: float = 2.0          # iron between the two magnet layers
    slot_opening_min: float = 2.0  # minimum stator slot width
    outer_radius_max: float = 120.0


DEFAULT_PARAMETERS: tuple[Parameter, ...] = (
    Parameter("p_pairs", 3, 4, integer=True),
    Parameter("r_rotor", 50.0, 80.0),
    Parameter("g_air", 0.6, 1.2),
    Parameter("slot_depth", 15.0, 30.0),
    Parameter("yoke_h", 8.0, 20.0),
    Parameter("tooth_w", 4.0, 10.0),
    Parameter("m1_w", 10.0, 40.0),
    Parameter("m1_t", 3.0, 8.0),
    Parameter("a1_deg", 20.0, 70.0),
    Parameter("m2_w", 8.0, 30.0),
    Parameter("m2_t", 3.0, 8.0),
    Parameter("a2_deg", 20.0, 70.0),
    Parameter("l_stk", 60.0, 120.0),
    Parameter("n_t", 4, 12, integer=True),
)

PARAM_NAMES: tuple[str, ...] = tuple(p.name for p in DEFAULT_PARAMETERS)

# Fixed slot positions of the design vector.
(
    I_P_PAIRS,
    I_R_ROTOR,
    I_G_AIR,
    I_SLOT_DEPTH,
    I_YOKE_H,
    I_TOOTH_W,
    I_M1_W,
    I_M1_T,
    I_A1_DEG,
    I_M2_W,
    I_M2_T,
    I_A2_DEG,
    I_L_STK,
    I_N_T,
) = range(14)


@dataclass(frozen=True)
class DesignSpec:
    """Parameter list plus the geometry-check thresholds for one campaign."""

    parameters: tuple[Parameter, ...] = DEFAULT_PARAMETERS
    limits: GeometryLimits = field(default_factory=GeometryLimits)

    def __post_init__(self) -> None:
        for p in self.parameters:
            if not p.lower < p.upper:
                raise ValueError(f"{p.name}: lower bound must be < upper bound")
            if p.integer and (p.lower != int(p.lower) or p.upper != int(p.upper)):
                raise ValueError(f"{p.name}: integer parameter needs integer bounds")

    @property
    def n_dims(self) -> int:
        return len(self.parameters)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    def lower_bounds(self) -> np.ndarray:
        return np.array([p.lower for p in self.parameters], dtype=float)

    def upper_bounds(self) -> np.ndarray:
        return np.array([p.upper for p in self.parameters], dtype=float)

    def integer_mask(self) -> np.ndarray:
        return np.array([p.integer for p in self.parameters], dtype=bool)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def to_dict(self) -> dict:
        return {
            "parameters": [
                {"name": p.name, "lower": p.lower, "upper": p.upper, "integer": p.integer}
                for p in self.parameters
            ],
            "limits": {
                "bridge_min": self.limits.bridge_min,
                "web_width": self.limits.web_width,
                "iron_min": self.limits.iron_min,
                "slot_opening_min": self.limits.slot_opening_min,
                "outer_radius_max": self.limits.outer_radius_max,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DesignSpec":
        params = tuple(
            Parameter(d["name"], d["lower"], d["upper"], d.get("integer", False))
            for d in data["parameters"]
        )
        limits = GeometryLimits(**data.get("limits", {}))
        return cls(parameters=params, limits=limits)


_DEFAULT_SPEC = DesignSpec()


def default_spec() -> DesignSpec:
    """The standard 14-parameter double-V design space."""
    return _DEFAULT_SPEC


def round_half_away(x: float) -> float:
    """Round to the nearest integer, halves away from zero."""
    return math.floor(x + 0.5) if x >= 0.0 else math.ceil(x - 0.5)


def clamp_to_bounds(raw: np.ndarray, spec: DesignSpec) -> np.ndarray:
    """Clip a raw vector into the box bounds; integer slots are rounded first."""
    v = np.asarray(raw, dtype=float).copy()
    lo, hi = spec.lower_bounds(), spec.upper_bounds()
    for i, p in enumerate(spec.parameters):
        if p.integer:
            v[i] = round_half_away(v[i])
    return np.clip(v, lo, hi)


def within_bounds(v: np.ndarray, spec: DesignSpec, tol: float = 0.0) -> bool:
    lo, hi = spec.lower_bounds(), spec.upper_bounds()
    v = np.asarray(v, dtype=float)
    if not (np.all(v >= lo - tol) and np.all(v <= hi + tol)):
        return False
    mask = spec.integer_mask()
    return bool(np.all(v[mask] == np.round(v[mask])))


@dataclass(frozen=True)
class DerivedGeometry:
    """Quantities derived from one design vector (mm / mm^2 / mm^3)."""

    n_slots: int
    tau_p: float        # pole pitch at the rotor surface
    d1: float           # anchor radius of magnet layer 1
    d2: float           # anchor radius of magnet layer 2
    r_out: float        # stator outer radius
    slot_pitch: float   # circumferential pitch at mid slot depth
    a_slot: float       # stator slot area
    beta: float         # pole-arc coverage ratio, clamped to [0, 1]
    v_mag: float        # total magnet volume
    v_cu: float         # copper volume incl. end windings
    v_fe: float         # lamination iron volume


def derive_geometry(v: np.ndarray) -> DerivedGeometry:
    """Compute slot counts, pitches, anchor radii and material volumes.

    Negative intermediate areas are legal here; ``geometry_check`` is the
    gate that flags such designs.
    """
    (p_pairs, r_rotor, g_air, slot_depth, yoke_h, tooth_w,
     m1_w, m1_t, a1_deg, m2_w, m2_t, a2_deg, l_stk, n_t) = np.asarray(v, dtype=float).tolist()
    del n_t  # winding turns do not affect the geometry

    p = int(round(p_pairs))
    n_slots = 6 * p
    tau_p = math.pi * r_rotor / p
    d1 = LAYER1_RADIUS_FRACTION * r_rotor
    d2 = LAYER2_RADIUS_FRACTION * r_rotor
    r_out = r_rotor + g_air + slot_depth + yoke_h
    slot_pitch = 2.0 * math.pi * (r_rotor + g_air + slot_depth / 2.0) / n_slots
    a_slot = slot_depth * (slot_pitch - tooth_w)

    a1 = math.radians(a1_deg)
    a2 = math.radians(a2_deg)
    beta = min(1.0, max(0.0, (m1_w * math.cos(a1) + m2_w * math.cos(a2)) / tau_p))

    v_mag = 2.0 * p * (m1_w * m1_t + m2_w * m2_t) * l_stk
    l_end = END_WINDING_FACTOR * tau_p
    v_cu = n_slots * a_slot * K_FILL * (l_stk + l_end)
    r_shaft = r_rotor - SHAFT_ANNULUS_MM
    v_fe = math.pi * (r_out**2 - r_shaft**2) * l_stk - n_slots * a_slot * l_stk - v_mag

    return DerivedGeometry(
        n_slots=n_slots, tau_p=tau_p, d1=d1, d2=d2, r_out=r_out,
        slot_pitch=slot_pitch, a_slot=a_slot, beta=beta,
        v_mag=v_mag, v_cu=v_cu, v_fe=v_fe,
    )


CHECK_IDS: tuple[str, ...] = (
    "radial_fit",
    "tangential_fit",
    "interlayer_iron",
    "slot_opening",
    "outer_radius",
)


@dataclass(frozen=True)
class GeometryReport:
    """Outcome of the five feasibility checks.

    ``values`` are the raw inequality values (feasible when <= 0); each
    ``violations`` entry is max(0, value).
    """

    values: tuple[float, ...]
    violations: tuple[float, ...]
    total_violation: float
    feasible: bool

    def items(self) -> list[tuple[str, float]]:
        return list(zip(CHECK_IDS, self.violations))


def geometry_check(v: np.ndarray, limits: GeometryLimits | None = None) -> GeometryReport:
    """Evaluate the five packaging inequalities for one in-bounds design.

    Per-layer checks report the worse of the two magnet layers.  Pure and
    deterministic; used both as a sampling gate and as optimizer constraints.
    """
    lim = limits if limits is not None else _DEFAULT_SPEC.limits
    (p_pairs, r_rotor, g_air, slot_depth, yoke_h, tooth_w,
     m1_w, m1_t, a1_deg, m2_w, m2_t, a2_deg, l_stk, n_t) = np.asarray(v, dtype=float).tolist()
    del l_stk, n_t, yoke_h

    p = int(round(p_pairs))
    geo = derive_geometry(v)
    a1 = math.radians(a1_deg)
    a2 = math.radians(a2_deg)
    layers = ((geo.d1, m1_w, m1_t, a1), (geo.d2, m2_w, m2_t, a2))

    # G1: each V-leg tip plus the bridge must stay below the rotor surface.
    g1 = max(d + (w / 2.0) * math.sin(a) + t + lim.bridge_min - r_rotor
             for d, w, t, a in layers)
    # G2: both legs of a layer plus the web must fit inside one pole span.
    half_pole = math.pi / (2.0 * p)
    g2 = max(w * math.cos(a) + lim.web_width - 2.0 * d * math.sin(half_pole)
             for d, w, t, a in layers)
    # G3: iron between the inner layer tip and the outer layer anchor.
    g3 = (geo.d1 + (m1_w / 2.0) * math.sin(a1) + m1_t) + lim.iron_min - geo.d2
    # G4: slot must stay at least slot_opening_min wide.
    g4 = lim.slot_opening_min - (geo.slot_pitch - tooth_w)
    # G5: packaging envelope.
    g5 = geo.r_out - lim.outer_radius_max

    values = (g1, g2, g3, g4, g5)
    violations = tuple(max(0.0, x) for x in values)
    total = sum(violations)
    return GeometryReport(
        values=values, violations=violations,
        total_violation=total, feasible=total == 0.0,
    )
