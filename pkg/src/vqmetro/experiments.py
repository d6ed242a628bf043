"""Scenario builders for the two bundled numerical experiments.

Three-ion average-phase spectroscopy under local dephasing, and trilateration
of a target spin from the geometry-dependent phases picked up by three
NV-center probes under gate depolarization.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .channels import dephasing, depolarizing
from .circuits import (
    MetrologyModel,
    ParamCircuit,
    Povm,
    axis_rotation_gate,
    channel_gate,
    controlled_rx,
    rotation_gate,
)
from .errors import DegenerateGeometryError
from .fisher import CostConfig, Reparam

RAMSEY_N_QUBITS = 3
RAMSEY_PHASES = np.full(3, np.pi / 6)
RAMSEY_N_THETA = 14
RAMSEY_N_MU = 9
RAMSEY_ANSAETZE = ("full_14_param", "ghz_reference", "local_reference")

NV_ANSAETZE = ("local", "shallow_entangled")

# Average of three phases completed to an invertible map; B = inverse of
# [[1/3, 1/3, 1/3], [0, 1, 0], [0, 0, 1]], so weights diag(1, 0, 0) select
# the mean-phase component of the bound.
AVERAGE_PHASE_B = np.array([[3.0, -1.0, -1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


def average_phase_reparam(completion_rows=None) -> Reparam:
    """Reparametrization selecting the mean of the three phases.

    ``completion_rows`` (2 x 3) completes f1 = mean(phi) to an invertible
    linear map; the resulting mean-phase bound does not depend on the choice.
    """
    if completion_rows is None:
        return Reparam(AVERAGE_PHASE_B)
    a = np.vstack([np.full(3, 1.0 / 3.0), np.asarray(completion_rows, dtype=float)])
    return Reparam(np.linalg.inv(a))


@dataclass(frozen=True)
class RamseyScenario:
    """Average-phase sensing with three probe ions at phi_j = pi/6."""

    dephasing_p: float
    ansatz: str = "full_14_param"

    def __post_init__(self):
        if not 0.0 <= self.dephasing_p <= 0.5:
            raise ValueError(f"dephasing probability {self.dephasing_p} outside [0, 0.5]")
        if self.ansatz not in RAMSEY_ANSAETZE:
            raise ValueError(f"unknown ansatz {self.ansatz!r}")


def _ramsey_prep() -> ParamCircuit:
    gates = []
    for q in range(3):
        gates.append(rotation_gate("X", (q,), slot="theta", index=2 * q))
        gates.append(rotation_gate("Y", (q,), slot="theta", index=2 * q + 1))
    for index, qubits in ((6, (1, 2)), (8, (0, 1)), (10, (0, 2))):
        gates.append(rotation_gate("XX", qubits, slot="theta", index=index))
        gates.append(rotation_gate("XY", qubits, slot="theta", index=index + 1))
    gates.append(rotation_gate("XXX", (0, 1, 2), slot="theta", index=12))
    gates.append(rotation_gate("XXY", (0, 1, 2), slot="theta", index=13))
    return ParamCircuit(3, gates, {"theta": RAMSEY_N_THETA})


def _local_zyz_measurement(n_qubits: int, gate_noise: float = 0.0) -> ParamCircuit:
    gates = []
    for q in range(n_qubits):
        gates.append(rotation_gate("Z", (q,), slot="mu", index=3 * q))
        gates.append(rotation_gate("Y", (q,), slot="mu", index=3 * q + 1))
        gates.append(rotation_gate("Z", (q,), slot="mu", index=3 * q + 2))
        if gate_noise > 0.0:
            gates.append(channel_gate(depolarizing(gate_noise, (q,))))
    return ParamCircuit(n_qubits, gates, {"mu": 3 * n_qubits})


def build_ramsey(scenario: RamseyScenario):
    """Model, reparametrization, and cost config for the spectroscopy task.

    The preparation parametrizes any pure three-qubit state (14 parameters),
    the measurement any local basis (9 parameters); all three ansatz choices
    share this circuit family and differ only in which parameters are used.
    """
    p = scenario.dephasing_p
    noise = tuple(dephasing(p, q) for q in range(3)) if p > 0.0 else ()
    model = MetrologyModel(
        n_qubits=3,
        prep=_ramsey_prep(),
        encoding=tuple(
            rotation_gate("Z", (q,), slot="phi", index=q) for q in range(3)
        ),
        noise=noise,
        povm=Povm(_local_zyz_measurement(3)),
    )
    config = CostConfig(weights=np.diag([1.0, 0.0, 0.0]))
    return model, average_phase_reparam(), config


def ramsey_reference_params(kind: str) -> tuple:
    """Fixed (theta, mu) realizing the reference probes in the shared ansatz.

    ``ghz_reference``: R_XXY(pi/2) creates (|000> + |111>)/sqrt(2) exactly;
    measured in the Hadamard basis.  ``local_reference``: |+> probes with the
    per-qubit basis rotated to the steepest point of the phi = pi/6 fringe.
    """
    theta = np.zeros(RAMSEY_N_THETA)
    if kind == "ghz_reference":
        theta[13] = np.pi / 2
        mu = np.tile([0.0, -np.pi / 2, 0.0], 3)
    elif kind == "local_reference":
        theta[[1, 3, 5]] = np.pi / 2
        mu = np.tile([np.pi / 3, -np.pi / 2, 0.0], 3)
    else:
        raise ValueError(f"unknown reference ansatz {kind!r}")
    return theta, mu


def ramsey_reference_costs(p: float) -> tuple:
    """Closed-form mean-phase bounds of the two reference strategies.

    With fringe visibility V = (1 - 2p)^k for k entangled qubits:
    GHZ probe (1/9) (1-2p)^-6, independent probes (1/3) (1-2p)^-2.
    """
    if not 0.0 <= p < 0.5:
        raise ValueError(f"dephasing probability {p} outside [0, 0.5)")
    visibility = 1.0 - 2.0 * p
    return (1.0 / 9.0) * visibility**-6, (1.0 / 3.0) * visibility**-2


def ramsey_crossover() -> float:
    """Dephasing probability where the two reference bounds coincide."""
    return (1.0 - 3.0**-0.25) / 2.0


# ---------------------------------------------------------------------------
# NV trilateration.
# ---------------------------------------------------------------------------


def spherical_axis(polar: float, azimuth: float) -> np.ndarray:
    """Unit vector from spherical angles (physics convention)."""
    return np.array(
        [
            np.sin(polar) * np.cos(azimuth),
            np.sin(polar) * np.sin(azimuth),
            np.cos(polar),
        ]
    )


@dataclass(frozen=True, eq=False)
class NvGeometry:
    """Sensor positions and axes, target position, and field direction."""

    nv_positions: np.ndarray  # (3, 3), one sensor per row
    nv_axes: np.ndarray  # (3, 3), unit rows
    target_position: np.ndarray  # (3,)
    field_axis: np.ndarray  # (3,), unit
    total_phase: float = np.pi / 2

    def __post_init__(self):
        positions = np.asarray(self.nv_positions, dtype=float).reshape(3, 3)
        axes = np.asarray(self.nv_axes, dtype=float).reshape(3, 3)
        target = np.asarray(self.target_position, dtype=float).reshape(3)
        b = np.asarray(self.field_axis, dtype=float).reshape(3)
        for vec in (*axes, b):
            if abs(np.linalg.norm(vec) - 1.0) > 1e-12:
                raise ValueError("sensor axes and field axis must be unit vectors")
        if np.any(np.linalg.norm(target - positions, axis=1) == 0.0):
            raise ValueError("target must not coincide with a sensor")
        object.__setattr__(self, "nv_positions", positions)
        object.__setattr__(self, "nv_axes", axes)
        object.__setattr__(self, "target_position", target)
        object.__setattr__(self, "field_axis", b)


def table1_geometry() -> NvGeometry:
    """The bundled trilateration ground truth (unit-free coordinates)."""
    return NvGeometry(
        nv_positions=np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [4.0, 1.0, 1.0]]),
        nv_axes=np.array(
            [
                spherical_axis(0.3 * np.pi, 0.25 * np.pi),
                spherical_axis(0.7 * np.pi, -0.15 * np.pi),
                spherical_axis(-0.2 * np.pi, 1.2 * np.pi),
            ]
        ),
        target_position=np.array([2.0, 0.0, 2.0]),
        field_axis=spherical_axis(0.0, 0.0),
    )


def _unit_c_phases(geometry: NvGeometry, target: np.ndarray) -> np.ndarray:
    b = geometry.field_axis
    phases = np.empty(3)
    for j in range(3):
        u = target - geometry.nv_positions[j]
        dist = np.linalg.norm(u)
        e = u / dist
        n = geometry.nv_axes[j]
        phases[j] = (n @ b - (n @ e) * (b @ e)) / dist**3
    return phases


def nv_phases(geometry: NvGeometry) -> tuple:
    """Encoded phases at the ground-truth target and the normalization scale.

    The dipole phases are computed with unit coupling constant and rescaled
    so that they sum to ``total_phase``; the scale absorbs the coupling
    strength and exposure time.
    """
    unit_phases = _unit_c_phases(geometry, geometry.target_position)
    total = unit_phases.sum()
    if abs(total) < 1e-9:
        raise DegenerateGeometryError(
            "unit-coupling phases sum to zero; total phase cannot be normalized"
        )
    scale = geometry.total_phase / total
    return scale * unit_phases, scale


def nv_jacobian(geometry: NvGeometry) -> np.ndarray:
    """Analytic d(phases)/d(target position) at the ground truth, scale frozen.

    Row j differentiates phi_j = s * [n.b - (n.e)(b.e)] / dr^3 in the target
    coordinates, holding the normalization scale s at its ground-truth value.
    """
    _, scale = nv_phases(geometry)
    b = geometry.field_axis
    jac = np.empty((3, 3))
    for j in range(3):
        u = geometry.target_position - geometry.nv_positions[j]
        dist = np.linalg.norm(u)
        n = geometry.nv_axes[j]
        nb = n @ b
        nu = n @ u
        bu = b @ u
        grad = (
            -3.0 * nb * u / dist**5
            - (bu * n + nu * b) / dist**5
            + 5.0 * nu * bu * u / dist**7
        )
        jac[j] = scale * grad
    if np.linalg.cond(jac) > 1e12:
        raise DegenerateGeometryError("phase Jacobian is numerically singular")
    return jac


@dataclass(frozen=True, eq=False)
class NvScenario:
    """Trilateration with local or shallow-entangled probe preparation."""

    geometry: NvGeometry
    gate_depolarization: float = 0.0
    encoding_dephasing: float = 0.1
    prep: str = "local"

    def __post_init__(self):
        if not 0.0 <= self.gate_depolarization <= 0.1:
            raise ValueError(
                f"gate depolarization {self.gate_depolarization} outside [0, 0.1]"
            )
        if not 0.0 <= self.encoding_dephasing <= 1.0:
            raise ValueError("encoding dephasing outside [0, 1]")
        if self.prep not in NV_ANSAETZE:
            raise ValueError(f"unknown preparation {self.prep!r}")


def _single_qubit_block(qubit: int, base: int, slot: str, gate_noise: float) -> list:
    gates = [
        rotation_gate("Z", (qubit,), slot=slot, index=base),
        rotation_gate("Y", (qubit,), slot=slot, index=base + 1),
        rotation_gate("Z", (qubit,), slot=slot, index=base + 2),
    ]
    if gate_noise > 0.0:
        gates.append(channel_gate(depolarizing(gate_noise, (qubit,))))
    return gates


def _nv_prep(kind: str, gate_noise: float) -> ParamCircuit:
    gates = []
    for q in range(3):
        gates.extend(_single_qubit_block(q, 3 * q, "theta", gate_noise))
    n_theta = 9
    if kind == "shallow_entangled":
        for index, (control, target) in ((9, (0, 1)), (10, (1, 2))):
            gates.extend(controlled_rx(control, target, slot="theta", index=index))
            if gate_noise > 0.0:
                gates.append(channel_gate(depolarizing(gate_noise, (control, target))))
        n_theta = 11
    return ParamCircuit(3, gates, {"theta": n_theta})


def build_nv(scenario: NvScenario):
    """Model, position-space reparametrization, and cost config for one sweep point.

    Encoding rotations act about each sensor's symmetry axis by the
    geometry-determined phase; every elementary preparation and measurement
    block is followed by depolarizing gate noise.
    """
    geometry = scenario.geometry
    nv_phases(geometry)  # raises early on degenerate geometries
    p_g = scenario.gate_depolarization
    p_e = scenario.encoding_dephasing
    encoding = tuple(
        axis_rotation_gate(geometry.nv_axes[j], j, slot="phi", index=j) for j in range(3)
    )
    noise = tuple(dephasing(p_e, q) for q in range(3)) if p_e > 0.0 else ()
    meas_gates = []
    for q in range(3):
        meas_gates.extend(_single_qubit_block(q, 3 * q, "mu", p_g))
    model = MetrologyModel(
        n_qubits=3,
        prep=_nv_prep(scenario.prep, p_g),
        encoding=encoding,
        noise=noise,
        povm=Povm(ParamCircuit(3, meas_gates, {"mu": 9})),
    )
    transform = Reparam(nv_jacobian(geometry))
    config = CostConfig(weights=np.eye(3))
    return model, transform, config
