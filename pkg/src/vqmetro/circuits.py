"""Parametrized circuits, POVMs, and the end-to-end measurement model.

A model chains four stages: state preparation (slot ``theta``), a commuting
phase encoding (slot ``phi``), parameter-independent noise channels, and a
parametrized measurement basis (slot ``mu``).  Outcome probabilities are the
diagonal of the state after the measurement rotation.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .channels import Channel, ConvexChannel, KrausChannel
from .errors import InternalConsistencyError
from .qalg import (
    DensityMatrix,
    HermitianOp,
    axis_dense,
    embed_operator,
    is_unitary,
    pauli_dense,
    validate_pauli_word,
)

SLOTS = ("theta", "phi", "mu")

ROTATION_SHIFT_CONST = 0.5  # generator P/2 has eigenvalues +-1/2 for every Pauli word

PROB_CLAMP_TOL = 1e-12
PROB_SUM_TOL = 1e-10
COMMUTATION_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GateSpec:
    """One circuit element: a rotation, a fixed unitary, or a channel.

    Parametrized gates evaluate their angle as ``coeff * params[slot][index]
    + angle``; unparametrized rotations use ``angle`` alone.  ``shift_const``
    is the two-point shift-rule constant of the gate's own angle argument.
    """

    kind: str  # "pauli_rotation" | "axis_rotation" | "fixed_unitary" | "channel"
    qubits: tuple
    word: str | None = None
    axis: tuple | None = None
    unitary: np.ndarray | None = None
    channel: Channel | None = None
    slot: str | None = None
    index: int | None = None
    coeff: float = 1.0
    angle: float = 0.0
    shift_const: float | None = None

    def __post_init__(self):
        if self.kind not in ("pauli_rotation", "axis_rotation", "fixed_unitary", "channel"):
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if (self.slot is None) != (self.index is None):
            raise ValueError("slot and index must be given together")
        if self.slot is not None and self.slot not in SLOTS:
            raise ValueError(f"unknown parameter slot {self.slot!r}")
        if self.kind == "fixed_unitary" and self.slot is not None:
            raise ValueError("fixed unitaries cannot be parametrized")
        if self.is_rotation and self.slot is not None and not (self.shift_const or 0) > 0:
            raise ValueError("parametrized rotations need a positive shift constant")

    @property
    def is_rotation(self) -> bool:
        return self.kind in ("pauli_rotation", "axis_rotation")

    @property
    def label(self) -> str:
        gen = self.word if self.kind == "pauli_rotation" else (
            "axis" if self.kind == "axis_rotation" else self.kind
        )
        tag = f"{self.kind}[{gen}]@{self.qubits}"
        if self.slot is not None:
            tag += f" <- {self.slot}[{self.index}]"
        return tag


def rotation_gate(
    word: str,
    qubits,
    slot: str | None = None,
    index: int | None = None,
    coeff: float = 1.0,
    angle: float = 0.0,
) -> GateSpec:
    """Rotation exp(-i a P / 2) generated by the Pauli word P on the qubits."""
    validate_pauli_word(word)
    qubits = tuple(int(q) for q in qubits)
    if len(word) != len(qubits):
        raise ValueError(f"word {word!r} does not match qubits {qubits}")
    if slot is not None and set(word) == {"I"}:
        raise ValueError("identity word has no two-eigenvalue generator; cannot parametrize")
    return GateSpec(
        kind="pauli_rotation",
        qubits=qubits,
        word=word,
        slot=slot,
        index=index,
        coeff=coeff,
        angle=angle,
        shift_const=ROTATION_SHIFT_CONST,
    )


def axis_rotation_gate(
    axis,
    qubit: int,
    slot: str | None = None,
    index: int | None = None,
    coeff: float = 1.0,
    angle: float = 0.0,
) -> GateSpec:
    """Rotation exp(-i a (n . sigma) / 2) about a unit axis n on one qubit."""
    axis_dense(axis)  # validates shape and normalization
    return GateSpec(
        kind="axis_rotation",
        qubits=(int(qubit),),
        axis=tuple(float(c) for c in axis),
        slot=slot,
        index=index,
        coeff=coeff,
        angle=angle,
        shift_const=ROTATION_SHIFT_CONST,
    )


def fixed_gate(unitary: np.ndarray, qubits) -> GateSpec:
    unitary = np.asarray(unitary, dtype=complex)
    if not is_unitary(unitary):
        raise ValueError("fixed gate matrix is not unitary")
    return GateSpec(kind="fixed_unitary", qubits=tuple(int(q) for q in qubits), unitary=unitary)


def channel_gate(
    channel: Channel, slot: str | None = None, index: int | None = None
) -> GateSpec:
    """Wrap a channel as a circuit element; optionally bind its mixing parameter."""
    if slot is not None and not isinstance(channel, ConvexChannel):
        raise ValueError("only convex channels can bind a mixing parameter")
    return GateSpec(
        kind="channel", qubits=tuple(channel.qubits), channel=channel, slot=slot, index=index
    )


def controlled_rx(control: int, target: int, slot: str, index: int) -> tuple:
    """Controlled R_X as two commuting Pauli-word rotations sharing one parameter.

    CRX(a) = exp(-i a |1><1| (x) X / 2) = R_IX(a/2) R_ZX(-a/2), so the single
    parameter appears in two shift-rule gates with coefficients +-1/2.
    """
    qubits = (control, target)
    return (
        rotation_gate("IX", qubits, slot=slot, index=index, coeff=0.5),
        rotation_gate("ZX", qubits, slot=slot, index=index, coeff=-0.5),
    )


@dataclass(eq=False)
class ParamCircuit:
    """Ordered gate list with declared parameter counts per slot."""

    n_qubits: int
    gates: tuple
    n_params: dict

    def __post_init__(self):
        self.gates = tuple(self.gates)
        for gate in self.gates:
            if any(q < 0 or q >= self.n_qubits for q in gate.qubits):
                raise ValueError(f"gate {gate.label} out of range for {self.n_qubits} qubits")
            if gate.slot is not None:
                if gate.slot not in self.n_params:
                    raise ValueError(f"gate {gate.label} uses undeclared slot {gate.slot!r}")
                if not 0 <= gate.index < self.n_params[gate.slot]:
                    raise ValueError(
                        f"gate {gate.label} index out of range (< {self.n_params[gate.slot]})"
                    )

    @property
    def has_channels(self) -> bool:
        return any(g.kind == "channel" for g in self.gates)


@dataclass(eq=False)
class Povm:
    """Projective measurement in a basis parametrized by a rotation circuit.

    Element l is the adjoint of the measurement circuit applied to the
    computational projector |l><l|; with internal channels this reproduces the
    Heisenberg pullback of the measurement noise.
    """

    rotation: ParamCircuit

    def __post_init__(self):
        for slot in self.rotation.n_params:
            if slot != "mu":
                raise ValueError("measurement circuits parametrize slot 'mu' only")

    @property
    def n_qubits(self) -> int:
        return self.rotation.n_qubits

    def elements(self, mu) -> list:
        """POVM elements Pi_l(mu); they sum to the identity."""
        mu = np.asarray(mu, dtype=float)
        dim = 2**self.n_qubits
        ops = _compile_circuit(self.rotation)
        out = []
        for l in range(dim):
            proj = np.zeros((dim, dim), dtype=complex)
            proj[l, l] = 1.0
            out.append(HermitianOp(_pullback_ops(ops, proj, {"mu": mu})))
        total = sum(e.data for e in out)
        if np.abs(total - np.eye(dim)).max() > 1e-10:
            raise InternalConsistencyError("POVM elements do not sum to the identity")
        return out


@dataclass(eq=False)
class MetrologyModel:
    """Preparation, commuting phase encoding, noise, and measurement.

    ``encoding`` gates are rotations in slot ``phi``; their full-space
    generators must commute pairwise.  ``noise`` channels act after the
    encoding unitary and do not depend on any parameter.
    """

    n_qubits: int
    prep: ParamCircuit
    encoding: tuple
    noise: tuple
    povm: Povm
    _compiled: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.encoding = tuple(self.encoding)
        self.noise = tuple(self.noise)
        if self.prep.n_qubits != self.n_qubits or self.povm.n_qubits != self.n_qubits:
            raise ValueError("preparation and measurement must match the model's qubit count")
        for slot in self.prep.n_params:
            if slot != "theta":
                raise ValueError("preparation circuits parametrize slot 'theta' only")
        for gate in self.encoding:
            if not gate.is_rotation or gate.slot != "phi":
                raise ValueError(f"encoding gate {gate.label} must be a rotation in slot 'phi'")
            if any(q < 0 or q >= self.n_qubits for q in gate.qubits):
                raise ValueError(f"encoding gate {gate.label} out of range")
        for channel in self.noise:
            if any(q >= self.n_qubits for q in channel.qubits):
                raise ValueError("noise channel out of range")
        gens = [g for g in self.generators_dense()]
        for i in range(len(gens)):
            for j in range(i + 1, len(gens)):
                comm = gens[i] @ gens[j] - gens[j] @ gens[i]
                if np.abs(comm).max() > COMMUTATION_TOL:
                    raise ValueError("encoding generators do not commute")

    @property
    def d(self) -> int:
        """Number of encoded phases."""
        if not self.encoding:
            return 0
        return max(g.index for g in self.encoding) + 1

    @property
    def n_theta(self) -> int:
        return self.prep.n_params.get("theta", 0)

    @property
    def n_mu(self) -> int:
        return self.povm.rotation.n_params.get("mu", 0)

    def generators_dense(self) -> list:
        """Full-space generators H_j = sum of coeff * P / 2 per phase index."""
        dim = 2**self.n_qubits
        gens = [np.zeros((dim, dim), dtype=complex) for _ in range(self.d)]
        for gate in self.encoding:
            local = pauli_dense(gate.word) if gate.kind == "pauli_rotation" else axis_dense(gate.axis)
            full = embed_operator(local, gate.qubits, self.n_qubits)
            gens[gate.index] += gate.coeff * full / 2.0
        return gens

    @property
    def compiled(self) -> "_CompiledModel":
        if self._compiled is None:
            self._compiled = _compile_model(self)
        return self._compiled


def encoding_generators(model: MetrologyModel) -> list:
    """The commuting Hermitian generators of the phase encoding."""
    return [HermitianOp(g) for g in model.generators_dense()]


# ---------------------------------------------------------------------------
# Compiled representation: embedded matrices precomputed once per model.
# Channels compile to an elementwise weight mask (all-diagonal Kraus) or to a
# superoperator acting on the flattened state; the hot path additionally sinks
# channels across disjoint unitaries and fuses adjacent channels.
# ---------------------------------------------------------------------------


class _RotOp:
    __slots__ = ("p_full", "coeff", "base", "slot", "index", "shift_const", "label", "qubits")

    def __init__(self, p_full, coeff, base, slot, index, shift_const, label, qubits):
        self.p_full = p_full
        self.coeff = coeff
        self.base = base
        self.slot = slot
        self.index = index
        self.shift_const = shift_const
        self.label = label
        self.qubits = qubits

    def matrix(self, angle: float) -> np.ndarray:
        dim = self.p_full.shape[0]
        out = (-1j * np.sin(angle / 2)) * self.p_full
        out.flat[:: dim + 1] += np.cos(angle / 2)
        return out

    def matrices(self, angles: np.ndarray) -> np.ndarray:
        """Rotation matrices for a vector of angles, shape (batch, dim, dim)."""
        dim = self.p_full.shape[0]
        cos = np.cos(angles / 2)
        sin = np.sin(angles / 2)
        out = (-1j * sin)[:, None, None] * self.p_full[None, :, :]
        out[:, np.arange(dim), np.arange(dim)] += cos[:, None]
        return out

    def apply_vector(self, angle: float, psi: np.ndarray) -> np.ndarray:
        return np.cos(angle / 2) * psi - (1j * np.sin(angle / 2)) * (self.p_full @ psi)


class _FixOp:
    __slots__ = ("u_full", "label", "qubits")

    def __init__(self, u_full, label, qubits):
        self.u_full = u_full
        self.label = label
        self.qubits = qubits


class _ChanOp:
    """Compiled channel: mode 'diag' (weight mask), 'super', or 'param'."""

    __slots__ = ("mode", "payload", "adjoint_payload", "channel", "slot", "index",
                 "label", "qubits", "_payload_t")

    def __init__(self, mode, payload, adjoint_payload, channel, slot, index, label, qubits):
        self.mode = mode
        self.payload = payload
        self.adjoint_payload = adjoint_payload
        self.channel = channel
        self.slot = slot
        self.index = index
        self.label = label
        self.qubits = qubits
        self._payload_t = None

    def apply(self, rho: np.ndarray, p_value: float | None = None) -> np.ndarray:
        if self.mode == "diag":
            return rho * self.payload
        if self.mode == "super":
            dim = rho.shape[0]
            return (self.payload @ rho.reshape(-1)).reshape(dim, dim)
        return self.channel.with_p(p_value).apply_dense(rho)

    def apply_batch(self, rhos: np.ndarray, p_values=None) -> np.ndarray:
        """Apply to a stack of states (batch, dim, dim)."""
        if self.mode == "diag":
            return rhos * self.payload
        if self.mode == "super":
            batch, dim, _ = rhos.shape
            if self._payload_t is None:
                self._payload_t = np.ascontiguousarray(self.payload.T)
            return (rhos.reshape(batch, -1) @ self._payload_t).reshape(batch, dim, dim)
        return np.stack([
            self.channel.with_p(p).apply_dense(rho) for p, rho in zip(p_values, rhos)
        ])

    def adjoint(self, op: np.ndarray, p_value: float | None = None) -> np.ndarray:
        if self.mode == "diag":
            return op * self.adjoint_payload
        if self.mode == "super":
            dim = op.shape[0]
            return (self.adjoint_payload @ op.reshape(-1)).reshape(dim, dim)
        return self.channel.with_p(p_value).adjoint_dense(op)


def _flatten_kraus(channel: Channel, n_qubits: int, weight: float = 1.0) -> list:
    """Full-space Kraus operators of the channel, convex weights absorbed."""
    if isinstance(channel, KrausChannel):
        return [np.sqrt(weight) * k for k in channel.embedded_kraus(n_qubits)]
    return (
        _flatten_kraus(channel.branch_a, n_qubits, weight * (1.0 - channel.p))
        + _flatten_kraus(channel.branch_b, n_qubits, weight * channel.p)
    )


def _channel_payloads(kraus: list) -> tuple:
    """(mode, apply payload, adjoint payload) for a flat Kraus list."""
    dim = kraus[0].shape[0]
    off_diag = ~np.eye(dim, dtype=bool)
    if all(np.all(k[off_diag] == 0.0) for k in kraus):
        weight = np.zeros((dim, dim), dtype=complex)
        for k in kraus:
            diag = np.diagonal(k)
            weight += np.outer(diag, diag.conj())
        return "diag", weight, weight.conj()
    forward = np.zeros((dim * dim, dim * dim), dtype=complex)
    backward = np.zeros_like(forward)
    for k in kraus:
        forward += np.kron(k, k.conj())
        backward += np.kron(k.conj().T, k.T)
    return "super", forward, backward


def _compile_channel(channel: Channel, n_qubits: int, slot, index, label) -> _ChanOp:
    qubits = tuple(channel.qubits)
    if slot is not None:
        return _ChanOp("param", None, None, channel, slot, index, label, qubits)
    mode, forward, backward = _channel_payloads(_flatten_kraus(channel, n_qubits))
    return _ChanOp(mode, forward, backward, channel, None, None, label, qubits)


def _compile_gate(gate: GateSpec, n_qubits: int):
    if gate.is_rotation:
        local = pauli_dense(gate.word) if gate.kind == "pauli_rotation" else axis_dense(gate.axis)
        p_full = embed_operator(local, gate.qubits, n_qubits)
        return _RotOp(p_full, gate.coeff, gate.angle, gate.slot, gate.index,
                      gate.shift_const, gate.label, gate.qubits)
    if gate.kind == "fixed_unitary":
        return _FixOp(embed_operator(gate.unitary, gate.qubits, n_qubits),
                      gate.label, gate.qubits)
    return _compile_channel(gate.channel, n_qubits, gate.slot, gate.index, gate.label)


def _compile_circuit(circuit: ParamCircuit) -> list:
    return [_compile_gate(g, circuit.n_qubits) for g in circuit.gates]


def _sink_channels(ops: list) -> list:
    """Move channels past later unitaries on disjoint qubits (they commute).

    This lengthens unitary runs so they merge into single matrices and lets
    adjacent channels fuse.  The represented pipeline map is unchanged.
    """
    ops = list(ops)
    changed = True
    while changed:
        changed = False
        for i in range(len(ops) - 1):
            first, second = ops[i], ops[i + 1]
            if isinstance(first, _ChanOp) and not isinstance(second, _ChanOp):
                if not set(first.qubits) & set(second.qubits):
                    ops[i], ops[i + 1] = second, first
                    changed = True
    return ops


def _fuse_channels(ops: list, dim: int) -> list:
    """Merge runs of adjacent non-parametrized channels into one operation."""
    out = []
    for op in ops:
        previous = out[-1] if out else None
        if (
            isinstance(op, _ChanOp)
            and op.mode != "param"
            and isinstance(previous, _ChanOp)
            and previous.mode != "param"
        ):
            out[-1] = _fuse_pair(previous, op, dim)
        else:
            out.append(op)
    return out


def _fuse_pair(first: _ChanOp, second: _ChanOp, dim: int) -> _ChanOp:
    label = f"{first.label} + {second.label}"
    qubits = tuple(sorted(set(first.qubits) | set(second.qubits)))
    if first.mode == "diag" and second.mode == "diag":
        weight = first.payload * second.payload
        return _ChanOp("diag", weight, weight.conj(), None, None, None, label, qubits)
    forward_1, backward_1 = _as_super(first, dim)
    forward_2, backward_2 = _as_super(second, dim)
    # pipeline order: first then second; adjoints compose in reverse
    return _ChanOp("super", forward_2 @ forward_1, backward_1 @ backward_2,
                   None, None, None, label, qubits)


def _as_super(op: _ChanOp, dim: int) -> tuple:
    if op.mode == "super":
        return op.payload, op.adjoint_payload
    flat = op.payload.reshape(-1)
    return np.diag(flat), np.diag(flat.conj())


def _optimize_ops(ops: list, dim: int) -> list:
    return _fuse_channels(_sink_channels(ops), dim)


class _CompiledModel:
    """Embedded matrices and occurrence tables for one model."""

    __slots__ = ("n", "dim", "d", "prep_ops", "enc_ops", "noise_op",
                 "noise_adjoints", "meas_ops", "occurrences", "n_params")

    def __init__(self, model: MetrologyModel):
        self.n = model.n_qubits
        self.dim = 2**model.n_qubits
        self.d = model.d
        self.prep_ops = _optimize_ops(_compile_circuit(model.prep), self.dim)
        enc_circuit = ParamCircuit(model.n_qubits, model.encoding, {"phi": model.d})
        self.enc_ops = _compile_circuit(enc_circuit)
        noise_ops = [
            _compile_channel(ch, model.n_qubits, None, None, f"noise[{i}]")
            for i, ch in enumerate(model.noise)
        ]
        fused = _fuse_channels(noise_ops, self.dim)  # plain channels always fuse
        self.noise_op = fused[0] if fused else None
        self.noise_adjoints = noise_ops  # unfused, for the POVM pullback
        self.meas_ops = _optimize_ops(_compile_circuit(model.povm.rotation), self.dim)
        self.n_params = {
            "theta": model.n_theta,
            "phi": model.d,
            "mu": model.n_mu,
        }
        # Occurrence tables: every parametrized op, in pipeline order, per slot.
        self.occurrences = {slot: [] for slot in SLOTS}
        for stage, ops in (("prep", self.prep_ops), ("enc", self.enc_ops),
                           ("meas", self.meas_ops)):
            for pos, op in enumerate(ops):
                slot = getattr(op, "slot", None)
                if slot is not None:
                    self.occurrences[slot].append((stage, pos, op))


def _compile_model(model: MetrologyModel) -> _CompiledModel:
    return _CompiledModel(model)


# ---------------------------------------------------------------------------
# Evaluation. Angles resolve as coeff * params[slot][index] + base + shift.
# ---------------------------------------------------------------------------


def _angle_of(op: _RotOp, params: dict, shifts: dict, stage: str, pos: int) -> float:
    angle = op.base
    if op.slot is not None:
        angle += op.coeff * params[op.slot][op.index]
    return angle + shifts.get((stage, pos), 0.0)


def _run_ops(rho: np.ndarray, ops, params: dict, shifts: dict, stage: str,
             start: int = 0) -> np.ndarray:
    pending = None
    for pos in range(start, len(ops)):
        op = ops[pos]
        if isinstance(op, _ChanOp):
            if pending is not None:
                rho = pending @ rho @ pending.conj().T
                pending = None
            if op.mode == "param":
                p = params[op.slot][op.index] + shifts.get((stage, pos), 0.0)
                rho = op.apply(rho, p)
            else:
                rho = op.apply(rho)
        else:
            mat = op.matrix(_angle_of(op, params, shifts, stage, pos)) \
                if isinstance(op, _RotOp) else op.u_full
            pending = mat if pending is None else mat @ pending
    if pending is not None:
        rho = pending @ rho @ pending.conj().T
    return rho


def _pullback_ops(ops, op_mat: np.ndarray, params: dict, shifts: dict | None = None,
                  stage: str = "meas") -> np.ndarray:
    """Adjoint of the circuit channel applied to an operator (reverse order)."""
    shifts = shifts or {}
    out = op_mat
    for pos in range(len(ops) - 1, -1, -1):
        op = ops[pos]
        if isinstance(op, _ChanOp):
            if op.mode == "param":
                p = params[op.slot][op.index] + shifts.get((stage, pos), 0.0)
                out = op.adjoint(out, p)
            else:
                out = op.adjoint(out)
        else:
            mat = op.matrix(_angle_of(op, params, shifts, stage, pos)) \
                if isinstance(op, _RotOp) else op.u_full
            out = mat.conj().T @ out @ mat
    return out


def _prep_dense(cm: _CompiledModel, theta, shifts: dict | None = None) -> np.ndarray:
    """Initial state |0...0><0...0| through the preparation stage.

    The leading unitary segment is applied as a state vector; the density
    path starts at the first channel.
    """
    shifts = shifts or {}
    params = {"theta": theta}
    psi = np.zeros(cm.dim, dtype=complex)
    psi[0] = 1.0
    start = len(cm.prep_ops)
    for pos, op in enumerate(cm.prep_ops):
        if isinstance(op, _ChanOp):
            start = pos
            break
        if isinstance(op, _RotOp):
            psi = op.apply_vector(_angle_of(op, params, shifts, "prep", pos), psi)
        else:
            psi = op.u_full @ psi
    rho = np.outer(psi, psi.conj())
    if start == len(cm.prep_ops):
        return rho
    return _run_ops(rho, cm.prep_ops, params, shifts, "prep", start=start)


def _encode_unitary(cm: _CompiledModel, phi, shifts: dict | None = None) -> np.ndarray:
    shifts = shifts or {}
    params = {"phi": phi}
    total = None
    for pos, op in enumerate(cm.enc_ops):
        mat = op.matrix(_angle_of(op, params, shifts, "enc", pos))
        total = mat if total is None else mat @ total
    return total if total is not None else np.eye(cm.dim, dtype=complex)


def _encode_dense(cm: _CompiledModel, rho: np.ndarray, phi, shifts: dict | None = None,
                  noisy: bool = True, unitary: np.ndarray | None = None) -> np.ndarray:
    u = _encode_unitary(cm, phi, shifts) if unitary is None else unitary
    rho = u @ rho @ u.conj().T
    if noisy and cm.noise_op is not None:
        rho = cm.noise_op.apply(rho)
    return rho


def _measure_probs(cm: _CompiledModel, rho: np.ndarray, mu,
                   shifts: dict | None = None) -> np.ndarray:
    rho = _run_ops(rho, cm.meas_ops, {"mu": mu}, shifts or {}, "meas")
    return rho.diagonal().real.copy()


def _check_probs(p: np.ndarray) -> np.ndarray:
    if p.min() < -PROB_CLAMP_TOL:
        raise InternalConsistencyError(f"negative outcome probability {p.min()}")
    if abs(p.sum() - 1.0) > PROB_SUM_TOL:
        raise InternalConsistencyError(f"outcome probabilities sum to {p.sum()}")
    return np.clip(p, 0.0, None)


# ---------------------------------------------------------------------------
# Public model operations.
# ---------------------------------------------------------------------------


def prepare(model: MetrologyModel, theta) -> DensityMatrix:
    """Probe state from |0...0> through the preparation circuit."""
    theta = _check_params(model, "theta", theta)
    return DensityMatrix(_prep_dense(model.compiled, theta))


def encode(model: MetrologyModel, rho: DensityMatrix, phi, noisy: bool = True) -> DensityMatrix:
    """Apply the commuting phase rotations, then (optionally) the noise channels."""
    phi = _check_params(model, "phi", phi)
    return DensityMatrix(_encode_dense(model.compiled, rho.data, phi, noisy=noisy))


def probabilities(model: MetrologyModel, theta, phi, mu) -> np.ndarray:
    """Outcome probabilities of the full pipeline; sums to one, clamped at zero."""
    theta = _check_params(model, "theta", theta)
    phi = _check_params(model, "phi", phi)
    mu = _check_params(model, "mu", mu)
    cm = model.compiled
    rho = _encode_dense(cm, _prep_dense(cm, theta), phi)
    return _check_probs(_measure_probs(cm, rho, mu))


def noisy_povm(model: MetrologyModel, mu) -> list:
    """POVM elements pulled back through the noise: Pi'_l = N^dag[Pi_l(mu)]."""
    mu = _check_params(model, "mu", mu)
    elements = model.povm.elements(mu)
    out = []
    for element in elements:
        op = element.data
        for chan_op in reversed(model.compiled.noise_adjoints):
            op = chan_op.adjoint(op)
        out.append(HermitianOp(op))
    return out


def state_vector(model: MetrologyModel, theta, phi) -> np.ndarray:
    """Pure encoded state |psi(theta, phi)>; raises if the model has any channel."""
    if model.prep.has_channels or model.noise:
        raise ValueError("state_vector requires a channel-free preparation and no noise")
    theta = _check_params(model, "theta", theta)
    phi = _check_params(model, "phi", phi)
    cm = model.compiled
    psi = np.zeros(cm.dim, dtype=complex)
    psi[0] = 1.0
    params = {"theta": theta}
    for pos, op in enumerate(cm.prep_ops):
        if isinstance(op, _RotOp):
            psi = op.apply_vector(_angle_of(op, params, {}, "prep", pos), psi)
        else:
            psi = op.u_full @ psi
    return _encode_unitary(cm, phi) @ psi


def _check_params(model: MetrologyModel, slot: str, values) -> np.ndarray:
    values = np.atleast_1d(np.asarray(values, dtype=float))
    expected = model.compiled.n_params[slot]
    if values.shape != (expected,):
        raise ValueError(f"slot {slot!r} expects {expected} parameters, got {values.shape}")
    return values
