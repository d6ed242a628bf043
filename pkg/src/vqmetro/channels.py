"""Quantum channels in Kraus and convex-combination form, with adjoints.

Channels store only the qubits they act on; they are embedded by identity
on the remaining qubits when applied to a state.  The adjoint action is what
pulls POVM elements back through the noise.
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import InternalConsistencyError
from .qalg import (
    PAULI_1Q,
    DensityMatrix,
    HermitianOp,
    embed_operator,
    is_unitary,
    _qubit_count,
)

COMPLETENESS_TOL = 1e-10


@dataclass(eq=False)
class KrausChannel:
    """Completely positive trace-preserving map given by Kraus operators."""

    kraus_ops: tuple
    qubits: tuple

    def __post_init__(self):
        ops = tuple(np.asarray(k, dtype=complex) for k in self.kraus_ops)
        if not ops:
            raise ValueError("channel needs at least one Kraus operator")
        self.qubits = tuple(int(q) for q in self.qubits)
        dim = 2 ** len(self.qubits)
        for k in ops:
            if k.shape != (dim, dim):
                raise ValueError(
                    f"Kraus operator shape {k.shape} does not match qubits {self.qubits}"
                )
        total = sum(k.conj().T @ k for k in ops)
        if np.abs(total - np.eye(dim)).max() > COMPLETENESS_TOL:
            raise InternalConsistencyError(
                "Kraus operators violate completeness: sum K^dag K != I"
            )
        self.kraus_ops = ops
        self._embedded = {}

    def embedded_kraus(self, n_qubits: int) -> tuple:
        """Kraus operators expanded to the full n-qubit space (cached)."""
        if n_qubits not in self._embedded:
            self._embedded[n_qubits] = tuple(
                embed_operator(k, self.qubits, n_qubits) for k in self.kraus_ops
            )
        return self._embedded[n_qubits]

    def apply_dense(self, rho: np.ndarray) -> np.ndarray:
        n = _qubit_count(rho.shape[0])
        kraus = self.embedded_kraus(n)
        out = np.zeros_like(rho)
        for k in kraus:
            out += k @ rho @ k.conj().T
        return out

    def adjoint_dense(self, op: np.ndarray) -> np.ndarray:
        n = _qubit_count(op.shape[0])
        kraus = self.embedded_kraus(n)
        out = np.zeros_like(op)
        for k in kraus:
            out += k.conj().T @ op @ k
        return out


@dataclass(eq=False)
class ConvexChannel:
    """(1 - p) * branch_a + p * branch_b, differentiable in p by two evaluations."""

    p: float
    branch_a: KrausChannel
    branch_b: KrausChannel

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"mixing probability {self.p} outside [0, 1]")
        if set(self.branch_a.qubits) != set(self.branch_b.qubits):
            raise ValueError("convex branches must act on identical qubit sets")

    @property
    def qubits(self) -> tuple:
        return self.branch_a.qubits

    def with_p(self, p: float) -> "ConvexChannel":
        return ConvexChannel(p, self.branch_a, self.branch_b)

    def apply_dense(self, rho: np.ndarray) -> np.ndarray:
        return (1.0 - self.p) * self.branch_a.apply_dense(rho) + self.p * self.branch_b.apply_dense(rho)

    def adjoint_dense(self, op: np.ndarray) -> np.ndarray:
        return (1.0 - self.p) * self.branch_a.adjoint_dense(op) + self.p * self.branch_b.adjoint_dense(op)


Channel = KrausChannel | ConvexChannel


def apply(channel: Channel, rho: DensityMatrix) -> DensityMatrix:
    """Apply the channel, embedding by identity on untouched qubits."""
    _check_range(channel, rho.n_qubits)
    return DensityMatrix(channel.apply_dense(rho.data))


def adjoint_apply(channel: Channel, op: HermitianOp) -> HermitianOp:
    """Heisenberg-picture (adjoint) action; unital for trace-preserving maps."""
    _check_range(channel, op.n_qubits)
    return HermitianOp(channel.adjoint_dense(op.data))


def _check_range(channel: Channel, n_qubits: int) -> None:
    if any(q >= n_qubits for q in channel.qubits):
        raise ValueError(
            f"channel on qubits {channel.qubits} out of range for {n_qubits} qubits"
        )


def identity_channel(qubits) -> KrausChannel:
    dim = 2 ** len(tuple(qubits))
    return KrausChannel((np.eye(dim, dtype=complex),), tuple(qubits))


def dephasing(p: float, qubit: int) -> ConvexChannel:
    """(1 - p) rho + p Z rho Z on one qubit."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"dephasing probability {p} outside [0, 1]")
    flip = KrausChannel((PAULI_1Q["Z"],), (qubit,))
    return ConvexChannel(p, identity_channel((qubit,)), flip)


def depolarizing(p: float, qubits) -> ConvexChannel:
    """Uniform Pauli twirl with total weight p on one or two qubits.

    Single qubit: (1 - p) rho + (p / 3) (X rho X + Y rho Y + Z rho Z).
    Two qubits: (1 - p) rho + (p / 15) * sum over the 15 non-identity
    two-qubit Pauli conjugations.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarizing probability {p} outside [0, 1]")
    qubits = tuple(int(q) for q in qubits)
    if len(qubits) == 1:
        paulis = [PAULI_1Q[s] for s in "XYZ"]
    elif len(qubits) == 2:
        paulis = [
            np.kron(PAULI_1Q[a], PAULI_1Q[b])
            for a, b in product("IXYZ", repeat=2)
            if (a, b) != ("I", "I")
        ]
    else:
        raise ValueError("depolarizing is defined for 1 or 2 qubits")
    weight = 1.0 / np.sqrt(len(paulis))
    twirl = KrausChannel(tuple(weight * p_mat for p_mat in paulis), qubits)
    return ConvexChannel(p, identity_channel(qubits), twirl)


def mixed_unitary(unitaries, probs, qubits=None) -> KrausChannel:
    """Random-unitary channel: unitary U_k applied with probability p_k."""
    unitaries = [np.asarray(u, dtype=complex) for u in unitaries]
    probs = np.asarray(probs, dtype=float)
    if len(unitaries) != len(probs):
        raise ValueError("need one probability per unitary")
    if np.any(probs < 0):
        raise ValueError("probabilities must be nonnegative")
    if abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError(f"probabilities sum to {probs.sum()}, expected 1")
    for u in unitaries:
        if not is_unitary(u):
            raise ValueError("mixed_unitary requires unitary matrices")
    if qubits is None:
        qubits = tuple(range(_qubit_count(unitaries[0].shape[0])))
    kraus = tuple(np.sqrt(pk) * u for pk, u in zip(probs, unitaries))
    return KrausChannel(kraus, tuple(qubits))


def choi_matrix(channel: Channel, n_qubits: int) -> np.ndarray:
    """Choi state of the channel embedded on n qubits; equal channels give equal Choi."""
    dim = 2**n_qubits
    choi = np.zeros((dim * dim, dim * dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            unit = np.zeros((dim, dim), dtype=complex)
            unit[i, j] = 1.0
            choi[i * dim : (i + 1) * dim, j * dim : (j + 1) * dim] = channel.apply_dense(unit)
    return choi / dim
