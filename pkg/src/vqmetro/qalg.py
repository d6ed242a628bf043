"""Dense complex linear algebra for small n-qubit systems.

States are density matrices, observables are Hermitian operators, and all
parametrized gates are rotations generated by Pauli words.  Everything is a
plain dense numpy array underneath; the target scale is a handful of qubits.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InternalConsistencyError

HERM_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-9
UNITARY_TOL = 1e-10

PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "Y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}

PAULI_LETTERS = "IXYZ"


def _qubit_count(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def is_hermitian(mat: np.ndarray, tol: float = HERM_TOL) -> bool:
    return bool(np.abs(mat - mat.conj().T).max() <= tol)


def is_unitary(mat: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    dim = mat.shape[0]
    return bool(np.abs(mat.conj().T @ mat - np.eye(dim)).max() <= tol)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite operator on n qubits."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ValueError("density matrix must be square")
        _qubit_count(data.shape[0])
        if not is_hermitian(data):
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(data)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix has trace {tr}, expected 1")
        if np.linalg.eigvalsh(data)[0] < -PSD_TOL:
            raise ValueError("density matrix has a significantly negative eigenvalue")
        object.__setattr__(self, "data", data)

    @property
    def n_qubits(self) -> int:
        return _qubit_count(self.data.shape[0])

    @classmethod
    def basis_state(cls, n_qubits: int, index: int = 0) -> "DensityMatrix":
        dim = 2**n_qubits
        data = np.zeros((dim, dim), dtype=complex)
        data[index, index] = 1.0
        return cls(data)

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        dim = 2**n_qubits
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def from_state_vector(cls, psi: np.ndarray) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        norm = np.linalg.norm(psi)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"state vector has norm {norm}, expected 1")
        return cls(np.outer(psi, psi.conj()))


@dataclass(frozen=True, eq=False)
class HermitianOp:
    """Hermitian operator on n qubits (observable, POVM element, generator)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ValueError("operator must be square")
        _qubit_count(data.shape[0])
        if not is_hermitian(data):
            raise ValueError("operator is not Hermitian")
        object.__setattr__(self, "data", data)

    @property
    def n_qubits(self) -> int:
        return _qubit_count(self.data.shape[0])


def validate_pauli_word(word: str) -> str:
    if not word:
        raise ValueError("Pauli word must not be empty")
    bad = set(word) - set(PAULI_LETTERS)
    if bad:
        raise ValueError(f"invalid Pauli letters {sorted(bad)} in word {word!r}")
    return word


def pauli_dense(word: str) -> np.ndarray:
    """Dense matrix of a Pauli word, qubit 0 as the leftmost tensor factor."""
    validate_pauli_word(word)
    mat = PAULI_1Q[word[0]]
    for letter in word[1:]:
        mat = np.kron(mat, PAULI_1Q[letter])
    return mat


def pauli_matrix(word: str) -> HermitianOp:
    """Kronecker-product expansion of a Pauli word as a Hermitian operator."""
    return HermitianOp(pauli_dense(word))


def pauli_rotation(word: str, angle: float) -> np.ndarray:
    """exp(-i * angle * P / 2) for the Pauli word P, in closed form.

    P squares to the identity, so the exponential is exactly
    cos(angle/2) I - i sin(angle/2) P.
    """
    p = pauli_dense(word)
    dim = p.shape[0]
    return np.cos(angle / 2) * np.eye(dim, dtype=complex) - 1j * np.sin(angle / 2) * p


def axis_dense(axis) -> np.ndarray:
    """n . sigma for a unit 3-vector n; Hermitian, unitary, squares to I."""
    axis = np.asarray(axis, dtype=float)
    if axis.shape != (3,):
        raise ValueError("axis must be a 3-vector")
    if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
        raise ValueError(f"axis must be normalized, got |n| = {np.linalg.norm(axis)}")
    return axis[0] * PAULI_1Q["X"] + axis[1] * PAULI_1Q["Y"] + axis[2] * PAULI_1Q["Z"]


def axis_rotation(axis, angle: float) -> np.ndarray:
    """exp(-i * angle * (n . sigma) / 2) for a unit axis n."""
    p = axis_dense(axis)
    return np.cos(angle / 2) * np.eye(2, dtype=complex) - 1j * np.sin(angle / 2) * p


def embed_operator(op: np.ndarray, qubits, n_qubits: int) -> np.ndarray:
    """Expand a k-qubit operator to n qubits, acting on the given indices.

    The remaining qubits carry the identity.  Qubit 0 is the most significant
    (leftmost) tensor factor throughout.
    """
    op = np.asarray(op, dtype=complex)
    qubits = tuple(int(q) for q in qubits)
    k = len(qubits)
    if op.shape != (2**k, 2**k):
        raise ValueError(f"operator shape {op.shape} does not match {k} qubits")
    if len(set(qubits)) != k:
        raise ValueError(f"duplicate qubit indices in {qubits}")
    if any(q < 0 or q >= n_qubits for q in qubits):
        raise ValueError(f"qubit indices {qubits} out of range for {n_qubits} qubits")
    if qubits == tuple(range(n_qubits)):
        return op.copy()
    rest = [q for q in range(n_qubits) if q not in qubits]
    full = np.kron(op, np.eye(2 ** (n_qubits - k), dtype=complex))
    order = list(qubits) + rest
    perm = [order.index(q) for q in range(n_qubits)]
    axes = perm + [n_qubits + p for p in perm]
    tensor = full.reshape((2,) * (2 * n_qubits))
    return np.ascontiguousarray(tensor.transpose(axes)).reshape(2**n_qubits, 2**n_qubits)


def expectation(rho: DensityMatrix, op: HermitianOp) -> float:
    """Re Tr(op . rho); raises if the trace has a non-negligible imaginary part."""
    if rho.data.shape != op.data.shape:
        raise ValueError(
            f"dimension mismatch: state {rho.data.shape} vs operator {op.data.shape}"
        )
    value = np.einsum("ij,ji->", op.data, rho.data)
    if abs(value.imag) > 1e-10:
        raise InternalConsistencyError(
            f"expectation value has imaginary residue {value.imag}"
        )
    return float(value.real)


def conjugate_evolve(rho: DensityMatrix, unitary: np.ndarray) -> DensityMatrix:
    """U rho U^dag for a unitary U; preserves trace and spectrum."""
    unitary = np.asarray(unitary, dtype=complex)
    if unitary.shape != rho.data.shape:
        raise ValueError(
            f"dimension mismatch: state {rho.data.shape} vs unitary {unitary.shape}"
        )
    if not is_unitary(unitary):
        raise ValueError("matrix is not unitary within tolerance")
    return DensityMatrix(unitary @ rho.data @ unitary.conj().T)
