"""Shared builders for randomized test instances."""

import numpy as np

import vqmetro as vq

PAULI_WORDS_1Q = ["X", "Y", "Z"]
PAULI_WORDS_2Q = ["XX", "XY", "XZ", "YZ", "ZZ", "YX"]


def random_state_vector(rng, n_qubits):
    dim = 2**n_qubits
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


def random_density(rng, n_qubits, rank=None):
    dim = 2**n_qubits
    rank = rank or dim
    a = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = a @ a.conj().T
    return vq.DensityMatrix(rho / np.trace(rho))


def random_unitary(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(a)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def random_hermitian(rng, n_qubits):
    dim = 2**n_qubits
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return vq.HermitianOp((a + a.conj().T) / 2)


def random_channel(rng, n_qubits):
    """A random one- or two-qubit noise channel embedded on n qubits."""
    kind = rng.integers(3)
    if kind == 0:
        return vq.dephasing(rng.uniform(0.05, 0.4), int(rng.integers(n_qubits)))
    if kind == 1:
        return vq.depolarizing(rng.uniform(0.05, 0.3), (int(rng.integers(n_qubits)),))
    qubits = tuple(int(q) for q in rng.choice(n_qubits, size=2, replace=False))
    return vq.depolarizing(rng.uniform(0.05, 0.2), qubits)


def random_prep_gates(rng, n_qubits, n_theta, with_channels):
    gates = []
    for i in range(n_theta):
        if rng.random() < 0.6:
            word = str(rng.choice(PAULI_WORDS_1Q))
            qubits = (int(rng.integers(n_qubits)),)
        else:
            word = str(rng.choice(PAULI_WORDS_2Q))
            qubits = tuple(int(q) for q in rng.choice(n_qubits, size=2, replace=False))
        gates.append(vq.rotation_gate(word, qubits, slot="theta", index=i))
        if with_channels and rng.random() < 0.3:
            gates.append(vq.channel_gate(random_channel(rng, n_qubits)))
    return gates


def random_model(rng, n_qubits=3, d=3, n_theta=4, noisy=True, axis_encoding=True):
    """Random commuting-encoding model; noisy variants carry dephasing and
    depolarizing layers in the preparation, after the encoding, and inside
    the measurement."""
    prep = vq.ParamCircuit(
        n_qubits, random_prep_gates(rng, n_qubits, n_theta, noisy), {"theta": n_theta}
    )
    encoding = []
    for j in range(d):
        if axis_encoding and rng.random() < 0.5:
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            encoding.append(vq.axis_rotation_gate(axis, j % n_qubits, slot="phi", index=j))
        else:
            word = str(rng.choice(PAULI_WORDS_1Q))
            encoding.append(vq.rotation_gate(word, (j % n_qubits,), slot="phi", index=j))
    noise = []
    if noisy:
        noise.append(vq.dephasing(rng.uniform(0.05, 0.3), int(rng.integers(n_qubits))))
        noise.append(vq.depolarizing(rng.uniform(0.05, 0.2), (int(rng.integers(n_qubits)),)))
    meas_gates = []
    n_mu = 2 * n_qubits
    for q in range(n_qubits):
        meas_gates.append(vq.rotation_gate("Z", (q,), slot="mu", index=2 * q))
        meas_gates.append(vq.rotation_gate("Y", (q,), slot="mu", index=2 * q + 1))
    if noisy:
        meas_gates.append(vq.channel_gate(random_channel(rng, n_qubits)))
    povm = vq.Povm(vq.ParamCircuit(n_qubits, meas_gates, {"mu": n_mu}))
    model = vq.MetrologyModel(n_qubits, prep, encoding, noise, povm)
    return model


def random_params(rng, model):
    return (
        rng.uniform(0, 2 * np.pi, model.n_theta),
        rng.uniform(0, 2 * np.pi, model.d),
        rng.uniform(0, 2 * np.pi, model.n_mu),
    )
