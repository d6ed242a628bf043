import numpy as np
import pytest

import vqmetro as vq
from vqmetro.channels import choi_matrix, identity_channel
from vqmetro.errors import InternalConsistencyError
from vqmetro.qalg import PAULI_1Q

from helpers import random_channel, random_density, random_hermitian, random_unitary


def plus_state():
    return vq.DensityMatrix.from_state_vector(np.array([1.0, 1.0]) / np.sqrt(2))


class TestKrausChannel:
    def test_completeness_enforced(self):
        with pytest.raises(InternalConsistencyError, match="completeness"):
            vq.KrausChannel((0.5 * PAULI_1Q["X"],), (0,))

    def test_out_of_range_application(self):
        with pytest.raises(ValueError, match="range"):
            vq.apply(vq.dephasing(0.2, qubit=3), vq.DensityMatrix.basis_state(2))


class TestDephasing:
    def test_p_zero_is_identity(self):
        rng = np.random.default_rng(1)
        rho = random_density(rng, 2)
        out = vq.apply(vq.dephasing(0.0, 0), rho)
        assert np.allclose(out.data, rho.data, atol=1e-14)

    def test_p_one_is_z_conjugation(self):
        rho = plus_state()
        out = vq.apply(vq.dephasing(1.0, 0), rho)
        expected = PAULI_1Q["Z"] @ rho.data @ PAULI_1Q["Z"]
        assert np.allclose(out.data, expected, atol=1e-14)

    def test_full_dephasing_kills_coherence(self):
        out = vq.apply(vq.dephasing(0.5, 0), plus_state())
        assert np.allclose(out.data, np.eye(2) / 2, atol=1e-14)

    def test_offdiagonal_scaling(self):
        out = vq.apply(vq.dephasing(0.1, 0), plus_state())
        assert out.data[0, 1] == pytest.approx(0.4)

    def test_invalid_probability(self):
        with pytest.raises(ValueError):
            vq.dephasing(1.2, 0)


class TestDepolarizing:
    def test_p_zero_identity(self):
        rng = np.random.default_rng(2)
        rho = random_density(rng, 1)
        out = vq.apply(vq.depolarizing(0.0, (0,)), rho)
        assert np.allclose(out.data, rho.data, atol=1e-14)

    @pytest.mark.parametrize("p", [0.1, 0.4, 0.75])
    def test_single_qubit_ground_state(self, p):
        # expand (1-p) rho + (p/3)(X rho X + Y rho Y + Z rho Z) by hand
        out = vq.apply(vq.depolarizing(p, (0,)), vq.DensityMatrix.basis_state(1))
        assert np.allclose(out.data, np.diag([1 - 2 * p / 3, 2 * p / 3]), atol=1e-12)

    def test_three_quarters_fully_mixes(self):
        out = vq.apply(vq.depolarizing(0.75, (0,)), vq.DensityMatrix.basis_state(1))
        assert np.allclose(out.data, np.eye(2) / 2, atol=1e-12)

    def test_two_qubit_full_twirl(self):
        rng = np.random.default_rng(3)
        rho = random_density(rng, 2)
        out = vq.apply(vq.depolarizing(15.0 / 16.0, (0, 1)), rho)
        assert np.allclose(out.data, np.eye(4) / 4, atol=1e-12)

    def test_two_qubit_twirl_oracle(self):
        # uniform Pauli twirl written out longhand
        rng = np.random.default_rng(4)
        rho = random_density(rng, 2)
        p = 0.3
        acc = np.zeros((4, 4), dtype=complex)
        for a in "IXYZ":
            for b in "IXYZ":
                if a == b == "I":
                    continue
                mat = np.kron(PAULI_1Q[a], PAULI_1Q[b])
                acc += mat @ rho.data @ mat
        expected = (1 - p) * rho.data + (p / 15) * acc
        out = vq.apply(vq.depolarizing(p, (0, 1)), rho)
        assert np.allclose(out.data, expected, atol=1e-12)

    def test_three_qubits_rejected(self):
        with pytest.raises(ValueError):
            vq.depolarizing(0.1, (0, 1, 2))


class TestAdjoint:
    def test_unital(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            channel = random_channel(rng, 2)
            out = vq.adjoint_apply(channel, vq.HermitianOp(np.eye(4)))
            assert np.allclose(out.data, np.eye(4), atol=1e-10)

    def test_dephasing_shrinks_x(self):
        p = 0.3
        out = vq.adjoint_apply(vq.dephasing(p, 0), vq.pauli_matrix("X"))
        assert np.allclose(out.data, (1 - 2 * p) * PAULI_1Q["X"], atol=1e-12)

    def test_depolarizing_shrinks_z(self):
        p = 0.3
        out = vq.adjoint_apply(vq.depolarizing(p, (0,)), vq.pauli_matrix("Z"))
        assert np.allclose(out.data, (1 - 4 * p / 3) * PAULI_1Q["Z"], atol=1e-12)

    def test_duality_random(self):
        rng = np.random.default_rng(6)
        for _ in range(30):
            channel = random_channel(rng, 2)
            rho = random_density(rng, 2)
            op = random_hermitian(rng, 2)
            lhs = np.trace(op.data @ vq.apply(channel, rho).data)
            rhs = np.trace(vq.adjoint_apply(channel, op).data @ rho.data)
            assert abs(lhs - rhs) < 1e-10


class TestChannelProperties:
    def test_trace_and_psd_preserved(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            channel = random_channel(rng, 2)
            rho = random_density(rng, 2, rank=int(rng.integers(1, 5)))
            out = vq.apply(channel, rho)  # DensityMatrix validates trace and PSD
            assert abs(np.trace(out.data) - 1.0) < 1e-10

    def test_disjoint_channels_commute(self):
        rng = np.random.default_rng(8)
        first = vq.dephasing(0.3, 0)
        second = vq.depolarizing(0.2, (1,))
        for _ in range(10):
            rho = random_density(rng, 2)
            one = vq.apply(second, vq.apply(first, rho))
            other = vq.apply(first, vq.apply(second, rho))
            assert np.allclose(one.data, other.data, atol=1e-12)


class TestMixedUnitary:
    def test_single_identity(self):
        channel = vq.mixed_unitary([np.eye(2)], [1.0])
        rng = np.random.default_rng(9)
        rho = random_density(rng, 1)
        assert np.allclose(channel.apply_dense(rho.data), rho.data, atol=1e-14)

    def test_identity_z_mixture_equals_dephasing(self):
        p = 0.23
        mixture = vq.mixed_unitary([np.eye(2), PAULI_1Q["Z"]], [1 - p, p])
        assert np.allclose(
            choi_matrix(mixture, 1), choi_matrix(vq.dephasing(p, 0), 1), atol=1e-12
        )

    def test_imperfect_control_average(self):
        delta = 0.1
        channel = vq.mixed_unitary(
            [vq.pauli_rotation("X", -delta), np.eye(2), vq.pauli_rotation("X", delta)],
            [0.25, 0.5, 0.25],
        )
        out = vq.apply(channel, vq.DensityMatrix.basis_state(1))
        z_mean = vq.expectation(out, vq.pauli_matrix("Z"))
        assert z_mean == pytest.approx((np.cos(delta) + 1) / 2, abs=1e-12)
        assert z_mean == pytest.approx(0.99750, abs=1e-5)

    def test_bad_normalization(self):
        with pytest.raises(ValueError, match="sum"):
            vq.mixed_unitary([np.eye(2), PAULI_1Q["Z"]], [0.6, 0.6])

    def test_non_unitary_rejected(self):
        with pytest.raises(ValueError, match="unitary"):
            vq.mixed_unitary([np.diag([1.0, 0.5])], [1.0])


class TestConvexChannel:
    def test_probability_range(self):
        with pytest.raises(ValueError):
            vq.ConvexChannel(-0.1, identity_channel((0,)), identity_channel((0,)))

    def test_branch_qubits_must_match(self):
        with pytest.raises(ValueError, match="identical qubit"):
            vq.ConvexChannel(0.5, identity_channel((0,)), identity_channel((1,)))

    def test_with_p(self):
        channel = vq.dephasing(0.1, 0)
        assert channel.with_p(0.4).p == 0.4
        assert channel.p == 0.1
