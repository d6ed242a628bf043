import numpy as np
import pytest

import vqmetro as vq
from vqmetro import experiments as ex
from vqmetro.errors import InternalConsistencyError
from vqmetro.qalg import PAULI_1Q

from helpers import random_model, random_params


def single_qubit_model(noise=(), meas_word="Y"):
    prep = vq.ParamCircuit(1, [vq.rotation_gate("Y", (0,), slot="theta", index=0)], {"theta": 1})
    encoding = [vq.rotation_gate("Z", (0,), slot="phi", index=0)]
    povm = vq.Povm(
        vq.ParamCircuit(1, [vq.rotation_gate(meas_word, (0,), slot="mu", index=0)], {"mu": 1})
    )
    return vq.MetrologyModel(1, prep, encoding, noise, povm)


class TestGateSpec:
    def test_identity_word_cannot_parametrize(self):
        with pytest.raises(ValueError, match="identity word"):
            vq.rotation_gate("II", (0, 1), slot="theta", index=0)

    def test_word_length_must_match_qubits(self):
        with pytest.raises(ValueError, match="match"):
            vq.rotation_gate("XX", (0,))

    def test_slot_requires_index(self):
        with pytest.raises(ValueError, match="together"):
            vq.GateSpec(kind="pauli_rotation", qubits=(0,), word="X", slot="theta",
                        shift_const=0.5)

    def test_fixed_unitary_cannot_parametrize(self):
        with pytest.raises(ValueError, match="parametrized"):
            vq.GateSpec(kind="fixed_unitary", qubits=(0,), unitary=np.eye(2),
                        slot="theta", index=0)

    def test_param_indices_validated(self):
        with pytest.raises(ValueError, match="range"):
            vq.ParamCircuit(1, [vq.rotation_gate("X", (0,), slot="theta", index=3)],
                            {"theta": 2})

    def test_controlled_rx_matches_textbook_matrix(self):
        gates = vq.controlled_rx(0, 1, slot="theta", index=0)
        circuit = vq.ParamCircuit(2, gates, {"theta": 1})
        model = vq.MetrologyModel(
            2, circuit, [vq.rotation_gate("Z", (0,), slot="phi", index=0)], (),
            vq.Povm(vq.ParamCircuit(2, [], {"mu": 0})),
        )
        angle = 0.813
        psi = vq.state_vector(model, [angle], [0.0])
        crx = np.eye(4, dtype=complex)
        crx[2:, 2:] = vq.pauli_rotation("X", angle)
        assert np.allclose(psi, crx @ np.array([1, 0, 0, 0.0]), atol=1e-12)
        # the control qubit starts in |0>, so also check action on |1>|0>
        flipped = crx @ np.array([0, 0, 1, 0.0])
        prep2 = vq.ParamCircuit(
            2,
            [vq.rotation_gate("X", (0,), angle=np.pi), *vq.controlled_rx(0, 1, "theta", 0)],
            {"theta": 1},
        )
        model2 = vq.MetrologyModel(
            2, prep2, [vq.rotation_gate("Z", (0,), slot="phi", index=0)], (),
            vq.Povm(vq.ParamCircuit(2, [], {"mu": 0})),
        )
        psi2 = vq.state_vector(model2, [angle], [0.0])
        # global phase -i from R_X(pi) on the control
        overlap = abs(np.vdot(flipped, psi2))
        assert overlap == pytest.approx(1.0, abs=1e-12)


class TestMetrologyModel:
    def test_non_commuting_encoding_rejected(self):
        prep = vq.ParamCircuit(1, [], {"theta": 0})
        encoding = [
            vq.rotation_gate("X", (0,), slot="phi", index=0),
            vq.rotation_gate("Z", (0,), slot="phi", index=1),
        ]
        povm = vq.Povm(vq.ParamCircuit(1, [], {"mu": 0}))
        with pytest.raises(ValueError, match="commute"):
            vq.MetrologyModel(1, prep, encoding, (), povm)

    def test_prep_slot_restriction(self):
        bad_prep = vq.ParamCircuit(1, [vq.rotation_gate("X", (0,), slot="mu", index=0)],
                                   {"mu": 1})
        with pytest.raises(ValueError, match="theta"):
            vq.MetrologyModel(1, bad_prep, (), (),
                              vq.Povm(vq.ParamCircuit(1, [], {"mu": 0})))


class TestPrepare:
    def test_zero_angles_leave_all_zero_state(self):
        model, _, _ = ex.build_ramsey(ex.RamseyScenario(0.0))
        rho = vq.prepare(model, np.zeros(14))
        expected = np.zeros((8, 8))
        expected[0, 0] = 1.0
        assert np.allclose(rho.data, expected, atol=1e-12)

    def test_local_block_creates_plus(self):
        scenario = ex.NvScenario(ex.table1_geometry(), gate_depolarization=0.0)
        model, _, _ = ex.build_nv(scenario)
        theta = np.zeros(9)
        theta[1] = np.pi / 2  # R_Z(0) R_Y(pi/2) R_Z(0) |0> = |+>
        rho = vq.prepare(model, theta)
        plus = np.array([1.0, 1.0]) / np.sqrt(2)
        expected = np.kron(np.outer(plus, plus), np.diag([1.0, 0, 0, 0]).astype(complex))
        assert np.allclose(rho.data, expected, atol=1e-12)

    def test_shallow_entangled_ghz_fixture(self):
        # regression: these parameter values create a GHZ state (phase -1)
        scenario = ex.NvScenario(
            ex.table1_geometry(), gate_depolarization=0.0, encoding_dephasing=0.0,
            prep="shallow_entangled",
        )
        model, _, _ = ex.build_nv(scenario)
        theta = np.array([0, np.pi / 2, 0, 0, 0, 0, 0, 0, 0, np.pi, np.pi])
        psi = vq.state_vector(model, theta, np.zeros(3))
        ghz = np.zeros(8, dtype=complex)
        ghz[0] = 1 / np.sqrt(2)
        ghz[7] = -1 / np.sqrt(2)
        assert abs(np.vdot(ghz, psi)) == pytest.approx(1.0, abs=1e-12)

    def test_parameter_length_mismatch(self):
        model, _, _ = ex.build_ramsey(ex.RamseyScenario(0.0))
        with pytest.raises(ValueError, match="expects 14"):
            vq.prepare(model, np.zeros(13))


class TestEncode:
    def test_zero_phases_noiseless_identity(self):
        rng = np.random.default_rng(0)
        model = single_qubit_model()
        rho = vq.prepare(model, [rng.uniform(0, np.pi)])
        out = vq.encode(model, rho, [0.0])
        assert np.allclose(out.data, rho.data, atol=1e-12)

    def test_half_turn_about_z(self):
        model = single_qubit_model()
        plus = vq.DensityMatrix.from_state_vector(np.array([1, 1.0]) / np.sqrt(2))
        out = vq.encode(model, plus, [np.pi])
        minus = np.array([1, -1.0]) / np.sqrt(2)
        assert np.allclose(out.data, np.outer(minus, minus), atol=1e-12)

    def test_ghz_accumulates_relative_phase(self):
        model, _, _ = ex.build_ramsey(ex.RamseyScenario(0.0))
        theta, _ = ex.ramsey_reference_params("ghz_reference")
        rho = vq.prepare(model, theta)
        out = vq.encode(model, rho, ex.RAMSEY_PHASES)
        # coherence |000><111| picks up exp(-i * pi/2)
        assert out.data[0, 7] == pytest.approx(-0.5j, abs=1e-12)

    def test_group_property_noiseless(self):
        rng = np.random.default_rng(40)
        model = random_model(rng, noisy=False)
        theta, phi, _ = random_params(rng, model)
        phi2 = rng.uniform(0, 2 * np.pi, model.d)
        rho = vq.prepare(model, theta)
        sequential = vq.encode(model, vq.encode(model, rho, phi), phi2)
        combined = vq.encode(model, rho, phi + phi2)
        assert np.allclose(sequential.data, combined.data, atol=1e-10)


class TestProbabilities:
    def test_computational_ground_state(self):
        model, _, _ = ex.build_ramsey(ex.RamseyScenario(0.0))
        p = vq.probabilities(model, np.zeros(14), ex.RAMSEY_PHASES, np.zeros(9))
        expected = np.zeros(8)
        expected[0] = 1.0
        assert np.allclose(p, expected, atol=1e-12)

    def test_maximally_mixed_probe_uniform(self):
        rng = np.random.default_rng(41)
        gates = [
            vq.channel_gate(vq.depolarizing(15.0 / 16.0, (0, 1))),
            vq.channel_gate(vq.depolarizing(0.75, (2,))),
        ]
        prep = vq.ParamCircuit(3, gates, {"theta": 0})
        meas = vq.ParamCircuit(
            3,
            [vq.rotation_gate("Y", (q,), slot="mu", index=q) for q in range(3)],
            {"mu": 3},
        )
        model = vq.MetrologyModel(
            3, prep, [vq.rotation_gate("Z", (q,), slot="phi", index=q) for q in range(3)],
            (), vq.Povm(meas),
        )
        for _ in range(5):
            p = vq.probabilities(model, [], rng.uniform(0, 2 * np.pi, 3),
                                 rng.uniform(0, 2 * np.pi, 3))
            assert np.allclose(p, np.full(8, 1 / 8), atol=1e-12)

    def test_ghz_hadamard_uniform_at_quadrature(self):
        model, _, _ = ex.build_ramsey(ex.RamseyScenario(0.0))
        theta, mu = ex.ramsey_reference_params("ghz_reference")
        p = vq.probabilities(model, theta, ex.RAMSEY_PHASES, mu)
        # brute-force oracle: p_x = (1 + (-1)^|x| cos(pi/2)) / 8 = 1/8
        assert np.allclose(p, np.full(8, 1 / 8), atol=1e-12)

    def test_sums_to_one_random(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            model = random_model(rng)
            theta, phi, mu = random_params(rng, model)
            p = vq.probabilities(model, theta, phi, mu)
            assert p.sum() == pytest.approx(1.0, abs=1e-10)
            assert p.min() >= 0.0


class TestPovmElements:
    def test_completeness_and_positivity_random_grid(self):
        rng = np.random.default_rng(43)
        model = random_model(rng, noisy=True)
        for _ in range(100):
            mu = rng.uniform(0, 2 * np.pi, model.n_mu)
            elements = model.povm.elements(mu)
            total = sum(e.data for e in elements)
            assert np.allclose(total, np.eye(8), atol=1e-10)
            for element in elements:
                assert np.linalg.eigvalsh(element.data)[0] > -1e-10

    def test_unit_rank_without_channels(self):
        rng = np.random.default_rng(44)
        model = random_model(rng, noisy=False)
        mu = rng.uniform(0, 2 * np.pi, model.n_mu)
        for element in model.povm.elements(mu):
            ranks = np.linalg.matrix_rank(element.data, tol=1e-10)
            assert ranks == 1


class TestNoisyPovm:
    def test_noiseless_model_returns_plain_elements(self):
        rng = np.random.default_rng(45)
        model = random_model(rng, noisy=False)
        mu = rng.uniform(0, 2 * np.pi, model.n_mu)
        plain = model.povm.elements(mu)
        noisy = vq.noisy_povm(model, mu)
        for a, b in zip(plain, noisy):
            assert np.allclose(a.data, b.data, atol=1e-12)

    def test_single_qubit_dephasing_pullback(self):
        p = 0.2
        model = single_qubit_model(noise=(vq.dephasing(p, 0),))
        # mu = -pi/2 measures the X basis
        elements = vq.noisy_povm(model, [-np.pi / 2])
        plus = (np.eye(2) + (1 - 2 * p) * PAULI_1Q["X"]) / 2
        minus = (np.eye(2) - (1 - 2 * p) * PAULI_1Q["X"]) / 2
        assert np.allclose(elements[0].data, plus, atol=1e-12)
        assert np.allclose(elements[1].data, minus, atol=1e-12)

    def test_rank_bounded_by_kraus_rank(self):
        # local dephasing has Kraus rank 2: unit-rank projectors pull back
        # to operators of rank at most 2
        model, _, _ = ex.build_ramsey(ex.RamseyScenario(0.3))
        rng = np.random.default_rng(46)
        mu = rng.uniform(0, 2 * np.pi, 9)
        single_noise = vq.MetrologyModel(
            3, model.prep, model.encoding, (vq.dephasing(0.3, 0),), model.povm
        )
        for element in vq.noisy_povm(single_noise, mu):
            assert np.linalg.matrix_rank(element.data, tol=1e-10) <= 2

    def test_completeness_preserved(self):
        model, _, _ = ex.build_ramsey(ex.RamseyScenario(0.25))
        rng = np.random.default_rng(47)
        mu = rng.uniform(0, 2 * np.pi, 9)
        total = sum(e.data for e in vq.noisy_povm(model, mu))
        assert np.allclose(total, np.eye(8), atol=1e-10)


class TestDualityTwoWays:
    def test_probabilities_agree(self):
        # Tr{Pi_l N[U rho U^dag]} vs Tr{Pi'_l U rho U^dag}
        rng = np.random.default_rng(48)
        for _ in range(10):
            model = random_model(rng)
            theta, phi, mu = random_params(rng, model)
            rho_noisy = vq.encode(model, vq.prepare(model, theta), phi)
            rho_clean = vq.encode(model, vq.prepare(model, theta), phi, noisy=False)
            plain = model.povm.elements(mu)
            noisy = vq.noisy_povm(model, mu)
            p_one = np.array([np.trace(e.data @ rho_noisy.data).real for e in plain])
            p_two = np.array([np.trace(e.data @ rho_clean.data).real for e in noisy])
            assert np.allclose(p_one, p_two, atol=1e-10)
            p_three = vq.probabilities(model, theta, phi, mu)
            assert np.allclose(p_one, p_three, atol=1e-10)


class TestStateVector:
    def test_rejects_models_with_channels(self):
        rng = np.random.default_rng(49)
        model = random_model(rng, noisy=True)
        with pytest.raises(ValueError, match="channel"):
            vq.state_vector(model, np.zeros(model.n_theta), np.zeros(model.d))

    def test_matches_density_pipeline(self):
        rng = np.random.default_rng(50)
        model = random_model(rng, noisy=False)
        theta, phi, _ = random_params(rng, model)
        psi = vq.state_vector(model, theta, phi)
        rho = vq.encode(model, vq.prepare(model, theta), phi)
        assert np.allclose(np.outer(psi, psi.conj()), rho.data, atol=1e-10)
