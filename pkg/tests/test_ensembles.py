import json

import numpy as np
import oracles
import pytest

from pauli_shadows.engine import shot_rng
from pauli_shadows.ensembles import (
    CIRCUIT,
    GLOBAL_CLIFFORD,
    LOCAL_CLIFFORD,
    LOCALLY_SCRAMBLED_HAAR,
    PAULI_GROUP,
    RANDOM_LOCAL_CIRCUIT,
    EnsembleSpec,
    Gate,
    NotEnumerableError,
    UnitaryDraw,
    check_pauli_invariance,
    circuit_draw,
    custom_ensemble,
    enumerate_ensemble,
    enumerated_unitaries,
    matrix_keys,
    realize,
    realize_many,
    sample,
    single_qubit_cliffords,
    two_qubit_cliffords,
)


def same_up_to_phase(A, B, tol=1e-12):
    k = np.unravel_index(np.argmax(np.abs(A)), A.shape)
    if abs(B[k]) < 1e-9:
        return False
    phase = A[k] / B[k]
    return np.abs(A - phase * B).max() <= tol


def gate_oracle(gate, n):
    """Full-register matrix of a gate on consecutive qubits, first listed qubit least significant."""
    q = min(gate.qubits)
    k = len(gate.qubits)
    assert list(gate.qubits) == list(range(q, q + k))
    return oracles.kron_all([np.eye(1 << (n - q - k)), gate.matrix(), np.eye(1 << q)])


class TestSpec:
    def test_enumerable(self):
        assert EnsembleSpec(2, PAULI_GROUP).enumerable()
        assert EnsembleSpec(2, LOCAL_CLIFFORD).enumerable()
        assert not EnsembleSpec(5, LOCAL_CLIFFORD).enumerable()
        assert EnsembleSpec(2, GLOBAL_CLIFFORD).enumerable()
        assert not EnsembleSpec(1, LOCALLY_SCRAMBLED_HAAR).enumerable()
        assert not EnsembleSpec(3, RANDOM_LOCAL_CIRCUIT, depth=2).enumerable()
        assert custom_ensemble([(np.eye(2), 1.0)]).enumerable()

    def test_validation(self):
        with pytest.raises(ValueError):
            EnsembleSpec(1, "haar")
        with pytest.raises(ValueError):
            EnsembleSpec(3, GLOBAL_CLIFFORD)
        with pytest.raises(ValueError):
            custom_ensemble([(np.eye(2), 0.5)])
        with pytest.raises(ValueError):
            custom_ensemble([(np.ones((2, 2)), 1.0)])

    def test_parse(self):
        assert EnsembleSpec.parse("local-clifford", 2) == EnsembleSpec(2, LOCAL_CLIFFORD)
        assert EnsembleSpec.parse("random-local-circuit:depth=3", 4) == EnsembleSpec(4, RANDOM_LOCAL_CIRCUIT, 3)
        assert EnsembleSpec.parse("random_local_circuit:2", 4).depth == 2
        with pytest.raises(ValueError):
            EnsembleSpec.parse("local-clifford:width=2", 2)

    def test_dict_round_trip(self):
        for spec in (EnsembleSpec(2, RANDOM_LOCAL_CIRCUIT, 4), EnsembleSpec(1, PAULI_GROUP)):
            assert EnsembleSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec
        c = custom_ensemble([(oracles.H, 0.25), (oracles.S, 0.75)])
        back = EnsembleSpec.from_dict(json.loads(json.dumps(c.to_dict())))
        for (u, p), (v, q) in zip(c.custom, back.custom):
            np.testing.assert_array_equal(u, v)
            assert p == q


class TestGroups:
    def test_single_qubit_cliffords(self):
        table = single_qubit_cliffords()
        assert len(table) == 24
        assert len(set(matrix_keys(table))) == 24
        for U in oracles.clifford_group(1):
            assert any(same_up_to_phase(U, V) for V in table)

    def test_two_qubit_cliffords(self):
        table = two_qubit_cliffords()
        assert len(table) == 11520
        assert len(set(matrix_keys(table))) == 11520
        ours = set(matrix_keys(table))
        theirs = set(matrix_keys(np.array(oracles.clifford_group(2))))
        assert ours == theirs

    def test_elements_are_unitary(self):
        table = two_qubit_cliffords()
        err = np.abs(np.einsum("mji,mjk->mik", table.conj(), table) - np.eye(4)).max()
        assert err <= 1e-12


class TestSampling:
    def test_pauli_group_frequencies(self):
        spec = EnsembleSpec(1, PAULI_GROUP)
        rng = np.random.default_rng(0)
        draws = 100_000
        counts = np.bincount([sample(spec, rng).index[0] for _ in range(draws)], minlength=4)
        sigma = np.sqrt(draws * 0.25 * 0.75)
        assert np.all(np.abs(counts - draws / 4) <= 5 * sigma)

    def test_local_clifford_marginal(self):
        spec = EnsembleSpec(2, LOCAL_CLIFFORD)
        rng = np.random.default_rng(1)
        draws = 48_000
        counts = np.bincount([sample(spec, rng).index[0] for _ in range(draws)], minlength=24)
        p = 1 / 24
        sigma = np.sqrt(draws * p * (1 - p))
        assert np.all(np.abs(counts - draws * p) <= 5 * sigma)

    def test_determinism(self):
        for spec in (EnsembleSpec(2, LOCAL_CLIFFORD), EnsembleSpec(3, RANDOM_LOCAL_CIRCUIT, 2),
                     EnsembleSpec(2, LOCALLY_SCRAMBLED_HAAR)):
            a = [sample(spec, shot_rng(5, i)) for i in range(20)]
            b = [sample(spec, shot_rng(5, i)) for i in range(20)]
            assert a == b

    def test_custom_sampling_weights(self):
        spec = custom_ensemble([(np.eye(2), 0.2), (oracles.X, 0.8)])
        rng = np.random.default_rng(2)
        draws = 20_000
        ones = sum(sample(spec, rng).index[0] for _ in range(draws))
        assert abs(ones - 0.8 * draws) <= 5 * np.sqrt(draws * 0.16)


class TestRealize:
    def test_identity_and_hadamard(self):
        np.testing.assert_array_equal(realize(circuit_draw(2, [])), np.eye(4))
        H = realize(circuit_draw(1, [Gate("H", (0,))]))
        assert np.abs(H - np.array([[1, 1], [1, -1]]) / np.sqrt(2)).max() <= 1e-15

    def test_random_circuit_against_gate_oracle(self):
        rng = np.random.default_rng(3)
        for n, depth in ((2, 3), (3, 2), (4, 3)):
            draw = sample(EnsembleSpec(n, RANDOM_LOCAL_CIRCUIT, depth), rng)
            expected = np.eye(1 << n)
            for g in draw.gates:
                expected = gate_oracle(g, n) @ expected
            np.testing.assert_allclose(realize(draw), expected, atol=1e-12)

    def test_brickwork_covers_every_qubit(self):
        draw = sample(EnsembleSpec(3, RANDOM_LOCAL_CIRCUIT, 2), np.random.default_rng(4))
        layer0 = [g.qubits for g in draw.gates[:2]]
        layer1 = [g.qubits for g in draw.gates[2:]]
        assert layer0 == [(0, 1), (2,)] and layer1 == [(0,), (1, 2)]

    def test_cnot_convention(self):
        # control is the first listed qubit
        U = realize(circuit_draw(2, [Gate("CNOT", (0, 1))]))
        np.testing.assert_array_equal(U, oracles.cnot(0, 1, 2))
        U = realize(circuit_draw(2, [Gate("CNOT", (1, 0))]))
        np.testing.assert_array_equal(U, oracles.cnot(1, 0, 2))

    def test_local_clifford_tensor_order(self):
        table = single_qubit_cliffords()
        draw = UnitaryDraw(LOCAL_CLIFFORD, 2, (3, 17))
        np.testing.assert_array_equal(realize(draw), np.kron(table[17], table[3]))

    def test_unitarity_of_all_kinds(self):
        rng = np.random.default_rng(5)
        for spec in (EnsembleSpec(3, LOCALLY_SCRAMBLED_HAAR), EnsembleSpec(3, RANDOM_LOCAL_CIRCUIT, 3),
                     EnsembleSpec(2, GLOBAL_CLIFFORD), EnsembleSpec(3, PAULI_GROUP)):
            U = realize(sample(spec, rng))
            np.testing.assert_allclose(U.conj().T @ U, np.eye(len(U)), atol=1e-10)

    def test_batched_matches_single(self):
        rng = np.random.default_rng(6)
        for spec in (EnsembleSpec(2, LOCAL_CLIFFORD), EnsembleSpec(2, LOCALLY_SCRAMBLED_HAAR)):
            draws = [sample(spec, rng) for _ in range(10)]
            batch = realize_many(draws)
            for d, U in zip(draws, batch):
                np.testing.assert_array_equal(U, realize(d))

    def test_custom_needs_spec(self):
        spec = custom_ensemble([(oracles.H, 1.0)])
        draw = sample(spec, np.random.default_rng(7))
        with pytest.raises(ValueError):
            realize(draw)
        np.testing.assert_array_equal(realize(draw, spec), oracles.H)

    def test_haar_draw_json_round_trip(self):
        rng = np.random.default_rng(8)
        for spec in (EnsembleSpec(2, LOCALLY_SCRAMBLED_HAAR), EnsembleSpec(3, RANDOM_LOCAL_CIRCUIT, 2)):
            draw = sample(spec, rng)
            back = UnitaryDraw.from_dict(json.loads(json.dumps(draw.to_dict())), spec.n)
            assert back == draw
            assert np.abs(realize(back) - realize(draw)).max() <= 1e-15

    def test_kind_tag_in_record(self):
        draw = sample(EnsembleSpec(1, LOCALLY_SCRAMBLED_HAAR), np.random.default_rng(9))
        rec = draw.to_dict()
        assert rec["kind"] == LOCALLY_SCRAMBLED_HAAR and rec["gates"][0]["name"] == "haar1"
        assert circuit_draw(1, []).kind == CIRCUIT


class TestEnumerate:
    def test_sizes(self):
        items = enumerate_ensemble(EnsembleSpec(2, PAULI_GROUP))
        assert len(items) == 16 and all(p == 1 / 16 for _, p in items)
        assert len(enumerate_ensemble(EnsembleSpec(1, LOCAL_CLIFFORD))) == 24
        assert len(enumerate_ensemble(EnsembleSpec(2, LOCAL_CLIFFORD))) == 576
        assert len(enumerate_ensemble(EnsembleSpec(1, GLOBAL_CLIFFORD))) == 24
        assert len(enumerate_ensemble(EnsembleSpec(2, GLOBAL_CLIFFORD))) == 11520

    def test_probabilities_sum_to_one(self):
        for spec in (EnsembleSpec(2, LOCAL_CLIFFORD), EnsembleSpec(2, GLOBAL_CLIFFORD)):
            assert abs(sum(p for _, p in enumerate_ensemble(spec)) - 1) <= 1e-12

    def test_not_enumerable(self):
        with pytest.raises(NotEnumerableError):
            enumerate_ensemble(EnsembleSpec(1, LOCALLY_SCRAMBLED_HAAR))
        with pytest.raises(NotEnumerableError):
            enumerate_ensemble(EnsembleSpec(2, RANDOM_LOCAL_CIRCUIT))

    def test_custom_specs_not_confused_by_cache(self):
        a = custom_ensemble([(oracles.H, 1.0)])
        b = custom_ensemble([(oracles.S, 1.0)])
        np.testing.assert_array_equal(enumerated_unitaries(a)[0][0], oracles.H)
        np.testing.assert_array_equal(enumerated_unitaries(b)[0][0], oracles.S)


class TestPauliInvariance:
    def test_exact_passes(self):
        for spec in (EnsembleSpec(1, PAULI_GROUP), EnsembleSpec(2, PAULI_GROUP),
                     EnsembleSpec(2, LOCAL_CLIFFORD), EnsembleSpec(2, GLOBAL_CLIFFORD)):
            rep = check_pauli_invariance(spec, "exact")
            assert rep.passed and rep.max_deviation <= 1e-12

    def test_custom_identity_fails(self):
        rep = check_pauli_invariance(custom_ensemble([(np.eye(2), 1.0)]), "exact")
        assert not rep.passed

    def test_exact_needs_enumerable(self):
        with pytest.raises(NotEnumerableError):
            check_pauli_invariance(EnsembleSpec(1, LOCALLY_SCRAMBLED_HAAR), "exact")

    @pytest.mark.parametrize("spec", [EnsembleSpec(2, LOCALLY_SCRAMBLED_HAAR),
                                      EnsembleSpec(3, RANDOM_LOCAL_CIRCUIT, 2)])
    def test_statistical_passes(self, spec):
        rep = check_pauli_invariance(spec, "statistical", samples=10_000, tol=1e-2)
        assert rep.passed, rep

    def test_statistical_pairs_draws(self):
        # W ignores right Pauli multiplication, so paired tables agree to rounding
        rep = check_pauli_invariance(custom_ensemble([(np.eye(2), 1.0)]), "statistical", samples=500)
        assert rep.passed and rep.max_deviation <= 1e-12


def test_global_phase_irrelevant():
    rng = np.random.default_rng(10)
    U = realize(sample(EnsembleSpec(2, LOCALLY_SCRAMBLED_HAAR), rng))
    V = np.exp(0.77j) * U
    for b in range(4):
        a, c = U[b].conj(), V[b].conj()
        np.testing.assert_allclose(np.outer(a, a.conj()), np.outer(c, c.conj()), atol=1e-15)
