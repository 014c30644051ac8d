import numpy as np
import pytest

from qlsp.state import ProjectedState, QuantumState, complete_unitary, qubits_for


def test_normalization_enforced():
    with pytest.raises(ValueError):
        QuantumState([("I", 2)], np.array([1.0, 1.0]))


def test_basis_and_marginal():
    state = QuantumState.basis([("A", 2), ("B", 3)], {"B": 2})
    assert state.tensor[0, 2] == 1
    np.testing.assert_allclose(state.marginal("B"), [0, 0, 1])


def test_controlled_apply_matches_kron():
    rng = np.random.default_rng(1)
    vec = rng.normal(size=8) + 1j * rng.normal(size=8)
    vec /= np.linalg.norm(vec)
    state = QuantumState([("C", 2), ("T", 4)], vec)
    col = rng.normal(size=(4, 1)) + 0j
    op = complete_unitary(col / np.linalg.norm(col))
    got = state.apply(op, "T", {"C": 1}).amps
    full = np.block([[np.eye(4), np.zeros((4, 4))], [np.zeros((4, 4)), op]])
    np.testing.assert_allclose(got, full @ vec, atol=1e-14)


def test_apply_on_register_pair_respects_order():
    state = QuantumState.basis([("A", 2), ("B", 2)], {"A": 1})
    cnot = np.eye(4)[[0, 1, 3, 2]]
    assert state.apply(cnot, ["A", "B"]).tensor[1, 1] == 1
    assert state.apply(cnot, ["B", "A"]).tensor[1, 0] == 1


def test_permutation_and_projection():
    state = QuantumState.from_vector("I", np.array([0.6, 0.8]))
    state = state.with_ancillas([("F", 2)])
    flipped = state.apply_permutation(np.array([1, 0]), "F")
    projected = flipped.project({"F": 1})
    assert isinstance(projected, ProjectedState)
    assert projected.probability == pytest.approx(1.0)
    np.testing.assert_allclose(projected.normalized().amps, [0.6, 0.8])
    assert flipped.probability({"F": 0}) == pytest.approx(0.0)


def test_complete_unitary_keeps_columns():
    rng = np.random.default_rng(2)
    q, _ = np.linalg.qr(rng.normal(size=(6, 2)) + 1j * rng.normal(size=(6, 2)))
    u = complete_unitary(q)
    np.testing.assert_allclose(u[:, :2], q, atol=1e-14)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(6), atol=1e-12)


def test_qubits_for():
    assert [qubits_for(k) for k in (1, 2, 3, 4, 5)] == [0, 1, 2, 2, 3]
