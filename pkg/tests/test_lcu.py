import math

import numpy as np
import pytest
from conftest import rng_state
from scipy.stats import unitary_group

from qlsp.approx import FourierGrid, eval_chebyshev_series
from qlsp.lcu import (AmplificationError, ChebyshevTerm, EvolutionTerm, FourierProgram, LCUProgram, MatrixTerm, aa_rounds,
                      amplify, apply_select, lcu_layout, lcu_once, prepare_V, run_dense)
from qlsp.ledger import CostLedger
from qlsp.problem import SparseHermitianInstance, generate_random_instance
from qlsp.simcore import exact_evolution
from qlsp.solver import chebyshev_program
from qlsp.state import QuantumState

X = np.array([[0, 1], [1, 0]], dtype=complex)
I2 = np.eye(2, dtype=complex)


def unit_instance(b):
    return SparseHermitianInstance(2, 1, 1.0, np.eye(2), np.asarray(b, dtype=complex))


def random_program(rng, n_terms, dim, max_anc=2):
    terms = []
    for _ in range(n_terms):
        anc = int(rng.integers(1, max_anc + 1))
        u = unitary_group.rvs(anc * dim, random_state=rng)
        terms.append((float(rng.uniform(0.1, 2.0)), MatrixTerm(u, anc)))
    return LCUProgram(terms, dim=dim)


def test_prepare_v_amplitudes():
    one = LCUProgram([(1.0, MatrixTerm(I2))], dim=2)
    assert prepare_V(one).shape == (1, 1)
    two = LCUProgram([(0.5, MatrixTerm(I2)), (0.5, MatrixTerm(X))], dim=2)
    np.testing.assert_allclose(prepare_V(two)[:, 0], [2 ** -0.5] * 2)


def test_prepare_v_fourier_weights():
    inst = generate_random_instance(4, 2, 2.0, 0)
    grid = FourierGrid(3, 2, 0.5, 0.7, 2.0, 0.1, math.nan, 0)
    program = FourierProgram(grid, inst)
    first = prepare_V(program)[:, 0]
    z = grid.z
    expected = np.outer(np.ones(3), np.abs(z) * np.exp(-z ** 2 / 2)).reshape(-1)
    expected = np.sqrt(expected / expected.sum())
    np.testing.assert_allclose(first[: expected.size], expected, atol=1e-14)
    assert np.linalg.norm(first) == pytest.approx(1.0)


def test_select_conditional_x():
    program = LCUProgram([(1.0, MatrixTerm(I2)), (1.0, MatrixTerm(X))], dim=2)
    vec = np.zeros((2, 1, 2), dtype=complex)
    vec[0, 0, 0] = vec[1, 0, 0] = 2 ** -0.5
    state = apply_select(program, QuantumState(lcu_layout(program), vec.reshape(-1)))
    assert state.tensor[0, 0, 0] == pytest.approx(2 ** -0.5)
    assert state.tensor[1, 0, 1] == pytest.approx(2 ** -0.5)


def test_select_identity_evolution():
    inst = generate_random_instance(4, 2, 2.0, 1)
    program = LCUProgram([(1.0, EvolutionTerm(0.0)), (1.0, EvolutionTerm(0.4))], instance=inst)
    psi = rng_state(np.random.default_rng(0), 4)
    state = QuantumState.from_vector("I", psi).with_ancillas(lcu_layout(program)[:2])
    np.testing.assert_allclose(apply_select(program, state).tensor[0, 0], psi, atol=1e-14)


def test_fourier_program_matches_direct_operator():
    inst = generate_random_instance(4, 2, 2.0, 2)
    grid = FourierGrid(3, 2, 0.5, 0.7, 2.0, 0.1, math.nan, 0)
    program = FourierProgram(grid, inst)
    expanded = program.expand()
    direct = np.zeros((4, 4), dtype=complex)
    weights = program.term_weights()
    idx = 0
    for y in grid.y:
        for z in grid.z:
            direct += weights[idx] * 1j * np.sign(z) * exact_evolution(inst, y * z)
            idx += 1
    assert np.max(np.abs(expanded.operator() - direct)) <= 1e-10
    psi = rng_state(np.random.default_rng(1), 4)
    np.testing.assert_allclose(program.block_apply(psi), direct @ psi / program.alpha, atol=1e-12)


def test_random_programs_block_identity():
    rng = np.random.default_rng(11)
    for _ in range(20):
        dim = int(rng.choice([2, 4]))
        program = random_program(rng, int(rng.integers(1, 6)), dim)
        psi = rng_state(rng, dim)
        block, q = lcu_once(program, psi, engine="dense")
        expected = program.operator() @ psi / program.alpha
        assert np.max(np.abs(block.amps - expected)) <= 1e-10
        assert abs(q - np.linalg.norm(expected) ** 2) <= 1e-12


def test_lcu_trivial_programs():
    psi = np.array([0.6, 0.8j])
    block, q = lcu_once(LCUProgram([(1.0, MatrixTerm(I2)), (1.0, MatrixTerm(I2))], dim=2), psi)
    assert q == pytest.approx(1.0)
    np.testing.assert_allclose(block.amps, psi)
    block, q = lcu_once(LCUProgram([(1.0, MatrixTerm(I2)), (1.0, MatrixTerm(X))], dim=2), np.array([1.0, 0]))
    assert q == pytest.approx(0.5)
    np.testing.assert_allclose(block.normalized().amps, [2 ** -0.5] * 2)


def test_chebyshev_program_block():
    inst = generate_random_instance(8, 2, 4.0, 3)
    program = chebyshev_program(inst, 1e-3)
    psi = rng_state(np.random.default_rng(2), 8)
    block, _ = lcu_once(program, psi)
    lam, vecs = inst.eigenvalues, inst.eigenvectors
    values = eval_chebyshev_series(lam / inst.d, program.series) / inst.d
    expected = vecs @ (values * (vecs.conj().T @ psi)) / program.alpha
    assert np.max(np.abs(block.amps - expected)) <= 1e-9


def test_engines_agree_on_small_chebyshev_program():
    inst = generate_random_instance(4, 2, 2.0, 4)
    program = chebyshev_program(inst, 1e-2)
    psi = rng_state(np.random.default_rng(3), 4)
    dense, q1 = lcu_once(program, psi, engine="dense")
    block, q2 = lcu_once(program, psi, engine="block")
    np.testing.assert_allclose(dense.amps, block.amps, atol=1e-12)


def test_lcu_once_ledger():
    inst = generate_random_instance(4, 2, 2.0, 4)
    program = LCUProgram([(1.0, EvolutionTerm(2.0)), (1.0, EvolutionTerm(-3.0))], instance=inst)
    ledger = CostLedger()
    lcu_once(program, inst.b_normalized, ledger)
    assert (ledger.u_uses, ledger.v_uses, ledger.evolution_time_total) == (1, 2, 3.0)


def test_program_validation():
    with pytest.raises(ValueError):
        LCUProgram([], dim=2)
    with pytest.raises(ValueError):
        LCUProgram([(0.0, MatrixTerm(I2))], dim=2)
    with pytest.raises(ValueError):
        LCUProgram([(1.0, EvolutionTerm(1.0))], dim=2)
    with pytest.raises(ValueError):
        LCUProgram([(1.0, ChebyshevTerm(3))], dim=2)


def quarter_program():
    # |1 + e^{2 pi i / 3}| = 1, so q = 1/4 for every input
    phase = np.exp(2j * np.pi / 3)
    return LCUProgram([(1.0, MatrixTerm(I2)), (1.0, MatrixTerm(phase * I2))], dim=2)


def test_amplify_certain_success():
    inst = unit_instance([1, 0])
    program = LCUProgram([(1.0, MatrixTerm(I2)), (1.0, MatrixTerm(I2))], dim=2)
    for policy in ("postselect-exact", "amplify", "sample"):
        result = amplify(program, inst, policy, seed=0)
        assert result.success and result.rounds == 0 and result.attempts == 1


def test_sample_mean_is_geometric():
    inst = unit_instance([1, 1])
    attempts = [amplify(quarter_program(), inst, "sample", seed=s).attempts for s in range(1000)]
    assert abs(np.mean(attempts) - 4) <= 0.4


def test_amplify_quarter_probability():
    inst = unit_instance([0.6, 0.8])
    program = quarter_program()
    assert aa_rounds(0.25) == 1
    result = amplify(program, inst, "amplify", seed=1)
    expected = program.operator() @ inst.b_normalized
    np.testing.assert_allclose(result.state.amps, expected / np.linalg.norm(expected), atol=1e-14)
    assert result.rounds == 1
    # one attempt with one round: 3 passes, 3 uses of the preparation
    assert result.ledger.pb_uses == 3 * result.attempts
    assert result.ledger.aa_rounds == result.attempts


def test_amplified_state_probability_exceeds_half():
    inst = unit_instance([0.6, 0.8])
    full = run_dense(quarter_program(), inst.b_normalized)
    assert full.probability({"S": 0, "Q": 0}) == pytest.approx(0.25)


def test_sample_cap_exhausted_flags_failure():
    inst = unit_instance([1, 0])
    # q = 1e-6 with alpha / norm bound small: the cap runs out
    program = LCUProgram([(1.0, MatrixTerm(I2)), (1.0, MatrixTerm(np.exp(1j * (np.pi - 2e-3)) * I2))], dim=2)
    result = amplify(program, inst, "sample", seed=0, norm_lower_bound=2.0)
    assert not result.success and result.state is None


def test_unknown_policy():
    with pytest.raises(ValueError):
        amplify(quarter_program(), unit_instance([1, 0]), "guess")


def test_zero_block_raises():
    program = LCUProgram([(1.0, MatrixTerm(I2)), (1.0, MatrixTerm(-I2))], dim=2)
    with pytest.raises(AmplificationError):
        amplify(program, unit_instance([1, 0]))
