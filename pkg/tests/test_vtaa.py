import math

import numpy as np
import pytest
from conftest import diagonal_instance
from scipy import stats

from qlsp.ledger import CostLedger
from qlsp.problem import generate_random_instance
from qlsp.vtaa import (BranchState, VTAAConfig, far_mask, gpe, gpe_amplitudes, gpe_bits, gpe_rounds,
                       pe_amplitudes, run_full_tensor, run_pipeline, run_stage, solve_vtaa,
                       uncompute_and_extract, vtaa_cost, w_lambda)


@pytest.fixture(scope="module")
def ladder():
    inst = diagonal_instance([1.0, 0.5, 0.25, 0.125], np.ones(4), kappa=8.0)
    return inst, VTAAConfig.build(inst, 1e-3)


def test_round_and_bit_counts():
    assert gpe_rounds(1e-2) == 37 and gpe_rounds(1e-2) % 2 == 1
    assert gpe_bits(1 / 8) == 3 + 4


def test_pe_amplitudes_against_fft():
    for theta in (0.0, 0.3, -0.77, 1.0):
        bits = 5
        size = 2 ** bits
        reference = np.fft.fft(np.exp(1j * theta * np.arange(size))) / size
        np.testing.assert_allclose(pe_amplitudes(theta, bits), reference, atol=1e-13)


def test_far_mask_reads_twos_complement():
    mask = far_mask(0.3, 4)
    # outcome x estimates 2 pi x / 16 for x < 8 and 2 pi (x - 16) / 16 otherwise; threshold 0.45
    assert not mask[0] and not mask[1] and not mask[15]
    assert mask[2] and mask[14] and mask[8]


def test_gpe_zero_phase_exact():
    outcome = gpe_amplitudes(0.0, 1 / 8, 1e-3)
    assert outcome.beta1 == 0.0 and outcome.p_far == 0.0


def test_gpe_far_phase():
    for sign in (1, -1):
        outcome = gpe_amplitudes(sign * 2 / 8, 1 / 8, 1e-3)
        assert outcome.beta0 <= 1e-3


def test_gpe_gap_interior_is_normalized():
    outcome = gpe_amplitudes(1.5 / 8, 1 / 8, 1e-3)
    assert outcome.beta0 ** 2 + outcome.beta1 ** 2 == pytest.approx(1.0, abs=1e-12)


def test_gpe_majority_binomial():
    outcome = gpe_amplitudes(0.2, 1 / 8, rounds=5, bits=4)
    p = outcome.p_far
    assert outcome.beta1 ** 2 == pytest.approx(sum(math.comb(5, k) * p ** k * (1 - p) ** (5 - k)
                                                   for k in range(3, 6)), rel=1e-12)


def test_gpe_phi_range():
    for phi in (0.0, 0.6):
        with pytest.raises(ValueError):
            gpe_amplitudes(0.1, phi, 1e-2)


def test_gpe_on_instance_charges_evolution():
    inst = diagonal_instance([1.0, -0.5], [1, 1])
    ledger = CostLedger()
    outcomes = gpe(inst, 1 / 4, 1e-2, ledger=ledger)
    assert len(outcomes) == 2
    assert ledger.evolution_uses == gpe_rounds(1e-2) * (2 ** gpe_bits(1 / 4) - 1)


def test_w_lambda_unit_eigenvalue(ladder):
    inst, config = ladder
    w = w_lambda(inst, 1.0, config.eps_w, config.alpha_max)
    out = w.apply(np.array([1.0, 0, 0, 0]))
    assert abs(out[0] - 1 / config.alpha_max) <= config.eps_w
    assert np.linalg.norm(out[1:]) <= 1e-15


def test_w_lambda_quarter_threshold():
    inst = diagonal_instance([1.0, 1 / 3], [0, 1], kappa=4.0)
    config = VTAAConfig.build(inst, 1e-3)
    w = w_lambda(inst, 0.25, config.eps_w, config.alpha_max)
    out = w.apply(np.array([0, 1.0]))
    assert abs(out[1] - 3 / config.alpha_max) <= config.eps_w


def test_alpha_equalization(ladder):
    inst, config = ladder
    coarse = w_lambda(inst, 0.5, config.eps_w, config.alpha_max)
    fine = w_lambda(inst, 1 / 8, config.eps_w, config.alpha_max)
    assert coarse.alpha < fine.alpha <= config.alpha_max
    e0 = np.array([1.0, 0, 0, 0])
    assert coarse.apply(e0)[0] == pytest.approx(fine.apply(e0)[0], abs=2 * config.eps_w / config.alpha_max)


def test_w_lambda_alpha_guard(ladder):
    inst, config = ladder
    with pytest.raises(ValueError, match="alpha_max"):
        w_lambda(inst, 1 / 8, config.eps_w, alpha_max=1.0)


def test_config_coverage(ladder):
    _, config = ladder
    assert config.m == 4
    assert config.phis[-1] < 1 / 8 <= 2 * config.phis[0]
    assert config.eps_gpe == pytest.approx(config.epsilon / (config.m * config.alpha_max), rel=2e-3)
    assert np.all(np.diff(config.t) > 0)


def test_stage_on_unit_eigenvalue(ladder):
    _, config = ladder
    branch = run_stage(config, 1, BranchState(1.0, 1.0))
    assert branch.stop[0] >= 1 - config.eps_gpe
    assert branch.flag[0] * config.alpha_max == pytest.approx(1.0, abs=config.eps_w)


def test_stage_on_smallest_eigenvalue(ladder):
    _, config = ladder
    branch = run_stage(config, 1, BranchState(1 / 8, 1.0))
    assert branch.alive >= 1 - config.eps_gpe


def test_stage_order_enforced(ladder):
    _, config = ladder
    with pytest.raises(ValueError):
        run_stage(config, 2, BranchState(0.5, 1.0))
    with pytest.raises(ValueError):
        run_stage(config, 0, BranchState(0.5, 1.0))


def test_stage_locality(ladder):
    _, config = ladder
    branch = run_stage(config, 1, BranchState(1.0, 1.0))
    later = run_stage(config, 2, branch)
    assert later.stop[0] == branch.stop[0] and later.flag[0] == branch.flag[0]
    assert later.stop[1] <= branch.alive


def test_pipeline_unit_eigenvector():
    inst = generate_random_instance(8, 2, 8.0, 0)
    top = int(np.argmax(inst.eigenvalues))
    stats_ = run_pipeline(VTAAConfig.build(inst, 1e-3), inst, inst.eigenvectors[:, top])
    assert stats_.p_j[0] >= 1 - 1e-6
    assert np.all(stats_.p_j[1:] <= 1e-6)


def test_pipeline_success_probability(ladder):
    inst, config = ladder
    stats_ = run_pipeline(config, inst)
    weights = np.abs(inst.eigen_coefficients()) ** 2
    predicted = math.sqrt(np.sum(weights / inst.eigenvalues ** 2)) / config.alpha_max
    assert abs(math.sqrt(stats_.p_succ) - predicted) <= 5 * config.m * config.eps_gpe


def test_pipeline_bucket_concentration(ladder):
    inst, config = ladder
    stats_ = run_pipeline(config, inst)
    for k, branch in enumerate(sorted(stats_.branches, key=lambda br: -br.lam)):
        # lam = 2^-k sits in the bucket phi_j < lam <= 2 phi_j with j = k + 1
        assert branch.stop[k] >= 1 - 1e-6


def test_stopping_tail(ladder):
    inst, config = ladder
    stats_ = run_pipeline(config, inst)
    for k, branch in enumerate(sorted(stats_.branches, key=lambda br: -br.lam)):
        late = sum(branch.stop[k + 2:]) + branch.alive
        assert late <= config.eps_gpe ** 2


def test_finstate_and_ancilla_identity(ladder):
    inst, config = ladder
    stats_ = run_pipeline(config, inst)
    assert stats_.finstate_deviation <= config.m * config.eps_gpe
    assert stats_.ancilla_deviation <= config.m * config.eps_gpe


def test_uncompute_eigenvector():
    inst = diagonal_instance([1.0, -0.5], [1, 0])
    result = solve_vtaa(inst, 1e-3)
    assert np.linalg.norm(result.x_tilde - inst.b_normalized) <= 1e-3


def test_uncompute_diag_half(diag_half):
    config = VTAAConfig.build(diag_half, 1e-3)
    stats_ = run_pipeline(config, diag_half)
    result = uncompute_and_extract(config, diag_half, stats_)
    np.testing.assert_allclose(result.state.amps, np.array([1, 2]) / math.sqrt(5), atol=1e-3)
    # ancilla purity: weight off |0...0> is O(eps^2)
    assert result.residual <= config.epsilon ** 2


def test_uncompute_budget_flags_miscalibration():
    inst = diagonal_instance([1.0, -0.5, 0.25, 0.3], np.ones(4), kappa=4.0)
    config = VTAAConfig.build(inst, 1e-3, rounds=1, bits=3)
    stats_ = run_pipeline(config, inst)
    with pytest.raises(ArithmeticError, match="residual"):
        uncompute_and_extract(config, inst, stats_)


def test_cost_single_stage():
    inst = diagonal_instance([1.0, -1.0], [1, 1])
    config = VTAAConfig.build(inst, 1e-3)
    assert config.m == 1
    stats_ = run_pipeline(config, inst)
    assert stats_.p_succ == pytest.approx(1 / config.alpha_max ** 2, rel=1e-3)
    t1 = config.t[0]
    assert vtaa_cost(stats_, config).value == pytest.approx(t1 + t1 * config.alpha_max, rel=1e-3)


def test_cost_smallest_eigenvector():
    inst = diagonal_instance([1.0, 1 / 16], [0, 1], kappa=16.0)
    config = VTAAConfig.build(inst, 1e-3)
    stats_ = run_pipeline(config, inst)
    t_m = config.t[-1]
    assert stats_.t_avg == pytest.approx(t_m, rel=1e-6)
    assert vtaa_cost(stats_, config).value == pytest.approx(t_m + t_m * config.alpha_max / 16, rel=1e-3)


def test_factorized_matches_full_tensor():
    for seed in range(3):
        inst = generate_random_instance(4, 2, 4.0, seed)
        config = VTAAConfig.build(inst, 1e-2, rounds=1, bits=3)
        stats_ = run_pipeline(config, inst)
        extracted = uncompute_and_extract(config, inst, stats_, residual_budget=1.0)
        full = run_full_tensor(config, inst)
        np.testing.assert_allclose(stats_.p_j, full.p_j, atol=1e-9)
        assert abs(stats_.p_succ - full.p_succ) <= 1e-9
        np.testing.assert_allclose(extracted.zero_block, full.zero_block, atol=1e-9)
        assert abs(extracted.residual - full.residual) <= 1e-9


def test_full_tensor_three_rounds():
    inst = diagonal_instance([1.0, -0.5], [1, 1])
    config = VTAAConfig.build(inst, 1e-2, rounds=3, bits=2)
    stats_ = run_pipeline(config, inst)
    full = run_full_tensor(config, inst)
    np.testing.assert_allclose(stats_.p_j, full.p_j, atol=1e-9)


def test_full_tensor_size_guard():
    inst = generate_random_instance(8, 2, 8.0, 0)
    config = VTAAConfig.build(inst, 1e-2, rounds=3, bits=4)
    with pytest.raises(MemoryError):
        run_full_tensor(config, inst)


def test_solve_vtaa_report():
    inst = generate_random_instance(16, 4, 8.0, 1)
    report = solve_vtaa(inst, 1e-4).report
    for key in ("p_j", "t_j", "t_avg", "p_succ", "alpha_max", "predicted_cost"):
        assert key in report
    assert report["error_vs_truth"] <= 1e-4
    assert sum(report["p_j"]) + report["p_unstopped"] == pytest.approx(1.0, abs=1e-12)


def test_fourier_inner_inverse():
    inst = diagonal_instance([1.0, 0.5], [1, 1])
    result = solve_vtaa(inst, 1e-3, method="fourier")
    assert result.report["error_vs_truth"] <= 1e-3


def test_binomial_tail_is_majority():
    # majority of r rounds is far iff more than r // 2 rounds are far
    r, p = 7, 0.3
    assert stats.binom.sf(r // 2, r, p) == pytest.approx(sum(math.comb(r, k) * p ** k * (1 - p) ** (r - k)
                                                             for k in range(4, 8)))


def test_w_matrix_engines_agree():
    inst = diagonal_instance([1.0, -0.5], [1, 1])
    config = VTAAConfig.build(inst, 1e-2)
    w = config.stages[-1]
    dense, block = w.matrix("dense"), w.matrix("block")
    np.testing.assert_allclose(dense, block, atol=1e-12)
    np.testing.assert_allclose(np.diag(block), w.amplitude(np.diag(inst.matrix).real), atol=1e-12)
