"""Solve one random sparse system with all three simulated algorithms and compare what each costs."""
import numpy as np

from qlsp import generate_random_instance, solve

inst = generate_random_instance(16, 4, kappa=8.0, seed=3)
print(f"n={inst.n}  d={inst.d}  kappa={inst.kappa:g}")
print(f"eigenvalues span [{np.min(np.abs(inst.eigenvalues)):.3f}, {np.max(np.abs(inst.eigenvalues)):.3f}] in magnitude")

eps = 1e-4
print(f"\n{'method':<10} {'error':>10} {'fidelity':>12} {'pa_queries':>12} {'evol time':>12}")
for method in ("fourier", "chebyshev", "vtaa"):
    result = solve(inst, method, eps)
    r, ledger = result.report, result.ledger
    print(f"{method:<10} {r['error_vs_truth']:>10.2e} {r['fidelity']:>12.9f} "
          f"{ledger.pa_queries:>12d} {ledger.evolution_time_total:>12.1f}")

# The variable-time report also exposes where the branches stopped.
vt = solve(inst, "vtaa", eps).report
print("\nstopping probabilities per stage:", np.round(vt["p_j"], 4))
print(f"success probability {vt['p_succ']:.4f}, average stopping time {vt['t_avg']:.1f}")
