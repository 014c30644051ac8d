"""How cost grows with the condition number.

The Chebyshev solve is fed the hardest right-hand side (the eigenvector with the
largest eigenvalue), where one walk-based LCU round must be amplified the most.
Its query count should grow roughly like kappa^2, while the predicted cost of the
variable-time pipeline grows close to linearly.
"""
from dataclasses import replace

import numpy as np

from qlsp import generate_random_instance, solve_chebyshev, solve_vtaa

kappas = np.array([2, 4, 8, 16, 32])
cheb, vtaa = [], []
print(f"{'kappa':>6} {'chebyshev pa_queries':>22} {'vtaa predicted cost':>22}")
for kappa in kappas:
    inst = generate_random_instance(16, 4, float(kappa), seed=0)
    top = int(np.argmax(np.abs(inst.eigenvalues)))
    hard = replace(inst, b=inst.eigenvectors[:, top].copy())
    cheb.append(solve_chebyshev(hard, 1e-6).ledger.pa_queries)
    vtaa.append(solve_vtaa(inst, 1e-6).report["predicted_cost"])
    print(f"{kappa:>6} {cheb[-1]:>22d} {vtaa[-1]:>22.1f}")

slope = lambda ys: np.polyfit(np.log(kappas), np.log(ys), 1)[0]
print(f"\nfitted exponents: chebyshev {slope(cheb):.2f}, vtaa {slope(vtaa):.2f}")
