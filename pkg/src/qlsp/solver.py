"""End-to-end solvers and the state-closeness check."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .approx import chebyshev_series, fourier_grid
from .lcu import AmplificationError, ChebyshevTerm, FourierProgram, LCUProgram, amplify
from .ledger import CostLedger
from .problem import SparseHermitianInstance
from .simcore import build_walk
from .state import QuantumState

# share of the target error handed to the series (the rest covers normalization)
SERIES_ERROR_SHARE = 0.25


@dataclass
class SolveResult:
    state: QuantumState | None
    ledger: CostLedger
    report: dict = field(default_factory=dict)

    @property
    def x_tilde(self) -> np.ndarray:
        return self.state.amps


def compare_states(approx: np.ndarray, truth: np.ndarray) -> dict:
    """Distance with and without global-phase alignment, and fidelity."""
    overlap = np.vdot(truth, approx)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return {
        "error_vs_truth": float(np.linalg.norm(approx - truth)),
        "error_aligned": float(np.linalg.norm(approx / phase - truth)),
        "fidelity": float(abs(overlap) ** 2),
    }


def chebyshev_program(instance: SparseHermitianInstance, epsilon: float, *, walk=None,
                      kappa: float | None = None, b: int | None = None) -> LCUProgram:
    """Program for (1/d) g(A/d) with g certified to ``epsilon`` on D_{kappa d}."""
    kappa = instance.kappa if kappa is None else kappa
    d = instance.d
    series = chebyshev_series(kappa * d, epsilon, b=b)
    walk = walk or build_walk(instance)
    terms = [(abs(c) / d, ChebyshevTerm(order, float(np.sign(c)))) for order, c in series.terms()]
    program = LCUProgram(terms, instance=instance, walk=walk)
    program.series = series
    return program


def fourier_program(instance: SparseHermitianInstance, epsilon: float, *,
                    kappa: float | None = None) -> FourierProgram:
    kappa = instance.kappa if kappa is None else kappa
    return FourierProgram(fourier_grid(kappa, epsilon), instance)


def _finish(instance, program, result, method, epsilon, extra) -> SolveResult:
    if not result.success:
        raise AmplificationError(f"{method}: no success within {result.attempts} attempts")
    report = {"method": method, "epsilon": epsilon, "alpha": program.alpha,
              "success_prob": result.success_probability, "aa_rounds": result.rounds,
              "attempts": result.attempts, **extra}
    report.update(compare_states(result.state.amps, instance.solution()))
    report["ledger"] = result.ledger.as_dict()
    return SolveResult(result.state, result.ledger, report)


def solve_fourier(instance: SparseHermitianInstance, epsilon: float, *, policy: str = "postselect-exact",
                  seed: int | None = None, kappa: float | None = None) -> SolveResult:
    """Fourier-grid LCU solve with a series budget of epsilon / 4."""
    _check_epsilon(epsilon)
    program = fourier_program(instance, SERIES_ERROR_SHARE * epsilon, kappa=kappa)
    result = amplify(program, instance, policy, seed=seed)
    return _finish(instance, program, result, "fourier", epsilon,
                   {"grid": program.grid.parameters(), "series_max_error": program.grid.max_error})


def solve_chebyshev(instance: SparseHermitianInstance, epsilon: float, *, policy: str = "postselect-exact",
                    seed: int | None = None, kappa: float | None = None) -> SolveResult:
    """Quantum-walk Chebyshev LCU solve with a series budget of epsilon / 4."""
    _check_epsilon(epsilon)
    program = chebyshev_program(instance, SERIES_ERROR_SHARE * epsilon, kappa=kappa)
    result = amplify(program, instance, policy, seed=seed)
    return _finish(instance, program, result, "chebyshev", epsilon,
                   {"series": program.series.parameters(), "series_max_error": program.series.max_error,
                    "walk_embedded": program.walk.embedded})


def solve(instance: SparseHermitianInstance, method: str, epsilon: float, **kwargs) -> SolveResult:
    if method == "fourier":
        return solve_fourier(instance, epsilon, **kwargs)
    if method == "chebyshev":
        return solve_chebyshev(instance, epsilon, **kwargs)
    if method == "vtaa":
        from .vtaa import solve_vtaa
        kwargs.pop("policy", None)
        kwargs.pop("seed", None)
        return solve_vtaa(instance, epsilon, **kwargs)
    raise ValueError(f"unknown method {method!r}")


def _check_epsilon(epsilon: float) -> None:
    if not 0 < epsilon < 0.5:
        raise ValueError(f"epsilon={epsilon} must lie in (0, 1/2)")


def check_statesclose(c: np.ndarray, d: np.ndarray, psi: np.ndarray, *, tol: float = 1e-12) -> tuple[float, float]:
    """Distance between C psi and D psi (both normalized), and the bound 4 ||C - D||.

    Requires C Hermitian with ||C^{-1}|| <= 1 and ||C - D|| < 1/2.
    """
    c = np.asarray(c, dtype=complex)
    d = np.asarray(d, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    if np.max(np.abs(c - c.conj().T)) > tol:
        raise ValueError("C is not Hermitian")
    smallest = np.min(np.abs(np.linalg.eigvalsh(c)))
    if smallest < 1 - tol:
        raise ValueError(f"||C^-1|| = {1 / smallest:.6g} exceeds 1")
    eps = float(np.linalg.norm(c - d, 2))
    if eps >= 0.5:
        raise ValueError(f"||C - D|| = {eps:.6g} is not below 1/2")
    psi = psi / np.linalg.norm(psi)
    x = c @ psi
    y = d @ psi
    dist = float(np.linalg.norm(x / np.linalg.norm(x) - y / np.linalg.norm(y)))
    return dist, 4 * eps
