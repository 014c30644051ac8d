"""Variable-time pipeline: gapped phase estimation, bucketed inverses, stopping statistics.

The pipeline runs m stages. Stage j estimates whether the eigenphase of
U = exp(iA) exceeds phi_j = 2^-j; if it does (and no earlier stage fired),
the stage applies an approximate inverse tuned to eigenvalues of magnitude
at least phi_j and sets the flag F.

Every operation is block diagonal in the eigenbasis of A, so the default
engine tracks each eigen-branch separately. For a branch it keeps the weight
still running, the probability of stopping at each stage, and the flag
amplitude each stopping path carries; the phase-register states of distinct
stopping paths are orthogonal, which is all the uncompute step needs. A
full tensor-product engine over every register is kept for tiny validation
runs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import stats

from .approx import chebyshev_series, eval_chebyshev_series, eval_h, fourier_grid
from .lcu import lcu_once
from .ledger import CostLedger
from .problem import SparseHermitianInstance
from .simcore import build_walk, controlled_power_apply, exact_evolution
from .solver import SolveResult, chebyshev_program, compare_states, fourier_program
from .state import QuantumState

# phase bits beyond ceil(log2(1/phi)); two extra bits leave ~0.8 far-probability
# at the gap edge, four bring the worst case under 0.12
GPE_GUARD_BITS = 4
# rounds r = ceil(GPE_ROUND_FACTOR * ln(1/eps)), forced odd
GPE_ROUND_FACTOR = 8
# estimates with |theta| >= GPE_THRESHOLD * phi count as far from zero
GPE_THRESHOLD = 1.5
ALPHA_MAX_RTOL = 1e-3
FULL_TENSOR_LIMIT = 1 << 20


# -- gapped phase estimation -------------------------------------------------

def gpe_rounds(eps: float) -> int:
    if not 0 < eps < 1:
        raise ValueError(f"eps={eps} must lie in (0, 1)")
    r = max(1, math.ceil(GPE_ROUND_FACTOR * math.log(1 / eps)))
    return r if r % 2 else r + 1


def gpe_bits(phi: float) -> int:
    _check_phi(phi)
    return math.ceil(math.log2(1 / phi) - 1e-12) + GPE_GUARD_BITS


def _check_phi(phi: float) -> None:
    if not 0 < phi <= 0.5:
        raise ValueError(f"phi={phi} must lie in (0, 1/2]")


def pe_amplitudes(theta: float, bits: int) -> np.ndarray:
    """Amplitudes of standard phase estimation for eigenphase ``theta``."""
    size = 2 ** bits
    delta = theta - 2 * np.pi * np.arange(size) / size
    # exp(i size delta) = exp(i size theta) exactly, since exp(-2 pi i x) = 1
    num = np.full(size, np.expm1(1j * size * theta))
    den = np.expm1(1j * delta)
    out = np.ones(size, dtype=complex)
    nz = np.abs(den) > 1e-14
    out[nz] = num[nz] / (size * den[nz])
    return out


def far_mask(phi: float, bits: int) -> np.ndarray:
    """Outcomes whose two's-complement phase estimate has |theta| >= 1.5 phi."""
    size = 2 ** bits
    x = np.arange(size)
    signed = np.where(x < size // 2, x, x - size)
    return np.abs(2 * np.pi * signed / size) >= GPE_THRESHOLD * phi


@dataclass(frozen=True)
class GPEOutcome:
    """Clock amplitudes: beta0 on |0>_C (near zero), beta1 on |1>_C (far)."""

    beta0: float
    beta1: float
    p_far: float
    rounds: int
    bits: int


def gpe_amplitudes(theta: float, phi: float, eps: float | None = None, *,
                   rounds: int | None = None, bits: int | None = None) -> GPEOutcome:
    """Exact clock amplitudes of majority-voted phase estimation."""
    _check_phi(phi)
    rounds = rounds if rounds is not None else gpe_rounds(eps)
    bits = bits if bits is not None else gpe_bits(phi)
    if rounds % 2 == 0:
        raise ValueError("the number of rounds must be odd")
    amps = pe_amplitudes(theta, bits)
    p_far = float(np.clip(np.sum(np.abs(amps[far_mask(phi, bits)]) ** 2), 0.0, 1.0))
    # majority is far when more than r/2 rounds are far
    beta1 = math.sqrt(stats.binom.sf(rounds // 2, rounds, p_far))
    beta0 = math.sqrt(stats.binom.cdf(rounds // 2, rounds, p_far))
    return GPEOutcome(beta0, beta1, p_far, rounds, bits)


def gpe_cost(rounds: int, bits: int) -> CostLedger:
    """Controlled powers of exp(iA): 2^bits - 1 unit-time uses per round."""
    uses = rounds * (2 ** bits - 1)
    return CostLedger(evolution_uses=uses, evolution_time_total=float(uses))


def gpe(instance: SparseHermitianInstance, phi: float, eps: float, *, ledger: CostLedger | None = None,
        rounds: int | None = None, bits: int | None = None) -> list[GPEOutcome]:
    """Outcome on every eigen-branch of ``instance`` (eigenphases of exp(iA))."""
    out = [gpe_amplitudes(lam, phi, eps, rounds=rounds, bits=bits) for lam in instance.eigenvalues]
    if ledger is not None:
        ledger.merge(gpe_cost(out[0].rounds, out[0].bits))
    return out


# -- equalized inverse ---------------------------------------------------------

class WLambda:
    """Inverse on |lambda| >= threshold with success amplitude scaled to 1/alpha_max."""

    def __init__(self, instance: SparseHermitianInstance, threshold: float, eps: float,
                 alpha_max: float | None = None, method: str = "chebyshev", walk=None):
        self.instance = instance
        self.threshold = threshold
        self.eps = eps
        self.method = method
        kappa = 1.0 / threshold
        if method == "chebyshev":
            self.program = chebyshev_program(instance, eps, walk=walk, kappa=kappa)
            series, d = self.program.series, instance.d
            self.function = lambda lam: eval_chebyshev_series(np.asarray(lam) / d, series) / d
        elif method == "fourier":
            self.program = fourier_program(instance, eps, kappa=kappa)
            grid = self.program.grid
            self.function = lambda lam: eval_h(lam, grid).real
        else:
            raise ValueError(f"unknown method {method!r}")
        self.alpha = self.program.alpha
        self.alpha_max = self.alpha if alpha_max is None else alpha_max
        if self.alpha > self.alpha_max * (1 + 1e-12):
            raise ValueError(f"alpha={self.alpha} exceeds alpha_max={self.alpha_max}")

    def amplitude(self, lam):
        """Flag amplitude h(lambda) / alpha_max on an eigenvector."""
        out = np.real(self.function(lam)) / self.alpha_max
        return float(np.squeeze(out)) if np.ndim(lam) == 0 else out

    def apply(self, psi: np.ndarray, ledger: CostLedger | None = None, *, engine: str = "auto") -> np.ndarray:
        """The F=1 block h(A) psi / alpha_max from one LCU pass and the flag rotation."""
        block, _ = lcu_once(self.program, psi, ledger, engine=engine)
        return block.amps * (self.alpha / self.alpha_max)

    def matrix(self, engine: str = "block") -> np.ndarray:
        """h(A) / alpha_max assembled column by column from LCU passes."""
        n = self.instance.n
        return np.column_stack([self.apply(np.eye(n)[:, i], engine=engine) for i in range(n)])

    def cost(self) -> CostLedger:
        cost = self.program.select_cost()
        cost.v_uses += 2
        return cost

    def queries(self) -> float:
        """Entry-oracle queries of one pass (evolution time weighs d queries per unit)."""
        cost = self.cost()
        return cost.pa_queries + self.instance.d * cost.evolution_time_total


def w_lambda(instance, lambda_threshold, eps, alpha_max=None, method="chebyshev", walk=None) -> WLambda:
    return WLambda(instance, lambda_threshold, eps, alpha_max, method, walk)


def alpha_for(instance: SparseHermitianInstance, threshold: float, eps: float, method: str) -> float:
    if method == "chebyshev":
        return chebyshev_series(instance.d / threshold, eps).alpha / instance.d
    return fourier_grid(1.0 / threshold, eps).alpha


# -- configuration -------------------------------------------------------------

@dataclass
class VTAAConfig:
    """Stage thresholds, error split and per-stage costs for one instance."""

    kappa: float
    d: int
    epsilon: float
    m: int
    phis: np.ndarray
    thresholds: np.ndarray
    alpha_max: float
    eps_w: float
    eps_gpe: float
    rounds: int
    bits: tuple[int, ...]
    method: str
    stages: list[WLambda] = field(repr=False)
    gpe_queries: np.ndarray = field(repr=False)
    w_queries: np.ndarray = field(repr=False)

    @property
    def stage_costs(self) -> np.ndarray:
        return self.gpe_queries + self.w_queries

    @property
    def t(self) -> np.ndarray:
        """Cumulative query cost t_j of running stages 1..j."""
        return np.cumsum(self.stage_costs)

    @classmethod
    def build(cls, instance: SparseHermitianInstance, epsilon: float, *, method: str = "chebyshev",
              rounds: int | None = None, bits: int | Sequence[int] | None = None) -> "VTAAConfig":
        kappa = instance.kappa
        m = math.ceil(math.log2(kappa) - 1e-12) + 1
        phis = 2.0 ** -np.arange(1, m + 1)
        # clamp so no stage promises more than the instance's condition bound
        thresholds = np.maximum(phis, 1.0 / kappa)
        alpha_max = alpha_for(instance, 1.0 / kappa, epsilon, method)
        eps_w = epsilon / alpha_max
        for _ in range(20):
            new = alpha_for(instance, 1.0 / kappa, eps_w, method)
            converged = abs(new - alpha_max) <= ALPHA_MAX_RTOL * new
            alpha_max, eps_w = new, epsilon / new
            if converged:
                break
        # the W programs use eps_w; alpha_max is the alpha of the last program at 1/kappa
        alpha_max = alpha_for(instance, 1.0 / kappa, eps_w, method)
        eps_gpe = eps_w / m
        rounds = rounds if rounds is not None else gpe_rounds(eps_gpe)
        if bits is None:
            bits = tuple(gpe_bits(p) for p in phis)
        elif isinstance(bits, int):
            bits = (bits,) * m
        walk = build_walk(instance) if method == "chebyshev" else None
        stages = [WLambda(instance, th, eps_w, alpha_max, method, walk) for th in thresholds]
        gpe_q = np.array([instance.d * gpe_cost(rounds, b).evolution_time_total for b in bits])
        w_q = np.array([w.queries() for w in stages])
        return cls(kappa, instance.d, epsilon, m, phis, thresholds, alpha_max, eps_w, eps_gpe,
                   rounds, tuple(bits), method, stages, gpe_q, w_q)

    def summary(self) -> dict:
        return {"m": self.m, "alpha_max": self.alpha_max, "eps_w": self.eps_w, "eps_gpe": self.eps_gpe,
                "rounds": self.rounds, "bits": list(self.bits), "thresholds": self.thresholds.tolist(),
                "t_j": self.t.tolist()}


# -- factorized engine -----------------------------------------------------------

@dataclass(frozen=True)
class BranchState:
    """One eigen-branch: eigenvalue, input coefficient and stopping bookkeeping.

    ``alive`` is the probability no stage has fired; ``stop[j]`` the
    probability stage j fired; ``flag[j]`` the F=1 amplitude (before the
    path amplitude) on that path.
    """

    lam: float
    coeff: complex
    alive: float = 1.0
    stop: tuple[float, ...] = ()
    flag: tuple[float, ...] = ()

    @property
    def stage(self) -> int:
        return len(self.stop)

    @property
    def flag_weight(self) -> float:
        """||Pi_F||^2 of this branch per unit input weight."""
        return float(sum(p * s * s for p, s in zip(self.stop, self.flag)))

    @property
    def flag_overlap(self) -> float:
        """Overlap of the F=1 part with the output of the flag-flip pipeline."""
        return float(sum(p * s for p, s in zip(self.stop, self.flag)))


def run_stage(config: VTAAConfig, j: int, branch: BranchState) -> BranchState:
    """Apply stage j (1-based) to the part of the branch that has not stopped."""
    if not 1 <= j <= config.m:
        raise ValueError(f"stage {j} outside [1, {config.m}]")
    if branch.stage != j - 1:
        raise ValueError(f"branch is at stage {branch.stage}, cannot apply stage {j}")
    outcome = gpe_amplitudes(branch.lam, config.phis[j - 1], rounds=config.rounds, bits=config.bits[j - 1])
    fired = branch.alive * outcome.beta1 ** 2
    flag = config.stages[j - 1].amplitude(branch.lam)
    return replace(branch, alive=branch.alive * outcome.beta0 ** 2,
                   stop=branch.stop + (fired,), flag=branch.flag + (flag,))


@dataclass
class PipelineStats:
    branches: list[BranchState]
    p_j: np.ndarray
    p_unstopped: float
    t_j: np.ndarray
    t_avg: float
    p_succ: float
    finstate_deviation: float
    ancilla_deviation: float

    def as_dict(self) -> dict:
        return {"p_j": self.p_j.tolist(), "p_unstopped": self.p_unstopped, "t_j": self.t_j.tolist(),
                "t_avg": self.t_avg, "p_succ": self.p_succ,
                "finstate_deviation": self.finstate_deviation, "ancilla_deviation": self.ancilla_deviation}


def pipeline_cost(config: VTAAConfig, *, uncompute: bool = False) -> CostLedger:
    """Ledger of one run of every stage (W replaced by the free flag flip when uncomputing)."""
    ledger = CostLedger()
    for bits, stage in zip(config.bits, config.stages):
        ledger.merge(gpe_cost(config.rounds, bits))
        if not uncompute:
            ledger.merge(stage.cost())
    return ledger


def run_pipeline(config: VTAAConfig, instance: SparseHermitianInstance, b: np.ndarray | None = None,
                 ledger: CostLedger | None = None) -> PipelineStats:
    """Run all stages on every eigen-branch of b and collect stopping statistics."""
    b = instance.b_normalized if b is None else np.asarray(b, dtype=complex) / np.linalg.norm(b)
    coeffs = instance.eigenvectors.conj().T @ b
    branches = []
    for lam, c in zip(instance.eigenvalues, coeffs):
        branch = BranchState(float(lam), complex(c))
        for j in range(1, config.m + 1):
            branch = run_stage(config, j, branch)
        branches.append(branch)
    if ledger is not None:
        ledger.pb_uses += 1
        ledger.merge(pipeline_cost(config))

    weights = np.abs(coeffs) ** 2
    stop = np.array([br.stop for br in branches])
    p_j = weights @ stop
    p_unstopped = float(weights @ np.array([br.alive for br in branches]))
    t_j = config.t
    # runs that never stop still pay for every stage
    t_avg = math.sqrt(float(p_j @ t_j ** 2) + p_unstopped * t_j[-1] ** 2)
    p_succ = float(weights @ np.array([br.flag_weight for br in branches]))

    finstate = 0.0
    ancilla = 0.0
    for br, w in zip(branches, weights):
        if w < 1e-300:
            continue
        target = 1.0 / (abs(br.lam) * config.alpha_max)
        finstate = max(finstate, abs(math.sqrt(br.flag_weight) - target) * abs(br.lam) * config.alpha_max)
        # ||lam alpha_max Pi_F A|lam> - (flag-flip pipeline)|lam>||
        scaled = br.lam * config.alpha_max
        dev = sum(p * (scaled * s - 1.0) ** 2 for p, s in zip(br.stop, br.flag)) + br.alive
        ancilla = max(ancilla, math.sqrt(dev))
    return PipelineStats(branches, p_j, p_unstopped, t_j, t_avg, p_succ, finstate, ancilla)


@dataclass
class UncomputeResult:
    state: QuantumState
    residual: float
    zero_block: np.ndarray
    error: float


def uncompute_and_extract(config: VTAAConfig, instance: SparseHermitianInstance, stats_: PipelineStats,
                          ledger: CostLedger | None = None, *, residual_budget: float | None = None) -> UncomputeResult:
    """Apply the inverse flag-flip pipeline to the normalized F=1 projection.

    The ancilla-zero component of the result is
    sum_k c_k (sum_j stop_j flag_j) |lam_k> / sqrt(p_succ); the remaining
    weight sits on nonzero ancilla patterns and is reported as ``residual``.
    """
    amps = np.array([br.coeff * br.flag_overlap for br in stats_.branches]) / math.sqrt(stats_.p_succ)
    zero_block = instance.eigenvectors @ amps
    kept = float(np.vdot(zero_block, zero_block).real)
    residual = max(0.0, 1.0 - kept)
    budget = config.epsilon ** 2 if residual_budget is None else residual_budget
    if residual > budget:
        raise ArithmeticError(f"ancilla residual {residual:.3e} exceeds the budget {budget:.3e}")
    if ledger is not None:
        ledger.merge(pipeline_cost(config, uncompute=True))
    state = QuantumState.from_vector("I", zero_block / math.sqrt(kept))
    truth = instance.solution()
    # distance of the full post-uncompute state from |x>|0...0>
    error = math.sqrt(float(np.linalg.norm(zero_block - truth) ** 2) + residual)
    return UncomputeResult(state, residual, zero_block, error)


@dataclass(frozen=True)
class VTAACost:
    value: float
    t_m: float
    t_avg: float
    p_succ: float
    log_t_m: float

    def as_dict(self) -> dict:
        return {"predicted_cost": self.value, "t_m": self.t_m, "t_avg": self.t_avg,
                "p_succ": self.p_succ, "polylog_multiplier": f"poly(log t_m), log2 t_m = {self.log_t_m:.3f}"}


def vtaa_cost(stats_: PipelineStats, config: VTAAConfig) -> VTAACost:
    """t_m + t_avg / sqrt(p_succ); the polylog multiplier is reported, not applied."""
    t_m = float(config.t[-1])
    value = t_m + stats_.t_avg / math.sqrt(stats_.p_succ)
    return VTAACost(value, t_m, stats_.t_avg, stats_.p_succ, math.log2(t_m))


def solve_vtaa(instance: SparseHermitianInstance, epsilon: float, *, method: str = "chebyshev",
               rounds: int | None = None, bits=None) -> SolveResult:
    ledger = CostLedger()
    config = VTAAConfig.build(instance, epsilon, method=method, rounds=rounds, bits=bits)
    stats_ = run_pipeline(config, instance, ledger=ledger)
    result = uncompute_and_extract(config, instance, stats_, ledger)
    cost = vtaa_cost(stats_, config)
    report = {"method": "vtaa", "epsilon": epsilon, "success_prob": stats_.p_succ,
              "alpha_max": config.alpha_max, "config": config.summary(), "residual": result.residual,
              **stats_.as_dict(), **cost.as_dict()}
    report.update(compare_states(result.state.amps, instance.solution()))
    report["error_with_ancillas"] = result.error
    report["ledger"] = ledger.as_dict()
    return SolveResult(result.state, ledger, report)


# -- full tensor engine ------------------------------------------------------------

def _walsh_hadamard(size: int) -> np.ndarray:
    h = np.array([[1.0]])
    while h.shape[0] < size:
        h = np.block([[h, h], [h, -h]]) / math.sqrt(2)
    return h


def _inverse_qft(size: int) -> np.ndarray:
    k = np.arange(size)
    return np.exp(-2j * np.pi * np.outer(k, k) / size) / math.sqrt(size)


def _majority_permutation(rounds: int, bits: int, far: np.ndarray) -> np.ndarray:
    """|c, x_1..x_r> -> |c xor maj(far(x_i)), x_1..x_r> on (C_j, P_j1..P_jr)."""
    size = 2 ** bits
    outcomes = np.indices((size,) * rounds).reshape(rounds, -1)
    flips = (far[outcomes].sum(axis=0) > rounds // 2).astype(int)
    block = size ** rounds
    idx = np.arange(block)
    return np.concatenate([flips * block + idx, (1 - flips) * block + idx])


@dataclass
class FullTensorResult:
    p_j: np.ndarray
    p_succ: float
    zero_block: np.ndarray
    residual: float


def _stage_ops(config, instance, uncompute):
    evolution = exact_evolution(instance, -1.0)
    ops = []
    for j in range(config.m):
        if uncompute:
            w = np.kron([[0.0, 1.0], [1.0, 0.0]], np.eye(instance.n))
        else:
            mat = config.stages[j].matrix()
            mat = (mat + mat.conj().T) / 2
            evals, vecs = np.linalg.eigh(mat)
            comp = (vecs * np.sqrt(np.clip(1 - evals ** 2, 0, None))) @ vecs.conj().T
            # X_F [[M, S], [S, -M]]: the F=1 block of the output is M
            w = np.block([[comp, -mat], [mat, comp]])
        ops.append(w)
    return evolution, ops


def _apply_pipeline(state, config, instance, uncompute, inverse=False):
    evolution, w_ops = _stage_ops(config, instance, uncompute)
    r = config.rounds
    stages = range(config.m - 1, -1, -1) if inverse else range(config.m)
    for j in stages:
        bits = config.bits[j]
        size = 2 ** bits
        ctrl = {f"C{i}": 0 for i in range(j)}
        regs = [f"P{j}_{k}" for k in range(r)]
        perm = _majority_permutation(r, bits, far_mask(config.phis[j], bits))
        w_ctrl = {**ctrl, f"C{j}": 1}
        if not inverse:
            for reg in regs:
                state = state.apply(_walsh_hadamard(size), reg, ctrl)
                state = controlled_power_apply(evolution, state, reg, "I", controls=ctrl)
                state = state.apply(_inverse_qft(size), reg, ctrl)
            state = state.apply_permutation(perm, [f"C{j}"] + regs, ctrl)
            state = state.apply(w_ops[j], ["F", "I"], w_ctrl)
        else:
            state = state.apply(w_ops[j].conj().T, ["F", "I"], w_ctrl)
            state = state.apply_permutation(np.argsort(perm), [f"C{j}"] + regs, ctrl)
            for reg in reversed(regs):
                state = state.apply(_inverse_qft(size).conj().T, reg, ctrl)
                state = controlled_power_apply(evolution.conj().T, state, reg, "I", controls=ctrl)
                state = state.apply(_walsh_hadamard(size), reg, ctrl)
    return state


def run_full_tensor(config: VTAAConfig, instance: SparseHermitianInstance,
                    b: np.ndarray | None = None) -> FullTensorResult:
    """Dense simulation of the pipeline, projection, and uncompute."""
    b = instance.b_normalized if b is None else np.asarray(b, dtype=complex) / np.linalg.norm(b)
    regs = [(f"C{j}", 2) for j in range(config.m)] + [("F", 2)]
    regs += [(f"P{j}_{k}", 2 ** config.bits[j]) for j in range(config.m) for k in range(config.rounds)]
    total = int(np.prod([d for _, d in regs])) * instance.n
    if total > FULL_TENSOR_LIMIT:
        raise MemoryError(f"full tensor of dimension {total} exceeds {FULL_TENSOR_LIMIT}")
    state = QuantumState.from_vector("I", b).with_ancillas(regs)
    state = _apply_pipeline(state, config, instance, uncompute=False)
    p_j = np.array([state.probability({f"C{j}": 1}) for j in range(config.m)])
    flagged = state.project({"F": 1})
    p_succ = flagged.probability
    # reinsert F = 1 and normalize the projected state
    tensor = np.zeros(state.tensor.shape, dtype=complex)
    index = [slice(None)] * len(state.registers)
    index[state.axis("F")] = 1
    tensor[tuple(index)] = flagged.amps.reshape(tensor[tuple(index)].shape) / math.sqrt(p_succ)
    projected = QuantumState(state.registers, tensor)
    restored = _apply_pipeline(projected, config, instance, uncompute=True, inverse=True)
    zeros = {name: 0 for name, _ in regs}
    zero_block = restored.project(zeros).amps
    residual = max(0.0, 1.0 - float(np.vdot(zero_block, zero_block).real))
    return FullTensorResult(p_j, p_succ, zero_block, residual)
