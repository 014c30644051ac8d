"""Linear combination of unitaries: prepare / select / unprepare and drivers.

A program is a list of ``(alpha_i, term)`` pairs with ``alpha_i > 0``. Three
term kinds exist:

* :class:`EvolutionTerm` -- ``phase * exp(-i A t)``, no term ancilla;
* :class:`ChebyshevTerm` -- ``sign * T_n(A/d)`` through the walk dilation;
* :class:`MatrixTerm` -- an explicit unitary whose ancilla-zero block is
  the term (used for generic programs).

:func:`lcu_once` runs V^dagger U V on |0>|b> and returns the all-zero ancilla
block. Small programs are executed on a dense state vector; larger ones use
the block identity (1/alpha) sum_i alpha_i T_i |b>, evaluated spectrally.
Both paths charge the ledger identically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .approx import FourierGrid, eval_h
from .ledger import CostLedger
from .problem import SparseHermitianInstance, prepare_b
from .simcore import WalkOperator, exact_evolution
from .state import ProjectedState, QuantumState, complete_unitary, qubits_for

# dense engine limit on the full (select x ancilla x index) dimension
DENSE_DIM_LIMIT = 1 << 15
AMPLIFY_MAX_ATTEMPTS = 20
# success weights below this are rounding noise on an exactly zero block
ZERO_BLOCK_TOL = 1e-24


class AmplificationError(RuntimeError):
    """The attempt cap ran out before a success was observed."""


@dataclass(frozen=True)
class EvolutionTerm:
    time: float
    phase: complex = 1.0


@dataclass(frozen=True)
class ChebyshevTerm:
    order: int
    sign: float = 1.0


@dataclass(frozen=True, eq=False)
class MatrixTerm:
    """Unitary on (ancilla, index); the term is its ancilla-zero block."""

    unitary: np.ndarray
    ancilla_dim: int = 1


class LCUProgram:
    """Explicit list of weighted terms, plus the operators they refer to."""

    def __init__(self, terms: Sequence[tuple[float, object]], *,
                 instance: SparseHermitianInstance | None = None,
                 walk: WalkOperator | None = None, dim: int | None = None):
        if not terms:
            raise ValueError("a program needs at least one term")
        weights = np.array([w for w, _ in terms], dtype=float)
        if np.any(weights <= 0):
            raise ValueError("every coefficient must be strictly positive")
        self.weights = weights
        self.terms = [t for _, t in terms]
        self.instance = instance
        self.walk = walk
        self.dim = dim or (instance.n if instance is not None else None)
        if self.dim is None:
            raise ValueError("cannot infer the index dimension")
        self._check_terms()

    def _check_terms(self):
        for term in self.terms:
            if isinstance(term, EvolutionTerm) and self.instance is None:
                raise ValueError("evolution terms need an instance")
            if isinstance(term, ChebyshevTerm) and self.walk is None:
                raise ValueError("Chebyshev terms need a walk")
            if isinstance(term, MatrixTerm) and term.unitary.shape[0] != term.ancilla_dim * self.dim:
                raise ValueError("matrix term does not match the index dimension")

    @property
    def alpha(self) -> float:
        return float(math.fsum(self.weights))

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def select_qubits(self) -> int:
        return qubits_for(self.n_terms)

    @property
    def select_dim(self) -> int:
        return 2 ** self.select_qubits

    @property
    def ancilla_dim(self) -> int:
        dims = [1]
        for term in self.terms:
            if isinstance(term, ChebyshevTerm):
                dims.append(self.walk.term_ancilla_dim)
            elif isinstance(term, MatrixTerm):
                dims.append(term.ancilla_dim)
        return max(dims)

    @property
    def dense_dim(self) -> int:
        return self.select_dim * self.ancilla_dim * self.dim

    # costs --------------------------------------------------------------
    def select_cost(self) -> CostLedger:
        """Oracle cost of one application of the select unitary U."""
        cost = CostLedger(u_uses=1)
        times = [abs(t.time) for t in self.terms if isinstance(t, EvolutionTerm)]
        orders = [t.order for t in self.terms if isinstance(t, ChebyshevTerm)]
        if times:
            cost.charge_evolution(max(times))
        if orders:
            # one controlled walk sequence serves all orders; T and T^dagger once each
            cost.charge_walk(max(orders))
            cost.charge_isometry(2)
        return cost

    # operators ----------------------------------------------------------
    def term_operator(self, i: int) -> np.ndarray:
        """Unitary of term i on (ancilla, index) of size ancilla_dim * dim."""
        term = self.terms[i]
        anc = self.ancilla_dim
        if isinstance(term, EvolutionTerm):
            core = term.phase * exact_evolution(self.instance, term.time)
            core_anc = 1
        elif isinstance(term, ChebyshevTerm):
            core = term.sign * self.walk.chebyshev_dilation(term.order)
            core_anc = self.walk.term_ancilla_dim
        else:
            core = np.asarray(term.unitary, dtype=complex)
            core_anc = term.ancilla_dim
        # extend by the identity on unused ancilla patterns
        out = np.eye(anc * self.dim, dtype=complex)
        size = core_anc * self.dim
        out[:size, :size] = core
        return out

    def term_block(self, i: int) -> np.ndarray:
        """The N x N operator T_i carried by term i."""
        return self.term_operator(i)[: self.dim, : self.dim]

    def block_apply(self, psi: np.ndarray) -> np.ndarray:
        """(1/alpha) sum_i alpha_i T_i psi without building the dilation."""
        out = np.zeros(self.dim, dtype=complex)
        cheb = [(w, t) for w, t in zip(self.weights, self.terms) if isinstance(t, ChebyshevTerm)]
        if cheb:
            moments = self.walk.moments(psi, max(t.order for _, t in cheb))
            for w, t in cheb:
                out += w * t.sign * moments[t.order]
        for w, t in zip(self.weights, self.terms):
            if isinstance(t, EvolutionTerm):
                out += w * t.phase * self.instance.apply_function(lambda lam: np.exp(-1j * lam * t.time), psi)
            elif isinstance(t, MatrixTerm):
                out += w * (np.asarray(t.unitary)[: self.dim, : self.dim] @ psi)
        return out / self.alpha

    def operator(self) -> np.ndarray:
        """M = sum_i alpha_i T_i as a dense N x N matrix."""
        return sum(w * self.term_block(i) for i, w in enumerate(self.weights))


class FourierProgram:
    """The Fourier-grid program sum_{j,k} weight_{jk} * (i sgn(k) exp(-i A y_j z_k)).

    Grids can hold billions of terms, so they are never listed; the block
    is evaluated spectrally and :meth:`expand` builds the explicit program
    for tiny grids.
    """

    def __init__(self, grid: FourierGrid, instance: SparseHermitianInstance):
        self.grid = grid
        self.instance = instance
        self.dim = instance.n

    @property
    def alpha(self) -> float:
        return self.grid.alpha

    @property
    def n_terms(self) -> int:
        return self.grid.n_terms

    @property
    def select_qubits(self) -> int:
        return qubits_for(self.n_terms)

    def select_cost(self) -> CostLedger:
        cost = CostLedger(u_uses=1)
        cost.charge_evolution(self.grid.max_time)
        return cost

    def term_weights(self) -> np.ndarray:
        """Term weights in (j, k) order; zero-z samples are excluded."""
        g = self.grid
        return np.outer(np.full(g.J, g.delta_y), g.z_weights).reshape(-1) / math.sqrt(2 * math.pi)

    def expand(self, limit: int = 4096) -> LCUProgram:
        g = self.grid
        if self.n_terms > limit:
            raise MemoryError(f"{self.n_terms} terms exceed the expansion limit {limit}")
        terms = []
        weights = self.term_weights()
        for idx, (y, z) in enumerate((y, z) for y in g.y for z in g.z):
            terms.append((weights[idx], EvolutionTerm(y * z, 1j * np.sign(z))))
        return LCUProgram(terms, instance=self.instance)

    def block_apply(self, psi: np.ndarray) -> np.ndarray:
        return self.instance.apply_function(lambda lam: eval_h(lam, self.grid), psi) / self.alpha


# -- prepare / select -------------------------------------------------------

def prepare_V(program) -> np.ndarray:
    """Unitary on the select register with V|0> = sum_i sqrt(alpha_i / alpha) |i>."""
    weights = program.weights if isinstance(program, LCUProgram) else program.term_weights()
    first = np.zeros(2 ** qubits_for(weights.size), dtype=complex)
    first[: weights.size] = np.sqrt(weights / weights.sum())
    first /= np.linalg.norm(first)
    return complete_unitary(first)


def apply_select(program: LCUProgram, state: QuantumState, *, select: str = "S",
                 ancilla: str = "Q", target: str = "I") -> QuantumState:
    """Apply U = sum_i |i><i| (x) U_i; padded select slots get the identity."""
    if state.dim(select) != program.select_dim:
        raise ValueError(f"select register has dimension {state.dim(select)}, program needs {program.select_dim}")
    if state.dim(ancilla) != program.ancilla_dim or state.dim(target) != program.dim:
        raise ValueError("ancilla or index register does not match the program")
    for i in range(program.n_terms):
        state = state.apply(program.term_operator(i), [ancilla, target], {select: i})
    return state


def lcu_layout(program: LCUProgram) -> list[tuple[str, int]]:
    return [("S", program.select_dim), ("Q", program.ancilla_dim), ("I", program.dim)]


def run_dense(program: LCUProgram, psi: np.ndarray) -> QuantumState:
    """Full state V^dagger U V |0>_S |0>_Q |psi>_I."""
    state = QuantumState.from_vector("I", psi).with_ancillas(lcu_layout(program)[:2])
    v = prepare_V(program)
    state = state.apply(v, "S")
    state = apply_select(program, state)
    return state.apply(v.conj().T, "S")


def lcu_once(program, psi: QuantumState | np.ndarray, ledger: CostLedger | None = None,
             *, engine: str = "auto") -> tuple[ProjectedState, float]:
    """One pass of V^dagger U V; returns the all-zero ancilla block and its weight.

    ``engine`` selects ``"dense"`` (full state vector), ``"block"`` (block
    identity) or ``"auto"`` (dense when the program is explicit and small).
    """
    vec = psi.amps if isinstance(psi, QuantumState) else np.asarray(psi, dtype=complex)
    if engine == "auto":
        dense_ok = isinstance(program, LCUProgram) and program.dense_dim <= DENSE_DIM_LIMIT
        engine = "dense" if dense_ok else "block"
    if engine == "dense":
        block = run_dense(program, vec).project({"S": 0, "Q": 0})
    elif engine == "block":
        block = ProjectedState((("I", program.dim),), program.block_apply(vec))
    else:
        raise ValueError(f"unknown engine {engine!r}")
    if ledger is not None:
        ledger.merge(program.select_cost())
        ledger.v_uses += 2
    return block, block.probability


# -- amplification ------------------------------------------------------------

def aa_rounds(probability: float) -> int:
    """Rounds k with sin^2((2k+1) theta) closest to 1 for sin^2(theta) = probability."""
    if probability <= 0:
        raise ValueError("success probability must be positive")
    if probability >= 1 - 1e-15:
        return 0
    theta = math.asin(math.sqrt(probability))
    return max(0, round(math.pi / (4 * theta) - 0.5))


def amplified_probability(probability: float, rounds: int) -> float:
    theta = math.asin(math.sqrt(min(1.0, probability)))
    return math.sin((2 * rounds + 1) * theta) ** 2


@dataclass
class AmplifyResult:
    state: QuantumState | None
    success: bool
    success_probability: float
    rounds: int
    attempts: int
    ledger: CostLedger = field(default_factory=CostLedger)


def _charge_attempt(ledger: CostLedger, pass_cost: CostLedger, rounds: int) -> None:
    """One amplified attempt: 2k+1 passes of V^dagger U V, 2k+1 preparations of |b>."""
    passes = 2 * rounds + 1
    ledger.merge(pass_cost.scaled(passes))
    ledger.pb_uses += passes
    ledger.aa_rounds += rounds


def _amplified_state(program, psi: np.ndarray, rounds: int) -> np.ndarray:
    """Run k rounds of -R_init R_good on the full LCU state; return it."""
    state = run_dense(program, psi)
    start = state.amps
    good = np.zeros(state.tensor.shape, dtype=bool)
    good[0, 0] = True
    good = good.reshape(-1)
    vec = start.copy()
    for _ in range(rounds):
        vec = np.where(good, -vec, vec)
        vec = -(vec - 2 * start * np.vdot(start, vec))
    return vec.reshape(state.tensor.shape)


def amplify(program, instance: SparseHermitianInstance, policy: str = "postselect-exact", *,
            seed: int | None = None, ledger: CostLedger | None = None,
            norm_lower_bound: float = 1.0) -> AmplifyResult:
    """Drive the LCU pass to a normalized success.

    Policies:
      ``postselect-exact`` -- return the normalized block; charge one
        deterministic amplified attempt.
      ``sample`` -- repeat-until-success with probability q per trial, capped
        at ten times the worst-case expectation (alpha / norm_lower_bound)^2.
      ``amplify`` -- amplitude amplification with the rotation count for q,
        measured with seeded randomness and retried on failure.
    """
    ledger = ledger if ledger is not None else CostLedger()
    b_state = prepare_b(instance)
    block, q = lcu_once(program, b_state)
    pass_cost = program.select_cost()
    pass_cost.v_uses += 2
    if q <= ZERO_BLOCK_TOL:
        raise AmplificationError("the success block is zero")
    out = block.normalized()

    if policy == "postselect-exact":
        k = aa_rounds(q)
        _charge_attempt(ledger, pass_cost, k)
        return AmplifyResult(out, True, q, k, 1, ledger)

    rng = np.random.default_rng(seed)
    if policy == "sample":
        cap = 10 * math.ceil((program.alpha / norm_lower_bound) ** 2)
        for attempt in range(1, cap + 1):
            _charge_attempt(ledger, pass_cost, 0)
            if rng.random() < q:
                return AmplifyResult(out, True, q, 0, attempt, ledger)
        return AmplifyResult(None, False, q, 0, cap, ledger)

    if policy == "amplify":
        k = aa_rounds(q)
        explicit = isinstance(program, LCUProgram) and program.dense_dim <= DENSE_DIM_LIMIT
        if explicit:
            final = _amplified_state(program, b_state.amps, k)
            good = final[0, 0]
            p_good = float(np.vdot(good, good).real)
            out = QuantumState(block.registers, good / math.sqrt(p_good))
        else:
            p_good = amplified_probability(q, k)
        for attempt in range(1, AMPLIFY_MAX_ATTEMPTS + 1):
            _charge_attempt(ledger, pass_cost, k)
            if rng.random() < p_good:
                return AmplifyResult(out, True, q, k, attempt, ledger)
        return AmplifyResult(None, False, q, k, AMPLIFY_MAX_ATTEMPTS, ledger)

    raise ValueError(f"unknown policy {policy!r}")
