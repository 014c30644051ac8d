"""Exact simulation primitives: Hamiltonian evolution, controlled powers and the walk."""
from __future__ import annotations

from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse

from .approx import chebyshev_t, chebyshev_u
from .ledger import CostLedger
from .problem import EntryOracle, SparseHermitianInstance
from .state import ProjectedState, QuantumState, complete_unitary, qubits_for

UNITARY_TOL = 1e-10
# above this walk-space dimension the dense walk and its dilation are never formed
DENSE_WALK_LIMIT = 4096


def exact_evolution(instance: SparseHermitianInstance, t: float, ledger: CostLedger | None = None) -> np.ndarray:
    """exp(-i A t) from the cached eigendecomposition."""
    if ledger is not None:
        ledger.charge_evolution(t)
    v = instance.eigenvectors
    return (v * np.exp(-1j * instance.eigenvalues * t)) @ v.conj().T


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u)
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[1]))) <= tol)


def controlled_power_apply(
    y: np.ndarray,
    state: QuantumState,
    ctrl: str | Sequence[str],
    target: str,
    *,
    product_register: str | None = None,
    controls: Mapping[str, int] | None = None,
) -> QuantumState:
    """Apply sum_i |i><i| (x) Y^i, one controlled Y^(2^k) per control bit.

    With two control registers the exponent is their product ``i * j``; it is
    first computed into ``product_register`` (which must start at 0 and be
    large enough), used as the control, then uncomputed.
    ``controls`` adds extra conditions that gate the whole operation.
    """
    y = np.asarray(y, dtype=complex)
    if y.shape != (state.dim(target),) * 2:
        raise ValueError(f"Y of shape {y.shape} does not act on register {target!r}")
    controls = dict(controls or {})
    if isinstance(ctrl, str):
        return _binary_controlled_powers(y, state, ctrl, target, controls)
    first, second = ctrl
    if product_register is None:
        raise ValueError("a product register is required for a two-register control")
    da, db, dp = state.dim(first), state.dim(second), state.dim(product_register)
    if (da - 1) * (db - 1) >= dp:
        raise ValueError(f"product register of dimension {dp} cannot hold {da - 1} * {db - 1}")
    mult = _product_permutation(da, db, dp)
    regs = [first, second, product_register]
    state = state.apply_permutation(mult, regs, controls)
    state = _binary_controlled_powers(y, state, product_register, target, controls)
    return state.apply_permutation(np.argsort(mult), regs, controls)


def _product_permutation(da: int, db: int, dp: int) -> np.ndarray:
    # |i, j, p> -> |i, j, (p + i j) mod dp>
    i, j, p = np.meshgrid(np.arange(da), np.arange(db), np.arange(dp), indexing="ij")
    return ((i * db + j) * dp + (p + i * j) % dp).reshape(-1)


def _binary_controlled_powers(y, state, ctrl, target, controls):
    dim = state.dim(ctrl)
    power = y
    for bit in range(qubits_for(dim)):
        for value in range(dim):
            if value >> bit & 1:
                state = state.apply(power, target, {**controls, ctrl: value})
        power = power @ power
    return state


def zero_diagonal_embedding(instance: SparseHermitianInstance) -> SparseHermitianInstance:
    """The instance [[0, A], [A, 0]] with right-hand side (0, b).

    Same sparsity, norm and condition number as A, and an all-zero diagonal.
    Its inverse maps (0, b) to (A^{-1} b, 0).
    """
    x = np.array([[0.0, 1.0], [1.0, 0.0]])
    rhs = np.concatenate([np.zeros(instance.n), instance.b])
    return SparseHermitianInstance(2 * instance.n, instance.d, instance.kappa,
                                   np.kron(x, instance.matrix), rhs,
                                   allow_singular=instance.allow_singular)


class WalkOperator:
    """The walk W = S(2TT^dagger - 1) on C^{2N} (x) C^{2N} for H = A/d.

    ``T`` maps |j> to |j> (x) (1/sqrt d) sum_l (s_{jk} |k> + sqrt(1 - |A_{jk}|) |k + N>)
    with k = nu(j, l) and s_{jk} a square root of conj(A_{jk}). The walk is
    applied in factored form; the dense matrix is built lazily for small N.

    A diagonal entry contributes |s_{jj}|^2 >= 0 to T^dagger S T, so
    matrices with a negative diagonal entry are walked through
    :func:`zero_diagonal_embedding`; :meth:`lift` and :meth:`lower` convert
    index-register vectors so callers always see T_n(A/d).
    """

    def __init__(self, instance: SparseHermitianInstance, isometry: np.ndarray,
                 walk_instance: SparseHermitianInstance | None = None):
        self.instance = instance
        self.walk_instance = walk_instance or instance
        self.embedded = self.walk_instance is not instance
        self.N = self.walk_instance.n
        self.d = instance.d
        self.T = isometry
        # each column holds 2d nonzeros; walk steps use the sparse form
        self._t = sparse.csr_matrix(isometry)
        self._tdag = sparse.csr_matrix(isometry.conj().T)
        side = 2 * self.N
        self.dim = side * side
        # swap permutation on the flattened (a, c) index
        a, c = np.divmod(np.arange(self.dim), side)
        self.swap_index = c * side + a

    @property
    def H(self) -> np.ndarray:
        """The Hamiltonian the walk encodes (A/d, or its embedding)."""
        return self.walk_instance.matrix / self.d

    @property
    def ancilla_qubits(self) -> int:
        """Ancillas of the T dilation, ceil(log2 2N) + 1."""
        return qubits_for(2 * self.N) + 1

    def lift(self, psi: np.ndarray) -> np.ndarray:
        if not self.embedded:
            return psi
        return np.concatenate([np.zeros_like(psi), psi])

    def lower(self, vec: np.ndarray, order: int) -> np.ndarray:
        """Inverse of :meth:`lift` after an order-``order`` polynomial in H."""
        if not self.embedded:
            return vec
        half = self.instance.n
        # odd powers of [[0, A], [A, 0]] move the lower half to the upper half
        return vec[:half] if order % 2 else vec[half:]

    def swap(self, v: np.ndarray) -> np.ndarray:
        return v[self.swap_index]

    def apply(self, v: np.ndarray, steps: int = 1) -> np.ndarray:
        """W^steps v for a vector or a matrix of column vectors."""
        for _ in range(steps):
            v = self.swap(2 * (self._t @ (self._tdag @ v)) - v)
        return v

    @cached_property
    def W(self) -> np.ndarray:
        if self.dim > DENSE_WALK_LIMIT:
            raise MemoryError(f"dense walk of dimension {self.dim} exceeds {DENSE_WALK_LIMIT}")
        return self.apply(np.eye(self.dim, dtype=complex))

    @cached_property
    def dilation(self) -> np.ndarray:
        """Unitary U_T on 2^m x N whose first N columns embed T.

        Rows are ordered (ancilla, index) with the walk space occupying the
        first (2N)^2 basis states; the remaining ancilla patterns pad the
        register to 2^m x N.
        """
        total = (2 ** self.ancilla_qubits) * self.N
        if total > 2 * DENSE_WALK_LIMIT:
            raise MemoryError(f"dense dilation of dimension {total} is too large")
        cols = np.zeros((total, self.N), dtype=complex)
        cols[: self.dim] = self.T
        return complete_unitary(cols)

    @property
    def term_ancilla_dim(self) -> int:
        """Ancilla dimension of :meth:`chebyshev_dilation` over the index register."""
        return (2 ** self.ancilla_qubits) * self.N // self.instance.n

    def chebyshev_dilation(self, order: int) -> np.ndarray:
        """Unitary on (ancilla, index) whose ancilla-zero block is T_order(A/d)."""
        u = self.dilation
        body = u.copy()
        body[: self.dim] = self.apply(u[: self.dim], order)
        out = u.conj().T @ body
        if self.embedded:
            # the embedding bit is the lowest ancilla bit: start it in |1>,
            # and return it to |0> when an even order leaves it at |1>
            flip = np.kron(np.eye(out.shape[0] // (2 * self.instance.n)),
                           np.kron([[0.0, 1.0], [1.0, 0.0]], np.eye(self.instance.n)))
            out = out @ flip
            if order % 2 == 0:
                out = flip @ out
        return out

    def moments(self, psi: np.ndarray, max_order: int) -> np.ndarray:
        """Rows T_n(A/d) psi for n = 0..max_order from a single walk pass."""
        tdag = self._tdag
        v = self._t @ self.lift(psi)
        out = np.empty((max_order + 1,) + np.shape(psi), dtype=complex)
        out[0] = self.lower(tdag @ v, 0)
        for n in range(1, max_order + 1):
            v = self.apply(v)
            out[n] = self.lower(tdag @ v, n)
        return out

    def check(self, tol: float = UNITARY_TOL) -> dict:
        """Deviations of T^dagger T = 1 and T^dagger S T = H."""
        t = self.T
        iso = float(np.max(np.abs(t.conj().T @ t - np.eye(self.N))))
        block = float(np.max(np.abs(t.conj().T @ self.swap(t) - self.H)))
        if iso > tol or block > tol:
            raise ArithmeticError(f"walk invariants violated: isometry {iso:.2e}, block {block:.2e}")
        return {"isometry": iso, "block": block}


def principal_sqrt(value: complex) -> complex:
    """Square root with the argument taken in (-pi, pi], ignoring the sign of zero."""
    value = complex(value)
    angle = np.angle(value)
    if angle <= -np.pi:
        angle = np.pi
    return complex(np.sqrt(abs(value)) * np.exp(0.5j * angle))


def walk_amplitude(j: int, k: int, value: complex) -> complex:
    """The root s_{jk} of conj(A_{jk}) placed in column j of T.

    Upper-triangle entries take conj(principal sqrt(A_{jk})); lower-triangle
    entries take principal sqrt(A_{kj}), so conj(s_{jk}) s_{kj} = A_{jk} for
    every off-diagonal pair, the branch cut included.
    """
    if j <= k:
        return np.conj(principal_sqrt(value))
    return principal_sqrt(np.conj(value))


def build_walk(instance: SparseHermitianInstance, oracle: EntryOracle | None = None,
               ledger: CostLedger | None = None) -> WalkOperator:
    """Assemble T column by column through the entry oracle."""
    walk_instance = instance
    if np.any(np.diag(instance.matrix).real < 0):
        walk_instance = zero_diagonal_embedding(instance)
        oracle = None
    oracle = oracle or EntryOracle(walk_instance)
    n, d = walk_instance.n, walk_instance.d
    side = 2 * n
    t = np.zeros((side * side, n), dtype=complex)
    norm = 1.0 / np.sqrt(d)
    for j in range(1, n + 1):
        base = (j - 1) * side
        for ell in range(1, d + 1):
            k = oracle.oracle_locate(j, ell, ledger)
            a = oracle.oracle_value(j, k, ledger)
            t[base + k - 1, j - 1] = norm * walk_amplitude(j, k, a)
            t[base + k - 1 + n, j - 1] = norm * np.sqrt(max(0.0, 1.0 - abs(a)))
    walk = WalkOperator(instance, t, walk_instance)
    walk.check()
    return walk


def walk_power_block_check(walk: WalkOperator, n: int) -> float:
    """Max deviation of W^n T|lam> from its two-dimensional Chebyshev form."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lam, vecs = np.linalg.eigh(walk.H)
    x0 = walk.T @ vecs
    sx0 = walk.swap(x0)
    sin = np.sqrt(np.clip(1.0 - lam ** 2, 0.0, None))
    perp = np.zeros_like(x0)
    inner = sin > 1e-12
    # |perp> = (S T|lam> - lam T|lam>) / sqrt(1 - lam^2); zero when |lam| = 1
    perp[:, inner] = (sx0[:, inner] - lam[inner] * x0[:, inner]) / sin[inner]
    got = walk.apply(x0, n)
    expected = chebyshev_t(n, lam) * x0 + sin * chebyshev_u(n - 1, lam) * perp
    return float(np.max(np.linalg.norm(got - expected, axis=0)))


def apply_chebyshev(walk: WalkOperator, n: int, psi: QuantumState | np.ndarray,
                    ledger: CostLedger | None = None, *, full: bool = False):
    """Embed psi with T, apply W^n, un-embed.

    Returns the ancilla-zero block ``T_n(A/d) psi`` as a :class:`ProjectedState`
    on the index register, or with ``full=True`` the whole state on
    (ancilla, index) built from the explicit dilation.
    """
    if n < 0:
        raise ValueError("order must be >= 0")
    vec = psi.amps if isinstance(psi, QuantumState) else np.asarray(psi, dtype=complex)
    if ledger is not None:
        ledger.charge_walk(n)
        ledger.charge_isometry(2)
    if full:
        anc = walk.term_ancilla_dim
        start = np.zeros(anc * walk.instance.n, dtype=complex)
        start[: walk.instance.n] = vec
        out = walk.chebyshev_dilation(n) @ start
        return QuantumState([("Q", anc), ("I", walk.instance.n)], out)
    block = walk._tdag @ walk.apply(walk._t @ walk.lift(vec), n)
    return ProjectedState((("I", walk.instance.n),), walk.lower(block, n))
