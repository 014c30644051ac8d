"""Problem instances, emulated entry oracles and right-hand-side preparation.

Indices handed to and returned by the oracle functions are 1-based, matching
the ``[N] = {1, ..., N}`` labelling used for rows and columns; every array in
this package is still indexed from 0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ledger import CostLedger
from .state import QuantumState

SPECTRAL_TOL = 1e-9
HERMITIAN_TOL = 1e-12
# eigenvalues below this magnitude are treated as exact zeros of a dilation
SINGULAR_TOL = 1e-10
MAX_GENERATED_DIM = 64


class InstanceError(ValueError):
    """An instance violates one of the loader invariants."""


@dataclass(frozen=True)
class Dilation:
    """Bookkeeping for a Hermitian dilation of a rectangular system ``M x = b``.

    The dilated matrix is ``[[0, M], [M^dagger, 0]] / scale`` and the solution
    of the original system sits in the trailing ``cols`` entries.
    """

    rows: int
    cols: int
    scale: float
    invertible: bool

    def extract(self, solution: np.ndarray) -> np.ndarray:
        """Map a solution of the dilated system back to ``x``."""
        return np.asarray(solution)[self.rows:] / self.scale


@dataclass(frozen=True, eq=False)
class SparseHermitianInstance:
    """A d-sparse Hermitian matrix with unit norm, a condition bound and a rhs.

    Construction validates every invariant and caches the eigendecomposition,
    which serves as ground truth elsewhere.
    """

    n: int
    d: int
    kappa: float
    matrix: np.ndarray
    b: np.ndarray
    allow_singular: bool = False
    dilation: Dilation | None = None
    eigenvalues: np.ndarray = field(init=False, repr=False)
    eigenvectors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = np.array(self.matrix, dtype=complex)
        b = np.array(self.b, dtype=complex).reshape(-1)
        if a.shape != (self.n, self.n):
            raise InstanceError(f"matrix has shape {a.shape}, expected ({self.n}, {self.n})")
        if b.size != self.n:
            raise InstanceError(f"b has length {b.size}, expected {self.n}")
        if self.d < 1 or self.d > self.n:
            raise InstanceError(f"sparsity d={self.d} must lie in [1, n={self.n}]")
        if self.kappa < 1:
            raise InstanceError(f"kappa={self.kappa} must be >= 1")
        if not np.linalg.norm(b) > 0:
            raise InstanceError("b is the zero vector")
        _check_hermitian(a)
        _check_sparsity(a, self.d)
        evals, evecs = np.linalg.eigh(a)
        _check_spectrum(evals, self.kappa, self.allow_singular)
        a.setflags(write=False)
        b.setflags(write=False)
        evals.setflags(write=False)
        evecs.setflags(write=False)
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "eigenvalues", evals)
        object.__setattr__(self, "eigenvectors", evecs)

    @classmethod
    def from_entries(cls, n, d, kappa, entries, b, **kwargs) -> "SparseHermitianInstance":
        """Build from 0-based ``(row, col, value)`` triples."""
        a = np.zeros((n, n), dtype=complex)
        seen = set()
        for row, col, value in entries:
            row, col = int(row), int(col)
            if not (0 <= row < n and 0 <= col < n):
                raise InstanceError(f"entry ({row},{col}) out of range for n={n}")
            if (row, col) in seen:
                raise InstanceError(f"duplicate entry ({row},{col})")
            seen.add((row, col))
            a[row, col] = value
        # an absent mirror entry is an explicit zero and must be caught
        for row, col in seen:
            if (col, row) not in seen and a[row, col] != 0:
                raise InstanceError(f"Hermiticity violation at ({row},{col}): mirror entry missing")
        return cls(n, d, kappa, a, np.asarray(b, dtype=complex), **kwargs)

    # derived data -----------------------------------------------------
    @property
    def b_normalized(self) -> np.ndarray:
        return self.b / np.linalg.norm(self.b)

    @property
    def invertible(self) -> bool:
        return bool(np.min(np.abs(self.eigenvalues)) > SINGULAR_TOL)

    def entries(self) -> list[tuple[int, int, complex]]:
        """Nonzero entries as 0-based ``(row, col, value)`` triples."""
        rows, cols = np.nonzero(self.matrix)
        return [(int(r), int(c), complex(self.matrix[r, c])) for r, c in zip(rows, cols)]

    def column_support(self, col: int) -> np.ndarray:
        """0-based rows holding nonzeros of column ``col`` (0-based)."""
        return np.flatnonzero(self.matrix[:, col])

    def apply_function(self, func, vector: np.ndarray) -> np.ndarray:
        """Return ``func(A) @ vector`` through the cached eigendecomposition."""
        v = self.eigenvectors
        return v @ (func(self.eigenvalues) * (v.conj().T @ vector))

    def solution(self) -> np.ndarray:
        """Normalized ``A^{-1} b`` (pseudo-inverse on singular instances)."""
        evals = self.eigenvalues
        coeffs = self.eigenvectors.conj().T @ self.b_normalized
        inv = np.zeros_like(evals)
        mask = np.abs(evals) > SINGULAR_TOL
        inv[mask] = 1.0 / evals[mask]
        x = self.eigenvectors @ (inv * coeffs)
        return x / np.linalg.norm(x)

    def eigen_coefficients(self) -> np.ndarray:
        """Coefficients of the normalized b in the eigenbasis."""
        return self.eigenvectors.conj().T @ self.b_normalized

    # serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "kappa": float(self.kappa),
            "entries": [[r, c, v.real, v.imag] for r, c, v in self.entries()],
            "b": [[float(z.real), float(z.imag)] for z in self.b],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


def _check_hermitian(a: np.ndarray) -> None:
    diff = np.abs(a - a.conj().T)
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(a.T)))
    bad = np.argwhere(diff > HERMITIAN_TOL * scale)
    if bad.size:
        # report the upper-triangle member of the first offending pair
        r, c = sorted(map(tuple, bad))[0]
        r, c = min(r, c), max(r, c)
        raise InstanceError(
            f"Hermiticity violation at ({r},{c}): A[{r},{c}]={a[r, c]!r}, A[{c},{r}]={a[c, r]!r}"
        )


def _check_sparsity(a: np.ndarray, d: int) -> None:
    counts = np.count_nonzero(a, axis=0)
    worst = int(np.argmax(counts))
    if counts[worst] > d:
        raise InstanceError(f"sparsity violation: column {worst} has {counts[worst]} nonzeros > d={d}")
    counts = np.count_nonzero(a, axis=1)
    worst = int(np.argmax(counts))
    if counts[worst] > d:
        raise InstanceError(f"sparsity violation: row {worst} has {counts[worst]} nonzeros > d={d}")


def _check_spectrum(evals: np.ndarray, kappa: float, allow_singular: bool) -> None:
    mags = np.abs(evals)
    top = mags.max()
    if abs(top - 1.0) > SPECTRAL_TOL:
        raise InstanceError(f"spectral norm {top!r} differs from 1 by more than {SPECTRAL_TOL}")
    if allow_singular:
        mags = mags[mags > SINGULAR_TOL]
    low = int(np.argmin(mags))
    if mags[low] < 1.0 / kappa - SPECTRAL_TOL:
        raise InstanceError(f"eigenvalue of magnitude {mags[low]!r} below 1/kappa = {1.0 / kappa!r}")


def instance_from_dict(data: dict, **kwargs) -> SparseHermitianInstance:
    try:
        n, d, kappa = int(data["n"]), int(data["d"]), float(data["kappa"])
        entries = []
        for item in data["entries"]:
            # three-element rows carry a real value
            if len(item) == 3:
                row, col, re = item
                im = 0.0
            else:
                row, col, re, im = item
            entries.append((int(row), int(col), complex(re, im)))
        b = []
        for item in data["b"]:
            b.append(complex(*item) if isinstance(item, (list, tuple)) else complex(item))
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError(f"malformed instance: {exc}") from exc
    return SparseHermitianInstance.from_entries(n, d, kappa, entries, b, **kwargs)


def load_instance(path: str | Path, **kwargs) -> SparseHermitianInstance:
    """Load and validate an instance file."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"cannot parse {path}: {exc}") from exc
    return instance_from_dict(data, **kwargs)


def hermitian_dilation(m: np.ndarray, b: np.ndarray) -> SparseHermitianInstance:
    """Embed ``M x = b`` for arbitrary ``M`` into a unit-norm Hermitian system."""
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    b = np.asarray(b, dtype=complex).reshape(-1)
    rows, cols = m.shape
    if b.size != rows:
        raise InstanceError(f"b has length {b.size}, M has {rows} rows")
    if not np.any(m):
        raise InstanceError("M is the zero matrix")
    sv = np.linalg.svd(m, compute_uv=False)
    scale = float(sv[0])
    nonzero = sv[sv > SINGULAR_TOL * scale]
    invertible = rows == cols and nonzero.size == rows
    size = rows + cols
    dil = np.zeros((size, size), dtype=complex)
    dil[:rows, rows:] = m / scale
    dil[rows:, :rows] = m.conj().T / scale
    d = int(max(np.count_nonzero(dil, axis=0).max(), np.count_nonzero(dil, axis=1).max()))
    kappa = float(scale / nonzero[-1])
    rhs = np.concatenate([b, np.zeros(cols, dtype=complex)])
    return SparseHermitianInstance(
        size, d, kappa, dil, rhs,
        allow_singular=not invertible,
        dilation=Dilation(rows, cols, scale, invertible),
    )


class EntryOracle:
    """Emulated sparse-access oracle with a padded, invertible slot map.

    Column ``j`` lists its true nonzeros in ascending row order, then the
    smallest unused rows until ``d`` slots are filled.
    """

    def __init__(self, instance: SparseHermitianInstance, ledger: CostLedger | None = None):
        self.instance = instance
        self.ledger = ledger
        n, d = instance.n, instance.d
        slots = np.empty((n, d), dtype=int)
        for col in range(n):
            support = list(instance.column_support(col))
            used = set(support)
            filler = (r for r in range(n) if r not in used)
            while len(support) < d:
                support.append(next(filler))
            slots[col] = support
        slots.setflags(write=False)
        self._slots = slots
        self._inverse = {(col, int(row)): ell for col in range(n) for ell, row in enumerate(slots[col])}

    @property
    def slots(self) -> np.ndarray:
        """0-based ``slots[col, ell]`` table."""
        return self._slots

    def _charge(self, ledger):
        ledger = ledger if ledger is not None else self.ledger
        if ledger is not None:
            ledger.pa_queries += 1

    def oracle_locate(self, j: int, ell: int, ledger: CostLedger | None = None) -> int:
        """Row index (1-based) of slot ``ell`` in column ``j``."""
        n, d = self.instance.n, self.instance.d
        if not (1 <= j <= n and 1 <= ell <= d):
            raise IndexError(f"(j={j}, ell={ell}) outside [1,{n}] x [1,{d}]")
        self._charge(ledger)
        return int(self._slots[j - 1, ell - 1]) + 1

    def oracle_value(self, j: int, k: int, ledger: CostLedger | None = None) -> complex:
        """Matrix entry ``A_{jk}`` (1-based), zero when absent."""
        n = self.instance.n
        if not (1 <= j <= n and 1 <= k <= n):
            raise IndexError(f"(j={j}, k={k}) outside [1,{n}]^2")
        self._charge(ledger)
        return complex(self.instance.matrix[j - 1, k - 1])

    def slot_of(self, j: int, row: int) -> int:
        """Inverse of :meth:`oracle_locate`: slot (1-based) holding ``row`` in column ``j``."""
        try:
            return self._inverse[(j - 1, row - 1)] + 1
        except KeyError:
            raise KeyError(f"row {row} is not a slot of column {j}") from None

    def reconstruct(self, ledger: CostLedger | None = None) -> np.ndarray:
        """Rebuild the matrix purely through oracle calls."""
        n, d = self.instance.n, self.instance.d
        a = np.zeros((n, n), dtype=complex)
        for j in range(1, n + 1):
            for ell in range(1, d + 1):
                k = self.oracle_locate(j, ell, ledger)
                a[k - 1, j - 1] = self.oracle_value(k, j, ledger)
        return a


def prepare_b(instance: SparseHermitianInstance, ledger: CostLedger | None = None) -> QuantumState:
    """The normalized right-hand side on the index register ``I``."""
    if ledger is not None:
        ledger.pb_uses += 1
    return QuantumState.from_vector("I", instance.b_normalized)


def _largest_power_of_two_dividing(n: int, cap: int) -> int:
    size = 1
    while size * 2 <= cap and n % (size * 2) == 0:
        size *= 2
    return size


def _haar_unitary(rng: np.random.Generator, size: int) -> np.ndarray:
    z = (rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def generate_random_instance(n: int, d: int, kappa: float, seed: int, *, max_tries: int = 20) -> SparseHermitianInstance:
    """Random d-sparse Hermitian instance whose spectrum spans both ends of D_kappa.

    Built from Haar-conjugated diagonal blocks of size at most ``d`` followed
    by a random symmetric permutation; one eigenvalue sits at 1 and another at
    +-1/kappa.
    """
    if n > MAX_GENERATED_DIM:
        raise ValueError(f"n={n} exceeds the generator limit {MAX_GENERATED_DIM}")
    if not 1 <= d <= n:
        raise ValueError(f"d={d} must lie in [1, n={n}]")
    if kappa < 1:
        raise ValueError(f"kappa={kappa} must be >= 1")
    rng = np.random.default_rng(seed)
    block = _largest_power_of_two_dividing(n, d) if n > 1 else 1
    last_error = None
    for _ in range(max_tries):
        mags = rng.uniform(1.0 / kappa, 1.0, size=n)
        mags[0] = 1.0
        if n > 1:
            mags[1] = 1.0 / kappa
        signs = rng.choice([-1.0, 1.0], size=n)
        signs[0] = 1.0
        evals = rng.permutation(mags * signs)
        a = np.zeros((n, n), dtype=complex)
        for start in range(0, n, block):
            size = min(block, n - start)
            u = _haar_unitary(rng, size)
            a[start:start + size, start:start + size] = (u * evals[start:start + size]) @ u.conj().T
        perm = rng.permutation(n)
        a = a[np.ix_(perm, perm)]
        a = (a + a.conj().T) / 2
        a[np.abs(a) < 1e-15] = 0.0
        b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        b /= np.linalg.norm(b)
        try:
            return SparseHermitianInstance(n, d, float(kappa), a, b)
        except InstanceError as exc:
            last_error = exc
    raise InstanceError(f"generation failed after {max_tries} attempts: {last_error}")
