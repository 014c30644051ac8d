"""Register-structured state vectors.

A :class:`QuantumState` is a normalized amplitude vector over an ordered list
of named registers. Registers are stored by dimension rather than qubit count
so an index register of any size ``N`` can be represented; the first register
is the most significant one in the flat amplitude vector.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

NORM_TOL = 1e-10


def _as_registers(registers: Iterable[tuple[str, int]]) -> tuple[tuple[str, int], ...]:
    regs = tuple((str(name), int(dim)) for name, dim in registers)
    names = [name for name, _ in regs]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate register names in {names}")
    for name, dim in regs:
        if dim < 1:
            raise ValueError(f"register {name!r} has dimension {dim}")
    return regs


def complete_unitary(columns: np.ndarray) -> np.ndarray:
    """Return a unitary whose leading columns are ``columns``.

    ``columns`` must be orthonormal (n x k). The remaining n - k columns come
    from a QR factorization of ``[columns | I]``, so the completion is
    deterministic.
    """
    cols = np.asarray(columns, dtype=complex)
    if cols.ndim == 1:
        cols = cols[:, None]
    n, k = cols.shape
    gram = cols.conj().T @ cols
    if not np.allclose(gram, np.eye(k), atol=1e-10):
        raise ValueError("columns are not orthonormal")
    q, _ = np.linalg.qr(np.hstack([cols, np.eye(n, dtype=complex)]))
    q = q[:, :n].copy()
    q[:, :k] = cols
    return q


def qubits_for(dim: int) -> int:
    return int(np.ceil(np.log2(dim))) if dim > 1 else 0


class QuantumState:
    """Normalized amplitudes over named registers."""

    def __init__(self, registers: Iterable[tuple[str, int]], amps: np.ndarray, *, check: bool = True):
        self.registers = _as_registers(registers)
        amps = np.asarray(amps, dtype=complex).reshape(-1)
        if amps.size != int(np.prod(self.dims)):
            raise ValueError(f"amplitude vector of size {amps.size} does not match layout {self.registers}")
        if check:
            norm = np.linalg.norm(amps)
            if abs(norm - 1.0) > NORM_TOL:
                raise ValueError(f"state is not normalized (norm={norm!r})")
        self.amps = amps

    # layout -----------------------------------------------------------
    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.registers)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.registers)

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no register {name!r} in layout {self.names}") from None

    def dim(self, name: str) -> int:
        return self.dims[self.axis(name)]

    def qubits(self, name: str) -> int:
        return qubits_for(self.dim(name))

    @property
    def tensor(self) -> np.ndarray:
        return self.amps.reshape(self.dims)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def __repr__(self) -> str:
        layout = ", ".join(f"{n}:{d}" for n, d in self.registers)
        return f"QuantumState([{layout}])"

    # construction -----------------------------------------------------
    @classmethod
    def basis(cls, registers: Iterable[tuple[str, int]], values: Mapping[str, int] | None = None) -> "QuantumState":
        regs = _as_registers(registers)
        values = dict(values or {})
        tensor = np.zeros([d for _, d in regs], dtype=complex)
        tensor[tuple(values.get(name, 0) for name, _ in regs)] = 1.0
        return cls(regs, tensor)

    @classmethod
    def from_vector(cls, name: str, vector: np.ndarray) -> "QuantumState":
        vector = np.asarray(vector, dtype=complex)
        return cls([(name, vector.size)], vector)

    def tensor_with(self, other: "QuantumState", *, front: bool = True) -> "QuantumState":
        """Product state; ``other`` becomes the leading registers when ``front``."""
        if front:
            return QuantumState(other.registers + self.registers, np.kron(other.amps, self.amps))
        return QuantumState(self.registers + other.registers, np.kron(self.amps, other.amps))

    def with_ancillas(self, ancillas: Sequence[tuple[str, int]]) -> "QuantumState":
        """Prepend registers initialized to zero."""
        return self.tensor_with(QuantumState.basis(ancillas), front=True)

    def permuted(self, order: Sequence[str]) -> "QuantumState":
        axes = [self.axis(name) for name in order]
        if sorted(axes) != list(range(len(self.registers))):
            raise ValueError("order must list every register exactly once")
        regs = [self.registers[a] for a in axes]
        return QuantumState(regs, np.transpose(self.tensor, axes), check=False)

    # dynamics ---------------------------------------------------------
    def apply(self, op: np.ndarray, targets: str | Sequence[str], controls: Mapping[str, int] | None = None) -> "QuantumState":
        """Apply ``op`` to the joint space of ``targets`` (listed order).

        ``controls`` maps register names to the value they must hold for the
        operation to act; other branches are left untouched.
        """
        new = _apply(self.tensor, self.names, self.dims, op, targets, controls)
        return QuantumState(self.registers, new, check=False)

    def apply_permutation(self, perm: np.ndarray, targets: str | Sequence[str],
                          controls: Mapping[str, int] | None = None) -> "QuantumState":
        """Apply the basis permutation ``|i> -> |perm[i]>`` on ``targets``."""
        targets = [targets] if isinstance(targets, str) else list(targets)
        size = int(np.prod([self.dim(t) for t in targets]))
        perm = np.asarray(perm)
        if sorted(perm.tolist()) != list(range(size)):
            raise ValueError("not a permutation of the target basis")
        op = np.zeros((size, size))
        op[perm, np.arange(size)] = 1.0
        return self.apply(op, targets, controls)

    # measurement ------------------------------------------------------
    def project(self, values: Mapping[str, int]) -> "ProjectedState":
        """Project registers onto basis values; returns the remaining registers."""
        idx = [slice(None)] * len(self.registers)
        for name, value in values.items():
            idx[self.axis(name)] = value
        block = self.tensor[tuple(idx)]
        regs = [r for r in self.registers if r[0] not in values]
        return ProjectedState(tuple(regs), block.reshape(-1).copy())

    def probability(self, values: Mapping[str, int]) -> float:
        return self.project(values).probability

    def marginal(self, name: str) -> np.ndarray:
        axis = self.axis(name)
        probs = np.abs(self.tensor) ** 2
        others = tuple(a for a in range(len(self.registers)) if a != axis)
        return probs.sum(axis=others)


@dataclass(frozen=True)
class ProjectedState:
    """Unnormalized block left over after a projection; carries its norm."""

    registers: tuple[tuple[str, int], ...]
    amps: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    @property
    def probability(self) -> float:
        return float(np.vdot(self.amps, self.amps).real)

    def normalized(self) -> QuantumState:
        norm = self.norm
        if norm == 0.0:
            raise ZeroDivisionError("cannot normalize a zero block")
        return QuantumState(self.registers, self.amps / norm)

    def scaled(self, factor: complex) -> "ProjectedState":
        return ProjectedState(self.registers, self.amps * factor)


def _apply(tensor, names, dims, op, targets, controls):
    targets = [targets] if isinstance(targets, str) else list(targets)
    controls = dict(controls or {})
    axes = [names.index(t) for t in targets]
    if set(axes) & {names.index(c) for c in controls}:
        raise ValueError("a register cannot be both target and control")
    tdims = [dims[a] for a in axes]
    size = int(np.prod(tdims))
    op = np.asarray(op, dtype=complex)
    if op.shape != (size, size):
        raise ValueError(f"operator of shape {op.shape} does not act on registers {targets} (dim {size})")

    out = tensor.copy()
    idx = [slice(None)] * len(names)
    for name, value in controls.items():
        idx[names.index(name)] = value
    sub = out[tuple(idx)]
    # axes of the targets inside the controlled slice
    ctrl_axes = sorted(names.index(c) for c in controls)
    sub_axes = [a - sum(c < a for c in ctrl_axes) for a in axes]
    k = len(sub_axes)
    moved = np.moveaxis(sub, sub_axes, list(range(k)))
    shape = moved.shape
    flat = moved.reshape(size, -1)
    flat = op @ flat
    moved = flat.reshape(shape)
    out[tuple(idx)] = np.moveaxis(moved, list(range(k)), sub_axes)
    return out
