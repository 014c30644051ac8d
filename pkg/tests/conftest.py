import numpy as np
import pytest

from qlsp.problem import SparseHermitianInstance, generate_random_instance


def diagonal_instance(values, b, kappa=None, d=1):
    values = np.asarray(values, dtype=float)
    kappa = kappa if kappa is not None else 1 / np.min(np.abs(values))
    return SparseHermitianInstance(values.size, d, float(kappa), np.diag(values).astype(complex),
                                   np.asarray(b, dtype=complex))


@pytest.fixture
def identity2():
    return SparseHermitianInstance.from_entries(2, 1, 1.0, [(0, 0, 1), (1, 1, 1)], [1, 0])


@pytest.fixture
def pauli_x():
    return SparseHermitianInstance.from_entries(2, 1, 1.0, [(0, 1, 1), (1, 0, 1)], [1, 0])


@pytest.fixture
def diag_half():
    return diagonal_instance([1.0, 0.5], [1, 1])


@pytest.fixture(scope="session")
def random_instances():
    return [generate_random_instance(8, 2, 4.0, seed) for seed in range(4)]


def rng_state(rng, n):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
