"""Shared test helpers: an independent dense-matrix oracle.

Everything here is computed from explicit 2x2 matrices and Kronecker
products so package results can be cross-checked against a second,
independent computation path.  Qubit 0 is the least significant index bit,
matching the package convention.
"""

from functools import reduce

import numpy as np
import pytest

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI_MATS = {"I": I2, "X": SX, "Y": SY, "Z": SZ}


def kron_letters(letters: str) -> np.ndarray:
    """Dense matrix for a letter string with qubit 0 leftmost."""
    mats = [PAULI_MATS[c] for c in letters]
    return reduce(np.kron, reversed(mats))


def dense_ptrace(rho: np.ndarray, keep, n: int) -> np.ndarray:
    keep = sorted(keep)
    t = rho.reshape([2] * (2 * n))
    qubits = list(range(n))
    nn = n
    for q in sorted(set(range(n)) - set(keep), reverse=True):
        pos = qubits.index(q)
        ax = nn - 1 - pos
        t = np.trace(t, axis1=ax, axis2=ax + nn)
        qubits.pop(pos)
        nn -= 1
        t = t.reshape([2] * (2 * nn))
    d = 2 ** len(keep)
    return t.reshape(d, d)


def haar_unitary(rng: np.random.Generator, d: int = 2) -> np.ndarray:
    g = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(rng: np.random.Generator, n: int) -> np.ndarray:
    d = 2**n
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    m = g @ g.conj().T
    return m / np.trace(m).real


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
