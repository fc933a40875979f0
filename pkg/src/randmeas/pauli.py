"""Exact algebra on N-qubit Pauli strings.

Strings are encoded symplectically as a pair of bitmasks (x_mask, z_mask):
bit q of x_mask is set when the letter on qubit q is X or Y, bit q of z_mask
when it is Z or Y.  A phase exponent tracks the coefficient, restricted to
{+1, +i, -1, -i}, so products and commutators are exact integer arithmetic
in O(1) word operations.

Qubit 0 is the leftmost letter in the string form ("XIZY" puts X on qubit 0)
and the least significant bit of every mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import ConfigError, SizeCapError

MAX_DENSE_QUBITS = 12

_LETTERS = "IXYZ"
# (x, z) bit pair per letter
_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_LETTER = {v: k for k, v in _LETTER_BITS.items()}

_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

_PHASES = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)


def _popcount(x: int) -> int:
    return x.bit_count()


@dataclass(frozen=True)
class PauliString:
    """Signed N-qubit Pauli operator, immutable and hashable.

    ``phase_pow`` is the exponent k in coeff = i**k relative to the Hermitian
    letter string, so coeff is one of {1, i, -1, -i}.
    """

    n_qubits: int
    x_mask: int
    z_mask: int
    phase_pow: int = 0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ConfigError("PauliString needs at least one qubit")
        full = (1 << self.n_qubits) - 1
        if self.x_mask & ~full or self.z_mask & ~full:
            raise ConfigError("mask bits set beyond n_qubits")
        object.__setattr__(self, "phase_pow", self.phase_pow % 4)

    # -- constructors -------------------------------------------------

    @classmethod
    def from_string(cls, s: str, n_qubits: Optional[int] = None) -> "PauliString":
        """Parse '±XIZY' (sign optional, defaults +; qubit 0 leftmost)."""
        s = s.strip()
        phase = 0
        if s[:1] in "+-":
            phase = 2 if s[0] == "-" else 0
            s = s[1:]
        if not s or any(c not in _LETTERS for c in s):
            raise ConfigError(f"invalid Pauli string {s!r}")
        if n_qubits is not None and n_qubits != len(s):
            raise ConfigError("string length does not match n_qubits")
        x = z = 0
        for q, c in enumerate(s):
            bx, bz = _LETTER_BITS[c]
            x |= bx << q
            z |= bz << q
        return cls(len(s), x, z, phase)

    @classmethod
    def from_letters(cls, n_qubits: int, sites: Iterable[int], letters: str,
                     sign: int = 1) -> "PauliString":
        """Build from non-identity (site, letter) pairs; sign is +1 or -1."""
        x = z = 0
        for q, c in zip(sites, letters):
            if not 0 <= q < n_qubits:
                raise ConfigError(f"site {q} outside 0..{n_qubits - 1}")
            bx, bz = _LETTER_BITS[c]
            if (x | z) >> q & 1:
                raise ConfigError(f"duplicate site {q}")
            x |= bx << q
            z |= bz << q
        return cls(n_qubits, x, z, 0 if sign > 0 else 2)

    @classmethod
    def identity(cls, n_qubits: int) -> "PauliString":
        return cls(n_qubits, 0, 0, 0)

    # -- basic queries ------------------------------------------------

    @property
    def coeff(self) -> complex:
        return _PHASES[self.phase_pow]

    def letter(self, q: int) -> str:
        return _BITS_LETTER[(self.x_mask >> q & 1, self.z_mask >> q & 1)]

    def letters(self) -> str:
        return "".join(self.letter(q) for q in range(self.n_qubits))

    @property
    def support(self) -> tuple[int, ...]:
        m = self.x_mask | self.z_mask
        return tuple(q for q in range(self.n_qubits) if m >> q & 1)

    def is_identity(self) -> bool:
        return self.x_mask == 0 and self.z_mask == 0

    def is_hermitian(self) -> bool:
        return self.phase_pow % 2 == 0

    def __str__(self) -> str:
        if self.phase_pow % 2:
            raise ConfigError("text form only defined for ±1 coefficients")
        return ("-" if self.phase_pow == 2 else "+") + self.letters()

    # -- algebra ------------------------------------------------------

    def weight(self) -> int:
        """Number of non-identity tensor factors."""
        return _popcount(self.x_mask | self.z_mask)

    def _y_count(self) -> int:
        return _popcount(self.x_mask & self.z_mask)

    def multiply(self, other: "PauliString") -> "PauliString":
        """Exact product self @ other with the phase tracked mod 4."""
        if self.n_qubits != other.n_qubits:
            raise ConfigError("qubit counts differ")
        # In X^x Z^z normal form the only phase source is commuting Z past X.
        k1 = self.phase_pow + self._y_count()
        k2 = other.phase_pow + other._y_count()
        k = k1 + k2 + 2 * _popcount(self.z_mask & other.x_mask)
        x = self.x_mask ^ other.x_mask
        z = self.z_mask ^ other.z_mask
        y_out = _popcount(x & z)
        return PauliString(self.n_qubits, x, z, (k - y_out) % 4)

    def __matmul__(self, other: "PauliString") -> "PauliString":
        return self.multiply(other)

    def commutes_with(self, other: "PauliString") -> bool:
        """True iff the symplectic product has even parity."""
        if self.n_qubits != other.n_qubits:
            raise ConfigError("qubit counts differ")
        s = _popcount(self.x_mask & other.z_mask) + _popcount(self.z_mask & other.x_mask)
        return s % 2 == 0

    def negate(self) -> "PauliString":
        return PauliString(self.n_qubits, self.x_mask, self.z_mask,
                           (self.phase_pow + 2) % 4)

    # -- dense materialization ----------------------------------------

    def to_matrix(self) -> np.ndarray:
        """Dense 2^N x 2^N matrix; qubit 0 is the least significant index bit."""
        if self.n_qubits > MAX_DENSE_QUBITS:
            raise SizeCapError(
                f"dense Pauli limited to {MAX_DENSE_QUBITS} qubits, got {self.n_qubits}"
            )
        mats = [_MATS[self.letter(q)] for q in range(self.n_qubits)]
        # qubit 0 = LSB means it is the rightmost Kronecker factor
        out = reduce(np.kron, reversed(mats))
        return self.coeff * out


@dataclass(frozen=True)
class BasisString:
    """Per-qubit measurement basis labels, each one of X, Y, Z."""

    letters: tuple[str, ...]

    def __post_init__(self):
        if not self.letters or any(c not in "XYZ" for c in self.letters):
            raise ConfigError("basis labels must be X, Y or Z")

    @classmethod
    def from_string(cls, s: str) -> "BasisString":
        return cls(tuple(s))

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    def __str__(self) -> str:
        return "".join(self.letters)

    def __iter__(self) -> Iterator[str]:
        return iter(self.letters)


def weight(p: PauliString) -> int:
    return p.weight()


def multiply(a: PauliString, b: PauliString) -> PauliString:
    return a.multiply(b)


def is_compatible(p: PauliString, b: BasisString) -> bool:
    """A Pauli matches a basis string iff every non-identity letter agrees."""
    if p.n_qubits != b.n_qubits:
        raise ConfigError("qubit counts differ")
    for q in p.support:
        if p.letter(q) != b.letters[q]:
            return False
    return True


def commutator(a: PauliString, b: PauliString) -> Optional[PauliString]:
    """i[a, b]/2 as a Pauli string, or None when a and b commute.

    For anticommuting Paulis [a, b] = 2ab, so the result is i*a*b, which is
    Hermitian with a ±1 coefficient whenever a and b are.
    """
    if a.commutes_with(b):
        return None
    c = a.multiply(b)
    return PauliString(c.n_qubits, c.x_mask, c.z_mask, (c.phase_pow + 1) % 4)


def eigenvalue_on_bitstring(p: PauliString, b: BasisString, bits: int) -> int:
    """Outcome sign of p for one measured bitstring (bit q of ``bits`` = qubit q).

    Requires compatibility; the value is the product of (-1)^{s_q} over the
    support of p.  Basis signs are not part of this kernel and are applied by
    the caller where settings carry them.
    """
    if not is_compatible(p, b):
        raise ConfigError(f"{p.letters()} incompatible with basis {b}")
    mask = p.x_mask | p.z_mask
    return -1 if _popcount(bits & mask) % 2 else 1


def all_pauli_strings(n_qubits: int, max_weight: Optional[int] = None,
                      include_identity: bool = False) -> list[PauliString]:
    """Enumerate Pauli strings up to a weight cap, in canonical X<Y<Z order."""
    out = []
    if include_identity:
        out.append(PauliString.identity(n_qubits))
    import itertools

    cap = n_qubits if max_weight is None else max_weight
    for w in range(1, cap + 1):
        for sites in itertools.combinations(range(n_qubits), w):
            for letters in itertools.product("XYZ", repeat=w):
                out.append(PauliString.from_letters(n_qubits, sites, "".join(letters)))
    return out
