"""Hamiltonian recovery from a steady state via the commutator-correlation matrix.

For a steady state rho of H = sum_m c_m W_m, the matrix
K_lm = i tr(rho [W_l, W_m]) annihilates the coupling vector c, so c is
recovered as the singular vector of the smallest singular value of K.
Every entry reduces to a single Pauli expectation because i[W_l, W_m]/2 is
itself a signed Pauli whenever the terms anticommute.

Identifiability caveats, all surfaced through the spectral-gap flag:

* K is antisymmetric, so its rank is even; a basis of even size forces a
  kernel of dimension >= 2 and the true couplings cannot be isolated.  Use
  an odd number of terms.
* For a pure steady state, every operator G in the ansatz span with
  G|psi> ∝ |psi> joins the kernel; this space is generically of dimension
  max(0, span - 2(2^N - 1)), so small registers need small bases.  Full-rank
  steady states (e.g. Gibbs) behave much better.
* Time-reversal-invariant H with a real steady state zeroes every K entry
  between two even-Y or two odd-Y Pauli terms; recovery then needs a basis
  whose odd-Y probe count is exactly the even-Y count minus one (the
  ``balanced`` chain family).
* Integrable chains carry quasi-local conserved quantities that sit in the
  numerical near-kernel no matter the basis; their couplings are only
  recoverable by exact-precision providers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .dataset import MeasurementDataset
from .errors import ConfigError, NoCompatibleSettingsError
from .pauli import PauliString, commutator
from .sim import State, oracle_expectation


@dataclass(frozen=True)
class AnsatzBasis:
    """Ordered candidate terms W_l, with their locality bound and geometry tag."""

    terms: tuple[PauliString, ...]
    locality: int
    geometry: str = "custom"

    def __post_init__(self):
        if not self.terms:
            raise ConfigError("empty ansatz")
        n = self.terms[0].n_qubits
        seen = set()
        for p in self.terms:
            if p.n_qubits != n:
                raise ConfigError("ansatz terms on different register sizes")
            if p.is_identity():
                raise ConfigError("identity cannot be an ansatz term")
            if not p.is_hermitian() or p.phase_pow != 0:
                raise ConfigError("ansatz terms must have coefficient +1")
            if p.weight() > self.locality:
                raise ConfigError(f"term {p.letters()} exceeds locality bound")
            key = (p.x_mask, p.z_mask)
            if key in seen:
                raise ConfigError(f"duplicate ansatz term {p.letters()}")
            seen.add(key)

    @property
    def n_qubits(self) -> int:
        return self.terms[0].n_qubits

    def __len__(self) -> int:
        return len(self.terms)


def chain_ansatz(n: int, locality: int = 2, reach: int = 1,
                 family: str = "full") -> AnsatzBasis:
    """Candidate terms for a 1D chain.

    ``full`` lists every weight-<=locality string whose support fits inside a
    window of ``reach``+1 consecutive sites.  ``balanced`` is the
    time-reversal-aware family for Ising-type chains: all single-site terms
    plus the ZZ, YZ, ZY bonds, which has one more even-Y than odd-Y term and
    odd total size for every n.
    """
    if family == "balanced":
        if locality < 2 or reach < 1:
            raise ConfigError("balanced family needs locality and reach >= 2, 1")
        terms = [PauliString.from_letters(n, (i,), a)
                 for i in range(n) for a in "XYZ"]
        for i in range(n - 1):
            for pair in ("ZZ", "YZ", "ZY"):
                terms.append(PauliString.from_letters(n, (i, i + 1), pair))
        return AnsatzBasis(tuple(terms), locality, f"chain-balanced(n={n})")
    if family != "full":
        raise ConfigError(f"unknown ansatz family {family!r}")
    terms = []
    seen = set()
    for start in range(n):
        window = [q for q in range(start, min(start + reach + 1, n))]
        for w in range(1, min(locality, len(window)) + 1):
            for sites in itertools.combinations(window, w):
                for letters in itertools.product("XYZ", repeat=w):
                    p = PauliString.from_letters(n, sites, "".join(letters))
                    key = (p.x_mask, p.z_mask)
                    if key not in seen:
                        seen.add(key)
                        terms.append(p)
    terms.sort(key=lambda p: (p.weight(), p.support, p.letters()))
    return AnsatzBasis(tuple(terms), locality, f"chain(n={n},r={reach})")


ExpectationProvider = Callable[[PauliString], float]


def exact_provider(state: State) -> ExpectationProvider:
    """Expectation provider backed by the exact simulator."""

    def provide(p: PauliString) -> float:
        return oracle_expectation(state, p)

    return provide


def shadow_provider(ds: MeasurementDataset) -> ExpectationProvider:
    """Expectation provider backed by randomized-measurement data."""
    from .shadows import predict_pauli

    def provide(p: PauliString) -> float:
        return predict_pauli(ds, p).value

    return provide


def build_K(basis: AnsatzBasis, expect: ExpectationProvider
            ) -> tuple[np.ndarray, list[tuple[int, int, str]]]:
    """Commutator-correlation matrix K_lm = i tr(rho [W_l, W_m]).

    Each nonzero entry equals 2 x the expectation of the signed Pauli
    i[W_l, W_m]/2; expectations are cached across entries since distinct
    pairs often share a commutator.  Returns (K, failures), where failures
    lists entries whose provider raised a no-data error (left at zero).
    """
    nb = len(basis)
    k = np.zeros((nb, nb))
    cache: dict[tuple[int, int, int], Optional[float]] = {}
    failures: list[tuple[int, int, str]] = []
    for l in range(nb):
        for m in range(l + 1, nb):
            c = commutator(basis.terms[l], basis.terms[m])
            if c is None:
                continue
            key = (c.x_mask, c.z_mask, c.phase_pow)
            if key not in cache:
                try:
                    cache[key] = expect(c)
                except NoCompatibleSettingsError:
                    cache[key] = None
            val = cache[key]
            if val is None:
                failures.append((l, m, c.letters()))
                continue
            k[l, m] = 2.0 * val
            k[m, l] = -k[l, m]
    return k, failures


@dataclass(frozen=True)
class KernelResult:
    """Recovered unit-norm coupling vector with conditioning diagnostics.

    ``gap`` is the ratio of the second-smallest to the smallest singular
    value of K; values below the threshold raise ``flagged`` because the
    kernel direction is then not meaningfully unique.  ``missing`` lists
    commutator Paulis the data could not estimate.
    """

    coefficients: np.ndarray
    gap: float
    flagged: bool
    missing: tuple[str, ...] = ()

    def cosine_to(self, reference: Sequence[float]) -> float:
        ref = np.asarray(reference, dtype=float)
        ref = ref / np.linalg.norm(ref)
        return float(abs(self.coefficients @ ref))


def recover(k: np.ndarray, gap_threshold: float = 10.0,
            missing: Sequence[str] = ()) -> KernelResult:
    """Smallest right-singular vector of K, sign-fixed, with gap diagnostics."""
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ConfigError("K must be square")
    if np.max(np.abs(k + k.T)) > 1e-9:
        raise ConfigError("K must be antisymmetric")
    _, s, vt = np.linalg.svd(k)
    c = vt[-1]
    pivot = int(np.argmax(np.abs(c)))
    if c[pivot] < 0:
        c = -c
    tiny = max(s[0], 1.0) * 1e-13
    if s[-1] < tiny:
        gap = float("inf") if s[-2] >= tiny else 1.0
    else:
        gap = float(s[-2] / s[-1])
    flagged = bool(gap < gap_threshold) or bool(missing)
    return KernelResult(coefficients=c, gap=gap, flagged=flagged,
                        missing=tuple(missing))


def learn_from_dataset(ds: MeasurementDataset, basis: AnsatzBasis,
                       gap_threshold: float = 10.0) -> KernelResult:
    """End to end: shadow-estimated K, then kernel extraction."""
    if basis.n_qubits != ds.n_qubits:
        raise ConfigError("ansatz and dataset sizes differ")
    k, failures = build_K(basis, shadow_provider(ds))
    return recover(k, gap_threshold, missing=[name for _, _, name in failures])


def true_coupling_vector(basis: AnsatzBasis, terms: dict[PauliString, float]
                         ) -> np.ndarray:
    """Reference vector of couplings in basis order, unit-normalized."""
    c = np.array([terms.get(p, 0.0) for p in basis.terms])
    norm = np.linalg.norm(c)
    if norm == 0:
        raise ConfigError("no Hamiltonian terms overlap the ansatz")
    return c / norm
