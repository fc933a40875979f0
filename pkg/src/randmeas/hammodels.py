"""Named spin-chain Hamiltonians and their serializable specs."""

from __future__ import annotations

from typing import Optional, Sequence

from .errors import ConfigError
from .pauli import PauliString
from .sim import HamiltonianSpec


def _two_site(n: int, i: int, j: int, a: str, b: str) -> PauliString:
    return PauliString.from_letters(n, (i, j), a + b)


def _one_site(n: int, i: int, a: str) -> PauliString:
    return PauliString.from_letters(n, (i,), a)


def build_xy_hamiltonian(n: int, j: float, alpha: float) -> HamiltonianSpec:
    """Long-range XY chain: sum_{i<j} J/|i-j|^alpha (s+ s- + h.c.).

    The flip-flop term expands as (X_i X_j + Y_i Y_j)/2.
    """
    if n < 2:
        raise ConfigError("XY chain needs at least two sites")
    if alpha <= 0:
        raise ConfigError("power-law exponent must be positive")
    terms = []
    for i in range(n):
        for k in range(i + 1, n):
            c = j / abs(i - k) ** alpha / 2.0
            terms.append((c, _two_site(n, i, k, "X", "X")))
            terms.append((c, _two_site(n, i, k, "Y", "Y")))
    return HamiltonianSpec(n, tuple(terms))


def build_tfim_chain(n: int, j: float | Sequence[float],
                     h: float | Sequence[float]) -> HamiltonianSpec:
    """Transverse-field Ising chain: sum J_i Z_i Z_{i+1} + sum h_i X_i."""
    if n < 2:
        raise ConfigError("chain needs at least two sites")
    js = [float(j)] * (n - 1) if not isinstance(j, (list, tuple)) else [float(x) for x in j]
    hs = [float(h)] * n if not isinstance(h, (list, tuple)) else [float(x) for x in h]
    if len(js) != n - 1 or len(hs) != n:
        raise ConfigError("coupling lists have wrong length")
    terms = [(js[i], _two_site(n, i, i + 1, "Z", "Z")) for i in range(n - 1)]
    terms += [(hs[i], _one_site(n, i, "X")) for i in range(n)]
    return HamiltonianSpec(n, tuple(terms))


def build_ising_chain(n: int, j: float, hx: float, hz: float) -> HamiltonianSpec:
    """Ising chain with both transverse and longitudinal fields (nonintegrable)."""
    if n < 2:
        raise ConfigError("chain needs at least two sites")
    terms = [(j, _two_site(n, i, i + 1, "Z", "Z")) for i in range(n - 1)]
    terms += [(hx, _one_site(n, i, "X")) for i in range(n)]
    terms += [(hz, _one_site(n, i, "Z")) for i in range(n)]
    return HamiltonianSpec(n, tuple(terms))


def hamiltonian_from_spec(spec: dict) -> HamiltonianSpec:
    """Parse a Hamiltonian spec dict.

    Kinds: xy (n, J, alpha), tfim (n, J, h), ising (n, J, hx, hz),
    terms (n, terms: [[coeff, "±XIZY"], ...]).
    """
    kind = spec.get("kind")
    if kind == "xy":
        return build_xy_hamiltonian(int(spec["n"]), float(spec["J"]), float(spec["alpha"]))
    if kind == "tfim":
        return build_tfim_chain(int(spec["n"]), spec["J"], spec["h"])
    if kind == "ising":
        return build_ising_chain(int(spec["n"]), float(spec["J"]),
                                 float(spec["hx"]), float(spec["hz"]))
    if kind == "terms":
        n = int(spec["n"])
        terms = tuple(
            (float(c), PauliString.from_string(s, n)) for c, s in spec["terms"]
        )
        return HamiltonianSpec(n, terms)
    raise ConfigError(f"unknown Hamiltonian kind {kind!r}")


def hamiltonian_to_spec(h: HamiltonianSpec) -> dict:
    return {
        "kind": "terms",
        "n": h.n_qubits,
        "terms": [[c, str(p)] for c, p in h.terms],
    }
