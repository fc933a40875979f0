"""Dense exact simulator and oracle layer.

States use the convention that qubit q is bit q of the amplitude index
(least significant bit), matching the bit packing of measurement records.
All operations are pure functions; sampling takes an explicit seed.

Size caps are enforced as errors.  Pure states go to 20 qubits, density
matrices to 12, Heisenberg-picture operators to 10.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, SizeCapError
from .pauli import PauliString

MAX_PURE_QUBITS = 20
MAX_DENSITY_QUBITS = 12
MAX_HEISENBERG_QUBITS = 10

_ATOL_NORM = 1e-10
_ATOL_HERM = 1e-10
_ATOL_EIG = -1e-8


@dataclass(frozen=True)
class PureState:
    """Statevector on n qubits with unit L2 norm."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.n_qubits > MAX_PURE_QUBITS:
            raise SizeCapError(f"pure states capped at {MAX_PURE_QUBITS} qubits")
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (2**self.n_qubits,):
            raise ConfigError("amplitude vector has wrong length")
        if abs(np.linalg.norm(amps) - 1.0) > _ATOL_NORM:
            raise ConfigError("statevector is not normalized")
        object.__setattr__(self, "amplitudes", amps)

    def to_density(self) -> "DensityState":
        if self.n_qubits > MAX_DENSITY_QUBITS:
            raise SizeCapError(f"density matrices capped at {MAX_DENSITY_QUBITS} qubits")
        a = self.amplitudes
        return DensityState(self.n_qubits, np.outer(a, a.conj()))


@dataclass(frozen=True)
class DensityState:
    """Density matrix on n qubits: Hermitian, unit trace, PSD within 1e-8."""

    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        if self.n_qubits > MAX_DENSITY_QUBITS:
            raise SizeCapError(f"density matrices capped at {MAX_DENSITY_QUBITS} qubits")
        d = 2**self.n_qubits
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (d, d):
            raise ConfigError("density matrix has wrong shape")
        if np.max(np.abs(m - m.conj().T)) > _ATOL_HERM:
            raise ConfigError("density matrix is not Hermitian")
        if abs(np.trace(m).real - 1.0) > _ATOL_NORM:
            raise ConfigError("density matrix trace is not 1")
        if np.linalg.eigvalsh(m).min() < _ATOL_EIG:
            raise ConfigError("density matrix has a significantly negative eigenvalue")
        object.__setattr__(self, "matrix", m)


State = Union[PureState, DensityState]


@dataclass(frozen=True)
class HamiltonianSpec:
    """Real linear combination of Pauli strings on a fixed register."""

    n_qubits: int
    terms: tuple[tuple[float, PauliString], ...]

    def __post_init__(self):
        for coeff, p in self.terms:
            if p.n_qubits != self.n_qubits:
                raise ConfigError("Hamiltonian term on wrong register size")
            if not np.isfinite(coeff):
                raise ConfigError("non-finite Hamiltonian coefficient")
            if not p.is_hermitian():
                raise ConfigError("Hamiltonian terms must carry ±1 coefficients")

    def to_matrix(self) -> np.ndarray:
        d = 2**self.n_qubits
        out = np.zeros((d, d), dtype=complex)
        for coeff, p in self.terms:
            out += coeff * p.to_matrix()
        return out


# ----------------------------------------------------------------------
# low-level statevector / density helpers


def _axis(q: int, n: int) -> int:
    # qubit q is the least significant bit, i.e. the last reshape axis
    return n - 1 - q


def apply_single_qubit(psi: np.ndarray, u: np.ndarray, q: int, n: int) -> np.ndarray:
    t = psi.reshape([2] * n)
    ax = _axis(q, n)
    t = np.tensordot(u, t, axes=([1], [ax]))
    t = np.moveaxis(t, 0, ax)
    return t.reshape(-1)


def apply_single_qubit_dm(rho: np.ndarray, u: np.ndarray, q: int, n: int) -> np.ndarray:
    t = rho.reshape([2] * (2 * n))
    ax = _axis(q, n)
    t = np.tensordot(u, t, axes=([1], [ax]))
    t = np.moveaxis(t, 0, ax)
    t = np.tensordot(u.conj(), t, axes=([1], [n + ax]))
    t = np.moveaxis(t, 0, n + ax)
    d = 2**n
    return t.reshape(d, d)


def pauli_apply(p: PauliString, psi: np.ndarray) -> np.ndarray:
    """P|psi> in O(2^N) using the bitmask form."""
    n = p.n_qubits
    idx = np.arange(2**n, dtype=np.uint64)
    src = idx ^ np.uint64(p.x_mask)
    signs = 1.0 - 2.0 * (np.bitwise_count(src & np.uint64(p.z_mask)) & 1).astype(float)
    # exponent in the X^x Z^z normal form is phase_pow + #Y
    k = (p.phase_pow + (p.x_mask & p.z_mask).bit_count()) % 4
    return (1j**k) * signs * psi[src]


def pauli_expectation_pure(p: PauliString, psi: np.ndarray) -> float:
    val = np.vdot(psi, pauli_apply(p, psi))
    return float(val.real)


def pauli_expectation_dm(p: PauliString, rho: np.ndarray) -> float:
    n = p.n_qubits
    idx = np.arange(2**n, dtype=np.uint64)
    dst = idx ^ np.uint64(p.x_mask)
    signs = 1.0 - 2.0 * (np.bitwise_count(idx & np.uint64(p.z_mask)) & 1).astype(float)
    k = (p.phase_pow + (p.x_mask & p.z_mask).bit_count()) % 4
    vals = rho[idx.astype(np.intp), dst.astype(np.intp)]
    return float(((1j**k) * np.sum(signs * vals)).real)


def oracle_expectation(state: State, p: PauliString) -> float:
    """Exact tr(P rho) or <psi|P|psi>."""
    if p.n_qubits != state.n_qubits:
        raise ConfigError("operator and state sizes differ")
    if isinstance(state, PureState):
        return pauli_expectation_pure(p, state.amplitudes)
    return pauli_expectation_dm(p, state.matrix)


def partial_trace(state: State, keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix on ``keep`` (ascending qubit order)."""
    keep = sorted(set(keep))
    n = state.n_qubits
    if any(q < 0 or q >= n for q in keep):
        raise ConfigError("subsystem outside register")
    if not keep:
        raise ConfigError("empty subsystem")
    k = len(keep)
    if isinstance(state, PureState):
        drop = [q for q in range(n) if q not in keep]
        t = state.amplitudes.reshape([2] * n)
        perm = [_axis(q, n) for q in reversed(keep)] + [_axis(q, n) for q in drop]
        m = t.transpose(perm).reshape(2**k, -1)
        return m @ m.conj().T
    rho = state.matrix.reshape([2] * (2 * n))
    qubits = list(range(n))
    nn = n
    for q in sorted(set(range(n)) - set(keep), reverse=True):
        pos = qubits.index(q)
        ax = nn - 1 - pos
        rho = np.trace(rho, axis1=ax, axis2=ax + nn)
        qubits.pop(pos)
        nn -= 1
        rho = rho.reshape([2] * (2 * nn))
    d = 2**k
    return rho.reshape(d, d)


def reduced_state(state: State, keep: Sequence[int]) -> DensityState:
    return DensityState(len(set(keep)), partial_trace(state, keep))


# ----------------------------------------------------------------------
# state preparation


def _basis_state(n: int, bits: int) -> np.ndarray:
    v = np.zeros(2**n, dtype=complex)
    v[bits] = 1.0
    return v


def _bits_from_string(s: str) -> int:
    # character i of the string is qubit i
    return sum(1 << q for q, c in enumerate(s) if c == "1")


def prepare(spec: dict) -> State:
    """Build a named state from a serializable spec dict.

    Kinds: computational, neel, ghz, plus, product, dimer, haar_pure,
    ginibre_mixed, maximally_mixed, gibbs, werner.
    """
    kind = spec.get("kind")
    n = int(spec.get("n", 0))
    if kind == "computational":
        bits = spec["bits"]
        if len(bits) != n or any(c not in "01" for c in bits):
            raise ConfigError("bits must be a 0/1 string of length n")
        return PureState(n, _basis_state(n, _bits_from_string(bits)))
    if kind == "neel":
        if n % 2:
            raise ConfigError("Neel state needs even n")
        return PureState(n, _basis_state(n, _bits_from_string("01" * (n // 2))))
    if kind == "ghz":
        v = np.zeros(2**n, dtype=complex)
        v[0] = v[-1] = 1 / np.sqrt(2)
        return PureState(n, v)
    if kind == "plus":
        v = np.full(2**n, 2.0 ** (-n / 2), dtype=complex)
        return PureState(n, v)
    if kind == "product":
        states = spec["states"]
        if len(states) != n:
            raise ConfigError("need one single-qubit state per qubit")
        # qubit 0 is the least significant factor, so later qubits kron on top
        v = np.array([1.0], dtype=complex)
        for s in states:
            a = np.array([complex(s[0][0], s[0][1]), complex(s[1][0], s[1][1])])
            v = np.kron(a / np.linalg.norm(a), v)
        return PureState(n, v)
    if kind == "dimer":
        return _prepare_dimer(n, int(spec.get("offset", 0)))
    if kind == "haar_pure":
        rng = np.random.default_rng(_require_seed(spec))
        v = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
        return PureState(n, v / np.linalg.norm(v))
    if kind == "ginibre_mixed":
        rng = np.random.default_rng(_require_seed(spec))
        rank = int(spec.get("rank", 2**n))
        g = rng.standard_normal((2**n, rank)) + 1j * rng.standard_normal((2**n, rank))
        m = g @ g.conj().T
        return DensityState(n, m / np.trace(m).real)
    if kind == "maximally_mixed":
        d = 2**n
        return DensityState(n, np.eye(d, dtype=complex) / d)
    if kind == "gibbs":
        from .hammodels import hamiltonian_from_spec

        h = hamiltonian_from_spec(spec["hamiltonian"])
        beta = float(spec["beta"])
        evals, evecs = np.linalg.eigh(h.to_matrix())
        w = np.exp(-beta * (evals - evals.min()))
        m = (evecs * w) @ evecs.conj().T
        return DensityState(h.n_qubits, m / np.trace(m).real)
    if kind == "werner":
        if n != 2:
            raise ConfigError("werner family defined on a qubit pair")
        p = float(spec["p"])
        if not 0.0 <= p <= 1.0:
            raise ConfigError("werner parameter must lie in [0, 1]")
        singlet = np.zeros(4, dtype=complex)
        singlet[0b01] = 1 / np.sqrt(2)
        singlet[0b10] = -1 / np.sqrt(2)
        m = p * np.outer(singlet, singlet.conj()) + (1 - p) * np.eye(4) / 4
        return DensityState(2, m)
    raise ConfigError(f"unknown state kind {kind!r}")


def _require_seed(spec: dict) -> int:
    if "seed" not in spec:
        raise ConfigError(f"state kind {spec.get('kind')!r} requires a seed")
    return int(spec["seed"])


def _prepare_dimer(n: int, offset: int) -> PureState:
    """Chain of singlet pairs starting at ``offset``; unpaired qubits in |0>."""
    if offset not in (0, 1):
        raise ConfigError("dimer offset must be 0 or 1")
    singlet = np.zeros(4, dtype=complex)
    singlet[0b01] = 1 / np.sqrt(2)
    singlet[0b10] = -1 / np.sqrt(2)
    zero = np.array([1.0, 0.0], dtype=complex)
    factors = []
    q = 0
    if offset == 1:
        factors.append(zero)
        q = 1
    while q + 1 < n:
        factors.append(singlet)
        q += 2
    while q < n:
        factors.append(zero)
        q += 1
    # qubit 0 is the least significant factor, so later factors kron on top
    out = np.array([1.0], dtype=complex)
    for f in factors:
        out = np.kron(f, out)
    return PureState(n, out)


# ----------------------------------------------------------------------
# Hamiltonians and evolution


@functools.lru_cache(maxsize=32)
def _eigh_cached(h: HamiltonianSpec) -> tuple[np.ndarray, np.ndarray]:
    evals, evecs = np.linalg.eigh(h.to_matrix())
    return evals, evecs


def evolve(state: State, h: HamiltonianSpec, t: float) -> State:
    """Exact propagation e^{-iHt} via a cached dense eigendecomposition."""
    if h.n_qubits != state.n_qubits:
        raise ConfigError("Hamiltonian and state sizes differ")
    evals, evecs = _eigh_cached(h)
    phases = np.exp(-1j * evals * t)
    if isinstance(state, PureState):
        v = evecs @ (phases * (evecs.conj().T @ state.amplitudes))
        return PureState(state.n_qubits, v / np.linalg.norm(v))
    u = (evecs * phases) @ evecs.conj().T
    return DensityState(state.n_qubits, u @ state.matrix @ u.conj().T)


def ground_state(h: HamiltonianSpec) -> PureState:
    evals, evecs = _eigh_cached(h)
    return PureState(h.n_qubits, evecs[:, 0])


def heisenberg(op: PauliString, h: HamiltonianSpec, t: float) -> np.ndarray:
    """W(t) = e^{-iHt} W e^{iHt}, dense."""
    if h.n_qubits > MAX_HEISENBERG_QUBITS:
        raise SizeCapError(f"Heisenberg picture capped at {MAX_HEISENBERG_QUBITS} qubits")
    if op.n_qubits != h.n_qubits:
        raise ConfigError("operator and Hamiltonian sizes differ")
    evals, evecs = _eigh_cached(h)
    u = (evecs * np.exp(-1j * evals * t)) @ evecs.conj().T
    return u @ op.to_matrix() @ u.conj().T


# ----------------------------------------------------------------------
# randomized-measurement primitives


def _setting_unitaries(setting) -> np.ndarray:
    u = getattr(setting, "unitaries", setting)
    u = np.asarray(u, dtype=complex)
    if u.ndim != 3 or u.shape[1:] != (2, 2):
        raise ConfigError("expected per-qubit stack of 2x2 unitaries")
    return u


def apply_local_unitaries(state: State, setting) -> State:
    """U rho U^dag (or U|psi>) for a tensor product of single-qubit unitaries."""
    us = _setting_unitaries(setting)
    n = state.n_qubits
    if us.shape[0] != n:
        raise ConfigError("setting size does not match state")
    if isinstance(state, PureState):
        v = state.amplitudes
        for q in range(n):
            v = apply_single_qubit(v, us[q], q, n)
        return PureState(n, v / np.linalg.norm(v))
    m = state.matrix
    for q in range(n):
        m = apply_single_qubit_dm(m, us[q], q, n)
    m = 0.5 * (m + m.conj().T)
    return DensityState(n, m / np.trace(m).real)


def born_probabilities(state: State, setting=None) -> np.ndarray:
    rotated = state if setting is None else apply_local_unitaries(state, setting)
    if isinstance(rotated, PureState):
        p = np.abs(rotated.amplitudes) ** 2
    else:
        p = np.real(np.diag(rotated.matrix)).copy()
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def born_sample(state: State, setting, k: int, seed: int) -> np.ndarray:
    """K i.i.d. computational-basis outcomes after rotating by the setting.

    Returns packed outcomes as uint64, bit q = qubit q.  Deterministic in the
    seed; the probability vector is sampled by inverse CDF.
    """
    if k < 1:
        raise ConfigError("need at least one shot")
    p = born_probabilities(state, setting)
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    rng = np.random.default_rng(np.uint64(seed))
    u = rng.random(k)
    idx = np.searchsorted(cdf, u, side="right")
    return idx.astype(np.uint64)


# ----------------------------------------------------------------------
# oracles for estimator targets


def oracle_purity(state: State, subsystem: Optional[Sequence[int]] = None) -> float:
    """Exact tr(rho_A^2) of the reduced state."""
    if subsystem is None:
        subsystem = range(state.n_qubits)
    r = partial_trace(state, subsystem)
    return float(np.real(np.sum(r * r.T)))


def oracle_pt_moments(state: State, part_a: Sequence[int], part_b: Sequence[int],
                      order: int) -> float:
    """Exact tr((rho_AB^{T_A})^order) via an explicit partial transpose."""
    part_a, part_b = sorted(set(part_a)), sorted(set(part_b))
    if set(part_a) & set(part_b):
        raise ConfigError("subsystems A and B must be disjoint")
    if order not in (2, 3, 4):
        raise ConfigError("moment order must be 2, 3 or 4")
    keep = part_a + part_b
    rho = partial_trace(state, keep)
    # after partial_trace the kept qubits are relabeled in ascending order;
    # move A to the high bit positions so the reshape splits as (A, B)
    ka = len(part_a)
    k = len(keep)
    da, db = 2**ka, 2 ** (k - ka)
    perm = _bit_permutation(sorted(keep), part_a, part_b)
    rho = _permute_qubits_dm(rho, perm, k)
    t = rho.reshape(da, db, da, db)
    t = t.transpose(2, 1, 0, 3)  # transpose on A only
    m = t.reshape(da * db, da * db)
    out = np.linalg.matrix_power(m, order)
    return float(np.trace(out).real)


def _bit_permutation(kept_sorted, part_a, part_b):
    # target labels: B occupies the low bits, A the high bits
    order = list(part_b) + list(part_a)
    return [order.index(q) for q in kept_sorted]


def _permute_qubits_dm(rho: np.ndarray, new_pos: list[int], n: int) -> np.ndarray:
    t = rho.reshape([2] * (2 * n))
    # qubit at old position i moves to new_pos[i]; axes use MSB-first layout
    axes_row = [0] * n
    for old, new in enumerate(new_pos):
        axes_row[_axis(new, n)] = _axis(old, n)
    axes = axes_row + [a + n for a in axes_row]
    d = 2**n
    return t.transpose(axes).reshape(d, d)


def reflection_matrix(window_size: int) -> np.ndarray:
    """Permutation matrix reversing qubit order within a window."""
    if window_size % 2:
        raise ConfigError("reflection window must have even size")
    d = 2**window_size
    src = np.arange(d, dtype=np.uint64)
    dst = np.zeros(d, dtype=np.uint64)
    for j in range(window_size):
        dst |= ((src >> np.uint64(j)) & np.uint64(1)) << np.uint64(window_size - 1 - j)
    m = np.zeros((d, d))
    m[dst.astype(np.intp), src.astype(np.intp)] = 1.0
    return m


def oracle_reflection(state: State, window: Sequence[int]) -> float:
    """Exact tr(R_I rho_I) for the bit-reversal permutation on the window."""
    window = sorted(set(window))
    if len(window) % 2:
        raise ConfigError("reflection window must have even size")
    rho = partial_trace(state, window)
    r = reflection_matrix(len(window))
    return float(np.trace(r @ rho).real)


def oracle_otoc(h: HamiltonianSpec, w: PauliString, v: PauliString, t: float) -> float:
    """Infinite-temperature OTOC tr(W(t) V W(t) V)/2^N."""
    wt = heisenberg(w, h, t)
    vm = v.to_matrix()
    d = 2**h.n_qubits
    return float(np.trace(wt @ vm @ wt @ vm).real / d)


# ----------------------------------------------------------------------
# noise channels


def apply_noise(state: State, channel: dict) -> DensityState:
    """Apply a named noise channel, promoting pure states to density form.

    Channels: {"kind": "depolarizing", "p": x} (per qubit),
    {"kind": "bitflip", "p": x} (per qubit),
    {"kind": "global_depolarizing", "p": x}.
    """
    kind = channel.get("kind")
    p = float(channel.get("p", 0.0))
    if not 0.0 <= p <= 1.0:
        raise ConfigError("noise strength must lie in [0, 1]")
    dm = state.to_density() if isinstance(state, PureState) else state
    n = dm.n_qubits
    m = dm.matrix
    if kind == "global_depolarizing":
        d = 2**n
        m = (1 - p) * m + p * np.eye(d) / d
        return DensityState(n, m)
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    y = np.array([[0, -1j], [1j, 0]], dtype=complex)
    z = np.array([[1, 0], [0, -1]], dtype=complex)
    if kind == "depolarizing":
        for q in range(n):
            twirled = sum(
                apply_single_qubit_dm(m, s, q, n) for s in (x, y, z)
            )
            m = (1 - 3 * p / 4) * m + (p / 4) * twirled
        return DensityState(n, m)
    if kind == "bitflip":
        for q in range(n):
            m = (1 - p) * m + p * apply_single_qubit_dm(m, x, q, n)
        return DensityState(n, m)
    raise ConfigError(f"unknown noise kind {kind!r}")
