"""Seeded sampling of random local measurement settings.

Two single-qubit ensembles are supported: the 24-element Clifford group and
Haar-random U(2) (circular unitary ensemble).  Per-setting randomness is
derived from a 64-bit mixing function of (master_seed, setting_index), so
settings can be generated independently, in any order, on any number of
threads, and replayed exactly on a second device from the shared seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .pauli import BasisString

ENSEMBLE_KINDS = ("single_qubit_haar", "single_qubit_clifford")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_QUBIT_SALT = np.uint64(0xBF58476D1CE4E5B9)
_SHOT_SALT = np.uint64(0x94D049BB133111EB)


def mix64(x) -> np.uint64:
    """SplitMix64 finalizer; a bijective 64-bit hash."""
    with np.errstate(over="ignore"):
        z = np.uint64(x) + _GOLDEN if np.isscalar(x) else np.asarray(x, np.uint64) + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z


def setting_seed(master_seed: int, m: int) -> np.uint64:
    """Seed owning all randomness of setting index m."""
    with np.errstate(over="ignore"):
        return mix64(np.uint64(master_seed) ^ mix64(np.uint64(m) + np.uint64(1)))


def shot_seed(master_seed: int, m: int, device: int = 0) -> np.uint64:
    """Independent stream for the Born-sampling RNG of setting m.

    ``device`` separates the outcome randomness of devices that share the
    same settings seed, as in cross-platform protocols: same unitaries,
    independent measurements.
    """
    with np.errstate(over="ignore"):
        return mix64(setting_seed(master_seed, m) ^ _SHOT_SALT
                     ^ mix64(np.uint64(device)))


def clifford_indices(master_seed: int, m, n_qubits: int) -> np.ndarray:
    """Table indices for setting(s) m, shape (..., n_qubits).

    Counter-based so that bulk generation over a vector of m values is
    bit-identical to generating each setting on its own.  The modulo carries
    a 24/2^64 bias, far below any statistical resolution used here.
    """
    m = np.asarray(m, dtype=np.uint64)
    seeds = mix64(np.uint64(master_seed) ^ mix64(m + np.uint64(1)))
    q = np.arange(1, n_qubits + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        draws = mix64(seeds[..., None] ^ (q * _QUBIT_SALT))
    return (draws % np.uint64(24)).astype(np.int64)


# ----------------------------------------------------------------------
# the 24 single-qubit Cliffords, canonically ordered


def _canonical_phase(u: np.ndarray) -> np.ndarray:
    flat = u.reshape(-1)
    k = np.argmax(np.abs(flat) > 1e-9)
    return u * (np.abs(flat[k]) / flat[k])


def _round_key(u: np.ndarray) -> tuple:
    return tuple(np.round(u.reshape(-1), 9).view(float))


def _build_clifford_table() -> np.ndarray:
    had = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    phs = np.array([[1, 0], [0, 1j]], dtype=complex)
    seen = {}
    frontier = [np.eye(2, dtype=complex)]
    seen[_round_key(_canonical_phase(frontier[0]))] = _canonical_phase(frontier[0])
    while frontier:
        nxt = []
        for u in frontier:
            for g in (had, phs):
                v = _canonical_phase(g @ u)
                key = _round_key(v)
                if key not in seen:
                    seen[key] = v
                    nxt.append(v)
        frontier = nxt
    mats = [seen[k] for k in sorted(seen)]
    if len(mats) != 24:
        raise AssertionError(f"Clifford closure has {len(mats)} elements")
    return np.stack(mats)


CLIFFORD_TABLE = _build_clifford_table()

_PAULI_1Q = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _conjugation_letter(u: np.ndarray) -> tuple[str, int]:
    """Signed letter W with U^dag Z U = sign * W.

    U^dag Z U is the observable actually measured when Z is read out after
    applying U, which is what compatibility postprocessing must use.
    """
    m = u.conj().T @ _PAULI_1Q["Z"] @ u
    for letter, p in _PAULI_1Q.items():
        for sign in (1, -1):
            if np.allclose(m, sign * p, atol=1e-12):
                return letter, sign
    raise AssertionError("conjugated Z is not a signed Pauli")


_conj = [_conjugation_letter(CLIFFORD_TABLE[i]) for i in range(24)]
CLIFFORD_MEAS_LETTER = np.array([ord(c[0]) - ord("X") for c in _conj], dtype=np.int8)
CLIFFORD_MEAS_SIGN = np.array([c[1] for c in _conj], dtype=np.int8)
_LETTER_NAMES = np.array(["X", "Y", "Z"])


@dataclass(frozen=True)
class EnsembleSpec:
    """Which single-qubit ensemble to draw from, and for how many qubits."""

    kind: str
    n_qubits: int

    def __post_init__(self):
        if self.kind not in ENSEMBLE_KINDS:
            raise ConfigError(f"unknown ensemble kind {self.kind!r}")
        if self.n_qubits < 1:
            raise ConfigError("need at least one qubit")


@dataclass(frozen=True)
class LocalUnitarySetting:
    """One measurement setting: a tensor product of single-qubit unitaries.

    For the Clifford ensemble the measured observable per qubit is the signed
    Pauli U^dag Z U; its letter and sign are recorded for fast postprocessing,
    along with the table index for lossless serialization.  ``basis`` is None
    for the Haar ensemble.
    """

    m: int
    kind: str
    unitaries: np.ndarray
    seed: int
    basis: Optional[BasisString] = None
    basis_signs: Optional[tuple[int, ...]] = None
    table_indices: Optional[tuple[int, ...]] = None

    @property
    def n_qubits(self) -> int:
        return self.unitaries.shape[0]


def _haar_unitaries(rng: np.random.Generator, count: int) -> np.ndarray:
    """Exact CUE draws via QR of a complex Ginibre matrix with phase fix."""
    g = rng.standard_normal((count, 2, 2)) + 1j * rng.standard_normal((count, 2, 2))
    q, r = np.linalg.qr(g)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[:, None, :]


def sample_setting(e: EnsembleSpec, master_seed: int, m: int) -> LocalUnitarySetting:
    """Deterministic setting m of the ensemble stream for master_seed."""
    seed = setting_seed(master_seed, m)
    if e.kind == "single_qubit_clifford":
        idx = clifford_indices(master_seed, m, e.n_qubits)
        return _clifford_setting(m, idx, int(seed))
    rng = np.random.default_rng(seed)
    us = _haar_unitaries(rng, e.n_qubits)
    return LocalUnitarySetting(m=m, kind=e.kind, unitaries=us, seed=int(seed))


def _clifford_setting(m: int, idx: np.ndarray, seed: int) -> LocalUnitarySetting:
    letters = _LETTER_NAMES[CLIFFORD_MEAS_LETTER[idx]]
    signs = tuple(int(s) for s in CLIFFORD_MEAS_SIGN[idx])
    return LocalUnitarySetting(
        m=m,
        kind="single_qubit_clifford",
        unitaries=CLIFFORD_TABLE[idx],
        seed=seed,
        basis=BasisString(tuple(letters)),
        basis_signs=signs,
        table_indices=tuple(int(i) for i in idx),
    )


def symmetric_setting(e: EnsembleSpec, window: Sequence[int], master_seed: int,
                      m: int) -> LocalUnitarySetting:
    """Setting whose unitaries mirror across the center of ``window``.

    Mirrored qubit pairs share one sampled unitary; qubits outside the window
    get the identity.  Used for reflection-invariant protocols.
    """
    window = sorted(set(window))
    if len(window) % 2:
        raise ConfigError("symmetric window must have even size")
    half = len(window) // 2
    seed = setting_seed(master_seed, m)
    n = e.n_qubits
    us = np.broadcast_to(np.eye(2, dtype=complex), (n, 2, 2)).copy()
    if e.kind == "single_qubit_clifford":
        idx_full = np.full(n, -1, dtype=np.int64)
        pair_idx = clifford_indices(master_seed, m, half)
        for j in range(half):
            a, b = window[j], window[-1 - j]
            idx_full[a] = idx_full[b] = pair_idx[j]
            us[a] = us[b] = CLIFFORD_TABLE[pair_idx[j]]
        return LocalUnitarySetting(
            m=m, kind=e.kind, unitaries=us, seed=int(seed),
            table_indices=tuple(int(i) for i in idx_full),
        )
    rng = np.random.default_rng(seed)
    pair_us = _haar_unitaries(rng, half)
    for j in range(half):
        us[window[j]] = us[window[-1 - j]] = pair_us[j]
    return LocalUnitarySetting(m=m, kind=e.kind, unitaries=us, seed=int(seed))


# ----------------------------------------------------------------------
# vignette decomposition into X- and Z-rotations


@dataclass(frozen=True)
class VignetteAngles:
    """u ~ Rz(residual) . Rx(-pi/2) Rz(alpha) Rx(pi/2) . Rz(beta), up to phase.

    The two-angle sandwich covers only a 2-parameter slice of U(2)/U(1);
    the third Euler angle is reported as ``residual`` and is zero whenever
    the input lies in the slice.
    """

    alpha: float
    beta: float
    residual: float


def _rz(theta: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]])


def _rx(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def recompose_vignette(angles: VignetteAngles) -> np.ndarray:
    core = _rx(-np.pi / 2) @ _rz(angles.alpha) @ _rx(np.pi / 2) @ _rz(angles.beta)
    return _rz(angles.residual) @ core


def decompose_vignette(u: np.ndarray) -> VignetteAngles:
    """ZYZ Euler angles of u, using Rx(-pi/2) Rz(a) Rx(pi/2) = Ry(a).

    Round-trips through :func:`recompose_vignette` up to global phase.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2) or np.max(np.abs(u @ u.conj().T - np.eye(2))) > 1e-9:
        raise ConfigError("input is not a 2x2 unitary")
    det = np.linalg.det(u)
    v = u / np.sqrt(det)
    # v = Rz(g) Ry(a) Rz(b): v00 = e^{-i(g+b)/2} cos(a/2), v10 = e^{i(g-b)/2} sin(a/2)
    a = 2 * np.arctan2(np.abs(v[1, 0]), np.abs(v[0, 0]))
    if np.abs(v[0, 0]) < 1e-12:
        # a = pi: only g - b is defined; fold everything into beta
        g_minus_b = 2 * np.angle(v[1, 0])
        return VignetteAngles(alpha=float(a), beta=float(-g_minus_b), residual=0.0)
    if np.abs(v[1, 0]) < 1e-12:
        # a = 0: only g + b is defined; fold everything into beta
        g_plus_b = -2 * np.angle(v[0, 0])
        return VignetteAngles(alpha=0.0, beta=float(g_plus_b), residual=0.0)
    g_plus_b = -2 * np.angle(v[0, 0])
    g_minus_b = 2 * np.angle(v[1, 0])
    g = 0.5 * (g_plus_b + g_minus_b)
    b = 0.5 * (g_plus_b - g_minus_b)
    return VignetteAngles(alpha=float(a), beta=float(b), residual=float(g))
