"""Classical-shadow postprocessing.

Snapshots are the per-setting state estimates built from factors
3 U^dag |s><s| U - I per qubit, averaged over the K shots of the setting.
Restriction to a subsystem just drops factors (each has unit trace), so all
estimators work on per-qubit blocks and never materialize 2^N objects.

Two prediction paths exist for Pauli observables: a compatibility fast path
for Clifford-ensemble data that only touches basis letters, signs, and bits,
and a general snapshot path that contracts the factor matrices.  They are
cross-checked in the tests and agree in expectation.

Multi-copy functionals (purity, higher moments, partial-transpose moments)
are U-statistics over tuples of distinct settings.  Sums over distinct
tuples are obtained from unrestricted sums by Moebius inversion over set
partitions, which keeps the cost linear in M for n = 2 and avoids any
explicit pair or triple loops.  Error bars are leave-one-setting-out
jackknife estimates throughout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import MeasurementDataset, MeasurementRecord
from .errors import ConfigError, NoCompatibleSettingsError, SizeCapError
from .pauli import PauliString
from .sim import reflection_matrix
from .util import chunk_ranges

MAX_SUBSYSTEM = 8

_PAULI_1Q = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


@dataclass(frozen=True)
class EstimateWithError:
    """Point estimate with a one-sigma error bar and aggregation metadata."""

    value: float
    std_error: float
    n_samples: int
    method: str
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if not (self.std_error >= 0 or math.isnan(self.std_error)):
            raise ConfigError("std_error must be nonnegative")


@dataclass(frozen=True)
class ShadowSnapshot:
    """Factorized state estimate of one setting: factors[k, q] is 2x2."""

    m: int
    factors: np.ndarray

    @property
    def k_shots(self) -> int:
        return self.factors.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.factors.shape[1]

    def dense(self, qubits: Optional[Sequence[int]] = None) -> np.ndarray:
        """Shot-averaged dense snapshot on a qubit subset (default: all)."""
        qs = sorted(qubits) if qubits is not None else list(range(self.n_qubits))
        if len(qs) > MAX_SUBSYSTEM:
            raise SizeCapError(f"dense snapshots capped at {MAX_SUBSYSTEM} qubits")
        out = np.ones((self.k_shots, 1, 1), dtype=complex)
        for q in qs:
            f = self.factors[:, q]
            d = out.shape[1]
            out = np.einsum("kab,kcd->kcadb", out, f).reshape(self.k_shots, 2 * d, 2 * d)
        return out.mean(axis=0)


def build_snapshot(record: MeasurementRecord) -> ShadowSnapshot:
    """Per-shot, per-qubit factors 3 U^dag |s><s| U - I for one record."""
    us = record.setting.unitaries
    n = us.shape[0]
    k = len(record.outcomes)
    bits = ((record.outcomes[:, None] >> np.arange(n, dtype=np.uint64)) & np.uint64(1))
    bits = bits.astype(np.intp)
    rows = np.conj(us[np.arange(n)[None, :], bits])  # (k, n, 2): U^dag |s> as a ket
    factors = 3.0 * rows[..., :, None] * np.conj(rows[..., None, :]) \
        - np.eye(2, dtype=complex)
    return ShadowSnapshot(m=record.m, factors=factors)


# ----------------------------------------------------------------------
# array extraction helpers


def _check_subsystem(ds: MeasurementDataset, qubits: Sequence[int],
                     cap: int = MAX_SUBSYSTEM) -> list[int]:
    qs = sorted(set(qubits))
    if not qs:
        raise ConfigError("empty subsystem")
    if any(q < 0 or q >= ds.n_qubits for q in qs):
        raise ConfigError("subsystem outside register")
    if len(qs) > cap:
        raise SizeCapError(f"subsystem of {len(qs)} qubits exceeds cap {cap}")
    return qs


def _factors(ds: MeasurementDataset, qubits: Sequence[int], rows) -> np.ndarray:
    """(m_chunk, K, a, 2, 2) shadow factors for selected qubits and rows."""
    qs = list(qubits)
    us = ds.all_unitaries()[rows][:, qs]
    shots = ds.shots[rows]
    bits = ((shots[:, :, None] >> np.array(qs, dtype=np.uint64)) & np.uint64(1))
    bits = bits.astype(np.intp)  # (mc, K, a)
    mc = us.shape[0]
    kets = np.conj(us[np.arange(mc)[:, None, None],
                      np.arange(len(qs))[None, None, :], bits])  # (mc, K, a, 2)
    return 3.0 * kets[..., :, None] * np.conj(kets[..., None, :]) \
        - np.eye(2, dtype=complex)


def _dense_snapshots(ds: MeasurementDataset, qubits: Sequence[int], rows) -> np.ndarray:
    """(m_chunk, d, d) shot-averaged dense snapshots on a subsystem."""
    f = _factors(ds, qubits, rows)
    mc, k = f.shape[0], f.shape[1]
    out = np.ones((mc, k, 1, 1), dtype=complex)
    for j in range(len(qubits)):
        d = out.shape[2]
        out = np.einsum("mkab,mkcd->mkcadb", out, f[:, :, j]).reshape(mc, k, 2 * d, 2 * d)
    return out.mean(axis=1)


def dense_snapshot_sums(ds: MeasurementDataset, qubits: Sequence[int],
                        chunk: int = 256):
    """Yield (rows, R_chunk) over the whole dataset, memory-bounded."""
    for rows in chunk_ranges(ds.m_settings, chunk):
        yield rows, _dense_snapshots(ds, qubits, slice(rows.start, rows.stop))


# ----------------------------------------------------------------------
# aggregation


def _mean_estimate(per_setting: np.ndarray, method: str = "mean",
                   flags: tuple[str, ...] = ()) -> EstimateWithError:
    m = len(per_setting)
    se = float(np.std(per_setting, ddof=1) / np.sqrt(m)) if m > 1 else float("nan")
    return EstimateWithError(float(np.mean(per_setting)), se, m, method, flags)


def median_of_means(per_setting: np.ndarray, batches: int) -> EstimateWithError:
    """Median of B in-order batch means; B=1 reduces to the plain mean."""
    vals = np.asarray(per_setting, dtype=float)
    if batches < 1 or batches > len(vals):
        raise ConfigError("batch count must be in 1..n_samples")
    if batches == 1:
        return _mean_estimate(vals)
    means = np.array([b.mean() for b in np.array_split(vals, batches)])
    se = float(np.std(means, ddof=1) / np.sqrt(batches))
    return EstimateWithError(float(np.median(means)), se, len(vals),
                             f"median_of_means({batches})")


def mom_batches(delta: float) -> int:
    """Batch count 2*log(1/delta), rounded up, for failure probability delta."""
    if not 0 < delta < 1:
        raise ConfigError("delta must be in (0, 1)")
    return max(1, math.ceil(2 * math.log(1 / delta)))


def _jackknife_se(loo: np.ndarray) -> float:
    m = len(loo)
    return float(np.sqrt((m - 1) / m * np.sum((loo - loo.mean()) ** 2)))


# ----------------------------------------------------------------------
# linear prediction


def predict_pauli(ds: MeasurementDataset, p: PauliString, method: str = "auto",
                  batches: int = 1) -> EstimateWithError:
    """Estimate tr(P rho) from the dataset.

    The fast path keeps only settings whose basis letters match P on its
    support and averages 3^w times the signed outcome product, zero for
    incompatible settings; this is the per-setting trace of P against the
    snapshot, specialized to Pauli-diagonal factors.  The snapshot path
    contracts factor matrices and works for any ensemble.
    """
    if p.n_qubits != ds.n_qubits:
        raise ConfigError("operator and dataset sizes differ")
    if not p.is_hermitian():
        raise ConfigError("expectation values need Hermitian (±1) Paulis")
    sign0 = 1.0 if p.phase_pow == 0 else -1.0
    if p.is_identity():
        return EstimateWithError(sign0, 0.0, ds.m_settings, "exact")
    if method == "auto":
        method = "fast" if ds.is_clifford else "snapshot"
    supp = list(p.support)
    w = len(supp)
    if method == "fast":
        if not ds.is_clifford:
            raise ConfigError("fast path requires a Clifford-ensemble dataset")
        target = np.array([{"X": 0, "Y": 1, "Z": 2}[p.letter(q)] for q in supp],
                          dtype=np.int8)
        compat = np.all(ds.letters[:, supp] == target, axis=1)
        n_compat = int(compat.sum())
        if n_compat == 0:
            raise NoCompatibleSettingsError(str(p), ds.m_settings)
        bits = ds.shot_bits(supp)
        eig = np.prod(1 - 2 * bits, axis=2).mean(axis=1)  # (M,)
        setting_sign = np.prod(ds.signs[:, supp], axis=1)
        per_setting = np.where(compat, 3.0**w * setting_sign * eig, 0.0) * sign0
    elif method == "snapshot":
        per_setting = np.empty(ds.m_settings)
        mats = [_PAULI_1Q[{"X": 0, "Y": 1, "Z": 2}[p.letter(q)]] for q in supp]
        for rows in chunk_ranges(ds.m_settings, 1024):
            f = _factors(ds, supp, slice(rows.start, rows.stop))
            t = np.ones(f.shape[:2])
            for j, mat in enumerate(mats):
                t = t * np.real(np.einsum("mkab,ba->mk", f[:, :, j], mat))
            per_setting[rows.start:rows.stop] = t.mean(axis=1)
        per_setting = per_setting * sign0
    else:
        raise ConfigError(f"unknown prediction method {method!r}")
    if batches > 1:
        return median_of_means(per_setting, batches)
    return _mean_estimate(per_setting)


def predict_observable(ds: MeasurementDataset, obs: np.ndarray,
                       qubits: Sequence[int]) -> EstimateWithError:
    """Mean over settings of tr(O rho_hat) for a dense Hermitian O on a subsystem."""
    qs = _check_subsystem(ds, qubits)
    d = 2 ** len(qs)
    obs = np.asarray(obs, dtype=complex)
    if obs.shape != (d, d):
        raise ConfigError("observable shape does not match subsystem")
    per_setting = np.empty(ds.m_settings)
    for rows, r in dense_snapshot_sums(ds, qs):
        per_setting[rows.start:rows.stop] = np.real(np.einsum("ab,mba->m", obs, r))
    return _mean_estimate(per_setting)


def estimate_subsystem_state(ds: MeasurementDataset,
                             qubits: Sequence[int]) -> np.ndarray:
    """Average of restricted snapshots: Hermitian, unit trace, not necessarily PSD."""
    qs = _check_subsystem(ds, qubits)
    d = 2 ** len(qs)
    acc = np.zeros((d, d), dtype=complex)
    for _, r in dense_snapshot_sums(ds, qs):
        acc += r.sum(axis=0)
    return acc / ds.m_settings


# ----------------------------------------------------------------------
# purity (second moment)


def purity_shadow(ds: MeasurementDataset, qubits: Sequence[int]) -> EstimateWithError:
    """U-statistic over pairs of distinct settings estimating tr(rho_A^2).

    Uses sum-of-squares identities, never an M^2 pair loop: the cross sum is
    tr(S^2) - sum_m tr(R_m^2) with S the snapshot sum.  Clifford data uses a
    per-setting Pauli-coefficient representation of cost O(M K 2^a).
    """
    qs = _check_subsystem(ds, qubits)
    if ds.m_settings < 2:
        raise ConfigError("purity needs at least two settings")
    if ds.is_clifford:
        num_all, q_m, c_m = _pair_sums_clifford(ds, qs)
    else:
        num_all, q_m, c_m = _pair_sums_dense(ds, qs)
    m = ds.m_settings
    q_sum = q_m.sum()
    value = (num_all - q_sum) / (m * (m - 1))
    loo = (num_all - 2 * c_m + 2 * q_m - q_sum) / ((m - 1) * (m - 2))
    return EstimateWithError(float(value), _jackknife_se(loo), m, "u-stat/jackknife")


def _pair_sums_dense(ds: MeasurementDataset, qs: list[int]):
    # two passes over regenerated chunks keep memory at one chunk of snapshots
    d = 2 ** len(qs)
    s = np.zeros((d, d), dtype=complex)
    q_m = np.empty(ds.m_settings)
    for rows, r in dense_snapshot_sums(ds, qs):
        s += r.sum(axis=0)
        q_m[rows.start:rows.stop] = np.real(np.einsum("mab,mba->m", r, r))
    c_m = np.empty(ds.m_settings)
    for rows, r in dense_snapshot_sums(ds, qs):
        c_m[rows.start:rows.stop] = np.real(np.einsum("ab,mba->m", s, r))
    num_all = float(np.real(np.sum(s * s.T)))
    return num_all, q_m, c_m


def _subset_products(base: np.ndarray) -> np.ndarray:
    """(..., 2^a) products of base[..., j] over all subsets of the last axis."""
    out = np.ones(base.shape[:-1] + (1,), dtype=base.dtype)
    for j in range(base.shape[-1]):
        out = np.concatenate([out, out * base[..., j:j + 1]], axis=-1)
    return out


def _clifford_coeff_arrays(ds: MeasurementDataset, qs: list[int], rows):
    """Sparse Pauli coefficients of restricted snapshots, subset-indexed.

    For Clifford data the per-qubit factor is (I + 3 eps W)/2 with W the
    measured letter and eps the signed outcome, so the snapshot's only
    nonzero Pauli coefficients sit on letter patterns matching the setting.
    Returns (idx, chiw): idx[mc, T] is the base-4 Pauli index of subset T,
    chiw[mc, T] the shot-averaged product of 3*eps over T.
    """
    sl = slice(rows.start, rows.stop)
    bits = ds.shot_bits(qs)[sl]
    eps = ds.signs[sl][:, qs][:, None, :] * (1 - 2 * bits)
    chiw = _subset_products(3.0 * eps.astype(float)).mean(axis=1)  # (mc, 2^a)
    codes = ds.letters[sl][:, qs].astype(np.int64) + 1
    place = 4 ** np.arange(len(qs), dtype=np.int64)
    digits = codes * place
    idx = np.zeros((bits.shape[0], 1), dtype=np.int64)
    for j in range(len(qs)):
        idx = np.concatenate([idx, idx + digits[:, j:j + 1]], axis=1)
    return idx, chiw


def _pair_sums_clifford(ds: MeasurementDataset, qs: list[int]):
    a = len(qs)
    dim = 4**a
    scale = 1.0 / 2**a
    s = np.zeros(dim)
    m = ds.m_settings
    q_m = np.empty(m)
    chunk_data = []
    for rows in chunk_ranges(m, 2048):
        idx, chiw = _clifford_coeff_arrays(ds, qs, rows)
        np.add.at(s, idx.ravel(), chiw.ravel())
        q_m[rows.start:rows.stop] = (chiw**2).sum(axis=1) * scale
        chunk_data.append((rows, idx, chiw))
    c_m = np.empty(m)
    for rows, idx, chiw in chunk_data:
        c_m[rows.start:rows.stop] = (s[idx] * chiw).sum(axis=1) * scale
    num_all = float((s**2).sum() * scale)
    return num_all, q_m, c_m


def renyi2(ds: MeasurementDataset, qubits: Sequence[int],
           estimator: str = "shadow") -> EstimateWithError:
    """Second Renyi entropy -log2 of a purity estimate, delta-method error.

    Nonpositive purity estimates (possible at small M) are flagged and the
    value withheld as NaN rather than clamped.
    """
    if estimator == "shadow":
        p = purity_shadow(ds, qubits)
    elif estimator == "hamming":
        from .protocols import purity_hamming

        p = purity_hamming(ds, qubits)
    else:
        raise ConfigError(f"unknown purity estimator {estimator!r}")
    if not p.value > 0:
        return EstimateWithError(float("nan"), float("nan"), p.n_samples,
                                 p.method, p.flags + ("nonpositive-purity",))
    value = -math.log2(p.value)
    se = p.std_error / (p.value * math.log(2))
    return EstimateWithError(value, se, p.n_samples, p.method, p.flags)


# ----------------------------------------------------------------------
# multi-copy U-statistics


def _partitions(items: tuple[int, ...]):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def _mobius(partition: list[list[int]]) -> int:
    mu = 1
    for block in partition:
        b = len(block)
        mu *= (-1) ** (b - 1) * math.factorial(b - 1)
    return mu


def _contraction_subscripts(parts: Sequence[tuple[tuple[int, ...], tuple[int, ...]]],
                            qs: list[int], n: int) -> list[str]:
    """Einsum row/col subscripts per copy for tr((⊗ P_perm)(X_1⊗..⊗X_n)).

    For qubit q with permutation pi, copy j's row index ties to symbol
    (pi(j), q) and its column index to (j, q).
    """
    perm_of_qubit = {}
    for qubits, perm in parts:
        for q in qubits:
            perm_of_qubit[q] = perm
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    sym = {}

    def s(copy: int, q: int) -> str:
        if (copy, q) not in sym:
            sym[(copy, q)] = letters[len(sym)]
        return sym[(copy, q)]

    a = len(qs)
    subs = []
    for j in range(n):
        # axis layout of a reshaped operator: rows MSB-first, then cols
        row = "".join(s(perm_of_qubit[qs[p]][j], qs[p]) for p in reversed(range(a)))
        col = "".join(s(j, qs[p]) for p in reversed(range(a)))
        subs.append(row + col)
    return subs


def multicopy_expect(ds: MeasurementDataset,
                     parts: Sequence[tuple[Sequence[int], Sequence[int]]],
                     n: int) -> EstimateWithError:
    """U-statistic for tr(O rho^{⊗n}) with O a product of copy permutations.

    ``parts`` lists (qubit subset, permutation of range(n)) pairs with
    disjoint subsets; each permutation acts on the copy index over its
    subset.  Unbiased over ordered tuples of distinct settings.
    """
    if n < 1 or n > 4:
        raise ConfigError("copy count must be 1..4")
    if ds.m_settings < n:
        raise ConfigError(f"need at least {n} settings")
    norm_parts = []
    seen: set[int] = set()
    for qubits, perm in parts:
        qlist = tuple(sorted(set(qubits)))
        if seen & set(qlist):
            raise ConfigError("permutation subsets must be disjoint")
        seen |= set(qlist)
        if sorted(perm) != list(range(n)):
            raise ConfigError("each permutation must act on range(n)")
        norm_parts.append((qlist, tuple(perm)))
    qs = _check_subsystem(ds, sorted(seen))
    a = len(qs)
    if n >= 3 and 2 * a * n > 18:
        raise SizeCapError("multi-copy contraction too large; shrink the subsystem")
    if ds.m_settings * 4**a > 1 << 26:
        raise SizeCapError("snapshot table too large; shrink M or the subsystem")

    subs = _contraction_subscripts(norm_parts, qs, n)
    snaps = np.concatenate([r for _, r in dense_snapshot_sums(ds, qs)], axis=0)
    m = ds.m_settings
    s_sum = snaps.sum(axis=0)
    tuples_total = math.prod(m - i for i in range(n))

    # Moebius inversion over set partitions: each block feeds the sum of
    # |block|-fold tensor powers; per-setting versions support the jackknife.
    labeled = list(_partitions(tuple(range(n))))
    block_tensors: dict[int, np.ndarray] = {}
    per_m_cache: dict[int, np.ndarray] = {}

    def block_power_sum(b: int) -> np.ndarray:
        if b not in block_tensors:
            if b == 1:
                block_tensors[b] = s_sum
            else:
                subs_pow = [chr(ord("a") + 2 * i) + chr(ord("a") + 2 * i + 1)
                            for i in range(b)]
                expr = ",".join("m" + s for s in subs_pow) + "->" + "".join(subs_pow)
                block_tensors[b] = np.einsum(expr, *([snaps] * b))
        return block_tensors[b]

    def contract_partition(partition, override: Optional[dict[int, np.ndarray]] = None):
        expr_ops = []
        out_subs = []
        for block in partition:
            b = len(block)
            tensor = (override or {}).get(id(block))
            if tensor is None:
                tensor = block_power_sum(b)
            block_sub = "".join(subs[j] for j in sorted(block))
            out_subs.append(block_sub)
            shape_b = (2,) * (2 * a * b)
            expr_ops.append(tensor.reshape(shape_b))
        expr = ",".join(out_subs) + "->"
        return float(np.real(np.einsum(expr, *expr_ops)))

    numer = 0.0
    for partition in labeled:
        numer += _mobius(partition) * contract_partition(partition)
    value = numer / tuples_total

    # jackknife: remove setting m from every block sum
    loo_tuples = math.prod(m - 1 - i for i in range(n))
    loo = np.empty(m)

    def snap_power(row: int, b: int) -> np.ndarray:
        # same interleaved (row, col) * b axis layout as block_power_sum
        if b == 1:
            return snaps[row]
        subs_pow = [chr(ord("a") + 2 * i) + chr(ord("a") + 2 * i + 1)
                    for i in range(b)]
        expr = ",".join(subs_pow) + "->" + "".join(subs_pow)
        return np.einsum(expr, *([snaps[row]] * b))

    for row in range(m):
        total = 0.0
        for partition in labeled:
            acc = 0.0
            blocks = partition
            for flip in itertools.product([0, 1], repeat=len(blocks)):
                override = {}
                sign = 1.0
                for fl, block in zip(flip, blocks):
                    if fl:
                        override[id(block)] = snap_power(row, len(block))
                        sign *= -1.0
                acc += sign * contract_partition(partition, override)
            total += _mobius(partition) * acc
        loo[row] = total / loo_tuples
    se = _jackknife_se(loo)
    return EstimateWithError(float(value), se, m, "u-stat/jackknife")


def _cycle(n: int) -> tuple[int, ...]:
    return tuple((j + 1) % n for j in range(n))


def _anticycle(n: int) -> tuple[int, ...]:
    return tuple((j - 1) % n for j in range(n))


def pt_moments(ds: MeasurementDataset, part_a: Sequence[int], part_b: Sequence[int],
               n: int) -> EstimateWithError:
    """Moments of the partial transpose: cyclic on A, anti-cyclic on B."""
    if n not in (2, 3, 4):
        raise ConfigError("partial-transpose moment order must be 2, 3 or 4")
    if set(part_a) & set(part_b):
        raise ConfigError("subsystems A and B must be disjoint")
    return multicopy_expect(
        ds, [(tuple(part_a), _cycle(n)), (tuple(part_b), _anticycle(n))], n
    )


@dataclass(frozen=True)
class PptVerdict:
    """Outcome of the p3 >= p2^2 test for positivity of the partial transpose."""

    entangled: bool
    margin_sigma: float
    p2: EstimateWithError
    p3: EstimateWithError


def p3_ppt_test(ds: MeasurementDataset, part_a: Sequence[int],
                part_b: Sequence[int], z: float = 3.0) -> PptVerdict:
    """Flag entanglement when p3 sits z sigma below p2^2.

    States with positive partial transpose satisfy p3 >= p2^2, so a
    significant violation certifies entanglement; anything else is
    inconclusive, not separable.
    """
    p2 = pt_moments(ds, part_a, part_b, 2)
    p3 = pt_moments(ds, part_a, part_b, 3)
    p2sq = p2.value**2
    se_p2sq = 2 * abs(p2.value) * p2.std_error
    gap = p2sq - p3.value
    sigma = math.hypot(p3.std_error, se_p2sq)
    margin = gap / sigma if sigma > 0 else math.inf * np.sign(gap)
    return PptVerdict(entangled=bool(margin > z), margin_sigma=float(margin),
                      p2=p2, p3=p3)


# ----------------------------------------------------------------------
# reflection invariant and topological entropy


def reflection_invariant(ds: MeasurementDataset, window: Sequence[int]
                         ) -> tuple[EstimateWithError, EstimateWithError]:
    """(Z_R, normalized Z_R) for the bit-reversal permutation on a window.

    Z_R factorizes over mirror pairs: tr(R rho_hat) is the per-shot product
    of tr(F_i F_j) over mirrored qubit pairs, so no dense window operator is
    built.  The normalization divides by the root-mean purity of the two
    half-windows, with errors combined by the delta method.
    """
    win = _check_subsystem(ds, window)
    if len(win) % 2:
        raise ConfigError("reflection window must have even size")
    half = len(win) // 2
    pairs = [(j, len(win) - 1 - j) for j in range(half)]
    per_setting = np.empty(ds.m_settings)
    for rows in chunk_ranges(ds.m_settings, 1024):
        f = _factors(ds, win, slice(rows.start, rows.stop))
        t = np.ones(f.shape[:2])
        for i, j in pairs:
            t = t * np.real(np.einsum("mkab,mkba->mk", f[:, :, i], f[:, :, j]))
        per_setting[rows.start:rows.stop] = t.mean(axis=1)
    z_r = _mean_estimate(per_setting)

    p1 = purity_shadow(ds, win[:half])
    p2 = purity_shadow(ds, win[half:])
    denom = 0.5 * (p1.value + p2.value)
    flags: tuple[str, ...] = ()
    if denom <= 0:
        return z_r, EstimateWithError(float("nan"), float("nan"), ds.m_settings,
                                      "delta", ("nonpositive-purity",))
    zt = z_r.value / math.sqrt(denom)
    var = z_r.std_error**2 / denom \
        + (z_r.value**2 / (16 * denom**3)) * (p1.std_error**2 + p2.std_error**2)
    zt_est = EstimateWithError(float(zt), float(math.sqrt(var)), ds.m_settings,
                               "delta", flags)
    return z_r, zt_est


def reflection_observable(window_size: int) -> np.ndarray:
    """Dense bit-reversal permutation matrix, for the generic observable path."""
    return reflection_matrix(window_size)


def topological_entropy(ds: MeasurementDataset, part_a: Sequence[int],
                        part_b: Sequence[int], part_c: Sequence[int],
                        estimator: str = "shadow") -> EstimateWithError:
    """Renyi-2 combination S_A+S_B+S_C-S_AB-S_BC-S_AC+S_ABC.

    Signs follow the tripartite subtraction scheme that cancels boundary and
    bulk terms; ingredient errors are combined in quadrature (same-dataset
    correlations make this an approximation, stated in the method tag).
    """
    a, b, c = (sorted(set(x)) for x in (part_a, part_b, part_c))
    if set(a) & set(b) or set(b) & set(c) or set(a) & set(c):
        raise ConfigError("partitions must be disjoint")
    combos = [(a, 1), (b, 1), (c, 1), (a + b, -1), (b + c, -1), (a + c, -1),
              (a + b + c, 1)]
    total = 0.0
    var = 0.0
    flags: tuple[str, ...] = ()
    for qubits, sign in combos:
        s = renyi2(ds, qubits, estimator=estimator)
        if math.isnan(s.value):
            return EstimateWithError(float("nan"), float("nan"), ds.m_settings,
                                     "kitaev-preskill/quadrature",
                                     s.flags)
        total += sign * s.value
        var += s.std_error**2
    return EstimateWithError(float(total), float(math.sqrt(var)), ds.m_settings,
                             "kitaev-preskill/quadrature", flags)
