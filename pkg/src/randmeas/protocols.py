"""Bitstring-only and two-dataset protocols.

The Hamming-distance purity estimator and the cross-platform overlap use
nothing but measured bitstrings: the unitary matrices never appear, which is
what makes these estimators robust to miscalibrated rotations.  Direct
fidelity estimation importance-samples the target state's Pauli spectrum and
reuses a single randomized-measurement dataset for every sampled observable.
The OTOC protocol correlates expectation values of two experiments that share
the same randomized initial states.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import MeasurementDataset
from .ensembles import EnsembleSpec, sample_setting, setting_seed
from .errors import (
    ConfigError,
    NoCompatibleSettingsError,
    ProtocolViolationError,
    SizeCapError,
)
from .hammodels import hamiltonian_from_spec, hamiltonian_to_spec
from .pauli import PauliString, all_pauli_strings
from .sim import (
    HamiltonianSpec,
    PureState,
    heisenberg,
    pauli_apply,
    pauli_expectation_pure,
)
from .shadows import EstimateWithError, _jackknife_se, _mean_estimate, dense_snapshot_sums
from .util import chunk_ranges

MAX_HAMMING_SUBSYSTEM = 14
MAX_DFE_QUBITS = 8


def _packed_subsystem(ds: MeasurementDataset, qs: list[int]) -> np.ndarray:
    """(M, K) packed outcomes restricted to the subsystem bits."""
    packed = np.zeros_like(ds.shots)
    for j, q in enumerate(qs):
        packed |= ((ds.shots >> np.uint64(q)) & np.uint64(1)) << np.uint64(j)
    return packed


def purity_hamming(ds: MeasurementDataset, qubits: Sequence[int]) -> EstimateWithError:
    """Second-moment estimator from pairwise Hamming distances of same-setting shots.

    Per setting, averages 2^|A| (-2)^{-D} over ordered shot pairs k != k',
    then averages over settings.  Depends only on bitstrings.
    """
    qs = sorted(set(qubits))
    if not qs:
        raise ConfigError("empty subsystem")
    if any(q < 0 or q >= ds.n_qubits for q in qs):
        raise ConfigError("subsystem outside register")
    if len(qs) > MAX_HAMMING_SUBSYSTEM:
        raise SizeCapError(f"Hamming purity capped at {MAX_HAMMING_SUBSYSTEM} qubits")
    if ds.k_shots < 2:
        raise ConfigError("Hamming purity needs at least two shots per setting")
    a = len(qs)
    packed = _packed_subsystem(ds, qs)
    kernel = (-2.0) ** -np.arange(a + 1)
    k = ds.k_shots
    per_setting = np.empty(ds.m_settings)
    for rows in chunk_ranges(ds.m_settings, max(1, (1 << 22) // (k * k))):
        block = packed[rows.start:rows.stop]
        dist = np.bitwise_count(block[:, :, None] ^ block[:, None, :])
        vals = kernel[dist].sum(axis=(1, 2)) - k  # drop the k == k' diagonal
        per_setting[rows.start:rows.stop] = vals * (2.0**a / (k * (k - 1)))
    return _mean_estimate(per_setting)


# ----------------------------------------------------------------------
# cross-platform overlap and fidelity


def _check_paired(ds1: MeasurementDataset, ds2: MeasurementDataset) -> None:
    if ds1.master_seed != ds2.master_seed:
        raise ProtocolViolationError("datasets were not acquired from a shared seed")
    if ds1.ensemble_kind != ds2.ensemble_kind:
        raise ProtocolViolationError("datasets use different ensembles")
    if ds1.n_qubits != ds2.n_qubits:
        raise ProtocolViolationError("datasets have different register sizes")
    if not np.array_equal(ds1.setting_indices, ds2.setting_indices):
        raise ProtocolViolationError("datasets cover different setting indices")


def cross_overlap(ds1: MeasurementDataset, ds2: MeasurementDataset,
                  qubits: Sequence[int], method: str = "bitstring") -> EstimateWithError:
    """Estimate tr(rho1 rho2) from two datasets sharing the same settings.

    ``bitstring`` correlates same-setting shots across the two devices with
    the 2^|A| (-2)^{-D} kernel (all K1*K2 pairs; devices are independent, so
    no diagonal exclusion).  ``shadow`` pairs snapshots across different
    settings, tr(rho1_hat^m rho2_hat^m'), m != m'.  Both are unbiased; their
    agreement is part of the release tests.
    """
    _check_paired(ds1, ds2)
    qs = sorted(set(qubits))
    if not qs:
        raise ConfigError("empty subsystem")
    a = len(qs)
    m = ds1.m_settings
    if method == "bitstring":
        if a > MAX_HAMMING_SUBSYSTEM:
            raise SizeCapError("bitstring overlap capped at 14 qubits")
        p1 = _packed_subsystem(ds1, qs)
        p2 = _packed_subsystem(ds2, qs)
        kernel = (-2.0) ** -np.arange(a + 1)
        k1, k2 = ds1.k_shots, ds2.k_shots
        per_setting = np.empty(m)
        for rows in chunk_ranges(m, max(1, (1 << 22) // (k1 * k2))):
            d = np.bitwise_count(p1[rows.start:rows.stop, :, None]
                                 ^ p2[rows.start:rows.stop, None, :])
            per_setting[rows.start:rows.stop] = \
                kernel[d].sum(axis=(1, 2)) * (2.0**a / (k1 * k2))
        return _mean_estimate(per_setting)
    if method == "shadow":
        if m < 2:
            raise ConfigError("shadow overlap needs at least two settings")
        if a > 8:
            raise SizeCapError("shadow overlap capped at 8 qubits")
        d = 2**a
        s1 = np.zeros((d, d), dtype=complex)
        s2 = np.zeros((d, d), dtype=complex)
        diag = np.empty(m)
        r1_all = np.empty((m, d, d), dtype=complex)
        r2_all = np.empty((m, d, d), dtype=complex)
        for rows, r in dense_snapshot_sums(ds1, qs):
            r1_all[rows.start:rows.stop] = r
            s1 += r.sum(axis=0)
        for rows, r in dense_snapshot_sums(ds2, qs):
            r2_all[rows.start:rows.stop] = r
            s2 += r.sum(axis=0)
        diag = np.real(np.einsum("mab,mba->m", r1_all, r2_all))
        num = float(np.real(np.sum(s1 * s2.T))) - diag.sum()
        value = num / (m * (m - 1))
        cross1 = np.real(np.einsum("mab,ba->m", r1_all, s2))
        cross2 = np.real(np.einsum("ab,mba->m", s1, r2_all))
        loo = (num - cross1 - cross2 + 2 * diag) / ((m - 1) * (m - 2))
        return EstimateWithError(value, _jackknife_se(loo), m, "u-stat/jackknife")
    raise ConfigError(f"unknown overlap method {method!r}")


def fmax(ds1: MeasurementDataset, ds2: MeasurementDataset,
         qubits: Sequence[int]) -> EstimateWithError:
    """Mixed-state fidelity: overlap over the larger of the two purities."""
    overlap = cross_overlap(ds1, ds2, qubits)
    pur1 = purity_hamming(ds1, qubits)
    pur2 = purity_hamming(ds2, qubits)
    bigger = pur1 if pur1.value >= pur2.value else pur2
    flags: tuple[str, ...] = ()
    if bigger.value <= 0:
        return EstimateWithError(float("nan"), float("nan"), overlap.n_samples,
                                 "ratio/delta", ("nonpositive-denominator",))
    value = overlap.value / bigger.value
    var = overlap.std_error**2 / bigger.value**2 \
        + overlap.value**2 * bigger.std_error**2 / bigger.value**4
    if not -0.1 <= value <= 1.1:
        flags = ("out-of-range",)
    return EstimateWithError(float(value), float(math.sqrt(var)),
                             overlap.n_samples, "ratio/delta", flags)


# ----------------------------------------------------------------------
# direct fidelity estimation


@dataclass(frozen=True)
class DfePlan:
    """Importance-sampling plan over the target state's Pauli spectrum.

    ``paulis`` are the distinct sampled strings, ``counts`` their draw
    multiplicities (summing to ``l_samples``), ``targets`` the exact target
    expectations tr(W psi) whose squares (over 2^N) form the sampling law.
    """

    n_qubits: int
    target_label: str
    paulis: tuple[PauliString, ...]
    targets: tuple[float, ...]
    counts: tuple[int, ...]
    l_samples: int
    seed: int

    def to_json(self) -> str:
        return json.dumps({
            "schema": "rmdfe/1",
            "n": self.n_qubits,
            "target": self.target_label,
            "seed": self.seed,
            "l": self.l_samples,
            "terms": [[str(p), t, c] for p, t, c in
                      zip(self.paulis, self.targets, self.counts)],
        }, separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DfePlan":
        d = json.loads(text)
        if d.get("schema") != "rmdfe/1":
            raise ConfigError("not a DFE plan document")
        paulis, targets, counts = [], [], []
        for s, t, c in d["terms"]:
            paulis.append(PauliString.from_string(s, int(d["n"])))
            targets.append(float(t))
            counts.append(int(c))
        return cls(int(d["n"]), d["target"], tuple(paulis), tuple(targets),
                   tuple(counts), int(d["l"]), int(d["seed"]))


def dfe_plan(target: PureState, l_samples: int, seed: int,
             label: str = "target") -> DfePlan:
    """Sample L Pauli strings with probability proportional to tr(W psi)^2.

    The dense Pauli decomposition costs 8^N, capped at 8 qubits.  For a
    normalized pure target the squared normalized coefficients sum to one,
    so they are a probability law; coefficients below 1e-12 are unsampleable
    and need no ratio guard.
    """
    n = target.n_qubits
    if n > MAX_DFE_QUBITS:
        raise SizeCapError(f"DFE decomposition capped at {MAX_DFE_QUBITS} qubits")
    if l_samples < 1:
        raise ConfigError("need at least one sample")
    paulis = all_pauli_strings(n, include_identity=True)
    t = np.array([pauli_expectation_pure(p, target.amplitudes) for p in paulis])
    probs = t**2 / 2**n
    total = probs.sum()
    if abs(total - 1.0) > 1e-8:
        raise ConfigError("target state is not normalized")
    support = np.where(np.abs(t) > 1e-12)[0]
    rng = np.random.default_rng(np.uint64(seed))
    draws = rng.choice(support, size=l_samples, p=probs[support] / probs[support].sum())
    idx, counts = np.unique(draws, return_counts=True)
    return DfePlan(
        n_qubits=n,
        target_label=label,
        paulis=tuple(paulis[i] for i in idx),
        targets=tuple(float(t[i]) for i in idx),
        counts=tuple(int(c) for c in counts),
        l_samples=l_samples,
        seed=seed,
    )


def dfe_estimate(plan: DfePlan, ds: MeasurementDataset) -> EstimateWithError:
    """Fidelity tr(psi rho) as the importance-weighted mean of ratio estimates.

    Each sampled Pauli contributes (estimated expectation)/(target
    expectation); terms whose Pauli has no compatible setting are flagged and
    the estimate reports the effective sample count.
    """
    if plan.n_qubits != ds.n_qubits:
        raise ConfigError("plan and dataset sizes differ")
    value = 0.0
    var = 0.0
    effective = 0
    flags: list[str] = []
    for p, t, c in zip(plan.paulis, plan.targets, plan.counts):
        try:
            ds_est = _predict(ds, p)
        except NoCompatibleSettingsError:
            flags.append(f"no-data:{p}")
            continue
        wgt = c / plan.l_samples
        value += wgt * ds_est.value / t
        var += (wgt * ds_est.std_error / t) ** 2
        effective += c
    if effective == 0:
        return EstimateWithError(float("nan"), float("nan"), 0,
                                 "importance-ratio", tuple(flags))
    # renormalize to the weight that actually contributed
    scale = plan.l_samples / effective
    return EstimateWithError(float(value * scale), float(math.sqrt(var) * scale),
                             effective, "importance-ratio", tuple(flags))


def _predict(ds: MeasurementDataset, p: PauliString):
    from .shadows import predict_pauli

    return predict_pauli(ds, p)


# ----------------------------------------------------------------------
# OTOC twin-experiment protocol


@dataclass(frozen=True)
class OtocRun:
    """Paired expectation lists of the two OTOC experiments.

    Experiment 1 measures W(t) on a randomized initial state; experiment 2
    applies the probe V first.  Rows of ``exp1``/``exp2`` are times, columns
    settings; both columns of a pair share the same initial state.

    ``initial`` is "global_haar" (Haar-random state vectors, for which the
    correlation-to-OTOC mapping is exact) or "local" (product of single-qubit
    unitaries on |0..0>, which reweights Pauli components of W(t) by 3^{-w}
    and is kept for protocol studies).
    """

    hamiltonian: HamiltonianSpec
    w_op: PauliString
    v_op: PauliString
    times: tuple[float, ...]
    m_settings: int
    seed: int
    initial: str
    exp1: np.ndarray
    exp2: np.ndarray

    def to_json(self) -> str:
        return json.dumps({
            "schema": "rmotoc/1",
            "hamiltonian": hamiltonian_to_spec(self.hamiltonian),
            "w": str(self.w_op),
            "v": str(self.v_op),
            "times": list(self.times),
            "m": self.m_settings,
            "seed": self.seed,
            "initial": self.initial,
            "exp1": [[float(x) for x in row] for row in self.exp1],
            "exp2": [[float(x) for x in row] for row in self.exp2],
        }, separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "OtocRun":
        d = json.loads(text)
        if d.get("schema") != "rmotoc/1":
            raise ConfigError("not an OTOC run document")
        h = hamiltonian_from_spec(d["hamiltonian"])
        return cls(
            hamiltonian=h,
            w_op=PauliString.from_string(d["w"], h.n_qubits),
            v_op=PauliString.from_string(d["v"], h.n_qubits),
            times=tuple(d["times"]),
            m_settings=int(d["m"]),
            seed=int(d["seed"]),
            initial=d["initial"],
            exp1=np.array(d["exp1"]),
            exp2=np.array(d["exp2"]),
        )


def otoc_run(h: HamiltonianSpec, w_op: PauliString, v_op: PauliString,
             times: Sequence[float], m: int, seed: int,
             ensemble: Optional[EnsembleSpec] = None) -> OtocRun:
    """Run both OTOC experiments at expectation level over M initial states.

    With ``ensemble=None`` the initial states are Haar-random vectors on the
    full register; passing a local EnsembleSpec instead randomizes |0..0> by
    a product of single-qubit unitaries.
    """
    n = h.n_qubits
    if w_op.n_qubits != n or v_op.n_qubits != n:
        raise ConfigError("operators and Hamiltonian sizes differ")
    if m < 2:
        raise ConfigError("need at least two settings")
    if not w_op.is_hermitian() or not v_op.is_hermitian():
        raise ConfigError("W and V must be Hermitian (±1) Paulis")
    dim = 2**n
    initial = "global_haar" if ensemble is None else "local"
    if ensemble is not None and ensemble.n_qubits != n:
        raise ConfigError("ensemble register size differs")
    wts = [heisenberg(w_op, h, float(t)) for t in times]
    exp1 = np.empty((len(times), m))
    exp2 = np.empty((len(times), m))
    for i in range(m):
        if ensemble is None:
            rng = np.random.default_rng(setting_seed(seed, i))
            psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
            psi /= np.linalg.norm(psi)
        else:
            us = sample_setting(ensemble, seed, i).unitaries
            psi = np.array([1.0], dtype=complex)
            for q in range(n):
                psi = np.kron(us[q][:, 0], psi)
        psi_v = pauli_apply(v_op, psi)
        for it, wt in enumerate(wts):
            exp1[it, i] = np.real(np.vdot(psi, wt @ psi))
            exp2[it, i] = np.real(np.vdot(psi_v, wt @ psi_v))
    return OtocRun(
        hamiltonian=h, w_op=w_op, v_op=v_op, times=tuple(float(t) for t in times),
        m_settings=m, seed=seed, initial=initial, exp1=exp1, exp2=exp2,
    )


def otoc_estimate(run: OtocRun) -> list[EstimateWithError]:
    """Per-time ratio mean[<W>1 <W>2] / mean[<W>1^2], jackknife error bars."""
    out = []
    m = run.m_settings
    for it in range(len(run.times)):
        num = run.exp1[it] * run.exp2[it]
        den = run.exp1[it] ** 2
        den_sum = den.sum()
        flags: tuple[str, ...] = ()
        if den_sum <= m * 1e-12:
            out.append(EstimateWithError(float("nan"), float("nan"), m,
                                         "ratio/jackknife", ("vanishing-denominator",)))
            continue
        value = num.sum() / den_sum
        loo = (num.sum() - num) / (den_sum - den)
        out.append(EstimateWithError(float(value), _jackknife_se(loo), m,
                                     "ratio/jackknife", flags))
    return out
