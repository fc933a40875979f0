"""Acquisition and persistence of randomized-measurement records.

A dataset is the durable artifact every estimator consumes: M settings, each
with K packed bitstring outcomes.  On disk it is line-delimited JSON
(schema "rmds/1"): one header line, then one line per setting, ordered by
setting index.  Bit 0 of a shot hex string is qubit 0.

Estimators never read the optional state-description field; it is provenance
only, so postprocessing demonstrably works from measurement data alone.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Sequence

import numpy as np

from .ensembles import (
    CLIFFORD_MEAS_LETTER,
    CLIFFORD_MEAS_SIGN,
    CLIFFORD_TABLE,
    EnsembleSpec,
    LocalUnitarySetting,
    sample_setting,
    shot_seed,
)
from .errors import (
    ConfigError,
    DatasetIOError,
    InvariantViolationError,
    SchemaVersionError,
)
from .pauli import BasisString
from .sim import State, born_sample
from .util import parallel_chunks

SCHEMA = "rmds/1"

_LETTER_CODE = {"X": 0, "Y": 1, "Z": 2}
_LETTER_NAME = "XYZ"


@dataclass(frozen=True)
class MeasurementRecord:
    """One setting index, its local unitaries, and its K outcomes (packed bits)."""

    m: int
    setting: LocalUnitarySetting
    outcomes: np.ndarray

    @property
    def k(self) -> int:
        return len(self.outcomes)


@dataclass(frozen=True)
class MeasurementDataset:
    """Columnar store of M measurement records sharing N and K.

    ``shots`` is a (M, K) uint64 array of packed outcomes.  For the Clifford
    ensemble, ``letters``/``signs``/``table_indices`` are (M, N) arrays with
    the measured signed Pauli per qubit; for the Haar ensemble ``unitaries``
    is (M, N, 2, 2).  Setting indices are unique and ascending; acquisition
    always produces the contiguous range 0..M-1, restriction and splitting
    preserve the original indices.
    """

    n_qubits: int
    k_shots: int
    ensemble_kind: str
    master_seed: int
    setting_indices: np.ndarray
    shots: np.ndarray
    seeds: np.ndarray
    letters: Optional[np.ndarray] = None
    signs: Optional[np.ndarray] = None
    table_indices: Optional[np.ndarray] = None
    unitaries: Optional[np.ndarray] = None
    state_description: Optional[str] = None

    @property
    def m_settings(self) -> int:
        return len(self.setting_indices)

    @property
    def is_clifford(self) -> bool:
        return self.ensemble_kind == "single_qubit_clifford"

    def __post_init__(self):
        m = len(self.setting_indices)
        if self.shots.shape != (m, self.k_shots):
            raise InvariantViolationError("shots array shape mismatch")
        idx = self.setting_indices
        if m and (np.any(np.diff(idx) <= 0)):
            raise InvariantViolationError("setting indices must be unique and ascending")
        if self.is_clifford:
            if self.letters is None or self.signs is None or self.table_indices is None:
                raise InvariantViolationError("Clifford dataset missing basis columns")
        elif self.unitaries is None:
            raise InvariantViolationError("Haar dataset missing unitary column")

    # -- record-level view ---------------------------------------------

    def setting(self, row: int) -> LocalUnitarySetting:
        m = int(self.setting_indices[row])
        if self.is_clifford:
            idx = self.table_indices[row]
            return LocalUnitarySetting(
                m=m,
                kind=self.ensemble_kind,
                unitaries=CLIFFORD_TABLE[idx],
                seed=int(self.seeds[row]),
                basis=BasisString(tuple(_LETTER_NAME[c] for c in self.letters[row])),
                basis_signs=tuple(int(s) for s in self.signs[row]),
                table_indices=tuple(int(i) for i in idx),
            )
        return LocalUnitarySetting(
            m=m, kind=self.ensemble_kind, unitaries=self.unitaries[row],
            seed=int(self.seeds[row]),
        )

    def record(self, row: int) -> MeasurementRecord:
        return MeasurementRecord(
            m=int(self.setting_indices[row]),
            setting=self.setting(row),
            outcomes=self.shots[row],
        )

    def __iter__(self) -> Iterator[MeasurementRecord]:
        return (self.record(i) for i in range(self.m_settings))

    def setting_unitaries(self, row: int) -> np.ndarray:
        if self.is_clifford:
            return CLIFFORD_TABLE[self.table_indices[row]]
        return self.unitaries[row]

    def all_unitaries(self) -> np.ndarray:
        """(M, N, 2, 2) stack of the applied unitaries."""
        if self.is_clifford:
            return CLIFFORD_TABLE[self.table_indices]
        return self.unitaries

    def shot_bits(self, qubits: Sequence[int]) -> np.ndarray:
        """(M, K, len(qubits)) array of outcome bits for selected qubits."""
        qs = np.asarray(list(qubits), dtype=np.uint64)
        return ((self.shots[:, :, None] >> qs) & np.uint64(1)).astype(np.int8)

    def digest(self) -> str:
        """SHA-256 of the canonical serialized form."""
        h = hashlib.sha256()
        for line in _serialize_lines(self):
            h.update(line.encode())
            h.update(b"\n")
        return "sha256:" + h.hexdigest()


# ----------------------------------------------------------------------
# acquisition


def acquire(state: State, e: EnsembleSpec, m: int, k: int, master_seed: int,
            state_description: Optional[str] = None,
            threads: int = 1, device: int = 0) -> MeasurementDataset:
    """Run the measure-first protocol: M settings x K shots, fully seeded.

    Each setting's unitaries and outcomes derive from (master_seed, m) alone,
    so the result is independent of chunking and thread count.  ``device``
    decouples the outcome randomness of separate devices that replay the
    same settings, which is what two-dataset protocols assume.
    """
    if m < 1 or k < 1:
        raise ConfigError("need at least one setting and one shot")
    if e.n_qubits != state.n_qubits:
        raise ConfigError("ensemble and state register sizes differ")
    n = e.n_qubits

    def work(rows: range):
        out_shots = np.empty((len(rows), k), dtype=np.uint64)
        settings = []
        for i, mm in enumerate(rows):
            setting = sample_setting(e, master_seed, mm)
            out_shots[i] = born_sample(
                state, setting, k, int(shot_seed(master_seed, mm, device))
            )
            settings.append(setting)
        return settings, out_shots

    results = parallel_chunks(work, range(m), threads=threads, chunk=64)
    settings = [s for chunk_settings, _ in results for s in chunk_settings]
    shots = np.concatenate([s for _, s in results], axis=0)

    seeds = np.array([s.seed for s in settings], dtype=np.uint64)
    base = dict(
        n_qubits=n, k_shots=k, ensemble_kind=e.kind, master_seed=master_seed,
        setting_indices=np.arange(m, dtype=np.int64), shots=shots, seeds=seeds,
        state_description=state_description,
    )
    if e.kind == "single_qubit_clifford":
        table = np.array([s.table_indices for s in settings], dtype=np.int16)
        return MeasurementDataset(
            **base,
            letters=CLIFFORD_MEAS_LETTER[table].astype(np.int8),
            signs=CLIFFORD_MEAS_SIGN[table].astype(np.int8),
            table_indices=table,
        )
    return MeasurementDataset(**base, unitaries=np.stack([s.unitaries for s in settings]))


# ----------------------------------------------------------------------
# serialization


def _hex_width(n_qubits: int) -> int:
    return (n_qubits + 3) // 4


def _serialize_lines(ds: MeasurementDataset) -> Iterator[str]:
    header = {
        "schema": SCHEMA,
        "n": ds.n_qubits,
        "m": ds.m_settings,
        "k": ds.k_shots,
        "ensemble": {"kind": ds.ensemble_kind},
        "seed": ds.master_seed,
    }
    if ds.state_description is not None:
        header["state"] = ds.state_description
    yield json.dumps(header, separators=(",", ":"), sort_keys=True)
    width = _hex_width(ds.n_qubits)
    for row in range(ds.m_settings):
        if ds.is_clifford:
            per_qubit = [
                [_LETTER_NAME[ds.letters[row, q]], int(ds.signs[row, q]),
                 int(ds.table_indices[row, q])]
                for q in range(ds.n_qubits)
            ]
        else:
            per_qubit = [
                [float(x) for pair in
                 ((ds.unitaries[row, q, i, j].real, ds.unitaries[row, q, i, j].imag)
                  for i in range(2) for j in range(2))
                 for x in pair]
                for q in range(ds.n_qubits)
            ]
        rec = {
            "m": int(ds.setting_indices[row]),
            "seed": int(ds.seeds[row]),
            "setting": per_qubit,
            "shots": [format(int(s), f"0{width}x") for s in ds.shots[row]],
        }
        yield json.dumps(rec, separators=(",", ":"), sort_keys=True)


def write(ds: MeasurementDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for line in _serialize_lines(ds):
            f.write(line)
            f.write("\n")


def read(path) -> MeasurementDataset:
    """Load and validate a dataset file; all invariants are re-checked."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise DatasetIOError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise DatasetIOError(f"{path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetIOError(f"malformed header: {exc}") from exc
    if header.get("schema") != SCHEMA:
        raise SchemaVersionError(
            f"unsupported schema {header.get('schema')!r}, expected {SCHEMA}"
        )
    n, m, k = int(header["n"]), int(header["m"]), int(header["k"])
    kind = header["ensemble"]["kind"]
    if len(lines) - 1 != m:
        raise InvariantViolationError(
            f"header claims {m} records, file has {len(lines) - 1}"
        )
    width = _hex_width(n)
    indices = np.empty(m, dtype=np.int64)
    seeds = np.empty(m, dtype=np.uint64)
    shots = np.empty((m, k), dtype=np.uint64)
    clifford = kind == "single_qubit_clifford"
    letters = np.empty((m, n), dtype=np.int8) if clifford else None
    signs = np.empty((m, n), dtype=np.int8) if clifford else None
    table = np.empty((m, n), dtype=np.int16) if clifford else None
    unitaries = np.empty((m, n, 2, 2), dtype=complex) if not clifford else None
    for row, line in enumerate(lines[1:]):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetIOError(f"malformed record on line {row + 2}: {exc}") from exc
        try:
            indices[row] = rec["m"]
            seeds[row] = rec["seed"]
            per_qubit = rec["setting"]
            raw_shots = rec["shots"]
        except KeyError as exc:
            raise DatasetIOError(f"record on line {row + 2} missing field {exc}") from exc
        if len(per_qubit) != n:
            raise InvariantViolationError(f"record {row} has wrong qubit count")
        if len(raw_shots) != k:
            raise InvariantViolationError(f"record {row} has wrong shot count")
        for s_i, s in enumerate(raw_shots):
            if len(s) != width:
                raise InvariantViolationError(f"record {row} shot {s_i} has wrong width")
            val = int(s, 16)
            if val >> n:
                raise InvariantViolationError(f"record {row} shot {s_i} has stray bits")
            shots[row, s_i] = val
        if clifford:
            for q, entry in enumerate(per_qubit):
                letter, sign, t_idx = entry
                if letter not in _LETTER_CODE or sign not in (-1, 1) \
                        or not 0 <= int(t_idx) < 24:
                    raise InvariantViolationError(f"record {row} qubit {q} bad setting")
                if _LETTER_CODE[letter] != CLIFFORD_MEAS_LETTER[int(t_idx)] \
                        or sign != CLIFFORD_MEAS_SIGN[int(t_idx)]:
                    raise InvariantViolationError(
                        f"record {row} qubit {q} basis inconsistent with table index"
                    )
                letters[row, q] = _LETTER_CODE[letter]
                signs[row, q] = sign
                table[row, q] = int(t_idx)
        else:
            for q, entry in enumerate(per_qubit):
                if len(entry) != 8:
                    raise InvariantViolationError(f"record {row} qubit {q} bad setting")
                vals = [complex(entry[2 * i], entry[2 * i + 1]) for i in range(4)]
                u = np.array(vals).reshape(2, 2)
                if np.max(np.abs(u @ u.conj().T - np.eye(2))) > 1e-9:
                    raise InvariantViolationError(
                        f"record {row} qubit {q} is not unitary"
                    )
                unitaries[row, q] = u
    return MeasurementDataset(
        n_qubits=n, k_shots=k, ensemble_kind=kind,
        master_seed=int(header["seed"]),
        setting_indices=indices, shots=shots, seeds=seeds,
        letters=letters, signs=signs, table_indices=table, unitaries=unitaries,
        state_description=header.get("state"),
    )


# ----------------------------------------------------------------------
# postprocessing-side dataset surgery


def restrict(ds: MeasurementDataset, qubits: Sequence[int]) -> MeasurementDataset:
    """Project settings and outcomes onto a qubit subset (relabeled 0..|A|-1)."""
    qs = sorted(set(qubits))
    if not qs:
        raise ConfigError("cannot restrict to an empty subsystem")
    if any(q < 0 or q >= ds.n_qubits for q in qs):
        raise ConfigError("subsystem outside register")
    bits = ds.shot_bits(qs)
    packed = np.zeros_like(ds.shots)
    for j in range(len(qs)):
        packed |= bits[:, :, j].astype(np.uint64) << np.uint64(j)
    note = f"restricted to qubits {qs}"
    desc = ds.state_description
    desc = f"{desc}; {note}" if desc else note
    return replace(
        ds,
        n_qubits=len(qs),
        shots=packed,
        letters=None if ds.letters is None else ds.letters[:, qs],
        signs=None if ds.signs is None else ds.signs[:, qs],
        table_indices=None if ds.table_indices is None else ds.table_indices[:, qs],
        unitaries=None if ds.unitaries is None else ds.unitaries[:, qs],
        state_description=desc,
    )


def split(ds: MeasurementDataset, fractions: Sequence[float]) -> list[MeasurementDataset]:
    """Partition settings into consecutive blocks proportional to fractions."""
    if not fractions or any(f <= 0 for f in fractions):
        raise ConfigError("fractions must be positive")
    total = float(sum(fractions))
    m = ds.m_settings
    bounds = [0]
    acc = 0.0
    for f in fractions[:-1]:
        acc += f / total
        bounds.append(int(round(acc * m)))
    bounds.append(m)
    out = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi <= lo:
            raise ConfigError("a split block came out empty")
        out.append(_take_rows(ds, slice(lo, hi)))
    return out


def concatenate(parts: Sequence[MeasurementDataset]) -> MeasurementDataset:
    """Reassemble split blocks; setting indices must stay unique and ascending."""
    if not parts:
        raise ConfigError("nothing to concatenate")
    first = parts[0]
    for p in parts[1:]:
        if (p.n_qubits, p.k_shots, p.ensemble_kind, p.master_seed) != (
            first.n_qubits, first.k_shots, first.ensemble_kind, first.master_seed,
        ):
            raise ConfigError("split blocks disagree on header fields")
    cat = lambda get: None if get(first) is None else np.concatenate(
        [get(p) for p in parts], axis=0
    )
    return replace(
        first,
        setting_indices=np.concatenate([p.setting_indices for p in parts]),
        shots=np.concatenate([p.shots for p in parts], axis=0),
        seeds=np.concatenate([p.seeds for p in parts]),
        letters=cat(lambda p: p.letters),
        signs=cat(lambda p: p.signs),
        table_indices=cat(lambda p: p.table_indices),
        unitaries=cat(lambda p: p.unitaries),
    )


def _take_rows(ds: MeasurementDataset, rows) -> MeasurementDataset:
    take = lambda a: None if a is None else a[rows]
    return replace(
        ds,
        setting_indices=ds.setting_indices[rows],
        shots=ds.shots[rows],
        seeds=ds.seeds[rows],
        letters=take(ds.letters),
        signs=take(ds.signs),
        table_indices=take(ds.table_indices),
        unitaries=take(ds.unitaries),
    )


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()
