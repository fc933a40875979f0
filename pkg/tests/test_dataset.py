"""Dataset acquisition, persistence, and surgery."""

import json

import numpy as np
import pytest

from randmeas.dataset import (
    MeasurementDataset,
    acquire,
    concatenate,
    file_digest,
    read,
    restrict,
    split,
    write,
)
from randmeas.ensembles import EnsembleSpec
from randmeas.errors import (
    ConfigError,
    DatasetIOError,
    InvariantViolationError,
    SchemaVersionError,
)
from randmeas.sim import prepare


@pytest.fixture
def small_ds():
    state = prepare({"kind": "ghz", "n": 3})
    return acquire(state, EnsembleSpec("single_qubit_clifford", 3), m=40, k=5,
                   master_seed=11, state_description="ghz n=3")


@pytest.fixture
def haar_ds():
    state = prepare({"kind": "ghz", "n": 2})
    return acquire(state, EnsembleSpec("single_qubit_haar", 2), m=12, k=3,
                   master_seed=4)


class TestAcquire:
    def test_shapes(self, small_ds):
        assert small_ds.m_settings == 40
        assert small_ds.shots.shape == (40, 5)
        assert small_ds.letters.shape == (40, 3)

    def test_deterministic_across_threads(self):
        state = prepare({"kind": "neel", "n": 4})
        e = EnsembleSpec("single_qubit_clifford", 4)
        a = acquire(state, e, m=150, k=3, master_seed=7, threads=1)
        b = acquire(state, e, m=150, k=3, master_seed=7, threads=8)
        assert np.array_equal(a.shots, b.shots)
        assert np.array_equal(a.table_indices, b.table_indices)

    def test_single_setting_supported(self):
        state = prepare({"kind": "ghz", "n": 2})
        ds = acquire(state, EnsembleSpec("single_qubit_clifford", 2), m=1, k=30,
                     master_seed=2)
        assert ds.m_settings == 1 and ds.k_shots == 30

    def test_zero_state_z_slots_deterministic(self):
        # |0..0> measured in a (signed) Z slot always yields eigenvalue +1,
        # i.e. bit 0 when the recorded sign is +1 and bit 1 when it is -1
        state = prepare({"kind": "computational", "n": 3, "bits": "000"})
        ds = acquire(state, EnsembleSpec("single_qubit_clifford", 3), m=200, k=4,
                     master_seed=5)
        bits = ds.shot_bits(range(3))
        eigs = ds.signs[:, None, :] * (1 - 2 * bits)
        z_slots = np.broadcast_to((ds.letters == 2)[:, None, :], eigs.shape)
        assert np.all(eigs[z_slots] == 1)
        assert not np.all(bits[z_slots] == 0)  # negative-sign slots flip the raw bit

    def test_vignette_shape(self):
        state = prepare({"kind": "neel", "n": 4})
        ds = acquire(state, EnsembleSpec("single_qubit_haar", 4), m=20, k=15,
                     master_seed=1)
        assert ds.unitaries.shape == (20, 4, 2, 2)

    def test_rejects_bad_params(self):
        state = prepare({"kind": "ghz", "n": 2})
        with pytest.raises(ConfigError):
            acquire(state, EnsembleSpec("single_qubit_clifford", 2), m=0, k=1,
                    master_seed=0)


class TestRoundTrip:
    @pytest.mark.parametrize("fixture", ["small_ds", "haar_ds"])
    def test_lossless(self, fixture, request, tmp_path):
        ds = request.getfixturevalue(fixture)
        path = tmp_path / "data.rmds"
        write(ds, path)
        again = read(path)
        assert np.array_equal(again.shots, ds.shots)
        assert again.digest() == ds.digest()
        if ds.is_clifford:
            assert np.array_equal(again.table_indices, ds.table_indices)
        else:
            assert np.array_equal(again.unitaries, ds.unitaries)

    def test_byte_identical_rewrite(self, small_ds, tmp_path):
        p1, p2 = tmp_path / "a.rmds", tmp_path / "b.rmds"
        write(small_ds, p1)
        write(read(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert file_digest(p1) == file_digest(p2)

    def test_state_description_round_trips(self, small_ds, tmp_path):
        path = tmp_path / "d.rmds"
        write(small_ds, path)
        assert read(path).state_description == "ghz n=3"


class TestReadValidation:
    def test_truncated_file(self, small_ds, tmp_path):
        path = tmp_path / "t.rmds"
        write(small_ds, path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-3]) + "\n")
        with pytest.raises(InvariantViolationError):
            read(path)

    def test_garbage_line(self, small_ds, tmp_path):
        path = tmp_path / "g.rmds"
        write(small_ds, path)
        txt = path.read_text().splitlines()
        txt[3] = txt[3][: len(txt[3]) // 2]
        path.write_text("\n".join(txt) + "\n")
        with pytest.raises(DatasetIOError):
            read(path)

    def test_schema_gate(self, small_ds, tmp_path):
        path = tmp_path / "s.rmds"
        write(small_ds, path)
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        header["schema"] = "rmds/99"
        lines[0] = json.dumps(header, separators=(",", ":"), sort_keys=True)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaVersionError):
            read(path)

    def test_header_count_mismatch(self, small_ds, tmp_path):
        path = tmp_path / "c.rmds"
        write(small_ds, path)
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        header["m"] = 99
        lines[0] = json.dumps(header, separators=(",", ":"), sort_keys=True)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(InvariantViolationError):
            read(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetIOError):
            read(tmp_path / "nope.rmds")


class TestRestrict:
    def test_full_register_identity(self, small_ds):
        r = restrict(small_ds, [0, 1, 2])
        assert np.array_equal(r.shots, small_ds.shots)
        assert r.n_qubits == 3

    def test_single_qubit(self, small_ds):
        r = restrict(small_ds, [1])
        assert r.n_qubits == 1
        assert set(np.unique(r.shots)) <= {0, 1}
        expect = (small_ds.shots >> np.uint64(1)) & np.uint64(1)
        assert np.array_equal(r.shots, expect)

    def test_columns_follow(self, small_ds):
        r = restrict(small_ds, [0, 2])
        assert np.array_equal(r.letters, small_ds.letters[:, [0, 2]])

    def test_empty_rejected(self, small_ds):
        with pytest.raises(ConfigError):
            restrict(small_ds, [])


class TestSplit:
    def test_even_split_preserves_shape(self, small_ds):
        a, b = split(small_ds, [0.5, 0.5])
        assert a.m_settings == b.m_settings == 20
        assert a.k_shots == b.k_shots == 5
        assert a.n_qubits == b.n_qubits == 3

    def test_disjoint_indices(self, small_ds):
        a, b = split(small_ds, [0.5, 0.5])
        assert not set(a.setting_indices) & set(b.setting_indices)

    def test_union_restores_file(self, small_ds, tmp_path):
        parts = split(small_ds, [0.3, 0.3, 0.4])
        again = concatenate(parts)
        p1, p2 = tmp_path / "o.rmds", tmp_path / "u.rmds"
        write(small_ds, p1)
        write(again, p2)
        assert p1.read_bytes() == p2.read_bytes()
