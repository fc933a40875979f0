"""Bitstring and two-dataset protocols against oracles."""

import numpy as np
import pytest

from randmeas.dataset import acquire
from randmeas.ensembles import EnsembleSpec
from randmeas.errors import ConfigError, ProtocolViolationError
from randmeas.hammodels import build_ising_chain
from randmeas.pauli import PauliString
from randmeas.protocols import (
    DfePlan,
    OtocRun,
    cross_overlap,
    dfe_estimate,
    dfe_plan,
    fmax,
    otoc_estimate,
    otoc_run,
    purity_hamming,
)
from randmeas.shadows import purity_shadow
from randmeas.sim import (
    DensityState,
    apply_noise,
    oracle_otoc,
    oracle_purity,
    prepare,
)

from conftest import random_density

CLIFF = "single_qubit_clifford"
HAAR = "single_qubit_haar"


def P(s):
    return PauliString.from_string(s)


def make_ds(state, kind=CLIFF, m=1000, k=10, seed=77):
    return acquire(state, EnsembleSpec(kind, state.n_qubits), m=m, k=k,
                   master_seed=seed)


class TestPurityHamming:
    def test_single_qubit_pure(self):
        state = prepare({"kind": "computational", "n": 1, "bits": "0"})
        est = purity_hamming(make_ds(state, m=1500, k=20, seed=1), [0])
        assert abs(est.value - 1.0) < 4 * est.std_error

    def test_maximally_mixed_pair(self):
        state = prepare({"kind": "maximally_mixed", "n": 2})
        est = purity_hamming(make_ds(state, m=1500, k=20, seed=2), [0, 1])
        assert abs(est.value - 0.25) < 4 * est.std_error

    def test_ghz_half_chain(self):
        state = prepare({"kind": "ghz", "n": 6})
        est = purity_hamming(make_ds(state, m=800, k=30, seed=3), [0, 1, 2])
        assert abs(est.value - 0.5) < 4 * est.std_error

    def test_haar_ensemble_works_too(self):
        state = prepare({"kind": "ghz", "n": 3})
        ds = make_ds(state, kind=HAAR, m=800, k=20, seed=4)
        est = purity_hamming(ds, [0])
        assert abs(est.value - 0.5) < 4 * est.std_error

    def test_agrees_with_shadow_estimator_and_oracle(self, rng):
        state = DensityState(4, random_density(rng, 4))
        ds = make_ds(state, m=2000, k=10, seed=5)
        for sub in [[0, 1], [0, 2, 3]]:
            truth = oracle_purity(state, sub)
            ham = purity_hamming(ds, sub)
            sha = purity_shadow(ds, sub)
            assert abs(ham.value - truth) < 3 * ham.std_error + 0.01
            combined = np.hypot(ham.std_error, sha.std_error)
            assert abs(ham.value - sha.value) < 3 * combined + 0.01

    def test_needs_two_shots(self):
        state = prepare({"kind": "ghz", "n": 2})
        with pytest.raises(ConfigError):
            purity_hamming(make_ds(state, m=10, k=1, seed=6), [0])


class TestCrossOverlap:
    def test_identical_state_gives_purity(self, rng):
        state = DensityState(2, random_density(rng, 2))
        ds1 = acquire(state, EnsembleSpec(CLIFF, 2), m=1500, k=8, master_seed=7,
                      device=0)
        ds2 = acquire(state, EnsembleSpec(CLIFF, 2), m=1500, k=8, master_seed=7,
                      device=1)
        est = cross_overlap(ds1, ds2, [0, 1])
        assert abs(est.value - oracle_purity(state)) < 4 * est.std_error

    def test_orthogonal_states(self):
        a = prepare({"kind": "computational", "n": 2, "bits": "00"})
        b = prepare({"kind": "computational", "n": 2, "bits": "11"})
        ds1 = acquire(a, EnsembleSpec(CLIFF, 2), m=1500, k=6, master_seed=8)
        ds2 = acquire(b, EnsembleSpec(CLIFF, 2), m=1500, k=6, master_seed=8,
                      device=1)
        est = cross_overlap(ds1, ds2, [0, 1])
        assert abs(est.value) < 4 * est.std_error

    def test_pure_vs_depolarized_copy(self, rng):
        pure = prepare({"kind": "ghz", "n": 3})
        noisy = apply_noise(pure, {"kind": "depolarizing", "p": 0.3})
        ds1 = acquire(pure, EnsembleSpec(CLIFF, 3), m=2000, k=8, master_seed=9)
        ds2 = acquire(noisy, EnsembleSpec(CLIFF, 3), m=2000, k=8, master_seed=9,
                      device=1)
        truth = float(np.real(np.vdot(pure.amplitudes,
                                      noisy.matrix @ pure.amplitudes)))
        est = cross_overlap(ds1, ds2, [0, 1, 2])
        assert abs(est.value - truth) < 4 * est.std_error

    def test_symmetric_under_swap(self, rng):
        state = DensityState(2, random_density(rng, 2))
        ds1 = acquire(state, EnsembleSpec(CLIFF, 2), m=300, k=5, master_seed=10)
        noisy = apply_noise(state, {"kind": "bitflip", "p": 0.2})
        ds2 = acquire(noisy, EnsembleSpec(CLIFF, 2), m=300, k=5, master_seed=10,
                      device=1)
        ab = cross_overlap(ds1, ds2, [0, 1])
        ba = cross_overlap(ds2, ds1, [0, 1])
        assert ab.value == pytest.approx(ba.value, abs=1e-12)

    def test_shadow_method_agrees(self, rng):
        state = DensityState(2, random_density(rng, 2))
        noisy = apply_noise(state, {"kind": "depolarizing", "p": 0.2})
        ds1 = acquire(state, EnsembleSpec(CLIFF, 2), m=2000, k=4, master_seed=11)
        ds2 = acquire(noisy, EnsembleSpec(CLIFF, 2), m=2000, k=4, master_seed=11,
                      device=1)
        truth = float(np.real(np.trace(state.matrix @ noisy.matrix)))
        bit = cross_overlap(ds1, ds2, [0, 1], method="bitstring")
        sha = cross_overlap(ds1, ds2, [0, 1], method="shadow")
        assert abs(bit.value - truth) < 4 * bit.std_error
        assert abs(sha.value - truth) < 4 * sha.std_error

    def test_mismatched_seed_rejected(self):
        state = prepare({"kind": "ghz", "n": 2})
        ds1 = acquire(state, EnsembleSpec(CLIFF, 2), m=50, k=3, master_seed=1)
        ds2 = acquire(state, EnsembleSpec(CLIFF, 2), m=50, k=3, master_seed=2)
        with pytest.raises(ProtocolViolationError):
            cross_overlap(ds1, ds2, [0, 1])

    def test_mismatched_ensemble_rejected(self):
        state = prepare({"kind": "ghz", "n": 2})
        ds1 = acquire(state, EnsembleSpec(CLIFF, 2), m=50, k=3, master_seed=1)
        ds2 = acquire(state, EnsembleSpec(HAAR, 2), m=50, k=3, master_seed=1)
        with pytest.raises(ProtocolViolationError):
            cross_overlap(ds1, ds2, [0, 1])


class TestFmax:
    def test_identical_states(self, rng):
        state = DensityState(2, random_density(rng, 2))
        ds1 = acquire(state, EnsembleSpec(CLIFF, 2), m=2000, k=10, master_seed=12)
        ds2 = acquire(state, EnsembleSpec(CLIFF, 2), m=2000, k=10, master_seed=12,
                      device=1)
        est = fmax(ds1, ds2, [0, 1])
        assert abs(est.value - 1.0) < 0.05

    def test_pure_vs_maximally_mixed(self):
        pure = prepare({"kind": "computational", "n": 2, "bits": "00"})
        mixed = prepare({"kind": "maximally_mixed", "n": 2})
        ds1 = acquire(pure, EnsembleSpec(CLIFF, 2), m=2500, k=10, master_seed=13)
        ds2 = acquire(mixed, EnsembleSpec(CLIFF, 2), m=2500, k=10, master_seed=13,
                      device=1)
        est = fmax(ds1, ds2, [0, 1])
        assert abs(est.value - 0.25) < 0.05

    def test_ghz_vs_phase_flipped(self):
        plusghz = prepare({"kind": "ghz", "n": 3})
        amps = plusghz.amplitudes.copy()
        amps[-1] *= -1
        from randmeas.sim import PureState

        minusghz = PureState(3, amps)
        ds1 = acquire(plusghz, EnsembleSpec(CLIFF, 3), m=2500, k=10, master_seed=14)
        ds2 = acquire(minusghz, EnsembleSpec(CLIFF, 3), m=2500, k=10, master_seed=14,
                      device=1)
        truth = abs(np.vdot(plusghz.amplitudes, minusghz.amplitudes)) ** 2
        est = fmax(ds1, ds2, [0, 1, 2])
        assert truth == pytest.approx(0.0)
        assert abs(est.value - truth) < 4 * est.std_error


class TestDfePlan:
    def test_ghz3_support(self):
        target = prepare({"kind": "ghz", "n": 3})
        plan = dfe_plan(target, l_samples=500, seed=1)
        # stabilizer group of GHZ3 has 8 elements, all with |tr(W psi)| = 1
        assert sum(plan.counts) == 500
        assert all(abs(abs(t) - 1.0) < 1e-10 for t in plan.targets)
        assert len(plan.paulis) <= 8

    def test_single_qubit_zero_state(self):
        target = prepare({"kind": "computational", "n": 1, "bits": "0"})
        plan = dfe_plan(target, l_samples=2000, seed=2)
        names = {str(p) for p in plan.paulis}
        assert names <= {"+I", "+Z"}
        # both carry probability 1/2
        counts = dict(zip((str(p) for p in plan.paulis), plan.counts))
        assert abs(counts.get("+I", 0) - 1000) < 4 * np.sqrt(500)

    def test_probabilities_sum_to_one(self, rng):
        target = prepare({"kind": "haar_pure", "n": 4, "seed": 3})
        from randmeas.pauli import all_pauli_strings
        from randmeas.sim import pauli_expectation_pure

        t = [pauli_expectation_pure(p, target.amplitudes)
             for p in all_pauli_strings(4, include_identity=True)]
        assert np.sum(np.square(t)) / 2**4 == pytest.approx(1.0, abs=1e-10)

    def test_plan_round_trip(self):
        target = prepare({"kind": "ghz", "n": 3})
        plan = dfe_plan(target, l_samples=100, seed=4)
        again = DfePlan.from_json(plan.to_json())
        assert again == plan

    def test_deterministic(self):
        target = prepare({"kind": "ghz", "n": 3})
        assert dfe_plan(target, 64, seed=9) == dfe_plan(target, 64, seed=9)


class TestDfeEstimate:
    def test_self_fidelity(self):
        target = prepare({"kind": "ghz", "n": 3})
        plan = dfe_plan(target, l_samples=100, seed=5)
        ds = make_ds(target, m=6000, k=1, seed=15)
        est = dfe_estimate(plan, ds)
        assert abs(est.value - 1.0) < 4 * est.std_error + 0.02

    def test_depolarized_closed_form(self):
        target = prepare({"kind": "ghz", "n": 3})
        p = 0.25
        noisy = apply_noise(target, {"kind": "global_depolarizing", "p": p})
        truth = (1 - p) + p / 8
        plan = dfe_plan(target, l_samples=150, seed=6)
        ds = make_ds(noisy, m=6000, k=1, seed=16)
        est = dfe_estimate(plan, ds)
        assert abs(est.value - truth) < 4 * est.std_error + 0.02

    def test_orthogonal_state(self):
        target = prepare({"kind": "ghz", "n": 2})
        other = prepare({"kind": "computational", "n": 2, "bits": "01"})
        plan = dfe_plan(target, l_samples=100, seed=7)
        ds = make_ds(other, m=4000, k=1, seed=17)
        est = dfe_estimate(plan, ds)
        assert abs(est.value) < 4 * est.std_error + 0.02

    def test_ensemble_invariance(self):
        target = prepare({"kind": "ghz", "n": 2})
        plan = dfe_plan(target, l_samples=80, seed=8)
        est_c = dfe_estimate(plan, make_ds(target, kind=CLIFF, m=3000, k=1, seed=18))
        est_h = dfe_estimate(plan, make_ds(target, kind=HAAR, m=3000, k=1, seed=18))
        combined = np.hypot(est_c.std_error, est_h.std_error)
        assert abs(est_c.value - est_h.value) < 4 * combined

    def test_no_data_terms_flagged(self):
        target = prepare({"kind": "ghz", "n": 3})
        plan = dfe_plan(target, l_samples=50, seed=9)
        ds = make_ds(target, m=3, k=1, seed=19)  # tiny: some Paulis unseen
        est = dfe_estimate(plan, ds)
        assert est.n_samples <= 50
        if est.n_samples < 50:
            assert any(f.startswith("no-data:") for f in est.flags)


class TestOtoc:
    def setup_method(self):
        self.h = build_ising_chain(4, 1.0, 1.05, 0.5)
        self.w = P("ZIII")
        self.v = P("IIXI")

    def test_t0_exact_disjoint(self):
        run = otoc_run(self.h, self.w, self.v, [0.0], m=20, seed=1)
        est = otoc_estimate(run)[0]
        assert est.value == pytest.approx(1.0, abs=1e-9)
        assert oracle_otoc(self.h, self.w, self.v, 0.0) == pytest.approx(1.0)

    def test_identity_probe_all_times(self):
        v_id = PauliString.identity(4)
        run = otoc_run(self.h, self.w, v_id, [0.0, 0.7, 1.4], m=25, seed=2)
        for est in otoc_estimate(run):
            assert est.value == pytest.approx(1.0, abs=1e-9)

    def test_reproducible(self):
        r1 = otoc_run(self.h, self.w, self.v, [0.3, 0.9], m=30, seed=3)
        r2 = otoc_run(self.h, self.w, self.v, [0.3, 0.9], m=30, seed=3)
        assert np.array_equal(r1.exp1, r2.exp1)
        assert np.array_equal(r1.exp2, r2.exp2)

    def test_tracks_oracle_global_haar(self):
        times = np.linspace(0.0, 2.0, 6)
        run = otoc_run(self.h, self.w, self.v, times, m=300, seed=4)
        for t, est in zip(times, otoc_estimate(run)):
            truth = oracle_otoc(self.h, self.w, self.v, float(t))
            assert abs(est.value - truth) < 4 * est.std_error + 1e-6

    def test_local_mode_reweights_late_times(self):
        # local product randomization damps Pauli components by 3^{-w}; at
        # scrambled times the ratio deviates from the OTOC systematically
        e = EnsembleSpec(HAAR, 4)
        times = [0.0, 2.5]
        run = otoc_run(self.h, self.w, self.v, times, m=400, seed=5, ensemble=e)
        ests = otoc_estimate(run)
        assert ests[0].value == pytest.approx(1.0, abs=1e-9)
        truth = oracle_otoc(self.h, self.w, self.v, 2.5)
        assert run.initial == "local"
        # the deviation is the point: local mode is not the OTOC at late times
        assert abs(ests[1].value - truth) > 2 * ests[1].std_error

    def test_run_round_trip(self):
        run = otoc_run(self.h, self.w, self.v, [0.5], m=10, seed=6)
        again = OtocRun.from_json(run.to_json())
        assert np.allclose(again.exp1, run.exp1)
        assert again.times == run.times
        assert again.w_op == run.w_op
