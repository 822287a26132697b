import hashlib

import numpy as np
import pytest

from loopspam import worked_example as we
from loopspam.errors import ProtocolError, SiftError
from loopspam.looptest import exact_source, localize
from loopspam.qcore import PRESET_EFFECTS, PRESET_KETS, born_probability_direct
from loopspam.scenario import BobCorrelated, Honest, exact_data_matrix
from loopspam.protocol import (
    Announcement,
    Party,
    PartyConfig,
    Relay,
    RelayConfig,
    SessionLog,
    calibrate_session_threshold,
    run_session,
    session_loop_test,
    sift_to_data_matrices,
    simulate_tables,
    verify_subset,
)

BOB_POOL = {lb: PRESET_KETS[lb] for lb in we.BOB_LABELS}


def parties(alice_seed=1, bob_seed=2, alice_weights=None, bob_weights=None):
    return (PartyConfig("alice", we.alice_pool(), alice_seed, alice_weights),
            PartyConfig("bob", BOB_POOL, bob_seed, bob_weights))


def session(device, rounds, seeds=(1, 2, 3), **kw):
    alice, bob = parties(seeds[0], seeds[1], **kw)
    return run_session(alice, bob, RelayConfig(device, seeds[2]), rounds)


@pytest.fixture(scope="module")
def honest_log():
    return session(we.honest_device(), 200_000)


@pytest.fixture(scope="module")
def adversarial_log():
    return session(we.correlated_device(), 200_000)


class TestSession:
    def test_same_label_never_clicks_on_singlet(self):
        log = session(we.honest_device(), 5000, alice_weights=(1, 0, 0, 0, 0), bob_weights=(1, 0, 0, 0))
        assert log.outcomes.sum() == 0

    def test_orthogonal_pair_clicks_half_the_time(self):
        log = session(we.honest_device(), 100_000, alice_weights=(1, 0, 0, 0, 0), bob_weights=(0, 0, 1, 0))
        assert abs(log.outcomes.mean() - 0.5) <= 0.01

    def test_seeded_determinism(self):
        a = session(we.correlated_device(), 3000)
        b = session(we.correlated_device(), 3000)
        assert a.dumps() == b.dumps()
        c = session(we.correlated_device(), 3000, seeds=(1, 2, 4))
        assert a.dumps() != c.dumps()

    def test_records(self):
        log = session(we.honest_device(), 10)
        recs = list(log.records())
        assert [r.round for r in recs] == list(range(10))
        assert all(r.alice in we.alice_pool() and r.bob in BOB_POOL for r in recs)

    def test_rounds_positive(self):
        alice, bob = parties()
        with pytest.raises(ValueError):
            run_session(alice, bob, RelayConfig(we.honest_device(), 0), 0)

    def test_log_round_trip(self, tmp_path):
        log = session(we.correlated_device(), 2000)
        path = tmp_path / "s.jsonl"
        log.save(path)
        back = SessionLog.load(path)
        assert back.dumps() == log.dumps()
        assert np.array_equal(back.outcomes, log.outcomes)
        assert SessionLog.loads(log.dumps()).rounds == 2000

    def test_log_header_checked(self):
        with pytest.raises(ValueError):
            SessionLog.loads('{"format": "other"}\n')

    def test_party_config_validation(self):
        with pytest.raises(ValueError, match="at least 4"):
            PartyConfig("bob", {"psi1": PRESET_KETS["psi1"]}, 0)
        with pytest.raises(ValueError, match="weights"):
            PartyConfig("bob", BOB_POOL, 0, (0.5, 0.5, 0.5, 0.5))
        with pytest.raises(ValueError, match="'x'"):
            PartyConfig("bob", {**BOB_POOL, "x": [1, 1]}, 0)


class TestStateMachines:
    def make(self):
        alice, bob = parties()
        return Party(alice), Party(bob), Relay(RelayConfig(we.honest_device(), 0))

    def test_bob_before_alice(self):
        pa, pb, relay = self.make()
        with pytest.raises(ProtocolError, match="before Alice"):
            relay.receive(pb.choose(0))

    def test_announce_needs_both(self):
        pa, pb, relay = self.make()
        relay.receive(pa.choose(0))
        with pytest.raises(ProtocolError):
            relay.announce()

    def test_party_waits_for_announcement(self):
        pa, _, _ = self.make()
        pa.choose(0)
        with pytest.raises(ProtocolError):
            pa.choose(1)

    def test_wrong_round(self):
        pa, pb, relay = self.make()
        with pytest.raises(ProtocolError):
            pa.choose(3)
        relay.receive(pa.choose(0))
        relay.receive(pb.choose(0))
        ann = relay.announce()
        with pytest.raises(ProtocolError):
            pa.receive(Announcement(5, ann.outcome))

    def test_double_commit(self):
        pa, pb, relay = self.make()
        c = pa.choose(0)
        relay.receive(c)
        with pytest.raises(ProtocolError):
            relay.receive(c)

    def test_relay_probability_matches_born_rule(self):
        pa, pb, relay = self.make()
        a, b = pa.choose(0), pb.choose(0)
        assert relay.click_probability(a, b) == pytest.approx(
            born_probability_direct(a.ket, b.ket, PRESET_EFFECTS["singlet"]), abs=1e-12)


class TestSifting:
    def test_session_frequencies_track_exact_data(self, honest_log):
        t1, t2 = sift_to_data_matrices(honest_log, "alice", we.TRIAL1_LABELS, we.TRIAL2_LABELS, basis="negated-y")
        s1, s2 = we.trial_sets()
        exact = exact_data_matrix(s1, we.bob_set(), we.honest_device()).values
        # about 10^4 rounds per cell
        assert np.max(np.abs(t1.S - exact)) <= 0.02
        assert not t1.exact

    def test_shared_rows_identical(self, adversarial_log):
        t1, t2 = sift_to_data_matrices(adversarial_log, "alice", we.TRIAL1_LABELS, we.TRIAL2_LABELS)
        assert np.array_equal(t1.S[:3], t2.S[:3])

    def test_missing_label_pair_named(self):
        log = session(we.honest_device(), 2000, alice_weights=(0.25, 0.25, 0.25, 0.25, 0.0))
        with pytest.raises(SiftError, match="psi5") as info:
            sift_to_data_matrices(log, "alice", we.TRIAL1_LABELS, we.TRIAL2_LABELS)
        assert ("psi5", "psi1") in info.value.missing

    def test_unknown_label(self, honest_log):
        with pytest.raises(SiftError, match="psi9"):
            sift_to_data_matrices(honest_log, "alice", we.TRIAL1_LABELS, ("psi1", "psi2", "psi3", "psi9"))

    def test_round_order_irrelevant(self, adversarial_log):
        order = np.random.default_rng(0).permutation(adversarial_log.rounds)
        shuffled = adversarial_log.permuted(order)
        a = sift_to_data_matrices(adversarial_log, "alice", we.TRIAL1_LABELS, we.TRIAL2_LABELS)
        b = sift_to_data_matrices(shuffled, "alice", we.TRIAL1_LABELS, we.TRIAL2_LABELS)
        assert np.array_equal(a[0].S, b[0].S) and np.array_equal(a[1].S, b[1].S)

    def test_bob_labels_never_needed(self, adversarial_log):
        # renaming Bob's states leaves the verdict unchanged: only indices matter
        renamed = {f"b{k}": v for k, v in enumerate(BOB_POOL.values())}
        bob = PartyConfig("bob", renamed, adversarial_log.bob.seed)
        log2 = SessionLog(adversarial_log.alice, bob, adversarial_log.relay, adversarial_log.alice_index,
                          adversarial_log.bob_index, adversarial_log.outcomes)
        r1, l1 = session_loop_test(adversarial_log, tau=0.1)
        r2, l2 = session_loop_test(log2, tau=0.1)
        assert np.array_equal(r1.scores, r2.scores)
        assert l1.verdicts == l2.verdicts

    def test_bob_as_testing_party(self):
        alice = PartyConfig("alice", BOB_POOL, 1)
        bob = PartyConfig("bob", we.alice_pool(), 2)
        device = BobCorrelated(PRESET_EFFECTS["singlet"], {"psi5": PRESET_EFFECTS["symmetric"]})
        log = run_session(alice, bob, RelayConfig(device, 3), 200_000)
        _, loc = session_loop_test(log, "bob", tau=0.15)
        assert loc.implicated == ["psi5"]


class TestSessionLoopTest:
    def test_exact_shortcut_matches_direct_computation(self, adversarial_log):
        report, loc = session_loop_test(adversarial_log, exact=True, basis="negated-y")
        s1, _ = we.trial_sets()
        direct = localize(s1, {"psi5": PRESET_KETS["psi5"]}, None, exact_source(we.bob_set(), we.correlated_device()))
        assert loc.verdicts == direct.verdicts
        first = next(o.report for o in direct.outcomes if o.report is not None)
        assert np.array_equal(report.product, first.product)

    def test_sampled_needs_threshold(self, honest_log):
        with pytest.raises(ValueError, match="threshold"):
            session_loop_test(honest_log)

    def test_adversary_implicated(self, adversarial_log):
        _, loc = session_loop_test(adversarial_log, tau=0.15)
        assert loc.implicated == ["psi5"]
        assert loc.cleared == ["psi1", "psi2", "psi3", "psi4"]

    def test_honest_session_clears(self, honest_log):
        _, loc = session_loop_test(honest_log, tau=0.15)
        assert loc.implicated == []


class TestVerification:
    def test_honest_relay_passes(self, honest_log):
        res = verify_subset(honest_log, 1.0, 0)
        assert res.passed and res.matched > 0

    def test_fraction_is_seeded(self, honest_log):
        a = verify_subset(honest_log, 0.1, 5)
        b = verify_subset(honest_log, 0.1, 5)
        assert a == b
        assert abs(a.checked / honest_log.rounds - 0.1) < 0.01

    def test_symmetric_relay_caught_at_exact_rates(self):
        log = session(Honest(PRESET_EFFECTS["symmetric"]), 200_000)
        res = verify_subset(log, 1.0, 0)
        assert not res.passed
        same = log.alice_index == log.bob_index
        for k, lb in enumerate(we.BOB_LABELS):
            rows = same & (log.alice_index == k)
            rate = log.outcomes[rows].mean()
            expected = born_probability_direct(PRESET_KETS[lb], PRESET_KETS[lb], PRESET_EFFECTS["symmetric"])
            assert abs(rate - expected) <= 0.02
        assert expected == pytest.approx(0.5)

    def test_vacuous_without_matched_rounds(self):
        alice, bob = parties()
        empty = SessionLog(alice, bob, RelayConfig(we.honest_device(), 0), [], [], [])
        assert verify_subset(empty, 1.0, 0).passed
        log = session(we.honest_device(), 500, alice_weights=(0, 0, 0, 0, 1))
        res = verify_subset(log, 1.0, 0)
        assert res.passed and res.matched == 0

    def test_fraction_range(self, honest_log):
        with pytest.raises(ValueError):
            verify_subset(honest_log, 0.0, 0)


class TestSessionCalibration:
    def test_simulated_tables_match_session_distribution(self):
        alice, bob = parties()
        rng = np.random.default_rng(0)
        tables = simulate_tables(alice, bob, we.honest_device(), 10**6, rng)
        assert tables.counts.sum() == 10**6
        freq = tables.data_matrix(we.TRIAL1_LABELS, we.BOB_LABELS).values
        exact = exact_data_matrix(we.trial_sets()[0], we.bob_set(), we.honest_device()).values
        assert np.max(np.abs(freq - exact)) <= 0.01

    def test_click_rates_converge_over_replicas(self):
        alice, bob = parties()
        exact = exact_data_matrix(we.trial_sets()[0], we.bob_set(), we.honest_device()).values
        within = 0
        for r in range(100):
            t = simulate_tables(alice, bob, we.honest_device(), 10**6, np.random.default_rng(r))
            within += np.max(np.abs(t.data_matrix(we.TRIAL1_LABELS, we.BOB_LABELS).values - exact)) <= 0.01
        assert within >= 99

    def test_calibration_deterministic_and_rejects_adversary(self):
        alice, bob = parties()
        a = calibrate_session_threshold(alice, bob, we.honest_device(), 10**5, replicas=100, seed=3)
        b = calibrate_session_threshold(alice, bob, we.honest_device(), 10**5, replicas=100, seed=3)
        assert a.threshold == b.threshold > 0
        with pytest.raises(ValueError, match="honest"):
            calibrate_session_threshold(alice, bob, we.correlated_device(), 10**5, replicas=100)


def test_dump_hash_stable():
    log = session(we.honest_device(), 1000)
    digest = hashlib.sha256(log.dumps().encode()).hexdigest()
    assert digest == hashlib.sha256(session(we.honest_device(), 1000).dumps().encode()).hexdigest()
