import random

from venuetrace.baselines import (
    ContactTriple,
    Dp3tBackend,
    Dp3tUserApp,
    MoHServer,
    TTUserApp,
    dp3t_expand_published,
    dp3t_match,
)
from venuetrace.schedule import DailyKey, dp3t_derive_ephids, dp3t_next_daily_key


class TestTraceTogether:
    def test_tid_round_trip(self):
        rng = random.Random(0)
        moh = MoHServer(rng)
        pseudonym = moh.register("555-0001", rng)
        tid = moh.issue_tid(pseudonym, 7, rng)
        assert moh.decrypt_tid(tid.ciphertext) == (pseudonym, 7)

    def test_tids_unlinkable_across_intervals(self):
        rng = random.Random(1)
        moh = MoHServer(rng)
        pseudonym = moh.register("555-0001", rng)
        seen = set()
        for x in range(10_000):
            seen.add(moh.issue_tid(pseudonym, x, rng).ciphertext)
        assert len(seen) == 10_000

    def test_tampered_tid_fails_decryption(self):
        rng = random.Random(2)
        moh = MoHServer(rng)
        pseudonym = moh.register("555-0001", rng)
        ct = bytearray(moh.issue_tid(pseudonym, 0, rng).ciphertext)
        ct[-1] ^= 1
        assert moh.decrypt_tid(bytes(ct)) is None
        assert moh.decrypt_tid(b"short") is None

    def test_trace_returns_co_present_contact(self):
        rng = random.Random(3)
        moh = MoHServer(rng)
        alice = TTUserApp("555-alice", moh, rng)
        bob = TTUserApp("555-bob", moh, rng)
        alice.receive_tid(moh.issue_tid(alice.pseudonym, 0, rng))
        bob.receive_tid(moh.issue_tid(bob.pseudonym, 0, rng))
        alice.hear(bob.current_tid.ciphertext, -45.0)
        bob.hear(alice.current_tid.ciphertext, -45.0)
        assert moh.trace("555-alice", alice.triples) == ["555-bob"]

    def test_forged_triple_skipped(self):
        rng = random.Random(4)
        moh = MoHServer(rng)
        alice = TTUserApp("555-alice", moh, rng)
        alice.receive_tid(moh.issue_tid(alice.pseudonym, 0, rng))
        forged = ContactTriple(
            own_tid=alice.current_tid.ciphertext,
            peer_tid=rng.randbytes(44),
            signal_dbm=-40.0,
        )
        assert moh.trace("555-alice", [forged]) == []

    def test_moh_learns_reporter_contact_graph(self):
        rng = random.Random(5)
        moh = MoHServer(rng)
        apps = {n: TTUserApp(f"555-{n}", moh, rng) for n in ("a", "b", "c")}
        for app in apps.values():
            app.receive_tid(moh.issue_tid(app.pseudonym, 0, rng))
        apps["a"].hear(apps["b"].current_tid.ciphertext, -45.0)
        apps["a"].hear(apps["c"].current_tid.ciphertext, -45.0)
        moh.trace("555-a", apps["a"].triples)
        assert set(moh.traced_edges) == {("555-a", "555-b"), ("555-a", "555-c")}


class TestDp3t:
    def test_broadcast_order_is_permutation_of_day_set(self):
        rng = random.Random(6)
        app = Dp3tUserApp("u", rng, epochs_per_day=96)
        day_ids = {app.broadcast_id(e) for e in range(96)}
        expected = set(dp3t_derive_ephids(app.daily_keys[0], 96))
        assert day_ids == expected

    def test_published_key_reveals_following_days(self):
        rng = random.Random(7)
        app = Dp3tUserApp("u", rng, epochs_per_day=96)
        for day in (1, 2, 3):
            app.start_day(day, rng)
        backend = Dp3tBackend()
        app.report(backend, first_infectious_day=1, current_day=3, rng=rng)
        pub = backend.published[0]
        sets = dp3t_expand_published(pub, through_day=3)
        # hash-chain forward derivation: day-2 ids follow from the day-1 key
        k1 = DailyKey(key=pub.key, day_index=1)
        k2 = dp3t_next_daily_key(k1)
        assert sets[2] == set(dp3t_derive_ephids(k2, 96))

    def test_rotation_unlinks_future_days(self):
        rng = random.Random(8)
        app = Dp3tUserApp("u", rng, epochs_per_day=96)
        app.start_day(1, rng)
        backend = Dp3tBackend()
        old_key_day1 = app.key_for_day(1).key
        app.report(backend, first_infectious_day=0, current_day=1, rng=rng)
        fresh = app.key_for_day(1).key
        assert fresh != old_key_day1
        # identifiers broadcast after rotation are outside the published chain
        sets = dp3t_expand_published(backend.published[0], through_day=1)
        post = {app.broadcast_id(e) for e in range(96)}
        assert not post & sets[1]

    def test_match_counts_and_leak_flag(self):
        rng = random.Random(9)
        alice = Dp3tUserApp("alice", rng, epochs_per_day=96)
        bob = Dp3tUserApp("bob", rng, epochs_per_day=96)
        for e in range(3):
            bob.hear(alice.broadcast_id(e), -45.0, day=0, epoch=e)
        bob.hear(alice.broadcast_id(3), -70.0, day=0, epoch=3)  # too far
        backend = Dp3tBackend()
        alice.report(backend, first_infectious_day=0, current_day=0, rng=rng)
        (result,) = dp3t_match(
            bob, backend.published, through_day=0,
            exposure_seconds=900, proximity_threshold_dbm=-46.0,
        )
        assert result.matched_epochs == 3
        assert result.at_risk
        assert result.leak

    def test_no_match_when_nothing_heard(self):
        rng = random.Random(10)
        alice = Dp3tUserApp("alice", rng, epochs_per_day=96)
        bob = Dp3tUserApp("bob", rng, epochs_per_day=96)
        backend = Dp3tBackend()
        alice.report(backend, 0, 0, rng)
        (result,) = dp3t_match(bob, backend.published, through_day=0)
        assert not result.leak and not result.at_risk
