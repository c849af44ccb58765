import math
import random

import pytest

from venuetrace.bloom import (
    BloomFilter,
    UnknownVenuePeriodError,
    VenueBloomDigest,
    build_filter,
    match_batch,
)
from venuetrace.crypto import ParameterError


def _random_ids(rng, n):
    return [rng.randbytes(16) for _ in range(n)]


class TestBloomFilter:
    def test_no_false_negatives_exhaustive(self):
        rng = random.Random(0)
        ids = _random_ids(rng, 5000)
        bf = build_filter(ids, target_fpr=1e-3)
        assert all(i in bf for i in ids)
        assert bf.contains_many(ids) == [True] * len(ids)

    def test_fpr_close_to_target_small_capacity(self):
        # capacity 1e3 over 10 seeds; the 1e5 case runs in the acceptance suite
        for seed in range(10):
            rng = random.Random(seed)
            inserted = _random_ids(rng, 1000)
            bf = build_filter(inserted, target_fpr=1e-3)
            probes = _random_ids(rng, 50_000)
            hits = sum(bf.contains_many(probes))
            assert hits / len(probes) <= 2e-3

    def test_empty_filter_rejects_everything(self):
        bf = build_filter([], target_fpr=1e-4)
        rng = random.Random(2)
        assert not any(bf.contains_many(_random_ids(rng, 1000)))

    def test_absent_then_inserted_flips(self):
        bf = BloomFilter(n_target=10, target_fpr=1e-4)
        x = b"0123456789abcdef"
        assert x not in bf
        bf.add(x)
        assert x in bf

    def test_sizing_formula(self):
        bf = BloomFilter(n_target=1000, target_fpr=1e-4)
        expected_m = math.ceil(-1000 * math.log(1e-4) / math.log(2) ** 2)
        assert bf.m_bits == expected_m
        assert bf.k_hashes == max(1, round(bf.m_bits / 1000 * math.log(2)))
        assert bf.k_hashes >= 1

    def test_invalid_fpr_rejected(self):
        with pytest.raises(ParameterError):
            BloomFilter(n_target=10, target_fpr=0.0)
        with pytest.raises(ParameterError):
            BloomFilter(n_target=10, target_fpr=1.0)

    def test_serialization_round_trip(self):
        rng = random.Random(3)
        ids = _random_ids(rng, 500)
        bf = build_filter(ids, target_fpr=1e-4)
        again = BloomFilter.from_bytes(bf.to_bytes())
        assert again.m_bits == bf.m_bits
        assert again.k_hashes == bf.k_hashes
        assert (again.bits == bf.bits).all()
        assert all(i in again for i in ids)


class TestVenueDigest:
    def test_serialization_round_trip(self):
        rng = random.Random(4)
        digest = VenueBloomDigest(
            venue_id="cafe",
            period_start=0,
            period_end=86400,
            filter=build_filter(_random_ids(rng, 100), 1e-4),
        )
        again = VenueBloomDigest.from_bytes(digest.to_bytes())
        assert again.venue_id == "cafe"
        assert (again.period_start, again.period_end) == (0, 86400)
        assert (again.filter.bits == digest.filter.bits).all()


class TestMatchBatch:
    def test_honest_path_all_true(self):
        rng = random.Random(5)
        ids = _random_ids(rng, 200)
        store = {
            "v0": [VenueBloomDigest("v0", 0, 86400, build_filter(ids, 1e-6))]
        }
        assert match_batch(store, "v0", ids) == [True] * len(ids)

    def test_foreign_ids_false(self):
        rng = random.Random(6)
        heard = _random_ids(rng, 200)
        foreign = _random_ids(rng, 50)
        store = {"v0": [VenueBloomDigest("v0", 0, 86400, build_filter(heard, 1e-6))]}
        result = match_batch(store, "v0", heard[:3] + foreign)
        assert result[:3] == [True, True, True]
        assert not any(result[3:])

    def test_unknown_venue_raises(self):
        with pytest.raises(UnknownVenuePeriodError):
            match_batch({}, "nowhere", [b"0123456789abcdef"])

    def test_match_across_multiple_periods(self):
        rng = random.Random(7)
        day1 = _random_ids(rng, 50)
        day2 = _random_ids(rng, 50)
        store = {
            "v0": [
                VenueBloomDigest("v0", 0, 86400, build_filter(day1, 1e-6)),
                VenueBloomDigest("v0", 86400, 172800, build_filter(day2, 1e-6)),
            ]
        }
        assert all(match_batch(store, "v0", day1 + day2))

    def test_digest_periods_disjoint_contiguous(self):
        # the venue driver emits daily digests; periods must tile the timeline
        store = [
            VenueBloomDigest("v0", d * 86400, (d + 1) * 86400, build_filter([], 1e-6))
            for d in range(5)
        ]
        for a, b in zip(store, store[1:]):
            assert a.period_end == b.period_start
