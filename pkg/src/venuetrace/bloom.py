"""Bloom filters for venue-side identifier digests and HA-side matching.

A venue periodically encodes everything it heard into a filter and ships it
to the health authority; the back-end later asks the HA whether a reporter's
reconstructed identifiers were really heard on premise. Sizing follows the
standard optimum m = ceil(-n ln p / ln^2 2), k = round(m/n ln 2); element
positions use double hashing over a SHA-256 digest of the element.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from hashlib import sha256

import numpy as np

from .crypto import ParameterError, lp_decode, lp_encode

LN2 = 0.6931471805599453
DEFAULT_TARGET_FPR = 1e-6


class UnknownVenuePeriodError(KeyError):
    """HA holds no retained digest for the requested venue/period."""


def _sizing(n_target: int, target_fpr: float) -> tuple[int, int]:
    if not (0.0 < target_fpr < 1.0):
        raise ParameterError("target_fpr must be in (0, 1)")
    if n_target < 1:
        raise ParameterError("n_target must be >= 1")
    m = int(np.ceil(-n_target * np.log(target_fpr) / (LN2 * LN2)))
    m = max(m, 8)
    k = max(1, round(m / n_target * LN2))
    return m, k


def _element_pair(element: bytes) -> tuple[int, int]:
    d = sha256(element).digest()
    h1 = int.from_bytes(d[0:8], "big")
    h2 = int.from_bytes(d[8:16], "big") | 1
    return h1, h2


class BloomFilter:
    """Fixed-size bit array with k double-hashed positions per element.

    No false negatives ever; false-positive rate approaches ``target_fpr``
    at ``n_target`` insertions.
    """

    def __init__(self, n_target: int, target_fpr: float = DEFAULT_TARGET_FPR):
        self.n_target = n_target
        self.target_fpr = target_fpr
        self.m_bits, self.k_hashes = _sizing(n_target, target_fpr)
        self.bits = np.zeros((self.m_bits + 7) // 8, dtype=np.uint8)
        self.count = 0

    def _positions(self, element: bytes) -> np.ndarray:
        h1, h2 = _element_pair(element)
        return (h1 + np.arange(self.k_hashes, dtype=np.uint64) * np.uint64(h2)) % np.uint64(
            self.m_bits
        )

    def add(self, element: bytes) -> None:
        idx = self._positions(element)
        np.bitwise_or.at(self.bits, idx >> 3, (1 << (idx & 7)).astype(np.uint8))
        self.count += 1

    def add_many(self, elements: list[bytes]) -> None:
        if not elements:
            return
        pairs = np.array([_element_pair(e) for e in elements], dtype=np.uint64)
        ks = np.arange(self.k_hashes, dtype=np.uint64)
        idx = (pairs[:, 0:1] + ks[None, :] * pairs[:, 1:2]) % np.uint64(self.m_bits)
        idx = idx.ravel()
        np.bitwise_or.at(self.bits, idx >> 3, (1 << (idx & 7)).astype(np.uint8))
        self.count += len(elements)

    def __contains__(self, element: bytes) -> bool:
        idx = self._positions(element)
        return bool(np.all(self.bits[idx >> 3] & (1 << (idx & 7)).astype(np.uint8)))

    def contains_many(self, elements: list[bytes]) -> list[bool]:
        if not elements:
            return []
        pairs = np.array([_element_pair(e) for e in elements], dtype=np.uint64)
        ks = np.arange(self.k_hashes, dtype=np.uint64)
        idx = (pairs[:, 0:1] + ks[None, :] * pairs[:, 1:2]) % np.uint64(self.m_bits)
        hit = (self.bits[idx >> 3] & (1 << (idx & 7)).astype(np.uint8)) != 0
        return [bool(x) for x in hit.all(axis=1)]

    def to_bytes(self) -> bytes:
        """Length-prefixed fields: big-endian (m, k, fpr) header, n_target,
        then the raw bit array (byte i holds bits 8i..8i+7, LSB first)."""
        header = struct.pack(">QId", self.m_bits, self.k_hashes, self.target_fpr)
        return lp_encode(header, struct.pack(">Q", self.n_target), self.bits.tobytes())

    @classmethod
    def from_bytes(cls, buf: bytes) -> "BloomFilter":
        header, n_target_raw, bit_raw = lp_decode(buf)
        m_bits, k_hashes, target_fpr = struct.unpack(">QId", header)
        bf = cls.__new__(cls)
        bf.n_target = struct.unpack(">Q", n_target_raw)[0]
        bf.target_fpr = target_fpr
        bf.m_bits = m_bits
        bf.k_hashes = k_hashes
        bf.bits = np.frombuffer(bit_raw, dtype=np.uint8).copy()
        bf.count = 0
        return bf


class _EmptyFilter(BloomFilter):
    """Zero-capacity filter that rejects every query."""

    def __init__(self, target_fpr: float):
        self.n_target = 0
        self.target_fpr = target_fpr
        self.m_bits = 8
        self.k_hashes = 1
        self.bits = np.zeros(1, dtype=np.uint8)
        self.count = 0

    def add(self, element: bytes) -> None:  # pragma: no cover - not used
        raise ParameterError("empty filter is immutable")


def build_filter(
    ids: set[bytes] | list[bytes],
    target_fpr: float = DEFAULT_TARGET_FPR,
) -> BloomFilter:
    """Encode a set of identifiers; an empty set yields a filter rejecting everything."""
    items = sorted(set(ids))
    if not items:
        return _EmptyFilter(target_fpr)
    bf = BloomFilter(n_target=len(items), target_fpr=target_fpr)
    bf.add_many(items)
    return bf


@dataclass
class VenueBloomDigest:
    """One venue's filter over identifiers heard within [period_start, period_end)."""

    venue_id: str
    period_start: int
    period_end: int
    filter: BloomFilter = field(repr=False)

    def to_bytes(self) -> bytes:
        """Length-prefixed: venue id (utf-8), big-endian period, filter bytes."""
        return lp_encode(
            self.venue_id.encode("utf-8"),
            struct.pack(">QQ", self.period_start, self.period_end),
            self.filter.to_bytes(),
        )

    @classmethod
    def from_bytes(cls, buf: bytes) -> "VenueBloomDigest":
        vid, period_raw, filt = lp_decode(buf)
        start, end = struct.unpack(">QQ", period_raw)
        return cls(
            venue_id=vid.decode("utf-8"),
            period_start=start,
            period_end=end,
            filter=BloomFilter.from_bytes(filt),
        )


def match_batch(
    ha_filters: dict[str, list[VenueBloomDigest]],
    venue_id: str,
    ids: list[bytes],
) -> list[bool]:
    """Per-identifier membership against all retained digests of one venue.

    An identifier matches if any retained digest for the venue contains it.
    Raises UnknownVenuePeriodError when the venue has no retained digest, in
    which case the caller must reject the report.
    """
    digests = ha_filters.get(venue_id)
    if not digests:
        raise UnknownVenuePeriodError(venue_id)
    result = [False] * len(ids)
    for digest in digests:
        hits = digest.filter.contains_many(ids)
        result = [a or b for a, b in zip(result, hits)]
    return result
