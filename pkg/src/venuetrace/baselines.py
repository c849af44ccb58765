"""Baseline protocols run under the same simulator for comparison.

TraceTogether: a fully trusted ministry of health (MoH) registers phone
numbers, pushes authenticated-encrypted temporary ids each interval, and
decrypts reported contact triples to phone numbers.

DP-3T (low-cost): hash-chained daily keys expanded into per-day identifier
sets, broadcast in a random order, published on infection so peers match
locally.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .crypto import ParameterError, encode_u64, lp_decode, lp_encode
from .schedule import (
    DailyKey,
    dp3t_derive_ephids,
    dp3t_initial_daily_key,
    dp3t_next_daily_key,
)

TT_INTERVAL_SECONDS = 900
DP3T_EPOCHS_PER_DAY = 96
DP3T_EPOCH_SECONDS = 900
_TT_NONCE_LEN = 12


# ---------------------------------------------------------------------------
# TraceTogether
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TempId:
    """Opaque broadcast token: AEAD ciphertext of (pseudonym, interval)."""

    ciphertext: bytes
    interval_index: int


@dataclass(frozen=True)
class ContactTriple:
    own_tid: bytes
    peer_tid: bytes
    signal_dbm: float


class MoHServer:
    """Centralised authority: registry, TempId issuance, trace decryption."""

    def __init__(self, rng: random.Random):
        self._key = rng.randbytes(32)
        self._aead = AESGCM(self._key)
        self.registry: dict[bytes, str] = {}  # pseudonym -> phone number
        self.observed: list[dict] = []
        self.traced_edges: list[tuple[str, str]] = []  # (reporter phone, contact phone)

    def register(self, phone_number: str, rng: random.Random) -> bytes:
        pseudonym = rng.randbytes(16)
        self.registry[pseudonym] = phone_number
        self.observed.append({"kind": "register", "phone": phone_number})
        return pseudonym

    def issue_tid(self, pseudonym: bytes, interval_index: int, rng: random.Random) -> TempId:
        if pseudonym not in self.registry:
            raise ParameterError("unknown pseudonym")
        nonce = rng.randbytes(_TT_NONCE_LEN)
        plaintext = lp_encode(pseudonym, encode_u64(interval_index))
        ct = nonce + self._aead.encrypt(nonce, plaintext, None)
        return TempId(ciphertext=ct, interval_index=interval_index)

    def decrypt_tid(self, ciphertext: bytes) -> tuple[bytes, int] | None:
        """(pseudonym, interval) for a valid token, None for garbage/tampering."""
        if len(ciphertext) <= _TT_NONCE_LEN:
            return None
        try:
            plaintext = self._aead.decrypt(
                ciphertext[:_TT_NONCE_LEN], ciphertext[_TT_NONCE_LEN:], None
            )
            pseudonym, interval_raw = lp_decode(plaintext)
        except (InvalidTag, ParameterError, ValueError):
            return None
        return pseudonym, int.from_bytes(interval_raw, "big")

    def trace(self, reporter_phone: str, triples: list[ContactTriple]) -> list[str]:
        """Decrypt reported peer tokens and look up their phone numbers."""
        self.observed.append(
            {"kind": "trace", "reporter": reporter_phone, "triples": len(triples)}
        )
        contacts: list[str] = []
        for triple in triples:
            decrypted = self.decrypt_tid(triple.peer_tid)
            if decrypted is None:
                continue  # forged or corrupted token
            pseudonym, _ = decrypted
            phone = self.registry.get(pseudonym)
            if phone is None or phone == reporter_phone:
                continue
            if phone not in contacts:
                contacts.append(phone)
                self.traced_edges.append((reporter_phone, phone))
        return contacts


class TTUserApp:
    """Phone-side TraceTogether state: current token plus stored triples."""

    def __init__(self, phone_number: str, moh: MoHServer, rng: random.Random):
        self.phone_number = phone_number
        self.pseudonym = moh.register(phone_number, rng)
        self.current_tid: TempId | None = None
        self.triples: list[ContactTriple] = []
        self.notified: bool = False

    def receive_tid(self, tid: TempId) -> None:
        self.current_tid = tid

    def hear(self, peer_payload: bytes, signal_dbm: float) -> None:
        if self.current_tid is None:
            return
        self.triples.append(
            ContactTriple(
                own_tid=self.current_tid.ciphertext,
                peer_tid=peer_payload,
                signal_dbm=signal_dbm,
            )
        )


# ---------------------------------------------------------------------------
# DP-3T (low-cost)
# ---------------------------------------------------------------------------

@dataclass
class Dp3tHeard:
    ephid: bytes
    signal_dbm: float
    day: int
    epoch: int


@dataclass
class PublishedKey:
    key: bytes
    day_index: int


class Dp3tBackend:
    """Publication board for infected users' daily keys."""

    def __init__(self) -> None:
        self.published: list[PublishedKey] = []

    def publish(self, key: bytes, day_index: int) -> None:
        self.published.append(PublishedKey(key=key, day_index=day_index))


class Dp3tUserApp:
    """Daily-key chain, per-day shuffled broadcast order, local matching."""

    def __init__(self, user_id: str, rng: random.Random, epochs_per_day: int = DP3T_EPOCHS_PER_DAY):
        self.user_id = user_id
        self.epochs_per_day = epochs_per_day
        self.daily_keys: list[DailyKey] = [dp3t_initial_daily_key(rng, day_index=0)]
        self._day_ids: list[bytes] = []
        self._day_order: list[int] = []
        self.heard: list[Dp3tHeard] = []
        self._prepare_day(0, rng)

    def _current_key(self) -> DailyKey:
        return self.daily_keys[-1]

    def _prepare_day(self, day_index: int, rng: random.Random) -> None:
        while self._current_key().day_index < day_index:
            self.daily_keys.append(dp3t_next_daily_key(self._current_key()))
        self._day_ids = dp3t_derive_ephids(self._current_key(), self.epochs_per_day)
        self._day_order = list(range(self.epochs_per_day))
        rng.shuffle(self._day_order)

    def start_day(self, day_index: int, rng: random.Random) -> None:
        self._prepare_day(day_index, rng)

    def broadcast_id(self, epoch_in_day: int) -> bytes:
        return self._day_ids[self._day_order[epoch_in_day]]

    def hear(self, ephid: bytes, signal_dbm: float, day: int, epoch: int) -> None:
        self.heard.append(Dp3tHeard(ephid=ephid, signal_dbm=signal_dbm, day=day, epoch=epoch))

    def key_for_day(self, day_index: int) -> DailyKey:
        for k in self.daily_keys:
            if k.day_index == day_index:
                return k
        raise ParameterError(f"no stored key for day {day_index}")

    def report(self, backend: Dp3tBackend, first_infectious_day: int, current_day: int, rng: random.Random) -> None:
        """Publish the first infectious day's key, then rotate to a fresh chain."""
        backend.publish(self.key_for_day(first_infectious_day).key, first_infectious_day)
        self.daily_keys = [DailyKey(key=rng.randbytes(32), day_index=current_day)]
        self._prepare_day(current_day, rng)


def dp3t_expand_published(
    published: PublishedKey, through_day: int, epochs_per_day: int = DP3T_EPOCHS_PER_DAY
) -> dict[int, set[bytes]]:
    """Recompute identifier sets for day x, x+1, ... from a published key."""
    sets: dict[int, set[bytes]] = {}
    key = DailyKey(key=published.key, day_index=published.day_index)
    while key.day_index <= through_day:
        sets[key.day_index] = set(dp3t_derive_ephids(key, epochs_per_day))
        key = dp3t_next_daily_key(key)
    return sets


@dataclass
class Dp3tAssessment:
    matched_epochs: int
    exposure_seconds: int
    at_risk: bool
    leak: bool  # any identifier matched at all, regardless of duration


def dp3t_match(
    app: Dp3tUserApp,
    published: list[PublishedKey],
    through_day: int,
    exposure_seconds: int = 900,
    proximity_threshold_dbm: float = -60.0,
    epoch_seconds: int = DP3T_EPOCH_SECONDS,
) -> list[Dp3tAssessment]:
    """Local matching of the heard store against every published key chain."""
    out: list[Dp3tAssessment] = []
    for pub in published:
        day_sets = dp3t_expand_published(pub, through_day, app.epochs_per_day)
        slots: set[tuple[int, int]] = set()
        leak = False
        for h in app.heard:
            ids = day_sets.get(h.day)
            if ids is None or h.ephid not in ids:
                continue
            leak = True
            if h.signal_dbm >= proximity_threshold_dbm:
                slots.add((h.day, h.epoch))
        exposure = len(slots) * epoch_seconds
        out.append(
            Dp3tAssessment(
                matched_epochs=len(slots),
                exposure_seconds=exposure,
                at_risk=exposure >= exposure_seconds,
                leak=leak,
            )
        )
    return out
