"""Deterministic discrete-event simulator for all three protocols.

One seeded ``random.Random`` drives every stochastic choice (keys, blinding,
noise), events execute in (time, scheduling order), and the resulting trace
serializes to canonical JSON, so equal (scenario, seed) pairs reproduce
byte-identical traces.

The world model: each user is at a location (a venue id, or the shared
street space) with scripted coordinates. Broadcasts are delivered to
co-located listeners in range at the broadcaster's epoch ticks, plus a
catch-up delivery of current identifiers whenever two listeners become
newly co-present, which stands in for within-epoch re-broadcasting.
Ground-truth presence segments are recorded independently of any protocol
and feed the exposure oracle in :mod:`venuetrace.metrics`.
"""

from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import dataclass, field
from typing import Any, Callable

from . import crypto
from .actors import (
    BackendServer,
    HealthAuthority,
    QueryRejected,
    RiskPolicy,
    TestCenter,
    UserApp,
    Venue,
    VenuePolicy,
)
from .baselines import (
    Dp3tBackend,
    Dp3tUserApp,
    MoHServer,
    TTUserApp,
    dp3t_match,
)
from .channel import ChannelModel
from .messages import InfectionCertificate, ReportBundle
from .scenario import Scenario, ScenarioError, ScenarioEvent, validate_scenario
from .schedule import SECONDS_PER_DAY, SchedulingParams

PROTOCOLS = ("venue", "dp3t", "tracetogether")
STREET = None  # location key for the shared off-premise space


@dataclass
class SimParams:
    protocol: str = "venue"
    seed: int = 0
    epoch_seconds: int = 180
    window_seconds: int = 7200
    bloom_fpr: float = 1e-6
    retention_days: int = 14
    exposure_seconds: int = 900
    proximity_meters: float = 2.0
    arrival_time_extension: bool = False
    dp3t_epochs_per_day: int = 96
    tt_interval_seconds: int = 900
    channel: ChannelModel = field(default_factory=ChannelModel)

    @classmethod
    def build(
        cls, scenario: Scenario, protocol: str, seed: int, overrides: dict[str, Any] | None = None
    ) -> "SimParams":
        """Scenario params first, explicit overrides win."""
        merged: dict[str, Any] = dict(scenario.params)
        merged.update(overrides or {})
        channel_cfg = merged.pop("channel", {})
        known = {
            k: merged[k]
            for k in (
                "epoch_seconds",
                "window_seconds",
                "bloom_fpr",
                "retention_days",
                "exposure_seconds",
                "proximity_meters",
                "arrival_time_extension",
                "dp3t_epochs_per_day",
                "tt_interval_seconds",
            )
            if k in merged
        }
        return cls(
            protocol=protocol,
            seed=seed,
            channel=ChannelModel(**channel_cfg),
            **known,
        )

    def to_dict(self) -> dict[str, Any]:
        d = {
            "protocol": self.protocol,
            "seed": self.seed,
            "epoch_seconds": self.epoch_seconds,
            "window_seconds": self.window_seconds,
            "bloom_fpr": self.bloom_fpr,
            "retention_days": self.retention_days,
            "exposure_seconds": self.exposure_seconds,
            "proximity_meters": self.proximity_meters,
            "arrival_time_extension": self.arrival_time_extension,
            "dp3t_epochs_per_day": self.dp3t_epochs_per_day,
            "tt_interval_seconds": self.tt_interval_seconds,
            "channel": {
                "max_range_m": self.channel.max_range_m,
                "tx_dbm": self.channel.tx_dbm,
                "path_loss_exponent": self.channel.path_loss_exponent,
                "reference_loss_db": self.channel.reference_loss_db,
                "noise_sigma_db": self.channel.noise_sigma_db,
                "reception_prob": self.channel.reception_prob,
            },
        }
        return d


@dataclass
class SimulationTrace:
    data: dict[str, Any]

    @property
    def config(self) -> dict[str, Any]:
        return self.data["config"]

    @property
    def events(self) -> list[dict[str, Any]]:
        return self.data["events"]

    @property
    def broadcasts(self) -> list[dict[str, Any]]:
        return self.data["broadcasts"]

    @property
    def presence(self) -> list[dict[str, Any]]:
        return self.data["presence"]

    @property
    def outcomes(self) -> dict[str, Any]:
        return self.data["outcomes"]

    def to_canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))


def _record_key(ephids: tuple[bytes, ...]) -> str:
    return crypto.hash_bytes(b"".join(ephids)).hex()


# ---------------------------------------------------------------------------
# Protocol drivers
# ---------------------------------------------------------------------------

class _VenueDriver:
    """Venue protocol: sessions, receipts, reports, trace queries."""

    name = "venue"

    def __init__(self, sim: "Simulation"):
        self.sim = sim
        p = sim.params
        self.sched = SchedulingParams(p.epoch_seconds, p.window_seconds)
        self.ha = HealthAuthority(sim.rng, p.retention_days)
        self.venues: dict[str, Venue] = {}
        for vs in sim.scenario.venues:
            policy = VenuePolicy(**vs.policy) if vs.policy else VenuePolicy()
            self.venues[vs.venue_id] = Venue(
                vs.venue_id, self.ha, sim.rng, policy, p.retention_days
            )
        self.backend = BackendServer(self.ha, self.sched, p.retention_days)
        for venue in self.venues.values():
            self.backend.register_venue(venue)
        self.test_center = TestCenter("lab0", self.ha, sim.rng)
        self.users = {
            u: UserApp(u, self.ha.public_key, self.sched, sim.rng) for u in sim.scenario.users
        }
        self.risk = RiskPolicy(
            exposure_seconds=p.exposure_seconds,
            proximity_threshold_dbm=p.channel.threshold_dbm(p.proximity_meters),
        )
        self.certificates: dict[str, InfectionCertificate] = {}
        self.visit_seq: dict[str, int] = {u: 0 for u in sim.scenario.users}
        self.duty_seconds: dict[str, int] = {u: 0 for u in sim.scenario.users}
        self._entry_time: dict[str, int] = {}

    def setup(self) -> None:
        hz = self.sim.scenario.horizon_seconds
        for t in range(SECONDS_PER_DAY, hz + 1, SECONDS_PER_DAY):
            self.sim.schedule(t, lambda now=t: self._emit_digests(now - SECONDS_PER_DAY, now))
        if hz % SECONDS_PER_DAY:
            last = hz - hz % SECONDS_PER_DAY
            self.sim.schedule(hz, lambda s=last, e=hz: self._emit_digests(s, e))

    def _emit_digests(self, period_start: int, period_end: int) -> None:
        for vid in sorted(self.venues):
            digest = self.venues[vid].emit_digest(
                period_start, period_end, period_end, self.sim.params.bloom_fpr
            )
            self.ha.store_digest(digest, period_end)
            self.sim.log_event(
                {"t": period_end, "kind": "venue_digest", "venue": vid,
                 "period": [period_start, period_end], "size": digest.filter.count}
            )

    def listening(self, user: str) -> bool:
        loc = self.sim.location[user]
        return loc is not STREET and loc in self.users[user].sessions

    def current_payload(self, user: str) -> bytes | None:
        loc = self.sim.location[user]
        if loc is STREET:
            return None
        return self.users[user].current_ephid(loc)

    def deliver(self, user: str, payload: bytes, rx_dbm: float, now: int) -> None:
        loc = self.sim.location[user]
        if loc is not STREET:
            self.users[user].hear(loc, payload, rx_dbm, now)

    def on_enter(self, user: str, venue_id: str, now: int) -> None:
        self.users[user].enter_venue(venue_id, now, self.sim.rng)
        self.visit_seq[user] += 1
        self._entry_time[user] = now
        self._tick(user, venue_id, self.visit_seq[user], now)

    def _tick(self, user: str, venue_id: str, seq: int, now: int) -> None:
        app = self.users[user]
        if seq != self.visit_seq[user] or venue_id not in app.sessions:
            return  # session ended (or superseded) before this tick fired
        ephid = app.epoch_tick(venue_id, now, self.sim.rng)
        self.sim.emit(user, ephid, now, tag=f"visit{seq}")
        nxt = now + self.sched.epoch_seconds
        self.sim.schedule(nxt, lambda: self._tick(user, venue_id, seq, nxt))

    def on_leave(self, user: str, venue_id: str, now: int) -> None:
        app = self.users[user]
        if venue_id not in app.sessions:
            return  # consent withheld at entry; no protocol state to close
        venue = self.venues[venue_id]
        visit = app.leave_venue(venue, now, self.sim.params.arrival_time_extension)
        self.duty_seconds[user] += now - self._entry_time.pop(user)
        self.sim.outcomes["visits"].append(
            {
                "user": user,
                "venue": venue_id,
                "entry": visit.entry_time if visit else None,
                "leave": now,
                "discarded": visit is None,
            }
        )

    def on_test_positive(self, user: str, period: tuple[int, int], now: int) -> None:
        cert = self.users[user].obtain_certificate(self.test_center, period[0], period[1])
        self.certificates[user] = cert

    def _tamper(self, bundle: ReportBundle, mode: str, reporter: str) -> ReportBundle:
        if mode == "forge_certificate":
            fake_keys = crypto.keygen("fake-lab", self.sim.rng)
            cert = bundle.certificate
            forged = InfectionCertificate(
                period_start=cert.period_start,
                period_end=cert.period_end,
                rid_value=cert.rid_value,
                signature=crypto.sign(cert.payload(), fake_keys.secret_key),
                test_center_id="fake-lab",
            )
            return ReportBundle(
                certificate=forged,
                nonce_value=bundle.nonce_value,
                nonce_reveal=bundle.nonce_reveal,
                leave_receipt=bundle.leave_receipt,
                venue_id=bundle.venue_id,
                last_window_epochs=bundle.last_window_epochs,
                window_keys=bundle.window_keys,
                arrival_time=bundle.arrival_time,
            )
        if mode == "corrupt_opening":
            reveal = bundle.nonce_reveal
            bad = type(reveal)(rid_bytes=reveal.rid_bytes, blinding=reveal.blinding + 1)
            return ReportBundle(
                certificate=bundle.certificate,
                nonce_value=bundle.nonce_value,
                nonce_reveal=bad,
                leave_receipt=bundle.leave_receipt,
                venue_id=bundle.venue_id,
                last_window_epochs=bundle.last_window_epochs,
                window_keys=bundle.window_keys,
                arrival_time=bundle.arrival_time,
            )
        if mode == "swap_venue_keys":
            other = next(
                (v for v in self.users[reporter].visits if v.venue_id != bundle.venue_id),
                None,
            )
            keys = (
                [wk.key for wk in other.window_keys]
                if other is not None
                else [self.sim.rng.randbytes(32) for _ in bundle.window_keys]
            )
            return ReportBundle(
                certificate=bundle.certificate,
                nonce_value=bundle.nonce_value,
                nonce_reveal=bundle.nonce_reveal,
                leave_receipt=bundle.leave_receipt,
                venue_id=bundle.venue_id,
                last_window_epochs=bundle.last_window_epochs,
                window_keys=keys,
                arrival_time=bundle.arrival_time,
            )
        raise ScenarioError([f"unknown tamper mode {mode!r}"])

    def on_report(self, user: str, data: dict[str, Any], now: int) -> None:
        cert_owner = data.get("use_certificate_of", user)
        cert = self.certificates.get(cert_owner)
        if cert is None:
            self.sim.log_event({"t": now, "kind": "report_skipped", "user": user})
            return
        bundles = self.users[user].build_reports(cert)
        tamper = data.get("tamper")
        for bundle in bundles:
            if tamper:
                bundle = self._tamper(bundle, tamper, user)
            record, code = self.backend.process_report(bundle, now)
            accepted = record is not None
            if accepted:
                key = _record_key(record.ephids)
                self.sim.outcomes["record_reporters"][key] = user
                self.sim.outcomes["reporters"].setdefault(
                    user, [cert.period_start, cert.period_end]
                )
            self.sim.outcomes["reports"].append(
                {
                    "user": user,
                    "venue": bundle.venue_id,
                    "accepted": accepted,
                    "code": None if code is None else code.value,
                    "t": now,
                }
            )
            self.sim.log_event(
                {
                    "t": now,
                    "kind": "report",
                    "user": user,
                    "venue": bundle.venue_id,
                    "accepted": accepted,
                    "code": None if code is None else code.value,
                }
            )

    def on_trace_query(self, user: str, now: int) -> None:
        app = self.users[user]
        for visit in app.visits:
            query = app.presence_query(visit, now)
            try:
                lists = self.backend.answer_trace(query, now)
            except QueryRejected as exc:
                self.sim.outcomes["rejected_queries"].append(
                    {"user": user, "venue": visit.venue_id, "reason": str(exc), "t": now}
                )
                continue
            keys = [_record_key(l) for l in lists]
            self.sim.outcomes["deliveries"].append(
                {
                    "user": user,
                    "venue": visit.venue_id,
                    "record_keys": keys,
                    "n_ephids": sum(len(l) for l in lists),
                    "t": now,
                }
            )
            assessments = app.evaluate_risk(visit, lists, self.risk)
            for assessment, key in zip(assessments, keys):
                reporter = self.sim.outcomes["record_reporters"].get(key)
                self.sim.outcomes["assessments"].append(
                    {
                        "user": user,
                        "venue": visit.venue_id,
                        "record_key": key,
                        "reporter": reporter,
                        "matched_epochs": assessment.matched_epochs,
                        "exposure_seconds": assessment.exposure_seconds,
                        "at_risk": assessment.at_risk,
                    }
                )

    def finalize(self, horizon: int) -> None:
        for user, entry in sorted(self._entry_time.items()):
            self.duty_seconds[user] += horizon - entry
        self.sim.outcomes["duty_seconds"] = {
            u: float(self.duty_seconds[u]) for u in self.sim.scenario.users
        }
        self.sim.outcomes["venue_anomalies"] = {
            vid: list(self.venues[vid].anomalies) for vid in sorted(self.venues)
        }
        self.sim.outcomes["venue_notices"] = {
            vid: list(self.venues[vid].infection_notices) for vid in sorted(self.venues)
        }
        self.sim.outcomes["backend_rejections"] = list(self.backend.rejections)
        self.sim.outcomes["actor_observed"] = {
            "backend": list(self.backend.observed),
            "ha": list(self.ha.observed),
            "test_center": list(self.test_center.observed),
            "venues": {
                vid: [e for e in self.venues[vid].observed if e["kind"] == "leave"]
                for vid in sorted(self.venues)
            },
        }


class _Dp3tDriver:
    """DP-3T low-cost baseline: 24/7 broadcasting on a global epoch grid."""

    name = "dp3t"

    def __init__(self, sim: "Simulation"):
        self.sim = sim
        self.epoch_seconds = SECONDS_PER_DAY // sim.params.dp3t_epochs_per_day
        self.backend = Dp3tBackend()
        self.users = {
            u: Dp3tUserApp(u, sim.rng, sim.params.dp3t_epochs_per_day)
            for u in sim.scenario.users
        }
        self.risk_threshold_dbm = sim.params.channel.threshold_dbm(sim.params.proximity_meters)
        self.periods: dict[str, tuple[int, int]] = {}
        self.publication_reporters: list[str] = []

    def setup(self) -> None:
        hz = self.sim.scenario.horizon_seconds
        for t in range(SECONDS_PER_DAY, hz, SECONDS_PER_DAY):
            self.sim.schedule(t, lambda now=t: self._start_day(now // SECONDS_PER_DAY))
        self.sim.schedule(0, lambda: self._global_tick(0))

    def _start_day(self, day: int) -> None:
        for u in self.sim.scenario.users:
            self.users[u].start_day(day, self.sim.rng)

    def _epoch_in_day(self, now: int) -> int:
        return (now % SECONDS_PER_DAY) // self.epoch_seconds

    def _global_tick(self, now: int) -> None:
        epoch = self._epoch_in_day(now)
        for u in self.sim.scenario.users:
            self.sim.emit(u, self.users[u].broadcast_id(epoch), now, tag=f"day{now // SECONDS_PER_DAY}")
        nxt = now + self.epoch_seconds
        if nxt < self.sim.scenario.horizon_seconds:
            self.sim.schedule(nxt, lambda: self._global_tick(nxt))

    def listening(self, user: str) -> bool:
        return True

    def current_payload(self, user: str) -> bytes | None:
        return self.users[user].broadcast_id(self._epoch_in_day(self.sim.now))

    def deliver(self, user: str, payload: bytes, rx_dbm: float, now: int) -> None:
        self.users[user].hear(
            payload, rx_dbm, now // SECONDS_PER_DAY, self._epoch_in_day(now)
        )

    def on_enter(self, user: str, venue_id: str, now: int) -> None:
        pass  # no venue concept; positions handled by the core

    def on_leave(self, user: str, venue_id: str, now: int) -> None:
        pass

    def on_test_positive(self, user: str, period: tuple[int, int], now: int) -> None:
        self.periods[user] = period

    def on_report(self, user: str, data: dict[str, Any], now: int) -> None:
        period = self.periods.get(user)
        if period is None:
            self.sim.log_event({"t": now, "kind": "report_skipped", "user": user})
            return
        first_day = period[0] // SECONDS_PER_DAY
        self.users[user].report(self.backend, first_day, now // SECONDS_PER_DAY, self.sim.rng)
        self.publication_reporters.append(user)
        self.sim.outcomes["reporters"].setdefault(user, list(period))
        self.sim.outcomes["reports"].append(
            {"user": user, "venue": None, "accepted": True, "code": None, "t": now}
        )
        self.sim.log_event({"t": now, "kind": "report", "user": user, "day": first_day})

    def on_trace_query(self, user: str, now: int) -> None:
        assessments = dp3t_match(
            self.users[user],
            self.backend.published,
            through_day=now // SECONDS_PER_DAY,
            exposure_seconds=self.sim.params.exposure_seconds,
            proximity_threshold_dbm=self.risk_threshold_dbm,
            epoch_seconds=self.epoch_seconds,
        )
        for assessment, reporter in zip(assessments, self.publication_reporters):
            if reporter == user:
                continue
            self.sim.outcomes["assessments"].append(
                {
                    "user": user,
                    "venue": None,
                    "record_key": None,
                    "reporter": reporter,
                    "matched_epochs": assessment.matched_epochs,
                    "exposure_seconds": assessment.exposure_seconds,
                    "at_risk": assessment.at_risk,
                    "leak": assessment.leak,
                }
            )

    def finalize(self, horizon: int) -> None:
        self.sim.outcomes["duty_seconds"] = {
            u: float(horizon) for u in self.sim.scenario.users
        }
        self.sim.outcomes["published_keys"] = [
            {"day": p.day_index, "key": p.key.hex(), "reporter": r}
            for p, r in zip(self.backend.published, self.publication_reporters)
        ]


class _TTDriver:
    """TraceTogether baseline: MoH-issued tokens, centralised tracing."""

    name = "tracetogether"

    def __init__(self, sim: "Simulation"):
        self.sim = sim
        self.interval_seconds = sim.params.tt_interval_seconds
        self.moh = MoHServer(sim.rng)
        self.users: dict[str, TTUserApp] = {}
        self.phone_to_user: dict[str, str] = {}
        for u in sim.scenario.users:
            phone = f"555-{u}"
            self.users[u] = TTUserApp(phone, self.moh, sim.rng)
            self.phone_to_user[phone] = u
        self.periods: dict[str, tuple[int, int]] = {}
        self._triple_intervals: dict[str, list[int]] = {u: [] for u in sim.scenario.users}

    def setup(self) -> None:
        self.sim.schedule(0, lambda: self._interval_tick(0))

    def _interval_tick(self, now: int) -> None:
        interval = now // self.interval_seconds
        for u in self.sim.scenario.users:
            app = self.users[u]
            app.receive_tid(self.moh.issue_tid(app.pseudonym, interval, self.sim.rng))
        for u in self.sim.scenario.users:
            app = self.users[u]
            self.sim.emit(u, app.current_tid.ciphertext, now, tag=f"ivl{interval}")
        nxt = now + self.interval_seconds
        if nxt < self.sim.scenario.horizon_seconds:
            self.sim.schedule(nxt, lambda: self._interval_tick(nxt))

    def listening(self, user: str) -> bool:
        return True

    def current_payload(self, user: str) -> bytes | None:
        tid = self.users[user].current_tid
        return None if tid is None else tid.ciphertext

    def deliver(self, user: str, payload: bytes, rx_dbm: float, now: int) -> None:
        app = self.users[user]
        if app.current_tid is None:
            return
        app.hear(payload, rx_dbm)
        self._triple_intervals[user].append(now // self.interval_seconds)

    def on_enter(self, user: str, venue_id: str, now: int) -> None:
        pass

    def on_leave(self, user: str, venue_id: str, now: int) -> None:
        pass

    def on_test_positive(self, user: str, period: tuple[int, int], now: int) -> None:
        self.periods[user] = period

    def on_report(self, user: str, data: dict[str, Any], now: int) -> None:
        period = self.periods.get(user)
        if period is None:
            self.sim.log_event({"t": now, "kind": "report_skipped", "user": user})
            return
        app = self.users[user]
        lo, hi = period[0] // self.interval_seconds, period[1] // self.interval_seconds
        relevant = [
            t
            for t, ivl in zip(app.triples, self._triple_intervals[user])
            if lo <= ivl <= hi
        ]
        contacts = self.moh.trace(app.phone_number, relevant)
        self.sim.outcomes["reporters"].setdefault(user, list(period))
        self.sim.outcomes["reports"].append(
            {"user": user, "venue": None, "accepted": True, "code": None, "t": now}
        )
        for phone in contacts:
            contact = self.phone_to_user[phone]
            self.users[contact].notified = True
            self.sim.outcomes["assessments"].append(
                {
                    "user": contact,
                    "venue": None,
                    "record_key": None,
                    "reporter": user,
                    "matched_epochs": 1,
                    "exposure_seconds": self.interval_seconds,
                    "at_risk": True,
                }
            )

    def on_trace_query(self, user: str, now: int) -> None:
        pass  # notification is pushed by MoH at report time

    def finalize(self, horizon: int) -> None:
        self.sim.outcomes["duty_seconds"] = {
            u: float(horizon) for u in self.sim.scenario.users
        }
        self.sim.outcomes["moh_edges"] = [
            {"reporter": self.phone_to_user[a], "contact": self.phone_to_user[b]}
            for a, b in self.moh.traced_edges
        ]


_DRIVERS = {"venue": _VenueDriver, "dp3t": _Dp3tDriver, "tracetogether": _TTDriver}


# ---------------------------------------------------------------------------
# Simulation core
# ---------------------------------------------------------------------------

class Simulation:
    def __init__(self, scenario: Scenario, params: SimParams):
        diags = validate_scenario(scenario)
        if diags:
            raise ScenarioError(diags)
        if params.protocol not in _DRIVERS:
            raise ScenarioError([f"unknown protocol {params.protocol!r}"])
        self.scenario = scenario
        self.params = params
        self.rng = random.Random(params.seed)
        self.now = 0
        self._heap: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = 0

        self.location: dict[str, str | None] = {}
        self.position: dict[str, tuple[float, float]] = {}
        self._open_segment: dict[str, dict[str, Any]] = {}
        self.presence: list[dict[str, Any]] = []
        self.broadcasts: list[dict[str, Any]] = []
        self.events_log: list[dict[str, Any]] = []
        self.outcomes: dict[str, Any] = {
            "reporters": {},
            "reports": [],
            "deliveries": [],
            "assessments": [],
            "rejected_queries": [],
            "visits": [],
            "record_reporters": {},
            "adversary": {"injected": 0, "captured": 0, "eavesdropped": []},
        }
        self._relays: list[dict[str, Any]] = []
        self._replays: list[dict[str, Any]] = []
        self._suppress: list[dict[str, Any]] = []
        self._eavesdrop_venues: list[str] = []
        self.adversary_observed: list[str] = []

        self._street_pos: dict[str, tuple[float, float]] = {}
        for i, user in enumerate(scenario.users):
            self.location[user] = STREET
            self._street_pos[user] = (1.0e6 + 1000.0 * i, 0.0)
            self.position[user] = self._street_pos[user]
            self._open_segment[user] = {
                "user": user, "start": 0, "location": STREET,
                "x": self.position[user][0], "y": self.position[user][1],
            }

        self.driver = _DRIVERS[params.protocol](self)
        self.driver.setup()
        for event in scenario.sorted_events():
            self.schedule(event.time, lambda e=event: self._handle_scenario_event(e))

    # -- scheduling ---------------------------------------------------------

    def schedule(self, time: int, fn: Callable[[], None]) -> None:
        if time > self.scenario.horizon_seconds:
            return
        self._seq += 1
        heapq.heappush(self._heap, (time, self._seq, fn))

    def log_event(self, entry: dict[str, Any]) -> None:
        self.events_log.append(entry)

    # -- world state --------------------------------------------------------

    def _close_segment(self, user: str, now: int) -> None:
        seg = self._open_segment[user]
        if seg["start"] < now:
            self.presence.append({**seg, "end": now})

    def _set_position(
        self, user: str, location: str | None, pos: tuple[float, float], now: int
    ) -> None:
        self._close_segment(user, now)
        self.location[user] = location
        self.position[user] = pos
        self._open_segment[user] = {
            "user": user, "start": now, "location": location, "x": pos[0], "y": pos[1],
        }

    def _distance(self, a: str, b: str) -> float:
        ax, ay = self.position[a]
        bx, by = self.position[b]
        return math.hypot(ax - bx, ay - by)

    def _is_suppressed(self, user: str, now: int) -> bool:
        return any(
            s["user"] == user and s["start"] <= now <= s["end"] for s in self._suppress
        )

    # -- broadcasting -------------------------------------------------------

    def emit(
        self,
        emitter: str,
        payload: bytes,
        now: int,
        tag: str = "",
        tx_dbm: float | None = None,
        injected: bool = False,
        at: tuple[str | None, tuple[float, float]] | None = None,
    ) -> None:
        """Put bytes on the air and deliver to co-located listeners in range."""
        if not injected and self._is_suppressed(emitter, now):
            return
        if at is not None:
            loc, pos = at
        else:
            loc, pos = self.location[emitter], self.position[emitter]
        self.broadcasts.append(
            {
                "t": now,
                "emitter": emitter,
                "location": loc,
                "payload": payload.hex(),
                "tx_dbm": self.params.channel.tx_dbm if tx_dbm is None else tx_dbm,
                "injected": injected,
                "tag": tag,
            }
        )
        if injected:
            self.outcomes["adversary"]["injected"] += 1

        for user in self.scenario.users:
            if user == emitter or self.location[user] != loc:
                continue
            if not self.driver.listening(user):
                continue
            ux, uy = self.position[user]
            d = math.hypot(ux - pos[0], uy - pos[1])
            rx = self.params.channel.rx_dbm(d, self.rng, tx_dbm)
            if rx is None:
                continue
            self.driver.deliver(user, payload, rx, now)

        if loc is not STREET:
            # venue infrastructure (venue protocol only) hears everything on premise
            venue = getattr(self.driver, "venues", {}).get(loc)
            if venue is not None:
                tx = self.params.channel.tx_dbm if tx_dbm is None else tx_dbm
                venue.record_broadcast(
                    payload, tx - self.params.channel.reference_loss_db, now
                )
            if loc in self._eavesdrop_venues:
                self.adversary_observed.append(payload.hex())
                self.outcomes["adversary"]["eavesdropped"].append(
                    {"venue": loc, "payload": payload.hex(), "t": now}
                )
            if not injected:
                self._capture(loc, payload, now)

    def _capture(self, loc: str, payload: bytes, now: int) -> None:
        for relay in self._relays:
            if relay["src_venue"] == loc and relay["start"] <= now <= relay["end"]:
                self.adversary_observed.append(payload.hex())
                self.outcomes["adversary"]["captured"] += 1
                dst = relay["dst_venue"]
                pos = tuple(relay["pos"])
                t = now + relay["delay"]
                self.schedule(
                    t,
                    lambda p=payload, d=dst, q=pos, tt=t: self.emit(
                        "adversary", p, tt, tag="relay", injected=True, at=(d, q)
                    ),
                )
        for replay in self._replays:
            if replay["venue"] == loc and replay["start"] <= now <= replay["end"]:
                self.adversary_observed.append(payload.hex())
                self.outcomes["adversary"]["captured"] += 1
                pos = tuple(replay["pos"])
                t = now + replay["delay"]
                self.schedule(
                    t,
                    lambda p=payload, d=loc, q=pos, tt=t: self.emit(
                        "adversary", p, tt, tag="replay", injected=True, at=(d, q)
                    ),
                )

    def _exchange(self, user: str, now: int) -> None:
        """Catch-up delivery of current identifiers on new co-presence."""
        loc = self.location[user]
        for other in self.scenario.users:
            if other == user or self.location[other] != loc:
                continue
            d = self._distance(user, other)
            if d > self.params.channel.max_range_m:
                continue
            their = self.driver.current_payload(other)
            if their is not None and self.driver.listening(user) and not self._is_suppressed(other, now):
                rx = self.params.channel.rx_dbm(d, self.rng)
                if rx is not None:
                    self.driver.deliver(user, their, rx, now)
            mine = self.driver.current_payload(user)
            if mine is not None and self.driver.listening(other) and not self._is_suppressed(user, now):
                rx = self.params.channel.rx_dbm(d, self.rng)
                if rx is not None:
                    self.driver.deliver(other, mine, rx, now)

    # -- scenario event handling ---------------------------------------------

    def _handle_scenario_event(self, event: ScenarioEvent) -> None:
        self.now = event.time
        kind, data, now = event.kind, event.data, event.time
        self.log_event({"t": now, "kind": kind, **{k: v for k, v in data.items()}})

        if kind == "enter":
            user, venue = data["user"], data["venue"]
            pos = tuple(float(c) for c in data.get("pos", (0.0, 0.0)))
            self._set_position(user, venue, pos, now)
            if data.get("consent", True):
                self.driver.on_enter(user, venue, now)
            self._exchange(user, now)
        elif kind == "move":
            user = data["user"]
            pos = tuple(float(c) for c in data["pos"])
            self._set_position(user, self.location[user], pos, now)
            self._exchange(user, now)
        elif kind == "leave":
            user = data["user"]
            venue = self.location[user]
            if venue is not STREET:
                self.driver.on_leave(user, venue, now)
            self._set_position(user, STREET, self._street_pos[user], now)
            self._exchange(user, now)
        elif kind == "test_positive":
            self.driver.on_test_positive(
                data["user"], (int(data["period"][0]), int(data["period"][1])), now
            )
        elif kind == "report":
            self.driver.on_report(data["user"], data, now)
        elif kind == "trace_query":
            self.driver.on_trace_query(data["user"], now)
        elif kind == "adversary_action":
            self._handle_adversary(data, now)

    def _handle_adversary(self, data: dict[str, Any], now: int) -> None:
        action = data["action"]
        if action == "relay_cross_venue":
            self._relays.append(
                {
                    "src_venue": data["src_venue"],
                    "dst_venue": data["dst_venue"],
                    "pos": data.get("pos", [0.0, 0.0]),
                    "start": data["start"],
                    "end": data["end"],
                    "delay": data.get("delay", 1),
                }
            )
        elif action == "replay_same_venue":
            self._replays.append(
                {
                    "venue": data["venue"],
                    "pos": data.get("pos", [0.0, 0.0]),
                    "start": data["start"],
                    "end": data["end"],
                    "delay": data.get("delay", 1),
                }
            )
        elif action == "suppress_broadcasts":
            self._suppress.append(
                {"user": data["user"], "start": data["start"], "end": data["end"]}
            )
        elif action == "flood":
            venue = data["venue"]
            pos = tuple(data.get("pos", (0.0, 0.0)))
            per_minute = int(data.get("per_minute", 60))
            tx = float(data.get("tx_dbm", 10.0))
            per_second = max(1, per_minute // 60) if per_minute >= 60 else 1
            step = 1 if per_minute >= 60 else max(1, 60 // per_minute)
            for t in range(int(data["start"]), int(data["end"]) + 1, step):
                self.schedule(
                    t,
                    lambda tt=t, v=venue, q=pos, x=tx, k=per_second: [
                        self.emit(
                            "adversary",
                            self.rng.randbytes(16),
                            tt,
                            tag="flood",
                            tx_dbm=x,
                            injected=True,
                            at=(v, q),
                        )
                        for _ in range(k)
                    ],
                )
        elif action == "share_rid":
            if getattr(self.driver, "name", "") == "venue":
                src = self.driver.users[data["from_user"]]
                self.driver.users[data["to_user"]].rid = src.rid
            self.log_event({"t": now, "kind": "share_rid_applied"})
        elif action == "linkage_eavesdrop":
            self._eavesdrop_venues.extend(data.get("venues", []))

    # -- run -----------------------------------------------------------------

    def run(self) -> SimulationTrace:
        horizon = self.scenario.horizon_seconds
        while self._heap:
            time, _, fn = heapq.heappop(self._heap)
            if time > horizon:
                break
            self.now = time
            fn()
        self.now = horizon
        for user in self.scenario.users:
            self._close_segment(user, horizon)
        self.driver.finalize(horizon)
        logged = {b["payload"] for b in self.broadcasts}
        self.outcomes["adversary"]["observed_only_broadcast_bytes"] = all(
            p in logged for p in self.adversary_observed
        )
        config = {
            "scenario": self.scenario.to_dict(),
            "params": self.params.to_dict(),
        }
        return SimulationTrace(
            data={
                "config": config,
                "events": self.events_log,
                "broadcasts": self.broadcasts,
                "presence": self.presence,
                "outcomes": self.outcomes,
            }
        )


def run(scenario: Scenario, protocol: str = "venue", seed: int = 0,
        overrides: dict[str, Any] | None = None) -> SimulationTrace:
    """Build params, simulate, and return the full trace."""
    params = SimParams.build(scenario, protocol, seed, overrides)
    return Simulation(scenario, params).run()
