"""Scenario schema, validation, and deterministic scenario builders.

A scenario is a JSON document: users, venues (with per-venue policy
overrides), a time horizon, simulation parameter overrides, and a list of
timed events. Positions are scripted; there is no mobility model in the
core. Builders below generate populations, encounters, and attack setups
as plain event lists, so everything the simulator consumes stays explicit
and reproducible.

Event kinds and their fields:

* ``enter``  -- user, venue, pos [x, y], optional consent (default true)
* ``move``   -- user, pos [x, y]; applies to the current location (venue
  while inside one, the shared street space otherwise)
* ``leave``  -- user (leaves the venue they are in)
* ``test_positive`` -- user, period [start, end]
* ``report`` -- user; optional tamper ("forge_certificate",
  "corrupt_opening", "swap_venue_keys") and use_certificate_of
* ``trace_query`` -- user (queries every stored visit / published key)
* ``adversary_action`` -- action plus action-specific fields:
  - flood: venue, pos, start, end, per_minute, tx_dbm
  - replay_same_venue: venue, pos, start, end, delay
  - relay_cross_venue: src_venue, dst_venue, pos, start, end, delay
  - suppress_broadcasts: user, start, end
  - share_rid: from_user, to_user
  - linkage_eavesdrop: venues
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from random import Random
from typing import Any

EVENT_KINDS = {
    "enter",
    "move",
    "leave",
    "test_positive",
    "report",
    "trace_query",
    "adversary_action",
}
ADVERSARY_ACTIONS = {
    "flood",
    "replay_same_venue",
    "relay_cross_venue",
    "suppress_broadcasts",
    "share_rid",
    "linkage_eavesdrop",
}
SECONDS_PER_DAY = 86_400


@dataclass
class ScenarioEvent:
    time: int
    kind: str
    data: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"time": self.time, "kind": self.kind, **self.data}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScenarioEvent":
        d = dict(d)
        return cls(time=int(d.pop("time")), kind=str(d.pop("kind")), data=d)


@dataclass
class VenueSpec:
    venue_id: str
    policy: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"id": self.venue_id}
        if self.policy:
            out["policy"] = self.policy
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "VenueSpec":
        return cls(venue_id=d["id"], policy=d.get("policy", {}))


@dataclass
class Scenario:
    name: str
    horizon_seconds: int
    users: list[str]
    venues: list[VenueSpec]
    events: list[ScenarioEvent]
    params: dict[str, Any] = field(default_factory=dict)

    def sorted_events(self) -> list[ScenarioEvent]:
        return sorted(self.events, key=lambda e: e.time)  # stable: file order on ties

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "horizon_seconds": self.horizon_seconds,
            "users": list(self.users),
            "venues": [v.to_dict() for v in self.venues],
            "params": self.params,
            "events": [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Scenario":
        return cls(
            name=d.get("name", "scenario"),
            horizon_seconds=int(d["horizon_seconds"]),
            users=list(d["users"]),
            venues=[VenueSpec.from_dict(v) for v in d.get("venues", [])],
            events=[ScenarioEvent.from_dict(e) for e in d.get("events", [])],
            params=d.get("params", {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "Scenario":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class ScenarioError(ValueError):
    """Scenario failed validation; ``diagnostics`` lists every problem."""

    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


def validate_scenario(scenario: Scenario) -> list[str]:
    """Return a list of diagnostics (empty when the scenario is clean)."""
    from .actors import VenuePolicy  # local import: actors pulls in crypto

    diags: list[str] = []
    users = set(scenario.users)
    venues = {v.venue_id for v in scenario.venues}
    tested: set[str] = set()
    in_venue: dict[str, str] = {}

    policy_keys = {f.name for f in fields(VenuePolicy)}
    for v in scenario.venues:
        unknown = sorted(set(v.policy) - policy_keys)
        if unknown:
            diags.append(f"venue {v.venue_id!r}: unknown policy keys {unknown}")
        condition = v.policy.get("time_condition")
        if condition is not None and condition not in ("same_day", "within_hours"):
            diags.append(f"venue {v.venue_id!r}: unknown time condition {condition!r}")

    def anchor(i: int, e: ScenarioEvent) -> str:
        return f"event[{i}] t={e.time} {e.kind}"

    for i, e in enumerate(scenario.sorted_events()):
        where = anchor(i, e)
        if e.kind not in EVENT_KINDS:
            diags.append(f"{where}: unknown event kind {e.kind!r}")
            continue
        if e.time < 0 or e.time > scenario.horizon_seconds:
            diags.append(f"{where}: time outside scenario horizon")
        subject = e.data.get("user")
        if e.kind != "adversary_action":
            if subject not in users:
                diags.append(f"{where}: unknown user {subject!r}")
                continue
        if e.kind == "enter":
            venue = e.data.get("venue")
            if venue not in venues:
                diags.append(f"{where}: unknown venue {venue!r}")
                continue
            if subject in in_venue:
                diags.append(
                    f"{where}: user {subject} enters {venue!r} before leaving "
                    f"{in_venue[subject]!r}"
                )
            in_venue[subject] = venue
        elif e.kind == "leave":
            if subject not in in_venue:
                diags.append(f"{where}: user {subject} leaves but is in no venue")
            else:
                del in_venue[subject]
        elif e.kind == "move":
            pos = e.data.get("pos")
            if not (isinstance(pos, (list, tuple)) and len(pos) == 2):
                diags.append(f"{where}: move requires pos [x, y]")
        elif e.kind == "test_positive":
            period = e.data.get("period")
            if not (isinstance(period, (list, tuple)) and len(period) == 2 and period[0] <= period[1]):
                diags.append(f"{where}: test_positive requires period [start, end]")
            else:
                tested.add(subject)
        elif e.kind == "report":
            credential_holder = e.data.get("use_certificate_of", subject)
            if credential_holder not in tested:
                diags.append(
                    f"{where}: user {subject} reports without a positive test"
                )
        elif e.kind == "adversary_action":
            action = e.data.get("action")
            if action not in ADVERSARY_ACTIONS:
                diags.append(f"{where}: unknown adversary action {action!r}")
                continue
            start, end = e.data.get("start"), e.data.get("end")
            if start is not None and end is not None:
                if end < start:
                    diags.append(f"{where}: adversary window ends before it starts")
                elif start < 0 or end > scenario.horizon_seconds:
                    diags.append(f"{where}: adversary window outside scenario horizon")
            for key in ("venue", "src_venue", "dst_venue"):
                if key in e.data and e.data[key] not in venues:
                    diags.append(f"{where}: unknown venue {e.data[key]!r} in {key}")
            for key in ("from_user", "to_user"):
                if key in e.data and e.data[key] not in users:
                    diags.append(f"{where}: unknown user {e.data[key]!r} in {key}")
    return diags


# ---------------------------------------------------------------------------
# Builders (helpers; core simulation consumes only the explicit events)
# ---------------------------------------------------------------------------

def _table_positions(count: int, table_index: int) -> list[tuple[float, float]]:
    """Seats around table ``table_index``: all pairwise within ~1.3 m."""
    base_x = 10.0 * table_index
    offsets = [(0.0, 0.0), (0.9, 0.0), (0.0, 0.9), (0.9, 0.9)]
    return [(base_x + dx, dy) for dx, dy in offsets[:count]]


def build_population_scenario(
    n_users: int = 50,
    n_venues: int = 3,
    days: int = 7,
    seed: int = 0,
    infected: tuple[str, ...] = ("u00", "u01"),
    slots_per_day: int = 2,
    min_epochs: int = 6,
    max_epochs: int = 18,
    epoch_seconds: int = 180,
    name: str = "population",
) -> Scenario:
    """Honest population: daily small-group venue visits with shared tables.

    Infected users test positive after the contagious window (days 1 through
    ``days - 2``), report once digests for those days exist, and every user
    runs a trace query before the horizon. Every same-table pairing lasts at
    least ``min_epochs`` epochs within 1.3 m, so each group containing an
    infected user yields ground-truth exposures.
    """
    rng = Random(seed)
    users = [f"u{i:02d}" for i in range(n_users)]
    venues = [VenueSpec(venue_id=f"v{i}") for i in range(n_venues)]
    events: list[ScenarioEvent] = []

    period_start = 1 * SECONDS_PER_DAY
    period_end = (days - 1) * SECONDS_PER_DAY  # visits on days 1..days-2
    slot_hours = [9, 15][:slots_per_day] or [9]

    for day in range(days - 1):
        for slot, hour in enumerate(slot_hours):
            order = users[:]
            rng.shuffle(order)
            table = 0
            while order:
                size = min(len(order), rng.choice([2, 3, 3, 4]))
                group, order = order[:size], order[size:]
                venue = f"v{rng.randrange(n_venues)}"
                start = day * SECONDS_PER_DAY + hour * 3600 + rng.randrange(0, 10) * 60
                duration = rng.randrange(min_epochs, max_epochs + 1) * epoch_seconds
                seats = _table_positions(size, table)
                for member, pos in zip(group, seats):
                    events.append(
                        ScenarioEvent(
                            time=start,
                            kind="enter",
                            data={"user": member, "venue": venue, "pos": list(pos)},
                        )
                    )
                    events.append(
                        ScenarioEvent(time=start + duration, kind="leave", data={"user": member})
                    )
                table += 1

    test_time = period_end + 1800
    report_time = test_time + 600
    query_time = report_time + 3600
    for sick in infected:
        events.append(
            ScenarioEvent(
                time=test_time,
                kind="test_positive",
                data={"user": sick, "period": [period_start, period_end]},
            )
        )
        events.append(ScenarioEvent(time=report_time, kind="report", data={"user": sick}))
    for user in users:
        events.append(ScenarioEvent(time=query_time, kind="trace_query", data={"user": user}))

    return Scenario(
        name=name,
        horizon_seconds=days * SECONDS_PER_DAY,
        users=users,
        venues=venues,
        events=events,
        params={"epoch_seconds": epoch_seconds},
    )


def build_street_encounter_scenario() -> Scenario:
    """The 10-second street encounter: u00 (later infected) passes u01.

    u00 also makes a proper venue visit during the contagious period so a
    report exists under the venue protocol; u01 never shares a venue.
    """
    events = [
        # day 0: u00 visits a venue with a co-visitor u02 (so the venue
        # protocol produces a real report), 30 minutes at one table.
        ScenarioEvent(time=36000, kind="enter", data={"user": "u00", "venue": "v0", "pos": [0.0, 0.0]}),
        ScenarioEvent(time=36000, kind="enter", data={"user": "u02", "venue": "v0", "pos": [0.9, 0.0]}),
        ScenarioEvent(time=37800, kind="leave", data={"user": "u00"}),
        ScenarioEvent(time=37800, kind="leave", data={"user": "u02"}),
        # day 0 evening: 10-second street encounter between u00 and u01.
        ScenarioEvent(time=64000, kind="move", data={"user": "u00", "pos": [0.0, 0.0]}),
        ScenarioEvent(time=64000, kind="move", data={"user": "u01", "pos": [0.8, 0.0]}),
        ScenarioEvent(time=64010, kind="move", data={"user": "u01", "pos": [500.0, 0.0]}),
        ScenarioEvent(time=64010, kind="move", data={"user": "u00", "pos": [-500.0, 0.0]}),
        # day 1: test, report, queries.
        ScenarioEvent(time=122400, kind="test_positive", data={"user": "u00", "period": [0, 86400]}),
        ScenarioEvent(time=123000, kind="report", data={"user": "u00"}),
        ScenarioEvent(time=126600, kind="trace_query", data={"user": "u01"}),
        ScenarioEvent(time=126600, kind="trace_query", data={"user": "u02"}),
    ]
    return Scenario(
        name="street-encounter",
        horizon_seconds=2 * SECONDS_PER_DAY,
        users=["u00", "u01", "u02"],
        venues=[VenueSpec(venue_id="v0")],
        events=events,
    )


def build_relay_scenario(with_attack: bool = True) -> Scenario:
    """Cross-venue relay: venue v0 traffic is re-broadcast inside v1.

    u00 (infected) sits with u01 in v0; u10 and u11 sit in v1 at the same
    hour. The adversary relays v0's broadcasts into v1 next to the v1 table.
    """
    start = SECONDS_PER_DAY + 36000  # day 1, 10:00
    duration = 1800
    events = [
        ScenarioEvent(time=start, kind="enter", data={"user": "u00", "venue": "v0", "pos": [0.0, 0.0]}),
        ScenarioEvent(time=start, kind="enter", data={"user": "u01", "venue": "v0", "pos": [0.9, 0.0]}),
        ScenarioEvent(time=start, kind="enter", data={"user": "u10", "venue": "v1", "pos": [0.0, 0.0]}),
        ScenarioEvent(time=start, kind="enter", data={"user": "u11", "venue": "v1", "pos": [0.9, 0.0]}),
        ScenarioEvent(time=start + duration, kind="leave", data={"user": "u00"}),
        ScenarioEvent(time=start + duration, kind="leave", data={"user": "u01"}),
        ScenarioEvent(time=start + duration, kind="leave", data={"user": "u10"}),
        ScenarioEvent(time=start + duration, kind="leave", data={"user": "u11"}),
        ScenarioEvent(
            time=2 * SECONDS_PER_DAY + 3600,
            kind="test_positive",
            data={"user": "u00", "period": [SECONDS_PER_DAY, 2 * SECONDS_PER_DAY]},
        ),
        ScenarioEvent(time=2 * SECONDS_PER_DAY + 4200, kind="report", data={"user": "u00"}),
    ]
    if with_attack:
        events.append(
            ScenarioEvent(
                time=start,
                kind="adversary_action",
                data={
                    "action": "relay_cross_venue",
                    "src_venue": "v0",
                    "dst_venue": "v1",
                    "pos": [0.45, 0.45],
                    "start": start,
                    "end": start + duration,
                    "delay": 1,
                },
            )
        )
    for user in ("u00", "u01", "u10", "u11"):
        events.append(
            ScenarioEvent(time=2 * SECONDS_PER_DAY + 7800, kind="trace_query", data={"user": user})
        )
    return Scenario(
        name="relay" + ("" if with_attack else "-baseline"),
        horizon_seconds=3 * SECONDS_PER_DAY,
        users=["u00", "u01", "u10", "u11"],
        venues=[VenueSpec(venue_id="v0"), VenueSpec(venue_id="v1")],
        events=events,
    )


def build_duty_cycle_scenario(
    n_users: int = 10,
    days: int = 2,
    in_venue_fraction: float = 0.3,
) -> Scenario:
    """Each user spends exactly ``in_venue_fraction`` of every day inside
    venues, in two long visits (long enough to exercise window rollover)."""
    total = int(in_venue_fraction * SECONDS_PER_DAY)
    half = total // 2
    users = [f"u{i:02d}" for i in range(n_users)]
    venues = [VenueSpec(venue_id="v0"), VenueSpec(venue_id="v1")]
    events: list[ScenarioEvent] = []
    for day in range(days):
        base = day * SECONDS_PER_DAY
        for i, user in enumerate(users):
            table = i // 2
            seat = _table_positions(2, table)[i % 2]
            for visit, (venue, start) in enumerate(
                [("v0", base + 8 * 3600), ("v1", base + 16 * 3600)]
            ):
                dur = half + (total - 2 * half if visit == 1 else 0)
                events.append(
                    ScenarioEvent(
                        time=start,
                        kind="enter",
                        data={"user": user, "venue": venue, "pos": list(seat)},
                    )
                )
                events.append(ScenarioEvent(time=start + dur, kind="leave", data={"user": user}))
    return Scenario(
        name="duty-cycle",
        horizon_seconds=days * SECONDS_PER_DAY,
        users=users,
        venues=venues,
        events=events,
    )
