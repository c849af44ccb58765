"""Ground-truth exposure oracle and per-run metrics.

The oracle works purely on the trace's presence segments (true scripted
positions), never on protocol state, so it can judge any protocol's
notifications. Exposure is evaluated over maximal contiguous co-location
intervals: same venue, within the distance threshold, clipped to the
reporter's contagious period, lasting at least the duration threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class ExposurePolicy:
    distance_m: float = 2.0
    duration_seconds: int = 900


def _segments_by_user(
    presence: list[dict[str, Any]], street: bool
) -> dict[str, list[dict[str, Any]]]:
    by_user: dict[str, list[dict[str, Any]]] = {}
    for seg in presence:
        if (seg["location"] is None) != street:
            continue
        by_user.setdefault(seg["user"], []).append(seg)
    return by_user


def _merge_intervals(pieces: list[tuple[int, int]]) -> list[tuple[int, int]]:
    merged: list[tuple[int, int]] = []
    for start, end in sorted(pieces):
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def ground_truth_exposures(
    trace_data: dict[str, Any],
    policy: ExposurePolicy | None = None,
    street: bool = False,
) -> set[tuple[str, str, str]]:
    """All (user, location, reporter) triples exposed per the physical oracle.

    Computed from true positions and the reporters' contagious periods only;
    independent of every protocol's bookkeeping. With ``street=True`` the
    scan covers off-premise co-location instead of venues, quantifying the
    exposures a geo-selective protocol gives up by design.
    """
    policy = policy or ExposurePolicy()
    presence = trace_data["presence"]
    reporters: dict[str, list[int]] = trace_data["outcomes"]["reporters"]
    segments = _segments_by_user(presence, street)

    exposures: set[tuple[str, str, str]] = set()
    for reporter, period in reporters.items():
        rsegs = segments.get(reporter, [])
        for user, usegs in segments.items():
            if user == reporter:
                continue
            pieces: dict[str, list[tuple[int, int]]] = {}
            for rs in rsegs:
                for us in usegs:
                    if us["location"] != rs["location"]:
                        continue
                    start = max(rs["start"], us["start"], period[0])
                    end = min(rs["end"], us["end"], period[1])
                    if end <= start:
                        continue
                    dx, dy = rs["x"] - us["x"], rs["y"] - us["y"]
                    if (dx * dx + dy * dy) ** 0.5 > policy.distance_m:
                        continue
                    key = rs["location"] if rs["location"] is not None else "street"
                    pieces.setdefault(key, []).append((start, end))
            for venue, intervals in pieces.items():
                for start, end in _merge_intervals(intervals):
                    if end - start >= policy.duration_seconds:
                        exposures.add((user, venue, reporter))
                        break
    return exposures


@dataclass
class MetricsReport:
    protocol: str
    seed: int
    horizon_seconds: int
    recall: float
    precision: float
    ground_truth_pairs: list[list[str]]
    notified_pairs: list[list[str]]
    false_negative_pairs: list[list[str]]
    false_positive_pairs: list[list[str]]
    at_risk_users: list[str]
    leak_users: list[str]
    data_minimisation_violations: int | None
    duty_cycle: dict[str, float]
    mean_duty_cycle: float
    accepted_reports: int
    rejections: dict[str, int]
    venue_anomalies: dict[str, int]
    adversary: dict[str, Any]
    info_exposure: dict[str, Any]
    deliveries: int = 0
    extras: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "protocol": self.protocol,
            "seed": self.seed,
            "horizon_seconds": self.horizon_seconds,
            "recall": self.recall,
            "precision": self.precision,
            "ground_truth_pairs": self.ground_truth_pairs,
            "notified_pairs": self.notified_pairs,
            "false_negative_pairs": self.false_negative_pairs,
            "false_positive_pairs": self.false_positive_pairs,
            "at_risk_users": self.at_risk_users,
            "leak_users": self.leak_users,
            "data_minimisation_violations": self.data_minimisation_violations,
            "duty_cycle": self.duty_cycle,
            "mean_duty_cycle": self.mean_duty_cycle,
            "accepted_reports": self.accepted_reports,
            "rejections": self.rejections,
            "venue_anomalies": self.venue_anomalies,
            "adversary": self.adversary,
            "info_exposure": self.info_exposure,
            "deliveries": self.deliveries,
            "extras": self.extras,
        }


def _linkage_scan(broadcasts: list[dict[str, Any]]) -> tuple[int, int]:
    """(cross-venue matches, cross-visit matches) over honest broadcasts."""
    seen: dict[str, set[tuple[str, str, str]]] = {}
    for b in broadcasts:
        if b["injected"] or b["location"] is None:
            continue
        seen.setdefault(b["payload"], set()).add((b["emitter"], b["location"], b["tag"]))
    cross_venue = 0
    cross_visit = 0
    for spots in seen.values():
        venues = {loc for (_, loc, _) in spots}
        if len(venues) > 1:
            cross_venue += 1
        by_emitter_venue: dict[tuple[str, str], set[str]] = {}
        for emitter, loc, tag in spots:
            by_emitter_venue.setdefault((emitter, loc), set()).add(tag)
        if any(len(tags) > 1 for tags in by_emitter_venue.values()):
            cross_visit += 1
    return cross_venue, cross_visit


def _info_exposure(trace_data: dict[str, Any], protocol: str) -> dict[str, Any]:
    outcomes = trace_data["outcomes"]
    if protocol == "venue":
        observed = outcomes.get("actor_observed", {})
        backend = observed.get("backend", [])
        ha = observed.get("ha", [])
        tc = observed.get("test_center", [])
        return {
            "backend": {
                "reports_seen": sum(1 for e in backend if e["kind"] == "report"),
                "trace_queries_seen": sum(1 for e in backend if e["kind"] == "trace_query"),
                "distinct_rids_seen": len({e["rid"] for e in backend if e["kind"] == "report"}),
                "true_ids_seen": 0,
            },
            "ha": {
                "digests_stored": sum(1 for e in ha if e["kind"] == "digest"),
                "match_queries": sum(1 for e in ha if e["kind"] == "match"),
                "identifiers_queried": sum(
                    len(e["ids"]) for e in ha if e["kind"] == "match"
                ),
            },
            "test_center": {
                "infection_tests": sum(1 for e in tc if e["kind"] == "infection_test"),
                "true_ids_seen": len(
                    {e["true_id"] for e in tc if e["kind"] == "infection_test"}
                ),
            },
        }
    if protocol == "dp3t":
        return {"backend": {"published_keys": len(outcomes.get("published_keys", []))}}
    return {
        "moh": {
            "registered_phones": len(trace_data["config"]["scenario"]["users"]),
            "traced_edges": len(outcomes.get("moh_edges", [])),
        }
    }


def collect_metrics(
    trace_data: dict[str, Any],
    exposure_policy: ExposurePolicy | None = None,
    exposure_seconds: int | None = None,
) -> MetricsReport:
    """Compute the full metrics report from a trace (no re-simulation).

    ``exposure_seconds`` optionally re-thresholds the stored per-assessment
    matched-exposure values without re-running the protocols.
    """
    config = trace_data["config"]
    params = config["params"]
    protocol = params["protocol"]
    outcomes = trace_data["outcomes"]
    horizon = config["scenario"]["horizon_seconds"]

    gt = ground_truth_exposures(trace_data, exposure_policy)
    gt_pairs_ui = {(u, i) for (u, _, i) in gt}

    threshold = params["exposure_seconds"] if exposure_seconds is None else exposure_seconds
    notified: set[tuple[str, str]] = set()
    notified_pairs: set[tuple[str, str, str]] = set()
    leak_users: set[str] = set()
    for a in outcomes["assessments"]:
        reporter = a.get("reporter")
        if reporter is None or reporter == a["user"]:
            continue
        if a.get("leak", a["matched_epochs"] >= 1):
            leak_users.add(a["user"])
        if a["exposure_seconds"] >= threshold and a["matched_epochs"] >= 1:
            notified.add((a["user"], reporter))
            notified_pairs.add((a["user"], a.get("venue") or "", reporter))

    hits = gt_pairs_ui & notified
    recall = len(hits) / len(gt_pairs_ui) if gt_pairs_ui else 1.0
    precision = len(hits) / len(notified) if notified else 1.0
    false_negatives = sorted(gt_pairs_ui - notified)
    false_positives = sorted(notified - gt_pairs_ui)

    # data minimisation: deliveries only for venues where the user holds a
    # valid (non-discarded) receipt. Only the venue protocol has deliveries.
    violations: int | None = None
    if protocol == "venue":
        receipt_venues: dict[str, set[str]] = {}
        for v in outcomes["visits"]:
            if not v["discarded"]:
                receipt_venues.setdefault(v["user"], set()).add(v["venue"])
        violations = sum(
            1
            for d in outcomes["deliveries"]
            if d["record_keys"] and d["venue"] not in receipt_venues.get(d["user"], set())
        )

    duty_seconds = outcomes.get("duty_seconds", {})
    duty_cycle = {u: s / horizon for u, s in sorted(duty_seconds.items())}
    mean_duty = sum(duty_cycle.values()) / len(duty_cycle) if duty_cycle else 0.0

    rejections: dict[str, int] = {}
    accepted = 0
    for r in outcomes["reports"]:
        if r["accepted"]:
            accepted += 1
        elif r["code"]:
            rejections[r["code"]] = rejections.get(r["code"], 0) + 1

    cross_venue, cross_visit = _linkage_scan(trace_data["broadcasts"])
    adversary = dict(outcomes["adversary"])
    adversary["cross_venue_ephid_matches"] = cross_venue
    adversary["cross_visit_ephid_matches"] = cross_visit

    # exposures happening off-premise: outside geo-selective coverage, so
    # they are unreachable for the venue protocol by design
    street_exposures = ground_truth_exposures(trace_data, exposure_policy, street=True)

    venue_anomalies = {
        vid: len(flags) for vid, flags in outcomes.get("venue_anomalies", {}).items()
    }

    return MetricsReport(
        protocol=protocol,
        seed=params["seed"],
        horizon_seconds=horizon,
        recall=recall,
        precision=precision,
        ground_truth_pairs=sorted([list(p) for p in gt]),
        notified_pairs=sorted([list(p) for p in notified_pairs]),
        false_negative_pairs=[list(p) for p in false_negatives],
        false_positive_pairs=[list(p) for p in false_positives],
        at_risk_users=sorted({u for (u, _) in notified}),
        leak_users=sorted(leak_users),
        data_minimisation_violations=violations,
        duty_cycle=duty_cycle,
        mean_duty_cycle=mean_duty,
        accepted_reports=accepted,
        rejections=rejections,
        venue_anomalies=venue_anomalies,
        adversary=adversary,
        info_exposure=_info_exposure(trace_data, protocol),
        deliveries=len(outcomes.get("deliveries", [])),
        extras={"street_exposures": sorted([list(p) for p in street_exposures])},
    )


def comparison_rows(reports: list[MetricsReport]) -> list[dict[str, Any]]:
    """Flat rows for the cross-protocol comparison table."""
    rows = []
    for r in reports:
        rows.append(
            {
                "protocol": r.protocol,
                "recall": round(r.recall, 4),
                "precision": round(r.precision, 4),
                "at_risk_users": len(r.at_risk_users),
                "leak_users": len(r.leak_users),
                "mean_duty_cycle": round(r.mean_duty_cycle, 4),
                "data_minimisation_violations": r.data_minimisation_violations,
                "accepted_reports": r.accepted_reports,
                "rejected_reports": sum(r.rejections.values()),
                "cross_venue_ephid_matches": r.adversary["cross_venue_ephid_matches"],
            }
        )
    return rows
