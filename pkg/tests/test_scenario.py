import json

import pytest

from venuetrace.scenario import (
    Scenario,
    ScenarioEvent,
    VenueSpec,
    build_duty_cycle_scenario,
    build_population_scenario,
    build_relay_scenario,
    build_street_encounter_scenario,
    validate_scenario,
)

DAY = 86400


def minimal(events):
    return Scenario(
        name="t",
        horizon_seconds=2 * DAY,
        users=["u00", "u01"],
        venues=[VenueSpec("v0"), VenueSpec("v1")],
        events=events,
    )


def test_clean_scenario_has_no_diagnostics():
    sc = minimal(
        [
            ScenarioEvent(10, "enter", {"user": "u00", "venue": "v0", "pos": [0, 0]}),
            ScenarioEvent(500, "leave", {"user": "u00"}),
        ]
    )
    assert validate_scenario(sc) == []


def test_enter_before_leaving_flagged():
    sc = minimal(
        [
            ScenarioEvent(10, "enter", {"user": "u00", "venue": "v0", "pos": [0, 0]}),
            ScenarioEvent(20, "enter", {"user": "u00", "venue": "v1", "pos": [0, 0]}),
        ]
    )
    diags = validate_scenario(sc)
    assert any("before leaving" in d for d in diags)


def test_adversary_window_outside_horizon_flagged():
    sc = minimal(
        [
            ScenarioEvent(
                10,
                "adversary_action",
                {"action": "flood", "venue": "v0", "start": 0, "end": 3 * DAY},
            )
        ]
    )
    diags = validate_scenario(sc)
    assert any("outside scenario horizon" in d for d in diags)


def test_unknown_user_and_venue_flagged():
    sc = minimal(
        [
            ScenarioEvent(10, "enter", {"user": "ghost", "venue": "v0", "pos": [0, 0]}),
            ScenarioEvent(10, "enter", {"user": "u00", "venue": "nowhere", "pos": [0, 0]}),
        ]
    )
    diags = validate_scenario(sc)
    assert any("unknown user" in d for d in diags)
    assert any("unknown venue" in d for d in diags)


def test_leave_without_entry_flagged():
    sc = minimal([ScenarioEvent(10, "leave", {"user": "u00"})])
    assert any("in no venue" in d for d in validate_scenario(sc))


def test_report_without_positive_test_flagged():
    sc = minimal([ScenarioEvent(10, "report", {"user": "u00"})])
    assert any("without a positive test" in d for d in validate_scenario(sc))


def test_unknown_venue_policy_key_flagged():
    sc = Scenario(
        name="t",
        horizon_seconds=DAY,
        users=["u00"],
        venues=[VenueSpec("v0", policy={"max_broadcast_per_min": 9})],  # typo'd key
        events=[],
    )
    assert any("unknown policy keys" in d for d in validate_scenario(sc))


def test_unknown_time_condition_flagged():
    sc = Scenario(
        name="t",
        horizon_seconds=DAY,
        users=["u00"],
        venues=[VenueSpec("v0", policy={"time_condition": "fortnightly"})],
        events=[],
    )
    assert any("unknown time condition" in d for d in validate_scenario(sc))


def test_report_with_shared_certificate_allowed():
    sc = minimal(
        [
            ScenarioEvent(5, "test_positive", {"user": "u01", "period": [0, DAY]}),
            ScenarioEvent(10, "report", {"user": "u00", "use_certificate_of": "u01"}),
        ]
    )
    assert validate_scenario(sc) == []


def test_event_time_outside_horizon_flagged():
    sc = minimal([ScenarioEvent(5 * DAY, "trace_query", {"user": "u00"})])
    assert any("outside scenario horizon" in d for d in validate_scenario(sc))


def test_json_round_trip(tmp_path):
    sc = build_relay_scenario()
    path = tmp_path / "s.json"
    path.write_text(sc.to_json(), encoding="utf-8")
    again = Scenario.from_json_file(path)
    assert again.to_dict() == sc.to_dict()


def test_events_sorted_stably():
    sc = minimal(
        [
            ScenarioEvent(20, "leave", {"user": "u00"}),
            ScenarioEvent(10, "enter", {"user": "u00", "venue": "v0", "pos": [0, 0]}),
            ScenarioEvent(20, "trace_query", {"user": "u00"}),
        ]
    )
    kinds = [e.kind for e in sc.sorted_events()]
    assert kinds == ["enter", "leave", "trace_query"]


@pytest.mark.parametrize(
    "builder",
    [
        lambda: build_population_scenario(n_users=10, days=3, seed=1),
        build_street_encounter_scenario,
        build_relay_scenario,
        lambda: build_relay_scenario(with_attack=False),
        build_duty_cycle_scenario,
    ],
)
def test_builders_produce_valid_scenarios(builder):
    sc = builder()
    assert validate_scenario(sc) == []
    # and they serialize cleanly
    json.loads(sc.to_json())


def test_population_builder_deterministic():
    a = build_population_scenario(n_users=10, days=3, seed=5).to_dict()
    b = build_population_scenario(n_users=10, days=3, seed=5).to_dict()
    assert a == b
