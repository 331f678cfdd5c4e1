import copy
import json

import pytest

from stageflow.errors import EventOrderingError, InvalidEventError
from stageflow.stages import Signal, Stage
from stageflow.state import (
    ActionPlan,
    PlanStep,
    Resource,
    SessionConfig,
    SessionEvent,
    check_feasibility,
    create_session,
    apply_event,
    references_label,
    replay,
)


def ev(kind, turn, payload, sid="s1", ts="2026-01-01T00:00:00Z"):
    return SessionEvent(session_id=sid, kind=kind, turn_index=turn, timestamp=ts, payload=payload)


def transition(turn, frm, to, signal, sid="s1"):
    return ev("transition", turn, {"from": frm, "to": to, "signal": signal}, sid=sid)


def step(index, description, tags=("time",), minutes=10, **extra):
    return {
        "index": index,
        "description": description,
        "required_tags": list(tags),
        "required_minutes_per_day": minutes,
        **extra,
    }


def test_event_wire_roundtrip():
    e = ev("user_msg", 1, {"text": "héllo"})
    record = e.to_record()
    assert record == {
        "v": 1,
        "sid": "s1",
        "turn": 1,
        "kind": "user_msg",
        "ts": "2026-01-01T00:00:00Z",
        "payload": {"text": "héllo"},
    }
    assert SessionEvent.from_record(json.loads(json.dumps(record, ensure_ascii=False))) == e


def test_unknown_kind_and_version_rejected():
    with pytest.raises(ValueError):
        ev("mind_read", 1, {})
    with pytest.raises(InvalidEventError):
        SessionEvent.from_record({"v": 2, "sid": "s", "turn": 0, "kind": "user_msg", "ts": "t", "payload": {}})


def test_reducer_is_pure():
    state = create_session(SessionConfig(session_id="s1"))
    snapshot = copy.deepcopy(state)
    nxt = apply_event(state, ev("user_msg", 1, {"text": "hello"}))
    assert state == snapshot
    assert nxt is not state
    assert nxt.history[-1] == ("user", "hello")
    assert nxt.turn_index == 1


def test_session_id_mismatch_rejected():
    state = create_session(SessionConfig(session_id="s1"))
    with pytest.raises(EventOrderingError):
        apply_event(state, ev("user_msg", 1, {"text": "x"}, sid="other"))


def test_user_msg_must_advance_turn_by_one():
    state = create_session(SessionConfig(session_id="s1"))
    with pytest.raises(EventOrderingError):
        apply_event(state, ev("user_msg", 2, {"text": "skipped a turn"}))
    state = apply_event(state, ev("user_msg", 1, {"text": "ok"}))
    with pytest.raises(EventOrderingError):
        apply_event(state, ev("user_msg", 1, {"text": "same turn again"}))


def test_non_user_events_belong_to_current_turn():
    state = create_session(SessionConfig(session_id="s1"))
    state = apply_event(state, ev("user_msg", 1, {"text": "hi"}))
    with pytest.raises(EventOrderingError):
        apply_event(state, ev("agent_msg", 2, {"text": "from the future"}))
    with pytest.raises(EventOrderingError):
        apply_event(state, ev("agent_msg", 0, {"text": "from the past"}))
    apply_event(state, ev("agent_msg", 1, {"text": "in step"}))


def test_transition_validated_against_table():
    state = create_session(SessionConfig(session_id="s1"))
    with pytest.raises(InvalidEventError):
        apply_event(state, transition(0, "insight", "action", "ready_for_action"))
    with pytest.raises(InvalidEventError):
        apply_event(state, transition(0, "exploration", "action", "ready_for_insight"))
    nxt = apply_event(state, transition(0, "exploration", "insight", "ready_for_insight"))
    assert nxt.stage is Stage.INSIGHT
    rec = nxt.transitions[-1]
    assert (rec.from_stage, rec.signal, rec.to_stage, rec.turn_index) == (
        Stage.EXPLORATION,
        Signal.READY_FOR_INSIGHT,
        Stage.INSIGHT,
        0,
    )


def test_signal_event_sets_counter_idempotently():
    state = create_session(SessionConfig(session_id="s1"))
    payload = {
        "resolved": {"kind": "continue", "confidence": 0.3, "evidence": ""},
        "avoidance_counter": 2,
    }
    nxt = apply_event(state, ev("signal", 0, payload))
    assert nxt.avoidance_counter == 2
    again = apply_event(nxt, ev("signal", 0, payload))
    assert again.avoidance_counter == 2  # set, not incremented
    with pytest.raises(InvalidEventError):
        apply_event(state, ev("signal", 0, {"avoidance_counter": -1}))


def test_extraction_merges_and_dedupes():
    state = create_session(SessionConfig(session_id="s1"))
    state = apply_event(
        state,
        ev("extraction", 0, {"keywords": ["anxious", "tired"], "foci": ["workload"], "stressors": ["deadlines"]}),
    )
    state = apply_event(
        state,
        ev("extraction", 0, {"keywords": ["tired"], "foci": [], "stressors": ["Deadlines", "sleep"]}),
    )
    assert state.emotional_keywords == {"anxious", "tired"}
    assert state.semantic_foci == {"workload"}
    # Label matching is case/whitespace-insensitive, so "Deadlines" dedupes.
    assert [s.label for s in state.stressors] == ["deadlines", "sleep"]
    assert state.stressors[0].first_mentioned_turn == 0


def test_agent_msg_surfaces_mentioned_stressors():
    state = create_session(SessionConfig(session_id="s1"))
    state = apply_event(state, ev("extraction", 0, {"stressors": ["workload"]}))
    assert not state.stressors[0].surfaced
    state = apply_event(state, ev("agent_msg", 0, {"text": "The workload you describe sounds heavy."}))
    assert state.stressors[0].surfaced
    assert references_label("Such a heavy WORKLOAD", "workload")
    assert not references_label("working a load", "workload")


def test_plan_lifecycle_and_same_turn_guard():
    state = create_session(SessionConfig(session_id="s1"))
    state = apply_event(state, ev("user_msg", 1, {"text": "ready"}))
    state = apply_event(
        state,
        ev(
            "plan_proposed",
            1,
            {
                "plan_index": 0,
                "proposed_turn": 1,
                "steps": [step(1, "Record daily emotional triggers"), step(2, "Ten-minute meditation")],
            },
        ),
    )
    assert [s.status for s in state.plans[0].steps] == ["proposed", "proposed"]

    state = apply_event(state, ev("user_msg", 2, {"text": "ok"}))
    state = apply_event(state, ev("step_status", 2, {"plan_index": 0, "step_index": 1, "status": "accepted"}))
    assert state.plans[0].steps[0].status == "accepted"
    assert state.plans[0].steps[0].status_turn == 2
    with pytest.raises(InvalidEventError):
        apply_event(state, ev("step_status", 2, {"plan_index": 0, "step_index": 1, "status": "rejected"}))
    with pytest.raises(InvalidEventError):
        apply_event(state, ev("step_status", 2, {"plan_index": 0, "step_index": 9, "status": "accepted"}))
    with pytest.raises(InvalidEventError):
        apply_event(state, ev("step_status", 2, {"plan_index": 0, "step_index": 2, "status": "perfect"}))
    with pytest.raises(InvalidEventError):
        apply_event(
            state,
            ev("plan_proposed", 2, {"plan_index": 5, "proposed_turn": 2, "steps": [step(1, "x")]}),
        )


def test_plan_step_indices_must_be_contiguous():
    with pytest.raises(ValueError):
        ActionPlan(steps=[PlanStep(index=2, description="late start")], proposed_turn=1)
    with pytest.raises(ValueError):
        ActionPlan(
            steps=[PlanStep(index=1, description="a"), PlanStep(index=3, description="b")],
            proposed_turn=1,
        )


def test_feasibility_against_resources():
    resources = [Resource(tag="time", capacity_minutes_per_day=15), Resource(tag="quiet-space")]
    fits = PlanStep(index=1, description="Ten-minute meditation", required_tags={"time"}, required_minutes_per_day=10)
    too_long = PlanStep(index=2, description="One-hour run", required_tags={"time"}, required_minutes_per_day=60)
    wrong_tag = PlanStep(index=3, description="Buy a course", required_tags={"money"}, required_minutes_per_day=5)
    unbounded = PlanStep(index=4, description="Sit quietly", required_tags={"quiet-space"}, required_minutes_per_day=120)

    assert check_feasibility(fits, resources).feasible
    verdict = check_feasibility(too_long, resources)
    assert not verdict.feasible and "min/day" in verdict.reason
    verdict = check_feasibility(wrong_tag, resources)
    assert not verdict.feasible and verdict.reason == "money"
    assert check_feasibility(unbounded, resources).feasible
    assert not check_feasibility(fits, []).feasible


def test_crisis_flag_tracks_stage_and_validates():
    state = create_session(SessionConfig(session_id="s1"))
    state = apply_event(state, transition(0, "exploration", "crisis", "crisis_trigger"))
    assert state.crisis_flag
    apply_event(state, ev("crisis_flag", 0, {"active": True}))
    with pytest.raises(InvalidEventError):
        apply_event(state, ev("crisis_flag", 0, {"active": False}))
    state = apply_event(state, transition(0, "crisis", "exploration", "crisis_resolved"))
    assert not state.crisis_flag
    with pytest.raises(InvalidEventError):
        apply_event(state, ev("crisis_flag", 0, {"active": True}))


def test_closure_is_audit_only_stage_comes_from_transition():
    state = create_session(SessionConfig(session_id="s1"))
    state = apply_event(state, transition(0, "exploration", "closed", "closure_signal"))
    state = apply_event(state, ev("closure", 0, {"reason": "closure_signal"}))
    assert state.stage is Stage.CLOSED


def test_operator_override_requires_note():
    state = create_session(SessionConfig(session_id="s1"))
    nxt = apply_event(state, ev("operator_override", 0, {"stage": "insight", "operator_note": "clinician judgment"}))
    assert nxt.stage is Stage.INSIGHT
    # Overrides bypass the table but never the audit note.
    with pytest.raises(InvalidEventError):
        apply_event(state, ev("operator_override", 0, {"stage": "action", "operator_note": ""}))
    with pytest.raises(ValueError):
        apply_event(state, ev("operator_override", 0, {"stage": "dreaming", "operator_note": "x"}))


def test_replay_folds_full_log():
    events = [
        ev("user_msg", 1, {"text": "I've been overwhelmed."}),
        ev("signal", 1, {"resolved": {"kind": "continue", "confidence": 0.3, "evidence": ""}, "avoidance_counter": 0}),
        transition(1, "exploration", "exploration", "continue"),
        ev("agent_msg", 1, {"text": "Tell me more.", "reasoning_chain": "", "backend_key": 0}),
    ]
    folded = create_session(SessionConfig(session_id="s1"))
    for e in events:
        folded = apply_event(folded, e)
    assert replay(events) == folded
    assert replay(events).serialized() == folded.serialized()


def test_replay_mixed_sessions_rejected():
    with pytest.raises(EventOrderingError):
        replay([ev("user_msg", 1, {"text": "a"}), ev("user_msg", 2, {"text": "b"}, sid="s2")])


def test_serialized_form_is_canonical():
    state = create_session(SessionConfig(session_id="abc", resources=[Resource(tag="time", capacity_minutes_per_day=15)]))
    text = state.serialized()
    parsed = json.loads(text)
    assert parsed["session_id"] == "abc"
    assert parsed["stage"] == "exploration"
    assert parsed["turn_index"] == 0
    assert parsed["resources"] == [{"tag": "time", "capacity_minutes_per_day": 15}]
    assert text == state.serialized()  # stable across calls
    assert list(parsed) == sorted(parsed)  # sort_keys on the wire
