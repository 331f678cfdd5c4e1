"""Event-sourced session state.

A session is a strictly ordered log of events; ``SessionState`` is the
fold of ``apply_event`` over that log.  The reducer is pure (it returns
a new state and never mutates its input), which is what makes golden
replays and the replay-equivalence checks possible: replaying a
persisted log must reproduce the live state byte-for-byte in
serialized form.

Event kinds and their payloads:

========== =====================================================================
user_msg       {text}
agent_msg      {text, reasoning_chain, suggestions, suppressed, parse_degraded}
signal         {candidates, resolved, avoidance_cue, avoidance_counter, degraded}
transition     {signal, from, to}
extraction     {keywords, foci, stressors, resources}
plan_proposed  {plan_index, steps, proposed_turn}
step_status    {plan_index, step_index, status}
crisis_flag    {active}
closure        {reason}
operator_override {stage, operator_note}
========== =====================================================================

``operator_override`` is an audit-logged console action: it moves the
stage directly and is deliberately excluded from the transition-table
record, so table-conformance checks skip it.
"""

from __future__ import annotations

import copy
import json
import re
import uuid
from dataclasses import dataclass, field

from .errors import EventOrderingError, InvalidEventError
from .stages import Stage, Signal, TransitionRecord, next_stage, parse_signal, parse_stage

EVENT_KINDS = (
    "user_msg",
    "agent_msg",
    "signal",
    "transition",
    "extraction",
    "plan_proposed",
    "step_status",
    "crisis_flag",
    "closure",
    "operator_override",
)

STEP_STATUSES = ("proposed", "accepted", "rejected", "infeasible")

_WS = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Lowercase and collapse whitespace; the match basis for label references."""
    return _WS.sub(" ", text.strip().lower())


def references_label(text: str, label: str) -> bool:
    return normalize_text(label) in normalize_text(text)


@dataclass
class Stressor:
    label: str
    first_mentioned_turn: int
    surfaced: bool = False

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "first_mentioned_turn": self.first_mentioned_turn,
            "surfaced": self.surfaced,
        }


@dataclass
class Resource:
    tag: str
    capacity_minutes_per_day: int | None = None  # None means unbounded

    def __post_init__(self) -> None:
        if not self.tag:
            raise ValueError("resource tag must be non-empty")

    def to_dict(self) -> dict:
        return {"tag": self.tag, "capacity_minutes_per_day": self.capacity_minutes_per_day}

    @classmethod
    def from_dict(cls, data: dict) -> "Resource":
        return cls(tag=data["tag"], capacity_minutes_per_day=data.get("capacity_minutes_per_day"))


@dataclass
class PlanStep:
    index: int
    description: str
    schedule_hint: str = ""
    required_tags: set[str] = field(default_factory=lambda: {"time"})
    required_minutes_per_day: int = 10
    status: str = "proposed"
    status_turn: int | None = None  # turn of the last status change

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "description": self.description,
            "schedule_hint": self.schedule_hint,
            "required_tags": sorted(self.required_tags),
            "required_minutes_per_day": self.required_minutes_per_day,
            "status": self.status,
            "status_turn": self.status_turn,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PlanStep":
        return cls(
            index=data["index"],
            description=data["description"],
            schedule_hint=data.get("schedule_hint", ""),
            required_tags=set(data.get("required_tags", ["time"])),
            required_minutes_per_day=data.get("required_minutes_per_day", 10),
            status=data.get("status", "proposed"),
            status_turn=data.get("status_turn"),
        )


@dataclass
class ActionPlan:
    steps: list[PlanStep]
    proposed_turn: int

    def __post_init__(self) -> None:
        indices = [s.index for s in self.steps]
        if indices != list(range(1, len(indices) + 1)):
            raise ValueError(f"plan step indices must be contiguous from 1, got {indices}")

    def to_dict(self) -> dict:
        return {"steps": [s.to_dict() for s in self.steps], "proposed_turn": self.proposed_turn}

    @classmethod
    def from_dict(cls, data: dict) -> "ActionPlan":
        return cls(
            steps=[PlanStep.from_dict(s) for s in data["steps"]],
            proposed_turn=data["proposed_turn"],
        )


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    reason: str | None = None


def check_feasibility(step: PlanStep, resources: list[Resource]) -> FeasibilityResult:
    """Check a plan step against the session's declared resources.

    Every required tag must match a declared resource, and the step's
    daily minutes must fit within the smallest capacity among the
    matched resources that declare one.  The first failing requirement
    is reported; tags are checked in sorted order for determinism.
    """
    matched: list[Resource] = []
    for tag in sorted(step.required_tags):
        hits = [r for r in resources if r.tag == tag]
        if not hits:
            return FeasibilityResult(False, tag)
        matched.extend(hits)
    capacities = [r.capacity_minutes_per_day for r in matched if r.capacity_minutes_per_day is not None]
    if capacities and step.required_minutes_per_day > min(capacities):
        return FeasibilityResult(
            False,
            f"time: need {step.required_minutes_per_day} min/day, have {min(capacities)}",
        )
    return FeasibilityResult(True)


@dataclass(frozen=True)
class SessionEvent:
    session_id: str
    kind: str
    turn_index: int
    timestamp: str
    payload: dict

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind: {self.kind}")
        if self.turn_index < 0:
            raise ValueError("turn_index must be non-negative")

    def to_record(self) -> dict:
        """Wire form for the append-only log."""
        return {
            "v": 1,
            "sid": self.session_id,
            "turn": self.turn_index,
            "kind": self.kind,
            "ts": self.timestamp,
            "payload": self.payload,
        }

    @classmethod
    def from_record(cls, record: dict) -> "SessionEvent":
        if record.get("v") != 1:
            raise InvalidEventError(f"unsupported event record version: {record.get('v')!r}")
        return cls(
            session_id=record["sid"],
            kind=record["kind"],
            turn_index=record["turn"],
            timestamp=record["ts"],
            payload=record.get("payload", {}),
        )


@dataclass
class SessionConfig:
    session_id: str | None = None
    resources: list[Resource] = field(default_factory=list)


@dataclass
class SessionState:
    session_id: str
    stage: Stage = Stage.EXPLORATION
    turn_index: int = 0
    emotional_keywords: set[str] = field(default_factory=set)
    semantic_foci: set[str] = field(default_factory=set)
    stressors: list[Stressor] = field(default_factory=list)
    resources: list[Resource] = field(default_factory=list)
    plans: list[ActionPlan] = field(default_factory=list)
    avoidance_counter: int = 0
    transitions: list[TransitionRecord] = field(default_factory=list)
    crisis_flag: bool = False
    history: list[tuple[str, str]] = field(default_factory=list)  # (role, text)

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "stage": self.stage.value,
            "turn_index": self.turn_index,
            "emotional_keywords": sorted(self.emotional_keywords),
            "semantic_foci": sorted(self.semantic_foci),
            "stressors": [s.to_dict() for s in self.stressors],
            "resources": [r.to_dict() for r in self.resources],
            "plans": [p.to_dict() for p in self.plans],
            "avoidance_counter": self.avoidance_counter,
            "transitions": [t.to_dict() for t in self.transitions],
            "crisis_flag": self.crisis_flag,
            "history": [list(pair) for pair in self.history],
        }

    def serialized(self) -> str:
        """Canonical serialized form; the basis for replay-equivalence checks."""
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)

    def stressor_by_label(self, label: str) -> Stressor | None:
        wanted = normalize_text(label)
        for stressor in self.stressors:
            if normalize_text(stressor.label) == wanted:
                return stressor
        return None


def create_session(config: SessionConfig | None = None) -> SessionState:
    config = config or SessionConfig()
    sid = config.session_id or uuid.uuid4().hex
    return SessionState(session_id=sid, resources=list(config.resources))


def apply_event(state: SessionState, event: SessionEvent) -> SessionState:
    """Pure reducer: returns the state after ``event``.

    Ordering rules: a ``user_msg`` starts turn ``state.turn_index + 1``;
    every other kind belongs to the current turn.  Violations raise
    ``EventOrderingError`` (a corrupted or reordered log), payload-level
    violations raise ``InvalidEventError``.
    """
    _check_ordering(state, event)
    new = copy.deepcopy(state)
    handler = _REDUCERS[event.kind]
    handler(new, event)
    new.crisis_flag = new.stage is Stage.CRISIS
    return new


def _check_ordering(state: SessionState, event: SessionEvent) -> None:
    if event.session_id != state.session_id:
        raise EventOrderingError(
            f"event for session {event.session_id!r} applied to session {state.session_id!r}"
        )
    if event.kind == "user_msg":
        expected = state.turn_index + 1
        if event.turn_index != expected:
            raise EventOrderingError(
                f"user_msg turn {event.turn_index} != expected {expected}"
            )
    else:
        if event.turn_index != state.turn_index:
            raise EventOrderingError(
                f"{event.kind} turn {event.turn_index} != current turn {state.turn_index}"
            )


def _apply_user_msg(state: SessionState, event: SessionEvent) -> None:
    state.turn_index = event.turn_index
    state.history.append(("user", event.payload["text"]))


def _apply_agent_msg(state: SessionState, event: SessionEvent) -> None:
    text = event.payload["text"]
    state.history.append(("agent", text))
    # An agent turn that references a known stressor's label counts as
    # acknowledging (surfacing) it.  Surfacing is monotone.
    for stressor in state.stressors:
        if not stressor.surfaced and references_label(text, stressor.label):
            stressor.surfaced = True


def _apply_signal(state: SessionState, event: SessionEvent) -> None:
    counter = event.payload.get("avoidance_counter", 0)
    if counter < 0:
        raise InvalidEventError("avoidance_counter must be non-negative")
    state.avoidance_counter = counter


def _apply_transition(state: SessionState, event: SessionEvent) -> None:
    signal = parse_signal(event.payload["signal"])
    from_stage = parse_stage(event.payload["from"])
    to_stage = parse_stage(event.payload["to"])
    if from_stage is not state.stage:
        raise InvalidEventError(
            f"transition from {from_stage.value} but session is in {state.stage.value}"
        )
    expected = next_stage(from_stage, signal)
    if to_stage is not expected:
        raise InvalidEventError(
            f"transition to {to_stage.value} contradicts table ({expected.value})"
        )
    state.stage = to_stage
    state.transitions.append(
        TransitionRecord(from_stage, signal, to_stage, event.turn_index)
    )


def _apply_extraction(state: SessionState, event: SessionEvent) -> None:
    payload = event.payload
    state.emotional_keywords.update(payload.get("keywords", []))
    state.semantic_foci.update(payload.get("foci", []))
    for label in payload.get("stressors", []):
        if state.stressor_by_label(label) is None:
            state.stressors.append(Stressor(label=label, first_mentioned_turn=event.turn_index))
    for entry in payload.get("resources", []):
        resource = Resource.from_dict(entry)
        if not any(r.tag == resource.tag for r in state.resources):
            state.resources.append(resource)


def _apply_plan_proposed(state: SessionState, event: SessionEvent) -> None:
    plan_index = event.payload["plan_index"]
    if plan_index != len(state.plans):
        raise InvalidEventError(
            f"plan_index {plan_index} != next plan slot {len(state.plans)}"
        )
    plan = ActionPlan(
        steps=[PlanStep.from_dict(s) for s in event.payload["steps"]],
        proposed_turn=event.payload["proposed_turn"],
    )
    state.plans.append(plan)


def _apply_step_status(state: SessionState, event: SessionEvent) -> None:
    plan_index = event.payload["plan_index"]
    step_index = event.payload["step_index"]
    status = event.payload["status"]
    if status not in STEP_STATUSES:
        raise InvalidEventError(f"unknown step status: {status!r}")
    try:
        plan = state.plans[plan_index]
        step = plan.steps[step_index - 1]
    except IndexError:
        raise InvalidEventError(
            f"step_status for unknown plan/step ({plan_index}, {step_index})"
        ) from None
    if step.status_turn == event.turn_index:
        raise InvalidEventError(
            f"step {step_index} already changed status on turn {event.turn_index}"
        )
    step.status = status
    step.status_turn = event.turn_index


def _apply_crisis_flag(state: SessionState, event: SessionEvent) -> None:
    active = bool(event.payload.get("active"))
    if active != (state.stage is Stage.CRISIS):
        raise InvalidEventError(
            f"crisis_flag active={active} inconsistent with stage {state.stage.value}"
        )


def _apply_closure(state: SessionState, event: SessionEvent) -> None:
    # Audit marker (reason: closure_signal | turn_cap | crisis_unresolved);
    # the stage change itself arrives via a transition event.
    pass


def _apply_operator_override(state: SessionState, event: SessionEvent) -> None:
    target = parse_stage(event.payload["stage"])
    if not event.payload.get("operator_note"):
        raise InvalidEventError("operator_override requires an operator_note")
    state.stage = target


_REDUCERS = {
    "user_msg": _apply_user_msg,
    "agent_msg": _apply_agent_msg,
    "signal": _apply_signal,
    "transition": _apply_transition,
    "extraction": _apply_extraction,
    "plan_proposed": _apply_plan_proposed,
    "step_status": _apply_step_status,
    "crisis_flag": _apply_crisis_flag,
    "closure": _apply_closure,
    "operator_override": _apply_operator_override,
}


def replay(events: list[SessionEvent]) -> SessionState:
    """Fold a full session log into its final state."""
    if not events:
        return create_session()
    state = create_session(SessionConfig(session_id=events[0].session_id))
    for event in events:
        state = apply_event(state, event)
    return state
