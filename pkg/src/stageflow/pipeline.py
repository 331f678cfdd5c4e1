"""Turn orchestration: one user message in, one agent reply out.

``handle_message`` runs a fixed sequence so every turn leaves the same
event shape behind: user_msg, any step_status updates parsed from the
user's words, signal, transition, crisis_flag on crisis boundaries,
then either the fixed crisis referral / farewell or the model path
(extraction, agent_msg, plan_proposed, infeasible step_status).  Safety
turns never call the model; a backend failure after the transition
leaves a valid log with the stage preserved.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .clock import SystemClock
from .detector import CueLexicon, SignalDetector, match_any
from .errors import SessionClosedError
from .prompts import (
    PromptConfig,
    PromptTemplates,
    build_prompt,
    extract_plan,
    gate_reply,
    parse_response,
)
from .stages import Signal, Stage, TransitionSignal, next_stage, resolve
from .state import (
    ActionPlan,
    SessionConfig,
    SessionEvent,
    SessionState,
    apply_event,
    check_feasibility,
    create_session,
    replay,
)
from .store import EventStore

DEFAULT_REFERRAL = (
    "I'm really concerned about your safety right now. "
    "Please reach out to a local crisis line or emergency services immediately. "
    "If you can, ask someone you trust to stay with you. "
    "I'm here to keep listening whenever you need."
)

DEFAULT_FAREWELL = (
    "Thank you for sharing with me today. "
    "Take care of yourself, and remember you can come back any time."
)

_STEP_NUMBER = re.compile(r"\bstep\s+(\d+)\b", re.IGNORECASE)


@dataclass
class TurnResult:
    session_id: str
    turn_index: int
    stage_before: Stage
    stage_after: Stage
    signal: TransitionSignal
    reply: str
    reasoning_chain: str = ""
    plan: ActionPlan | None = None
    crisis: bool = False
    closed: bool = False
    parse_degraded: bool = False
    fallback_used: bool = False
    suggestions: int = 0
    suppressed: int = 0

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "turn_index": self.turn_index,
            "stage_before": self.stage_before.value,
            "stage_after": self.stage_after.value,
            "signal": {
                "kind": self.signal.kind.value,
                "confidence": self.signal.confidence,
                "evidence": self.signal.evidence,
            },
            "reply": self.reply,
            "reasoning_chain": self.reasoning_chain,
            "plan": self.plan.to_dict() if self.plan else None,
            "crisis": self.crisis,
            "closed": self.closed,
            "parse_degraded": self.parse_degraded,
            "fallback_used": self.fallback_used,
            "suggestions": self.suggestions,
            "suppressed": self.suppressed,
        }


class DialogueEngine:
    """Binds store, detector, prompt engine, and backend into the
    per-session turn loop."""

    def __init__(
        self,
        store: EventStore,
        backend,
        detector: SignalDetector,
        lexicon: CueLexicon,
        prompt_config: PromptConfig | None = None,
        templates: PromptTemplates | None = None,
        clock=None,
        referral_text: str = DEFAULT_REFERRAL,
        farewell_text: str = DEFAULT_FAREWELL,
    ):
        self.store = store
        self.backend = backend
        self.detector = detector
        self.lexicon = lexicon
        self.prompt_config = prompt_config or PromptConfig()
        self.templates = templates or PromptTemplates.load_default()
        self.clock = clock or SystemClock()
        self.referral_text = referral_text
        self.farewell_text = farewell_text
        self._states: dict[str, SessionState] = {}
        self._backend_calls: dict[str, int] = {}

    # -- session lifecycle -------------------------------------------------

    def create_session(self, config: SessionConfig | None = None) -> SessionState:
        state = create_session(config)
        # The turn-0 extraction event doubles as the session-created
        # marker and carries declared resources into the log so replay
        # reconstructs them.
        event = SessionEvent(
            session_id=state.session_id,
            kind="extraction",
            turn_index=0,
            timestamp=self.clock.now_rfc3339(),
            payload={
                "keywords": [],
                "foci": [],
                "stressors": [],
                "resources": [r.to_dict() for r in state.resources],
            },
        )
        self.store.append(event)
        state = apply_event(
            SessionState(session_id=state.session_id), event
        )
        self._states[state.session_id] = state
        self._backend_calls[state.session_id] = 0
        return state

    def get_state(self, session_id: str) -> SessionState:
        if session_id in self._states:
            return self._states[session_id]
        events = self.store.load(session_id)
        state = replay(events)
        self._states[session_id] = state
        self._backend_calls[session_id] = sum(
            1
            for e in events
            if e.kind == "agent_msg" and e.payload.get("backend_key") is not None
        )
        return state

    def has_session(self, session_id: str) -> bool:
        return session_id in self._states or self.store.exists(session_id)

    # -- event plumbing ----------------------------------------------------

    def _append(self, state: SessionState, kind: str, turn: int, payload: dict) -> SessionState:
        event = SessionEvent(
            session_id=state.session_id,
            kind=kind,
            turn_index=turn,
            timestamp=self.clock.now_rfc3339(),
            payload=payload,
        )
        self.store.append(event)
        new_state = apply_event(state, event)
        self._states[state.session_id] = new_state
        return new_state

    def note_closure(self, session_id: str, reason: str) -> SessionState:
        """Audit-log why a dialogue ended without a closing signal
        (for example an evaluation turn cap)."""
        state = self.get_state(session_id)
        return self._append(state, "closure", state.turn_index, {"reason": reason})

    def override_stage(self, session_id: str, stage: Stage, operator_note: str) -> SessionState:
        state = self.get_state(session_id)
        return self._append(
            state,
            "operator_override",
            state.turn_index,
            {"stage": stage.value, "operator_note": operator_note},
        )

    # -- the turn ----------------------------------------------------------

    def handle_message(self, session_id: str, text: str) -> TurnResult:
        state = self.get_state(session_id)
        if state.stage is Stage.CLOSED:
            raise SessionClosedError(session_id)
        if not text or not text.strip():
            raise ValueError("message text must be non-empty")

        turn = state.turn_index + 1
        state = self._append(state, "user_msg", turn, {"text": text})
        state = self._record_step_statuses(state, text, turn)

        detection = self.detector.detect(state, text)
        resolved = resolve(state.stage, detection.candidates)
        stage_before = state.stage
        stage_after = next_stage(stage_before, resolved.kind)

        state = self._append(
            state,
            "signal",
            turn,
            {
                "candidates": _serialize_candidates(detection.candidates),
                "resolved": resolved.kind.value,
                "confidence": resolved.confidence,
                "evidence": resolved.evidence,
                "avoidance_cue": detection.avoidance_cue,
                "avoidance_counter": state.avoidance_counter,
                "degraded": detection.degraded,
            },
        )
        state = self._append(
            state,
            "transition",
            turn,
            {
                "signal": resolved.kind.value,
                "from": stage_before.value,
                "to": stage_after.value,
            },
        )
        if stage_after is Stage.CRISIS and stage_before is not Stage.CRISIS:
            state = self._append(state, "crisis_flag", turn, {"active": True})
        elif stage_before is Stage.CRISIS and stage_after is not Stage.CRISIS:
            state = self._append(state, "crisis_flag", turn, {"active": False})

        base = dict(
            session_id=session_id,
            turn_index=turn,
            stage_before=stage_before,
            stage_after=stage_after,
            signal=resolved,
        )

        if stage_after is Stage.CRISIS:
            self._append(
                state,
                "agent_msg",
                turn,
                _agent_payload(self.referral_text, backend_key=None),
            )
            return TurnResult(reply=self.referral_text, crisis=True, **base)

        if stage_after is Stage.CLOSED:
            state = self._append(
                state,
                "agent_msg",
                turn,
                _agent_payload(self.farewell_text, backend_key=None),
            )
            self._append(state, "closure", turn, {"reason": "closure_signal"})
            return TurnResult(reply=self.farewell_text, closed=True, **base)

        prompt = build_prompt(state, self.prompt_config, self.templates, stage_after)
        key = self._backend_calls.get(session_id, 0)
        raw = self.backend.complete(prompt.messages, key=key)
        self._backend_calls[session_id] = key + 1

        parsed = parse_response(raw, thinking=self.prompt_config.thinking)
        gate = gate_reply(
            parsed.reply,
            stage_after,
            self.lexicon,
            enabled=self.prompt_config.gating and self.prompt_config.stage_aware,
        )
        plan = extract_plan(gate.text, turn) if stage_after is Stage.ACTION else None

        if parsed.keywords or parsed.foci or parsed.stressors:
            state = self._append(
                state,
                "extraction",
                turn,
                {
                    "keywords": parsed.keywords,
                    "foci": parsed.foci,
                    "stressors": parsed.stressors,
                    "resources": [],
                },
            )
        payload = _agent_payload(gate.text, backend_key=key)
        payload.update(
            reasoning_chain=parsed.reasoning_chain,
            suggestions=gate.suggestions,
            suppressed=gate.suppressed,
            parse_degraded=parsed.parse_degraded,
            fallback_used=gate.fallback_used,
        )
        state = self._append(state, "agent_msg", turn, payload)

        if plan is not None:
            plan_index = len(state.plans)
            state = self._append(
                state,
                "plan_proposed",
                turn,
                {
                    "plan_index": plan_index,
                    "steps": [s.to_dict() for s in plan.steps],
                    "proposed_turn": turn,
                },
            )
            for step in plan.steps:
                result = check_feasibility(step, state.resources)
                if not result.feasible:
                    state = self._append(
                        state,
                        "step_status",
                        turn,
                        {
                            "plan_index": plan_index,
                            "step_index": step.index,
                            "status": "infeasible",
                            "reason": result.reason,
                        },
                    )
            plan = state.plans[plan_index]

        return TurnResult(
            reply=gate.text,
            reasoning_chain=parsed.reasoning_chain,
            plan=plan,
            parse_degraded=parsed.parse_degraded,
            fallback_used=gate.fallback_used,
            suggestions=gate.suggestions,
            suppressed=gate.suppressed,
            **base,
        )

    def _record_step_statuses(self, state: SessionState, text: str, turn: int) -> SessionState:
        """Turn explicit acceptance or rejection wording in a user
        message into step_status events against the latest plan."""
        if not state.plans:
            return state
        accepted = match_any(text, self.lexicon.acceptance_cues)
        rejected = match_any(text, self.lexicon.rejection_cues)
        if accepted == rejected:  # neither, or ambiguous both
            return state
        status = "accepted" if accepted else "rejected"
        plan_index = len(state.plans) - 1
        plan = state.plans[plan_index]
        numbers = {int(n) for n in _STEP_NUMBER.findall(text)}
        if numbers:
            targets = [s for s in plan.steps if s.index in numbers]
        else:
            targets = [s for s in plan.steps if s.status == "proposed"]
        for step in targets:
            if step.status == status or step.status_turn == turn:
                continue
            state = self._append(
                state,
                "step_status",
                turn,
                {"plan_index": plan_index, "step_index": step.index, "status": status},
            )
        return state


def _agent_payload(text: str, backend_key: int | None) -> dict:
    return {
        "text": text,
        "reasoning_chain": "",
        "suggestions": 0,
        "suppressed": 0,
        "parse_degraded": False,
        "fallback_used": False,
        "backend_key": backend_key,
    }


def _serialize_candidates(candidates: set[TransitionSignal]) -> list[dict]:
    order = {kind: i for i, kind in enumerate(Signal)}
    return [
        {
            "kind": c.kind.value,
            "confidence": c.confidence,
            "evidence": c.evidence,
        }
        for c in sorted(candidates, key=lambda c: order[c.kind])
    ]
