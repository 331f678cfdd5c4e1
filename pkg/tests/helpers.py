"""Shared construction helpers for tests."""

from __future__ import annotations

from stageflow.clock import FixedStepClock
from stageflow.detector import CueLexicon, DetectorConfig, SignalDetector
from stageflow.gateway import ScriptedBackend
from stageflow.pipeline import DialogueEngine
from stageflow.prompts import PromptConfig
from stageflow.stages import next_stage, parse_signal, parse_stage
from stageflow.state import SessionEvent
from stageflow.store import EventStore


def make_raw(
    reply: str,
    reasoning: str = "",
    keywords: str = "none",
    foci: str = "none",
    stressors: str = "none",
) -> str:
    """Assemble a scripted model response in the structured wire form."""
    parts = []
    if reasoning:
        parts.append(f"<think>{reasoning}</think>")
    parts.append(reply)
    parts.append(f"<extract>\nkeywords: {keywords}\nfoci: {foci}\nstressors: {stressors}\n</extract>")
    return "\n".join(parts)


def scripted(*raws: str) -> ScriptedBackend:
    return ScriptedBackend(by_key={i: raw for i, raw in enumerate(raws)})


class SequentialGateway:
    """Completion double that replays replies in call order, for code
    paths that call ``complete`` without an ordinal key."""

    def __init__(self, *replies: str):
        self.replies = list(replies)
        self.calls = 0

    def complete(self, messages, key=None):
        self.calls += 1
        if not self.replies:
            raise RuntimeError("sequential gateway exhausted")
        return self.replies.pop(0)


def make_engine(
    tmp_path,
    lexicon: CueLexicon,
    backend,
    prompt_config: PromptConfig | None = None,
    detector_config: DetectorConfig | None = None,
) -> DialogueEngine:
    return DialogueEngine(
        store=EventStore(tmp_path),
        backend=backend,
        detector=SignalDetector(lexicon, detector_config or DetectorConfig()),
        lexicon=lexicon,
        prompt_config=prompt_config or PromptConfig(),
        clock=FixedStepClock(),
    )


class LogBuilder:
    """Hand-build a reducer-valid session event log for metric checks."""

    def __init__(self, session_id: str = "hand"):
        self.session_id = session_id
        self.events: list[SessionEvent] = []
        self.turn = 0
        self.stage = "exploration"
        self.plan_count = 0

    def _append(self, kind: str, payload: dict) -> "LogBuilder":
        self.events.append(
            SessionEvent(
                session_id=self.session_id,
                kind=kind,
                turn_index=self.turn,
                timestamp=f"2026-01-01T00:00:{len(self.events):02d}Z",
                payload=payload,
            )
        )
        return self

    def user(self, text: str) -> "LogBuilder":
        self.turn += 1
        return self._append("user_msg", {"text": text})

    def agent(self, text: str, reasoning: str = "") -> "LogBuilder":
        return self._append(
            "agent_msg", {"text": text, "reasoning_chain": reasoning, "backend_key": None}
        )

    def go(self, signal: str) -> "LogBuilder":
        frm = self.stage
        to = next_stage(parse_stage(frm), parse_signal(signal)).value
        self.stage = to
        return self._append("transition", {"signal": signal, "from": frm, "to": to})

    def override(self, stage: str) -> "LogBuilder":
        self.stage = stage
        return self._append("operator_override", {"stage": stage, "operator_note": "hand-built"})

    def extraction(self, **payload) -> "LogBuilder":
        return self._append("extraction", payload)

    def plan(self, *descriptions: str) -> "LogBuilder":
        steps = [
            {
                "index": i,
                "description": text,
                "required_tags": ["time"],
                "required_minutes_per_day": 10,
            }
            for i, text in enumerate(descriptions, start=1)
        ]
        self._append(
            "plan_proposed",
            {"plan_index": self.plan_count, "steps": steps, "proposed_turn": self.turn},
        )
        self.plan_count += 1
        return self

    def status(self, step_index: int, status: str, plan_index: int | None = None) -> "LogBuilder":
        if plan_index is None:
            plan_index = self.plan_count - 1
        return self._append(
            "step_status",
            {"plan_index": plan_index, "step_index": step_index, "status": status},
        )

    def crisis_flag(self, active: bool) -> "LogBuilder":
        return self._append("crisis_flag", {"active": active})

    def closure(self, reason: str) -> "LogBuilder":
        return self._append("closure", {"reason": reason})

    def records(self) -> list[dict]:
        return [e.to_record() for e in self.events]
