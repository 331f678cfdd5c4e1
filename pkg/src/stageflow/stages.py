"""Dialogue stages, transition signals, and the transition table.

The conversation moves through three working stages (exploration ->
insight -> action) plus a crisis stage that preempts everything and a
terminal closed stage.  Movement between stages is driven entirely by
the nine transition signals below; ``next_stage`` is a total function
over all (stage, signal) pairs, so callers never have to handle an
"illegal transition" case.

Backtracking rules baked into the table:

* repeated avoidance of the stressor topic reverts any working stage
  to exploration (``AVOIDANCE_DETECTED``),
* advice that meets resistance reverts action to insight
  (``RESISTANCE_TO_ADVICE``).

Crisis handling is deliberately asymmetric: any working stage can enter
crisis, and only an explicit ``CRISIS_RESOLVED`` signal leaves it.  A
session in crisis cannot be closed.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Stage(str, Enum):
    EXPLORATION = "exploration"
    INSIGHT = "insight"
    ACTION = "action"
    CRISIS = "crisis"
    CLOSED = "closed"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


class Signal(str, Enum):
    """The nine transition-signal kinds."""

    READY_FOR_INSIGHT = "ready_for_insight"
    READY_FOR_ACTION = "ready_for_action"
    AVOIDANCE_DETECTED = "avoidance_detected"
    RESISTANCE_TO_ADVICE = "resistance_to_advice"
    CRISIS_TRIGGER = "crisis_trigger"
    CRISIS_RESOLVED = "crisis_resolved"
    NEW_TOPIC = "new_topic"
    CONTINUE = "continue"
    CLOSURE_SIGNAL = "closure_signal"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


WORKING_STAGES = (Stage.EXPLORATION, Stage.INSIGHT, Stage.ACTION)


@dataclass(frozen=True)
class TransitionSignal:
    """A detected signal candidate: kind plus confidence and evidence.

    ``evidence`` is the text that triggered the signal; ``span`` is its
    (start, end) character offsets in the source utterance when known.
    ``CONTINUE`` is the only kind allowed to carry empty evidence.
    """

    kind: Signal
    confidence: float = 1.0
    evidence: str = ""
    span: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of range: {self.confidence}")
        if self.kind is not Signal.CONTINUE and not self.evidence:
            raise ValueError(f"{self.kind.value} requires non-empty evidence")

    def to_dict(self) -> dict:
        return {
            "signal": self.kind.value,
            "confidence": self.confidence,
            "evidence": self.evidence,
        }


@dataclass(frozen=True)
class TransitionRecord:
    from_stage: Stage
    signal: Signal
    to_stage: Stage
    turn_index: int

    def to_dict(self) -> dict:
        return {
            "from": self.from_stage.value,
            "signal": self.signal.value,
            "to": self.to_stage.value,
            "turn_index": self.turn_index,
        }


# Transition table.  Signals not listed for a stage mean "stay".
# CLOSED is terminal and CRISIS only exits via CRISIS_RESOLVED.
_TRANSITIONS: dict[Signal, dict[Stage, Stage]] = {
    Signal.READY_FOR_INSIGHT: {Stage.EXPLORATION: Stage.INSIGHT},
    Signal.READY_FOR_ACTION: {Stage.INSIGHT: Stage.ACTION},
    Signal.AVOIDANCE_DETECTED: {s: Stage.EXPLORATION for s in WORKING_STAGES},
    Signal.RESISTANCE_TO_ADVICE: {Stage.ACTION: Stage.INSIGHT},
    Signal.CRISIS_TRIGGER: {s: Stage.CRISIS for s in WORKING_STAGES},
    Signal.CRISIS_RESOLVED: {Stage.CRISIS: Stage.EXPLORATION},
    Signal.NEW_TOPIC: {s: Stage.EXPLORATION for s in WORKING_STAGES},
    Signal.CONTINUE: {},
    Signal.CLOSURE_SIGNAL: {s: Stage.CLOSED for s in WORKING_STAGES},
}


def next_stage(stage: Stage, signal: Signal) -> Stage:
    """Total transition function: the stage reached from ``stage`` on ``signal``."""
    if stage is Stage.CLOSED:
        return Stage.CLOSED
    return _TRANSITIONS[signal].get(stage, stage)


# Where each signal may be emitted.  CONTINUE is valid everywhere a turn
# can still happen; nothing is applicable once a session is closed.
_APPLICABLE: dict[Signal, tuple[Stage, ...]] = {
    Signal.READY_FOR_INSIGHT: (Stage.EXPLORATION,),
    Signal.READY_FOR_ACTION: (Stage.INSIGHT,),
    Signal.AVOIDANCE_DETECTED: WORKING_STAGES,
    Signal.RESISTANCE_TO_ADVICE: (Stage.ACTION,),
    Signal.CRISIS_TRIGGER: WORKING_STAGES,
    Signal.CRISIS_RESOLVED: (Stage.CRISIS,),
    Signal.NEW_TOPIC: WORKING_STAGES,
    Signal.CONTINUE: WORKING_STAGES + (Stage.CRISIS,),
    Signal.CLOSURE_SIGNAL: WORKING_STAGES,
}


def applicable(stage: Stage, signal: Signal) -> bool:
    """True iff ``signal`` may be emitted while the session is in ``stage``."""
    return stage in _APPLICABLE[signal]


# Resolution priority, high to low: safety first, then leaving crisis,
# then closing, then the two backtracks, then topic reset, then forward
# movement, with "continue" as the floor.
RESOLUTION_PRIORITY: tuple[Signal, ...] = (
    Signal.CRISIS_TRIGGER,
    Signal.CRISIS_RESOLVED,
    Signal.CLOSURE_SIGNAL,
    Signal.RESISTANCE_TO_ADVICE,
    Signal.AVOIDANCE_DETECTED,
    Signal.NEW_TOPIC,
    Signal.READY_FOR_ACTION,
    Signal.READY_FOR_INSIGHT,
    Signal.CONTINUE,
)

_PRIORITY_RANK = {kind: rank for rank, kind in enumerate(RESOLUTION_PRIORITY)}

CONTINUE_FALLBACK = TransitionSignal(Signal.CONTINUE, confidence=0.0)


def resolve(stage: Stage, candidates: set[TransitionSignal] | frozenset[TransitionSignal]) -> TransitionSignal:
    """Pick the winning signal from a candidate set.

    Filters to signals applicable in ``stage``, then takes the highest
    priority kind; among candidates of the same kind, higher confidence
    wins, then the earlier (and shorter) evidence span.  With no
    applicable candidate the resolver falls back to a zero-confidence
    CONTINUE.
    """
    if not candidates:
        raise ValueError("resolve() requires a non-empty candidate set")
    viable = [c for c in candidates if applicable(stage, c.kind)]
    if not viable:
        return CONTINUE_FALLBACK
    return min(viable, key=_resolution_key)


def _resolution_key(candidate: TransitionSignal) -> tuple:
    # Total over every field so the winner never depends on set iteration
    # order: span-less candidates sort after any realistic span via the
    # sentinel, and the has-span flag breaks even a sentinel collision.
    if candidate.span is not None:
        span_start, span_end = candidate.span
        spanless = False
    else:
        span_start = span_end = len(candidate.evidence) + 10**9
        spanless = True
    return (
        _PRIORITY_RANK[candidate.kind],
        -candidate.confidence,
        span_start,
        span_end,
        spanless,
        candidate.evidence,
    )


def parse_stage(name: str) -> Stage:
    try:
        return Stage(name)
    except ValueError:
        raise ValueError(f"unknown stage identifier: {name!r}") from None


def parse_signal(name: str) -> Signal:
    try:
        return Signal(name)
    except ValueError:
        raise ValueError(f"unknown signal identifier: {name!r}") from None
