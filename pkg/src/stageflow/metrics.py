"""Support-quality metrics computed from session event logs.

Each metric reads only the persisted events plus the persona facts the
evaluation harness knows (which stressors were hidden, what the root
cause was).  Stage attribution uses the stage in effect when each
agent message was emitted, reconstructed by folding the transition
events in log order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .detector import CueLexicon, match_any
from .prompts import is_generic, is_suggestion, split_sentences
from .stages import Stage, parse_stage
from .state import SessionEvent, normalize_text, replay

CHAIN_ARROW = "→"


@dataclass(frozen=True)
class PersonaFacts:
    hidden_stressors: tuple[str, ...] = ()
    root_cause: str | None = None


@dataclass
class DialogueMetrics:
    exposure_completeness: float
    restructuring_success: bool
    adoption_rate: float
    premature_suggestion_rate: float
    ineffective_support_rate: float
    root_cause_identified: bool
    plans_proposed: bool

    def score(self) -> float:
        """Mean of the six quality terms, rate-style metrics inverted
        so that higher is always better."""
        return (
            self.exposure_completeness
            + (1.0 if self.restructuring_success else 0.0)
            + self.adoption_rate
            + (1.0 - self.premature_suggestion_rate)
            + (1.0 - self.ineffective_support_rate)
            + (1.0 if self.root_cause_identified else 0.0)
        ) / 6.0

    def to_dict(self) -> dict:
        return {
            "exposure_completeness": self.exposure_completeness,
            "restructuring_success": self.restructuring_success,
            "adoption_rate": self.adoption_rate,
            "premature_suggestion_rate": self.premature_suggestion_rate,
            "ineffective_support_rate": self.ineffective_support_rate,
            "root_cause_identified": self.root_cause_identified,
            "plans_proposed": self.plans_proposed,
            "score": self.score(),
        }


def causal_chain_present(reasoning: str, root_cause: str) -> bool:
    """A causal chain is at least three linked nodes (two arrows) that
    mentions the root cause."""
    if not reasoning or not root_cause:
        return False
    return reasoning.count(CHAIN_ARROW) >= 2 and normalize_text(root_cause) in normalize_text(reasoning)


def metaphor_reframe_present(reply: str, root_cause: str, lexicon: CueLexicon) -> bool:
    if not reply or not root_cause:
        return False
    wanted = normalize_text(root_cause)
    for sentence in split_sentences(reply):
        if match_any(sentence, lexicon.metaphor_markers) and wanted in normalize_text(sentence):
            return True
    return False


@dataclass
class _Turns:
    agent: list[tuple[int, Stage, str, str]] = field(default_factory=list)  # turn, stage, text, reasoning
    user: list[tuple[int, str]] = field(default_factory=list)


def _collect_turns(events: list[SessionEvent]) -> _Turns:
    turns = _Turns()
    stage = Stage.EXPLORATION
    for event in events:
        if event.kind == "transition":
            stage = parse_stage(event.payload["to"])
        elif event.kind == "operator_override":
            stage = parse_stage(event.payload["stage"])
        elif event.kind == "user_msg":
            turns.user.append((event.turn_index, event.payload["text"]))
        elif event.kind == "agent_msg":
            turns.agent.append(
                (
                    event.turn_index,
                    stage,
                    event.payload["text"],
                    event.payload.get("reasoning_chain", ""),
                )
            )
    return turns


def compute_session_metrics(
    events: list[SessionEvent], facts: PersonaFacts, lexicon: CueLexicon
) -> DialogueMetrics:
    turns = _collect_turns(events)

    # Exposure: hidden stressors the persona actually voiced and the
    # agent then acknowledged by name.
    if facts.hidden_stressors:
        exposed = 0
        for label in facts.hidden_stressors:
            wanted = normalize_text(label)
            reveal_turns = [t for t, text in turns.user if wanted in normalize_text(text)]
            if not reveal_turns:
                continue
            reveal = min(reveal_turns)
            if any(
                t >= reveal and wanted in normalize_text(text)
                for t, _, text, _ in turns.agent
            ):
                exposed += 1
        exposure = exposed / len(facts.hidden_stressors)
    else:
        exposure = 1.0

    # Restructuring: a reframing attempt in the insight stage (causal
    # chain in the reasoning, or a metaphor naming the root cause in
    # the reply) that the user later acknowledges.
    restructuring = False
    if facts.root_cause:
        attempt_turns = [
            t
            for t, stage, text, reasoning in turns.agent
            if stage is Stage.INSIGHT
            and (
                causal_chain_present(reasoning, facts.root_cause)
                or metaphor_reframe_present(text, facts.root_cause, lexicon)
            )
        ]
        if attempt_turns:
            first = min(attempt_turns)
            restructuring = any(
                t > first and match_any(text, lexicon.acknowledgment_cues)
                for t, text in turns.user
            )

    # Adoption: accepted steps over proposed steps, from final statuses.
    final = replay(events)
    total_steps = sum(len(p.steps) for p in final.plans)
    accepted = sum(1 for p in final.plans for s in p.steps if s.status == "accepted")
    adoption = accepted / total_steps if total_steps else 0.0

    all_sentences = 0
    premature = 0
    generic = 0
    for _, stage, text, _ in turns.agent:
        sentences = split_sentences(text)
        all_sentences += len(sentences)
        generic += sum(1 for s in sentences if is_generic(s, lexicon))
        if stage in (Stage.EXPLORATION, Stage.INSIGHT):
            premature += sum(1 for s in sentences if is_suggestion(s, lexicon))
    premature_rate = premature / all_sentences if all_sentences else 0.0
    generic_rate = generic / all_sentences if all_sentences else 0.0

    root_found = bool(
        facts.root_cause
        and any(
            normalize_text(facts.root_cause) in normalize_text(reasoning)
            for _, _, _, reasoning in turns.agent
            if reasoning
        )
    )

    return DialogueMetrics(
        exposure_completeness=exposure,
        restructuring_success=restructuring,
        adoption_rate=adoption,
        premature_suggestion_rate=premature_rate,
        ineffective_support_rate=generic_rate,
        root_cause_identified=root_found,
        plans_proposed=total_steps > 0,
    )


@dataclass
class MetricsReport:
    sessions: dict[str, DialogueMetrics] = field(default_factory=dict)

    def aggregate(self) -> dict:
        if not self.sessions:
            return {}
        n = len(self.sessions)
        metrics = list(self.sessions.values())
        return {
            "sessions": n,
            "exposure_completeness": sum(m.exposure_completeness for m in metrics) / n,
            "restructuring_success_rate": sum(m.restructuring_success for m in metrics) / n,
            "adoption_rate": sum(m.adoption_rate for m in metrics) / n,
            "premature_suggestion_rate": sum(m.premature_suggestion_rate for m in metrics) / n,
            "ineffective_support_rate": sum(m.ineffective_support_rate for m in metrics) / n,
            "root_cause_identified_rate": sum(m.root_cause_identified for m in metrics) / n,
            "score": sum(m.score() for m in metrics) / n,
        }

    def to_dict(self) -> dict:
        return {
            "sessions": {pid: m.to_dict() for pid, m in self.sessions.items()},
            "aggregate": self.aggregate(),
        }
