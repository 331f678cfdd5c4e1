"""Deterministic dialogue evaluation against scripted personas.

A persona is a rule cascade, not a model: given the agent's last turn
it deterministically picks its next utterance (reveal a hidden
stressor, resist premature advice, acknowledge a reframe that lands,
accept a feasible plan, or fall back to filler).  Paired with the
scripted backend and a fixed-step clock this makes entire dialogues,
their event logs, and their metrics byte-reproducible.

Ablation runs flip engine capabilities: ``thinking`` drops the private
reasoning channel, ``stage`` drops stage-aware prompting and with it
reply gating, ``both`` drops both.  Stage-ablated runs read the
persona's alternate response script, which records how an unstaged
model behaves on the same persona.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .clock import FixedStepClock
from .detector import CueLexicon, DetectorConfig, SignalDetector
from .errors import ConfigError
from .gateway import BackendConfig, make_backend
from .metrics import (
    DialogueMetrics,
    MetricsReport,
    PersonaFacts,
    causal_chain_present,
    compute_session_metrics,
)
from .pipeline import DialogueEngine, TurnResult
from .prompts import PromptConfig, is_suggestion, split_sentences
from .state import Resource, SessionConfig, SessionEvent, SessionState, replay
from .store import EventStore

ABLATION_MODES = ("full", "stage", "thinking", "both")

DEFAULT_DEFLECTION = "I'd rather not talk about that."
DEFAULT_RESISTANCE = "I've tried that before, it never works."
DEFAULT_ACCEPTANCE = "That sounds doable. I'll start with it."
DEFAULT_ACKNOWLEDGMENT = "That makes sense. I had not seen it that way before."
DEFAULT_CLOSING = "Thank you for listening. Goodbye."
DEFAULT_FILLERS = ("I'm not sure what else to say about it.",)


@dataclass
class HiddenStressor:
    label: str
    reveal_pattern: str
    line: str


@dataclass
class Persona:
    id: str
    opening: str
    turn_cap: int
    script: str
    script_nostage: str = ""
    root_cause: str | None = None
    hidden_stressors: list[HiddenStressor] = field(default_factory=list)
    resources: list[Resource] = field(default_factory=list)
    scripted_turns: dict[int, str] = field(default_factory=dict)
    avoidance_turns: set[int] = field(default_factory=set)
    filler_lines: list[str] = field(default_factory=lambda: list(DEFAULT_FILLERS))
    deflection_line: str = DEFAULT_DEFLECTION
    resistance_line: str = DEFAULT_RESISTANCE
    acceptance_line: str = DEFAULT_ACCEPTANCE
    acknowledgment_line: str = DEFAULT_ACKNOWLEDGMENT
    closing_line: str = DEFAULT_CLOSING

    def facts(self) -> PersonaFacts:
        return PersonaFacts(
            hidden_stressors=tuple(s.label for s in self.hidden_stressors),
            root_cause=self.root_cause,
        )

    @classmethod
    def from_dict(cls, data: dict) -> "Persona":
        try:
            return cls(
                id=data["id"],
                opening=data["opening"],
                turn_cap=int(data["turn_cap"]),
                script=data["script"],
                script_nostage=data.get("script_nostage", ""),
                root_cause=data.get("root_cause"),
                hidden_stressors=[
                    HiddenStressor(s["label"], s["reveal_pattern"], s["line"])
                    for s in data.get("hidden_stressors", [])
                ],
                resources=[Resource.from_dict(r) for r in data.get("resources", [])],
                scripted_turns={int(k): v for k, v in (data.get("scripted_turns") or {}).items()},
                avoidance_turns=set(data.get("avoidance_turns", [])),
                filler_lines=list(data.get("filler_lines", DEFAULT_FILLERS)),
                deflection_line=data.get("deflection_line", DEFAULT_DEFLECTION),
                resistance_line=data.get("resistance_line", DEFAULT_RESISTANCE),
                acceptance_line=data.get("acceptance_line", DEFAULT_ACCEPTANCE),
                acknowledgment_line=data.get("acknowledgment_line", DEFAULT_ACKNOWLEDGMENT),
                closing_line=data.get("closing_line", DEFAULT_CLOSING),
            )
        except KeyError as exc:
            raise ConfigError(f"persona is missing required field {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "Persona":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))


def load_personas(directory: str | Path) -> list[Persona]:
    paths = sorted(Path(directory).glob("*.yaml"))
    if not paths:
        raise ConfigError(f"no persona files under {directory}")
    return [Persona.load(p) for p in paths]


def default_personas_dir() -> Path:
    from importlib.resources import files

    return Path(str(files("stageflow") / "data" / "personas"))


@dataclass
class PersonaState:
    done: bool = False
    belief: bool = False
    belief_flip_turn: int | None = None
    revealed: set[str] = field(default_factory=set)
    filler_index: int = 0


def simulate_turn(
    persona: Persona,
    pstate: PersonaState,
    turn: int,
    last: TurnResult | None,
    lexicon: CueLexicon,
) -> str:
    """The persona's next utterance, by the first matching rule."""
    if turn == 1:
        for stressor in persona.hidden_stressors:
            if _mentions(persona.opening, stressor.label):
                pstate.revealed.add(stressor.label)
        return persona.opening
    if pstate.done:
        return persona.closing_line

    if (
        last is not None
        and persona.root_cause
        and not pstate.belief
        and last.stage_after.value == "insight"
        and causal_chain_present(last.reasoning_chain, persona.root_cause)
    ):
        pstate.belief = True
        pstate.belief_flip_turn = turn

    if turn in persona.scripted_turns:
        return persona.scripted_turns[turn]
    if turn in persona.avoidance_turns:
        return persona.deflection_line
    if (
        last is not None
        and last.plan is not None
        and last.stage_after.value == "action"
        and all(s.status != "infeasible" for s in last.plan.steps)
    ):
        pstate.done = True
        return persona.acceptance_line
    if last is not None and not pstate.belief and _has_suggestion(last.reply, lexicon):
        return persona.resistance_line
    if last is not None:
        seen = f"{last.reply}\n{last.reasoning_chain}"
        for stressor in persona.hidden_stressors:
            if stressor.label in pstate.revealed:
                continue
            if re.search(stressor.reveal_pattern, seen, re.IGNORECASE):
                pstate.revealed.add(stressor.label)
                return stressor.line
    if pstate.belief_flip_turn == turn:
        return persona.acknowledgment_line
    line = persona.filler_lines[pstate.filler_index % len(persona.filler_lines)]
    pstate.filler_index += 1
    return line


def _mentions(text: str, label: str) -> bool:
    from .state import normalize_text

    return normalize_text(label) in normalize_text(text)


def _has_suggestion(reply: str, lexicon: CueLexicon) -> bool:
    return any(is_suggestion(s, lexicon) for s in split_sentences(reply))


def prompt_config_for(mode: str) -> PromptConfig:
    if mode not in ABLATION_MODES:
        raise ConfigError(f"unknown ablation mode: {mode!r}")
    return PromptConfig(
        stage_aware=mode not in ("stage", "both"),
        thinking=mode not in ("thinking", "both"),
        gating=True,
    )


@dataclass
class DialogueRun:
    persona_id: str
    session_id: str
    events: list[SessionEvent]
    final_state: SessionState
    turns: list[TurnResult]
    closure_reason: str


def run_dialogue(
    persona: Persona,
    store_root: str | Path,
    lexicon: CueLexicon | None = None,
    mode: str = "full",
) -> DialogueRun:
    """Play one persona against the engine and return the full record.

    With a fixed-step clock, a scripted backend, and a deterministic
    session id, two runs of the same persona produce byte-identical
    event logs.
    """
    lexicon = lexicon or CueLexicon.load_default()
    script = persona.script
    if mode in ("stage", "both"):
        script = persona.script_nostage or persona.script
    backend = make_backend(BackendConfig(kind="scripted", script=script))
    engine = DialogueEngine(
        store=EventStore(Path(store_root)),
        backend=backend,
        detector=SignalDetector(lexicon, DetectorConfig()),
        lexicon=lexicon,
        prompt_config=prompt_config_for(mode),
        clock=FixedStepClock(),
    )
    session_id = persona.id if mode == "full" else f"{persona.id}.{mode}"
    engine.create_session(SessionConfig(session_id=session_id, resources=persona.resources))

    pstate = PersonaState()
    turns: list[TurnResult] = []
    last: TurnResult | None = None
    closure_reason = "turn_cap"
    for turn in range(1, persona.turn_cap + 1):
        utterance = simulate_turn(persona, pstate, turn, last, lexicon)
        last = engine.handle_message(session_id, utterance)
        turns.append(last)
        if last.closed:
            closure_reason = "closure_signal"
            break
    if not last.closed:
        closure_reason = "crisis_unresolved" if last.crisis else "turn_cap"
        engine.note_closure(session_id, closure_reason)

    events = engine.store.load(session_id)
    return DialogueRun(
        persona_id=persona.id,
        session_id=session_id,
        events=events,
        final_state=replay(events),
        turns=turns,
        closure_reason=closure_reason,
    )


def run_eval(
    personas: list[Persona],
    store_root: str | Path,
    lexicon: CueLexicon | None = None,
    mode: str = "full",
) -> tuple[list[DialogueRun], MetricsReport]:
    lexicon = lexicon or CueLexicon.load_default()
    runs = []
    report = MetricsReport()
    for persona in personas:
        run = run_dialogue(persona, store_root, lexicon, mode)
        runs.append(run)
        report.sessions[persona.id] = compute_session_metrics(
            run.events, persona.facts(), lexicon
        )
    return runs, report


@dataclass
class AblationReport:
    reports: dict[str, MetricsReport]

    def to_dict(self) -> dict:
        aggregates = {mode: r.aggregate() for mode, r in self.reports.items()}
        full_score = aggregates.get("full", {}).get("score", 0.0)
        deltas = {
            mode: agg.get("score", 0.0) - full_score
            for mode, agg in aggregates.items()
            if mode != "full"
        }
        return {
            "reports": {mode: r.to_dict() for mode, r in self.reports.items()},
            "score_deltas_vs_full": deltas,
        }


def run_ablation(
    personas: list[Persona],
    store_root: str | Path,
    lexicon: CueLexicon | None = None,
    modes: tuple[str, ...] = ABLATION_MODES,
) -> AblationReport:
    lexicon = lexicon or CueLexicon.load_default()
    reports = {}
    for mode in modes:
        _, reports[mode] = run_eval(personas, store_root, lexicon, mode)
    return AblationReport(reports=reports)
