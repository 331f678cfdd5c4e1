"""Prompt assembly and reply post-processing.

The model contract has three structured parts:

* a per-stage instruction block whose first line is a unique stage
  marker (``<Exploration>`` etc.),
* an optional private reasoning block delimited by ``<think>`` and
  ``</think>`` that must open with a "Current stage: X; Focus: Y"
  header,
* a trailing ``<extract>`` block with ``keywords:`` / ``foci:`` /
  ``stressors:`` lines that feeds the session's extraction events.

``parse_response`` is the safety net for all of it: whatever the model
returns, it never raises and never lets a delimiter token or private
reasoning leak into the user-facing reply.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path

from .detector import CueLexicon, match_any
from .stages import Stage
from .state import ActionPlan, PlanStep, SessionState

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"
EXTRACT_OPEN = "<extract>"
EXTRACT_CLOSE = "</extract>"

STAGE_TITLES = {
    Stage.EXPLORATION: "Exploration",
    Stage.INSIGHT: "Insight",
    Stage.ACTION: "Action",
    Stage.CRISIS: "Crisis",
}

STAGE_MARKERS = {stage: f"<{title}>" for stage, title in STAGE_TITLES.items()}

FOCUS_LINES = {
    Stage.EXPLORATION: "surface stressors and emotional keywords",
    Stage.INSIGHT: "connect present feelings to root causes",
    Stage.ACTION: "design small feasible next steps",
    Stage.CRISIS: "immediate safety and stabilization",
}

# Used when gating would leave the user with nothing; the exploration
# line doubles as the all-purpose empathic default.
FALLBACK_LINES = {
    Stage.EXPLORATION: "It sounds like this matter makes you feel conflicted.",
    Stage.INSIGHT: (
        "That feeling seems to carry a lot underneath it. "
        "What comes to mind when you stay with it for a moment?"
    ),
    Stage.ACTION: "What feels like a manageable first step to you?",
    Stage.CRISIS: (
        "Your safety matters most right now. "
        "Please reach out to someone who can be with you."
    ),
}

_THINK_BLOCK = re.compile(re.escape(THINK_OPEN) + r"(.*?)" + re.escape(THINK_CLOSE), re.DOTALL)
_EXTRACT_BLOCK = re.compile(re.escape(EXTRACT_OPEN) + r"(.*?)" + re.escape(EXTRACT_CLOSE), re.DOTALL)
_STRAY_TOKEN = re.compile(r"</?think>|</?extract>")
_EXTRACT_LINE = re.compile(r"^(keywords|foci|stressors)\s*:\s*(.*)$", re.IGNORECASE)
_SPACE_RUN = re.compile(r"[ \t]+")
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_NUMBERED_LINE = re.compile(r"^\s*(?:step\s+)?(\d+)[.):]\s+(.*)$", re.IGNORECASE)
_WEEK_HINT = re.compile(
    r"\b(?:in\s+the\s+)?((?:first|second|third|fourth|fifth|last)\s+week)\b"
    r"|\b(week\s+(?:one|two|three|four|five|\d+))\b",
    re.IGNORECASE,
)
_RESOURCE_NOTE = re.compile(r"\[resources:\s*([^\]]+)\]", re.IGNORECASE)


@dataclass
class PromptConfig:
    stage_aware: bool = True
    thinking: bool = True
    gating: bool = True
    history_window: int = 8


@dataclass
class PromptTemplates:
    base: str
    stages: dict[Stage, str]
    stageless: str
    thinking: str
    thinking_stageless: str
    extraction: str

    @classmethod
    def load_default(cls) -> "PromptTemplates":
        root = files("stageflow") / "data" / "templates"

        def read(name: str) -> str:
            return (root / f"{name}.txt").read_text(encoding="utf-8").strip()

        return cls(
            base=read("system_base"),
            stages={stage: read(stage.value) for stage in STAGE_TITLES},
            stageless=read("stageless"),
            thinking=read("thinking"),
            thinking_stageless=read("thinking_stageless"),
            extraction=read("extraction"),
        )

    @classmethod
    def load_dir(cls, path: str | Path) -> "PromptTemplates":
        root = Path(path)

        def read(name: str) -> str:
            return (root / f"{name}.txt").read_text(encoding="utf-8").strip()

        return cls(
            base=read("system_base"),
            stages={stage: read(stage.value) for stage in STAGE_TITLES},
            stageless=read("stageless"),
            thinking=read("thinking"),
            thinking_stageless=read("thinking_stageless"),
            extraction=read("extraction"),
        )


@dataclass
class Prompt:
    system_text: str
    messages: list[dict]
    stage: Stage


def reasoning_header(stage: Stage) -> str:
    return f"Current stage: {STAGE_TITLES[stage]}; Focus: {FOCUS_LINES[stage]}"


def build_prompt(
    state: SessionState,
    config: PromptConfig,
    templates: PromptTemplates,
    stage: Stage | None = None,
) -> Prompt:
    """Assemble the chat messages for the next agent turn.

    The turn's stage defaults to the session's current stage; a closed
    session has no next turn to prompt for.
    """
    stage = stage or state.stage
    if stage is Stage.CLOSED:
        raise ValueError("cannot build a prompt for a closed session")
    parts = [templates.base]
    if config.stage_aware:
        parts.append(templates.stages[stage])
    else:
        parts.append(templates.stageless)
    if config.thinking:
        if config.stage_aware:
            parts.append(
                templates.thinking.format(
                    stage=STAGE_TITLES[stage], focus=FOCUS_LINES[stage]
                )
            )
        else:
            parts.append(templates.thinking_stageless)
    parts.append(templates.extraction)
    system_text = "\n\n".join(parts)
    messages = [{"role": "system", "content": system_text}]
    role_map = {"user": "user", "agent": "assistant"}
    for role, text in state.history[-config.history_window :]:
        messages.append({"role": role_map[role], "content": text})
    return Prompt(system_text=system_text, messages=messages, stage=stage)


@dataclass
class ParsedReply:
    reply: str
    reasoning_chain: str = ""
    keywords: list[str] = field(default_factory=list)
    foci: list[str] = field(default_factory=list)
    stressors: list[str] = field(default_factory=list)
    parse_degraded: bool = False


def _tidy(text: str) -> str:
    lines = [_SPACE_RUN.sub(" ", line).strip() for line in text.split("\n")]
    return "\n".join(line for line in lines if line)


def _parse_extraction(block: str) -> tuple[list[str], list[str], list[str]]:
    out = {"keywords": [], "foci": [], "stressors": []}
    for line in block.split("\n"):
        m = _EXTRACT_LINE.match(line.strip())
        if not m:
            continue
        bucket = out[m.group(1).lower()]
        for item in m.group(2).split(","):
            item = item.strip()
            if not item or item.lower() == "none" or item in bucket:
                continue
            bucket.append(item)
    return out["keywords"], out["foci"], out["stressors"]


def parse_response(raw: str, thinking: bool = True) -> ParsedReply:
    """Split a raw model response into reply, private reasoning, and
    extraction lists.

    Never raises.  All complete ``<think>`` blocks are removed from the
    reply; the first supplies the reasoning chain when thinking was
    requested.  The last complete ``<extract>`` block supplies the
    extraction lists.  A dangling delimiter marks the parse as degraded
    and the token itself is stripped so it can never reach the user.
    """
    raw = raw or ""
    degraded = False
    think_blocks = _THINK_BLOCK.findall(raw)
    text = _THINK_BLOCK.sub(" ", raw)
    reasoning = ""
    if thinking:
        if think_blocks:
            reasoning = think_blocks[0].strip()
        else:
            degraded = True
    extract_blocks = _EXTRACT_BLOCK.findall(text)
    text = _EXTRACT_BLOCK.sub(" ", text)
    keywords: list[str] = []
    foci: list[str] = []
    stressors: list[str] = []
    if extract_blocks:
        keywords, foci, stressors = _parse_extraction(extract_blocks[-1])
    if _STRAY_TOKEN.search(text):
        degraded = True
        text = _STRAY_TOKEN.sub(" ", text)
    return ParsedReply(
        reply=_tidy(text),
        reasoning_chain=reasoning,
        keywords=keywords,
        foci=foci,
        stressors=stressors,
        parse_degraded=degraded,
    )


def split_sentences(text: str) -> list[str]:
    if not text.strip():
        return []
    flat = _SPACE_RUN.sub(" ", text.replace("\n", " ")).strip()
    return [s for s in _SENTENCE_SPLIT.split(flat) if s]


def is_suggestion(sentence: str, lexicon: CueLexicon) -> bool:
    return match_any(sentence, lexicon.suggestion_phrases)


def is_generic(sentence: str, lexicon: CueLexicon) -> bool:
    return match_any(sentence, lexicon.generic_phrases)


@dataclass
class GateResult:
    text: str
    suggestions: int
    suppressed: int
    fallback_used: bool


def gate_reply(
    text: str, stage: Stage, lexicon: CueLexicon, enabled: bool = True
) -> GateResult:
    """Filter suggestion sentences out of early-stage replies.

    In exploration and insight, advice is premature: sentences matching
    the suggestion lexicon are dropped, and if nothing survives the
    stage's empathic fallback line is used instead.  Later stages pass
    through untouched (an empty reply still gets the fallback).
    """
    sentences = split_sentences(text)
    gate_active = enabled and stage in (Stage.EXPLORATION, Stage.INSIGHT)
    if gate_active:
        kept = [s for s in sentences if not is_suggestion(s, lexicon)]
        suppressed = len(sentences) - len(kept)
        if not kept:
            return GateResult(FALLBACK_LINES[stage], 0, suppressed, True)
        return GateResult(" ".join(kept), 0, suppressed, False)
    if not sentences:
        fallback = FALLBACK_LINES.get(stage, FALLBACK_LINES[Stage.EXPLORATION])
        return GateResult(fallback, 0, 0, True)
    suggestions = sum(1 for s in sentences if is_suggestion(s, lexicon))
    return GateResult(text, suggestions, 0, False)


def _parse_resource_note(text: str) -> tuple[str, set[str], int]:
    """Strip an inline ``[resources: tag=minutes, tag2]`` note from a
    step description and return (cleaned text, tags, minutes/day)."""
    tags: set[str] = set()
    minutes: list[int] = []
    m = _RESOURCE_NOTE.search(text)
    if m:
        for item in m.group(1).split(","):
            item = item.strip()
            if not item:
                continue
            if "=" in item:
                tag, _, value = item.partition("=")
                tags.add(tag.strip())
                try:
                    minutes.append(int(value.strip()))
                except ValueError:
                    pass
            else:
                tags.add(item)
        text = _RESOURCE_NOTE.sub("", text).strip()
    if not tags:
        tags = {"time"}
    return text, tags, max(minutes) if minutes else 10


def extract_plan(reply: str, proposed_turn: int) -> ActionPlan | None:
    """Pull an action plan out of a reply, or None when it has none.

    Numbered lines ("1. ...", "step 2: ...") are the primary step form;
    failing that, sentences with a week hint ("in the first week, ...")
    each become a step.  Steps default to ten minutes a day of plain
    time unless an inline resource note says otherwise.
    """
    candidates: list[tuple[str, str]] = []
    for line in reply.split("\n"):
        m = _NUMBERED_LINE.match(line)
        if m:
            candidates.append((m.group(2).strip(), ""))
    if not candidates:
        for sentence in split_sentences(reply):
            m = _WEEK_HINT.search(sentence)
            if m:
                hint = (m.group(1) or m.group(2)).lower()
                candidates.append((sentence.strip(), hint))
    if not candidates:
        return None
    steps = []
    for i, (text, hint) in enumerate(candidates, start=1):
        text, tags, minutes = _parse_resource_note(text)
        steps.append(
            PlanStep(
                index=i,
                description=text,
                schedule_hint=hint,
                required_tags=tags,
                required_minutes_per_day=minutes,
            )
        )
    return ActionPlan(steps=steps, proposed_turn=proposed_turn)
