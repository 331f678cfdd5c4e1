"""Transition-signal detection from user utterances.

Two detection paths share one arbitration point (the stage resolver):

* ``rules`` — deterministic cue-lexicon matching (``detect_cues``),
* ``llm`` — a prompted classifier over the recent turns whose reply
  must follow a rigid one-line grammar; anything else degrades to a
  harmless CONTINUE so a flaky backend can never block a turn,
* ``hybrid`` — the union of both.

Crisis cues are scanned in every mode: the safety path never depends
on a model being reachable.

Avoidance is the one stateful signal: a single avoidance cue only
bumps the session's consecutive-avoidance counter, and the
AVOIDANCE_DETECTED candidate is emitted once the run length reaches
the configured threshold ("repeated" avoidance).  Any user turn
without an avoidance cue resets the counter.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path

import yaml

from .errors import ConfigError
from .stages import Signal, Stage, TransitionSignal
from .state import SessionState

logger = logging.getLogger(__name__)

DETECTOR_MODES = ("rules", "llm", "hybrid")

_LLM_REPLY_RE = re.compile(r"^signal=([a-z_]+)\s+confidence=([0-9]*\.?[0-9]+)$")


@dataclass(frozen=True)
class LexiconPattern:
    pattern: str
    match: str = "substring"  # "substring" | "word"
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.match not in ("substring", "word"):
            raise ConfigError(f"unknown match mode: {self.match!r}")
        if not 0.0 < self.weight <= 1.0:
            raise ConfigError(f"pattern weight must be in (0, 1]: {self.weight}")
        if not self.pattern:
            raise ConfigError("empty pattern")

    def compile(self) -> re.Pattern:
        escaped = re.escape(self.pattern)
        if self.match == "word":
            escaped = rf"\b{escaped}\b"
        return re.compile(escaped, re.IGNORECASE)


def _parse_patterns(entries: list, where: str) -> list[LexiconPattern]:
    patterns = []
    for entry in entries or []:
        if isinstance(entry, str):
            patterns.append(LexiconPattern(pattern=entry))
        elif isinstance(entry, dict):
            patterns.append(
                LexiconPattern(
                    pattern=entry.get("pattern", ""),
                    match=entry.get("match", "substring"),
                    weight=entry.get("weight", 1.0),
                )
            )
        else:
            raise ConfigError(f"bad pattern entry in {where}: {entry!r}")
    return patterns


@dataclass
class CueLexicon:
    """The bundled cue lexicon: per-signal trigger patterns plus the
    shared phrase lists used by reply gating and the metrics."""

    signal_patterns: dict[Signal, list[LexiconPattern]]
    suggestion_phrases: list[LexiconPattern] = field(default_factory=list)
    generic_phrases: list[LexiconPattern] = field(default_factory=list)
    metaphor_markers: list[LexiconPattern] = field(default_factory=list)
    acknowledgment_cues: list[LexiconPattern] = field(default_factory=list)
    acceptance_cues: list[LexiconPattern] = field(default_factory=list)
    rejection_cues: list[LexiconPattern] = field(default_factory=list)
    version: int = 1

    def __post_init__(self) -> None:
        self._compiled: dict[Signal, list[tuple[LexiconPattern, re.Pattern]]] = {
            kind: [(p, p.compile()) for p in patterns]
            for kind, patterns in self.signal_patterns.items()
        }
        for kind in Signal:
            if kind is Signal.CONTINUE:
                continue
            if not self.signal_patterns.get(kind):
                raise ConfigError(f"lexicon has no patterns for {kind.value}")
        crisis = {p.pattern for p in self.signal_patterns[Signal.CRISIS_TRIGGER]}
        others = {
            p.pattern
            for kind, patterns in self.signal_patterns.items()
            if kind is not Signal.CRISIS_TRIGGER
            for p in patterns
        }
        overlap = crisis & others
        if overlap:
            raise ConfigError(f"crisis patterns overlap other signals: {sorted(overlap)}")

    def compiled(self, kind: Signal) -> list[tuple[LexiconPattern, re.Pattern]]:
        return self._compiled.get(kind, [])

    @classmethod
    def from_dict(cls, data: dict) -> "CueLexicon":
        signal_patterns: dict[Signal, list[LexiconPattern]] = {}
        for name, entries in (data.get("signals") or {}).items():
            kind = Signal(name)
            if kind is Signal.CRISIS_TRIGGER:
                raise ConfigError("crisis patterns belong in the top-level 'crisis' list")
            signal_patterns[kind] = _parse_patterns(entries, f"signals.{name}")
        signal_patterns[Signal.CRISIS_TRIGGER] = _parse_patterns(data.get("crisis"), "crisis")
        return cls(
            signal_patterns=signal_patterns,
            suggestion_phrases=_parse_patterns(data.get("suggestion_phrases"), "suggestion_phrases"),
            generic_phrases=_parse_patterns(data.get("generic_phrases"), "generic_phrases"),
            metaphor_markers=_parse_patterns(data.get("metaphor_markers"), "metaphor_markers"),
            acknowledgment_cues=_parse_patterns(data.get("acknowledgment_cues"), "acknowledgment_cues"),
            acceptance_cues=_parse_patterns(data.get("acceptance_cues"), "acceptance_cues"),
            rejection_cues=_parse_patterns(data.get("rejection_cues"), "rejection_cues"),
            version=data.get("version", 1),
        )

    @classmethod
    def load(cls, path: str | Path) -> "CueLexicon":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))

    @classmethod
    def load_default(cls) -> "CueLexicon":
        text = (files("stageflow") / "data" / "lexicon.yaml").read_text(encoding="utf-8")
        return cls.from_dict(yaml.safe_load(text))


def match_any(text: str, patterns: list[LexiconPattern]) -> bool:
    return any(p.compile().search(text) for p in patterns)


@dataclass(frozen=True)
class CueHit:
    kind: Signal
    pattern: str
    span: tuple[int, int]
    weight: float


_SIGNAL_ORDER = {kind: i for i, kind in enumerate(Signal)}


def detect_cues(utterance: str, lexicon: CueLexicon) -> list[CueHit]:
    """All lexicon matches in ``utterance``.

    Per signal kind the matches are reduced to a non-overlapping
    leftmost-longest selection (overlaps across kinds are allowed);
    the combined result is ordered by span start.
    """
    if not utterance:
        raise ValueError("detect_cues requires a non-empty utterance")
    hits: list[CueHit] = []
    for kind in Signal:
        raw: list[CueHit] = []
        for pattern, regex in lexicon.compiled(kind):
            for m in regex.finditer(utterance):
                raw.append(CueHit(kind, pattern.pattern, (m.start(), m.end()), pattern.weight))
        raw.sort(key=lambda h: (h.span[0], -(h.span[1] - h.span[0]), h.pattern))
        taken_until = -1
        for hit in raw:
            if hit.span[0] > taken_until:
                hits.append(hit)
                taken_until = hit.span[1] - 1
    hits.sort(key=lambda h: (h.span[0], h.span[1], _SIGNAL_ORDER[h.kind]))
    return hits


@dataclass
class DetectorConfig:
    mode: str = "rules"
    avoidance_threshold: int = 2
    confidence_floor: float = 0.3

    def __post_init__(self) -> None:
        if self.mode not in DETECTOR_MODES:
            raise ConfigError(f"unknown detector mode: {self.mode!r}")
        if self.avoidance_threshold < 1:
            raise ConfigError("avoidance_threshold must be >= 1")
        if not 0.0 <= self.confidence_floor <= 1.0:
            raise ConfigError("confidence_floor must be in [0, 1]")


@dataclass
class DetectionResult:
    candidates: set[TransitionSignal]
    avoidance_cue: bool = False
    degraded: bool = False


def _classify_llm(
    context: list[tuple[str, str]],
    stage: Stage,
    gateway,
    config: DetectorConfig,
) -> tuple[set[TransitionSignal], bool]:
    """Prompted classification; returns (candidates, degraded)."""
    fallback = {TransitionSignal(Signal.CONTINUE, confidence=config.confidence_floor)}
    if not context:
        return fallback, True
    taxonomy = ", ".join(s.value for s in Signal)
    system = (
        "You label the latest user message in an emotional-support conversation "
        f"with exactly one transition signal. Current stage: {stage.value}. "
        f"Signals: {taxonomy}. "
        "Reply with one line and nothing else, in the exact form: "
        "signal=<identifier> confidence=<number between 0 and 1>"
    )
    rendered = "\n".join(f"{role}: {text}" for role, text in context)
    messages = [
        {"role": "system", "content": system},
        {"role": "user", "content": rendered},
    ]
    try:
        reply = gateway.complete(messages)
    except Exception as exc:
        logger.warning("signal classifier backend failed, degrading to continue: %s", exc)
        return fallback, True
    m = _LLM_REPLY_RE.match(reply.strip())
    if not m:
        return fallback, True
    name, raw_conf = m.group(1), float(m.group(2))
    if raw_conf > 1.0:
        return fallback, True
    try:
        kind = Signal(name)
    except ValueError:
        return fallback, True
    if kind is Signal.CONTINUE:
        return {TransitionSignal(Signal.CONTINUE, confidence=raw_conf)}, False
    evidence = context[-1][1]
    return {TransitionSignal(kind, confidence=raw_conf, evidence=evidence)}, False


def classify_llm(
    context: list[tuple[str, str]],
    stage: Stage,
    gateway,
    config: DetectorConfig | None = None,
) -> set[TransitionSignal]:
    """Classify the latest user turn via the model backend.

    Never raises: backend failures and malformed replies degrade to a
    CONTINUE candidate at the configured confidence floor.
    """
    candidates, _ = _classify_llm(context, stage, gateway, config or DetectorConfig(mode="llm"))
    return candidates


class SignalDetector:
    """Stateless detector over a lexicon + config; the consecutive-avoidance
    counter lives on the session state it is handed."""

    def __init__(self, lexicon: CueLexicon, config: DetectorConfig | None = None, gateway=None):
        self.lexicon = lexicon
        self.config = config or DetectorConfig()
        self.gateway = gateway
        if self.config.mode in ("llm", "hybrid") and gateway is None:
            raise ConfigError(f"detector mode {self.config.mode!r} requires a gateway")

    def detect(self, state: SessionState, utterance: str, history_window: int = 6) -> DetectionResult:
        if state.stage is Stage.CLOSED:
            raise ValueError("detect() called on a closed session (caller bug)")
        merged: dict[Signal, TransitionSignal] = {}
        degraded = False

        if self.config.mode in ("rules", "hybrid"):
            self._merge(merged, self._rule_candidates(utterance))
        else:
            # Crisis cues never depend on the model path.
            self._merge(merged, self._rule_candidates(utterance, only=Signal.CRISIS_TRIGGER))

        if self.config.mode in ("llm", "hybrid"):
            context = state.history[-history_window:]
            llm_candidates, degraded = _classify_llm(context, state.stage, self.gateway, self.config)
            self._merge(merged, llm_candidates)

        avoidance = merged.pop(Signal.AVOIDANCE_DETECTED, None)
        if avoidance is not None:
            state.avoidance_counter += 1
            if state.avoidance_counter >= self.config.avoidance_threshold:
                merged[Signal.AVOIDANCE_DETECTED] = avoidance
        else:
            state.avoidance_counter = 0

        if Signal.CONTINUE not in merged:
            merged[Signal.CONTINUE] = TransitionSignal(
                Signal.CONTINUE, confidence=self.config.confidence_floor
            )
        return DetectionResult(
            candidates=set(merged.values()),
            avoidance_cue=avoidance is not None,
            degraded=degraded,
        )

    def _rule_candidates(self, utterance: str, only: Signal | None = None) -> list[TransitionSignal]:
        hits = detect_cues(utterance, self.lexicon)
        by_kind: dict[Signal, list[CueHit]] = {}
        for hit in hits:
            if only is not None and hit.kind is not only:
                continue
            by_kind.setdefault(hit.kind, []).append(hit)
        candidates = []
        for kind, group in by_kind.items():
            best = max(group, key=lambda h: (h.weight, -h.span[0]))
            candidates.append(
                TransitionSignal(
                    kind,
                    confidence=best.weight,
                    evidence=utterance[best.span[0] : best.span[1]],
                    span=best.span,
                )
            )
        return candidates

    @staticmethod
    def _merge(into: dict[Signal, TransitionSignal], new: list | set) -> None:
        for cand in new:
            existing = into.get(cand.kind)
            if existing is None or cand.confidence > existing.confidence:
                into[cand.kind] = cand
