"""Stage-aware emotional support dialogue engine."""

from .stages import (
    Signal,
    Stage,
    TransitionRecord,
    TransitionSignal,
    applicable,
    next_stage,
    resolve,
)
from .state import (
    ActionPlan,
    PlanStep,
    Resource,
    SessionConfig,
    SessionEvent,
    SessionState,
    Stressor,
    apply_event,
    check_feasibility,
    create_session,
    replay,
)
from .detector import CueLexicon, DetectorConfig, SignalDetector, classify_llm, detect_cues
from .prompts import (
    PromptConfig,
    PromptTemplates,
    build_prompt,
    extract_plan,
    gate_reply,
    parse_response,
)
from .gateway import BackendConfig, RemoteBackend, ScriptedBackend, make_backend
from .pipeline import DialogueEngine, TurnResult
from .metrics import DialogueMetrics, MetricsReport, PersonaFacts, compute_session_metrics
from .harness import Persona, load_personas, run_ablation, run_dialogue, run_eval
from .store import EventStore, read_events
from .config import AppConfig, build_engine, load_config
from .errors import (
    BackendUnavailableError,
    ConfigError,
    EventOrderingError,
    InvalidEventError,
    ScriptExhaustedError,
    SessionClosedError,
    SessionNotFoundError,
    StageflowError,
    TurnInFlightError,
)

__version__ = "0.1.0"

__all__ = [
    "ActionPlan",
    "AppConfig",
    "BackendConfig",
    "BackendUnavailableError",
    "ConfigError",
    "CueLexicon",
    "DetectorConfig",
    "DialogueEngine",
    "DialogueMetrics",
    "EventOrderingError",
    "EventStore",
    "InvalidEventError",
    "MetricsReport",
    "Persona",
    "PersonaFacts",
    "PlanStep",
    "PromptConfig",
    "PromptTemplates",
    "RemoteBackend",
    "Resource",
    "ScriptExhaustedError",
    "ScriptedBackend",
    "SessionClosedError",
    "SessionConfig",
    "SessionEvent",
    "SessionNotFoundError",
    "SessionState",
    "Signal",
    "SignalDetector",
    "Stage",
    "StageflowError",
    "Stressor",
    "TransitionRecord",
    "TransitionSignal",
    "TurnInFlightError",
    "TurnResult",
    "applicable",
    "apply_event",
    "build_engine",
    "build_prompt",
    "check_feasibility",
    "classify_llm",
    "compute_session_metrics",
    "create_session",
    "detect_cues",
    "extract_plan",
    "gate_reply",
    "load_config",
    "load_personas",
    "make_backend",
    "next_stage",
    "parse_response",
    "read_events",
    "replay",
    "resolve",
    "run_ablation",
    "run_dialogue",
    "run_eval",
    "__version__",
]
