/**
 * Pure view-state reducers for the console.
 *
 * Invariant: `stage` (and every per-message stage annotation) is only
 * ever copied from a server payload — `CreatedSession.stage`,
 * `TurnResultWire.stage_before/.stage_after`, or
 * `SessionStateWire.stage`.  No reducer computes, infers, or rewrites a
 * stage value, so the view can never disagree with the service about
 * where the session is.
 *
 * Reducers return fresh objects; the previous state is never mutated.
 */

import type {
  CreatedSession,
  PlanWire,
  SessionStateWire,
  SignalWire,
  StageName,
  TurnResultWire,
} from "./types.js";

export interface ChatMessage {
  role: "user" | "agent";
  text: string;
  stage: StageName;
  turnIndex: number;
}

export interface SignalEntry extends SignalWire {
  turnIndex: number;
}

export interface TimelineEntry {
  turnIndex: number;
  stage: StageName;
  operator: boolean;
}

export interface ViewState {
  sessionId: string | null;
  stage: StageName | null;
  messages: ChatMessage[];
  signals: SignalEntry[];
  timeline: TimelineEntry[];
  /** Latest private reasoning chain; rendered only by the inspector. */
  reasoning: string | null;
  inspectorOpen: boolean;
  plan: PlanWire | null;
  inFlight: boolean;
  pendingText: string | null;
  crisis: boolean;
  closed: boolean;
  degraded: boolean;
  error: string | null;
}

export function initialView(): ViewState {
  return {
    sessionId: null,
    stage: null,
    messages: [],
    signals: [],
    timeline: [],
    reasoning: null,
    inspectorOpen: false,
    plan: null,
    inFlight: false,
    pendingText: null,
    crisis: false,
    closed: false,
    degraded: false,
    error: null,
  };
}

export function sessionCreated(view: ViewState, created: CreatedSession): ViewState {
  return {
    ...initialView(),
    inspectorOpen: view.inspectorOpen,
    sessionId: created.session_id,
    stage: created.stage,
    timeline: [{ turnIndex: 0, stage: created.stage, operator: false }],
  };
}

/** A turn HTTP request left the building; input stays disabled until it lands. */
export function turnRequested(view: ViewState, text: string): ViewState {
  if (view.inFlight || view.closed) return view;
  return { ...view, inFlight: true, pendingText: text, error: null };
}

export function turnCompleted(view: ViewState, turn: TurnResultWire): ViewState {
  const userText = view.pendingText ?? "";
  const messages: ChatMessage[] = [
    ...view.messages,
    { role: "user", text: userText, stage: turn.stage_before, turnIndex: turn.turn_index },
    { role: "agent", text: turn.reply, stage: turn.stage_after, turnIndex: turn.turn_index },
  ];
  return {
    ...view,
    messages,
    signals: [...view.signals, { ...turn.signal, turnIndex: turn.turn_index }],
    timeline: [
      ...view.timeline,
      { turnIndex: turn.turn_index, stage: turn.stage_after, operator: false },
    ],
    stage: turn.stage_after,
    reasoning: turn.reasoning_chain.length > 0 ? turn.reasoning_chain : null,
    plan: turn.plan ?? view.plan,
    inFlight: false,
    pendingText: null,
    crisis: turn.crisis,
    closed: turn.closed,
    degraded: turn.parse_degraded || turn.fallback_used,
    error: null,
  };
}

/** Failed turn: surface a toast, leave the transcript untouched. */
export function turnFailed(view: ViewState, message: string): ViewState {
  return { ...view, inFlight: false, pendingText: null, error: message };
}

/** Fold in a fresh GET /state: the server's stage always wins. */
export function stateRefreshed(view: ViewState, state: SessionStateWire): ViewState {
  return {
    ...view,
    sessionId: state.session_id,
    stage: state.stage,
    plan: state.plans.length > 0 ? state.plans[state.plans.length - 1]! : view.plan,
    crisis: state.crisis_flag,
    closed: state.stage === "closed",
  };
}

/** A stage override answered with the updated state; mark the timeline. */
export function overrideApplied(view: ViewState, state: SessionStateWire): ViewState {
  const refreshed = stateRefreshed(view, state);
  return {
    ...refreshed,
    timeline: [
      ...refreshed.timeline,
      { turnIndex: state.turn_index, stage: state.stage, operator: true },
    ],
  };
}

export function toggleInspector(view: ViewState): ViewState {
  return { ...view, inspectorOpen: !view.inspectorOpen };
}

export function clearError(view: ViewState): ViewState {
  return { ...view, error: null };
}
