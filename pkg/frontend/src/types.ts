/**
 * Wire types for the dialogue service HTTP API.
 *
 * These mirror the server's serialized forms field for field.  Stage
 * and signal values are deliberately typed as the server's strings:
 * the console never computes or normalizes a stage on its own.
 */

export type StageName = string;

export interface CreatedSession {
  session_id: string;
  stage: StageName;
}

export interface SignalWire {
  kind: string;
  confidence: number;
  evidence: string;
}

export interface PlanStepWire {
  index: number;
  description: string;
  schedule_hint: string;
  required_tags: string[];
  required_minutes_per_day: number;
  status: string;
  status_turn: number | null;
}

export interface PlanWire {
  steps: PlanStepWire[];
  proposed_turn: number;
}

export interface TurnResultWire {
  session_id: string;
  turn_index: number;
  stage_before: StageName;
  stage_after: StageName;
  signal: SignalWire;
  reply: string;
  reasoning_chain: string;
  plan: PlanWire | null;
  crisis: boolean;
  closed: boolean;
  parse_degraded: boolean;
  fallback_used: boolean;
  suggestions: number;
  suppressed: number;
}

export interface StressorWire {
  label: string;
  first_mentioned_turn: number;
  surfaced: boolean;
}

export interface ResourceWire {
  tag: string;
  capacity_minutes_per_day: number | null;
}

export interface TransitionWire {
  from: StageName;
  signal: string;
  to: StageName;
  turn_index: number;
}

export interface SessionStateWire {
  session_id: string;
  stage: StageName;
  turn_index: number;
  emotional_keywords: string[];
  semantic_foci: string[];
  stressors: StressorWire[];
  resources: ResourceWire[];
  plans: PlanWire[];
  avoidance_counter: number;
  transitions: TransitionWire[];
  crisis_flag: boolean;
  history: [string, string][];
}
