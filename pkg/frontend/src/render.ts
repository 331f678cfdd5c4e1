/**
 * Pure rendering: ViewState in, HTML strings out.
 *
 * Only `inspectorPanel` reads `view.reasoning`; chat bubbles render the
 * reply text alone, so private reasoning can never appear in the
 * conversation pane.  All interpolated text is HTML-escaped.
 */

import type { ViewState } from "./viewState.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/** Cosmetic title-casing of the server-reported stage string. */
export function stageLabel(stage: string): string {
  if (stage.length === 0) return stage;
  return stage.charAt(0).toUpperCase() + stage.slice(1);
}

export function stageBadge(view: ViewState): string {
  if (view.stage === null) return `<span class="badge badge-empty">No session</span>`;
  const safe = escapeHtml(view.stage);
  return `<span class="badge stage-${safe}" data-stage="${safe}">${escapeHtml(stageLabel(view.stage))}</span>`;
}

export function chatPane(view: ViewState): string {
  const bubbles = view.messages.map((message) => {
    const role = message.role === "user" ? "user" : "agent";
    return (
      `<div class="bubble bubble-${role}" data-turn="${message.turnIndex}" ` +
      `data-stage="${escapeHtml(message.stage)}">${escapeHtml(message.text)}</div>`
    );
  });
  return `<section class="chat">${bubbles.join("")}</section>`;
}

export function timelineStrip(view: ViewState): string {
  const stops = view.timeline.map((entry) => {
    const marker = entry.operator ? ` timeline-operator` : "";
    return (
      `<span class="timeline-stop${marker}" data-turn="${entry.turnIndex}">` +
      `${escapeHtml(stageLabel(entry.stage))}${entry.operator ? " (operator)" : ""}</span>`
    );
  });
  return `<nav class="timeline">${stops.join(" → ")}</nav>`;
}

export function signalLog(view: ViewState): string {
  const rows = view.signals.map(
    (signal) =>
      `<li data-turn="${signal.turnIndex}"><code>${escapeHtml(signal.kind)}</code> ` +
      `(${signal.confidence.toFixed(2)})` +
      (signal.evidence ? ` — “${escapeHtml(signal.evidence)}”` : "") +
      `</li>`,
  );
  return `<ul class="signal-log">${rows.join("")}</ul>`;
}

export function inspectorPanel(view: ViewState): string {
  if (!view.inspectorOpen) return `<aside class="inspector inspector-closed"></aside>`;
  const body =
    view.reasoning === null
      ? `<p class="inspector-empty">No reasoning chain for the last turn.</p>`
      : `<pre class="reasoning">${escapeHtml(view.reasoning)}</pre>`;
  return `<aside class="inspector inspector-open"><h2>Reasoning</h2>${body}</aside>`;
}

export function planCard(view: ViewState): string {
  if (view.plan === null) return `<section class="plan plan-empty"></section>`;
  const steps = view.plan.steps.map(
    (step) =>
      `<li class="plan-step status-${escapeHtml(step.status)}">` +
      `<strong>Step ${step.index}</strong> ${escapeHtml(step.description)}` +
      (step.schedule_hint ? ` <em>(${escapeHtml(step.schedule_hint)})</em>` : "") +
      ` — ${escapeHtml(step.status)}</li>`,
  );
  return `<section class="plan"><h2>Plan</h2><ol>${steps.join("")}</ol></section>`;
}

export function crisisBanner(view: ViewState): string {
  if (!view.crisis) return "";
  return (
    `<div class="crisis-banner" role="alert">` +
    `Crisis support active — the session is showing referral guidance.</div>`
  );
}

export function errorToast(view: ViewState): string {
  if (view.error === null) return "";
  return `<div class="toast toast-error" role="status">${escapeHtml(view.error)}</div>`;
}

export function overrideControl(view: ViewState): string {
  const disabled = view.sessionId === null || view.inFlight || view.closed ? " disabled" : "";
  const options = ["exploration", "insight", "action", "crisis", "closed"]
    .map((stage) => `<option value="${stage}">${stageLabel(stage)}</option>`)
    .join("");
  return (
    `<form class="override">` +
    `<select name="stage"${disabled}>${options}</select>` +
    `<input name="operator_note" placeholder="Operator note (required)"${disabled} />` +
    `<button type="submit"${disabled}>Override stage</button>` +
    `</form>`
  );
}

export function composer(view: ViewState): string {
  const disabled = view.sessionId === null || view.inFlight || view.closed ? " disabled" : "";
  return (
    `<form class="composer">` +
    `<input name="text" placeholder="Write to the session…"${disabled} />` +
    `<button type="submit"${disabled}>Send</button>` +
    `</form>`
  );
}

export function renderApp(view: ViewState): string {
  return [
    `<header class="topbar">${stageBadge(view)}${crisisBanner(view)}${errorToast(view)}</header>`,
    timelineStrip(view),
    chatPane(view),
    composer(view),
    planCard(view),
    signalLog(view),
    inspectorPanel(view),
    overrideControl(view),
  ].join("\n");
}
