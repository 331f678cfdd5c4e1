/**
 * Browser bootstrap: wires the pure view-state reducers and renderers to the
 * DOM.  This is the only module that touches `document`.
 */

import { ConsoleClient, ApiError } from "./client.js";
import {
  initialView,
  sessionCreated,
  turnRequested,
  turnCompleted,
  turnFailed,
  stateRefreshed,
  overrideApplied,
  toggleInspector,
  type ViewState,
} from "./viewState.js";
import { renderApp } from "./render.js";

function describeError(error: unknown): string {
  if (error instanceof ApiError) return `${error.status}: ${error.message}`;
  if (error instanceof Error) return error.message;
  return String(error);
}

export function startConsole(root: HTMLElement, baseUrl: string): void {
  const client = new ConsoleClient(baseUrl);
  let view: ViewState = initialView();

  const paint = (): void => {
    root.innerHTML = renderApp(view);
    bind();
  };

  const update = (next: ViewState): void => {
    view = next;
    paint();
  };

  async function handleSend(text: string): Promise<void> {
    if (view.sessionId === null || view.inFlight || view.closed) return;
    const sessionId = view.sessionId;
    update(turnRequested(view, text));
    try {
      const turn = await client.sendMessage(sessionId, text);
      update(turnCompleted(view, turn));
    } catch (error) {
      update(turnFailed(view, describeError(error)));
    }
  }

  async function handleOverride(stage: string, note: string): Promise<void> {
    if (view.sessionId === null) return;
    try {
      const state = await client.overrideStage(view.sessionId, stage, note);
      update(overrideApplied(view, state));
    } catch (error) {
      update(turnFailed(view, describeError(error)));
    }
  }

  function bind(): void {
    const composerForm = root.querySelector<HTMLFormElement>("form.composer");
    composerForm?.addEventListener("submit", (event) => {
      event.preventDefault();
      const input = composerForm.querySelector<HTMLInputElement>("input[name=text]");
      const text = input?.value.trim() ?? "";
      if (text.length > 0) void handleSend(text);
    });

    const overrideForm = root.querySelector<HTMLFormElement>("form.override");
    overrideForm?.addEventListener("submit", (event) => {
      event.preventDefault();
      const stage =
        overrideForm.querySelector<HTMLSelectElement>("select[name=stage]")?.value ?? "";
      const note =
        overrideForm.querySelector<HTMLInputElement>("input[name=operator_note]")?.value ?? "";
      if (stage.length > 0) void handleOverride(stage, note);
    });

    const inspector = root.querySelector<HTMLElement>("aside.inspector");
    inspector?.addEventListener("dblclick", () => update(toggleInspector(view)));
  }

  void (async () => {
    try {
      const created = await client.createSession({});
      update(sessionCreated(view, created));
      const state = await client.getState(created.session_id);
      update(stateRefreshed(view, state));
    } catch (error) {
      update(turnFailed(view, describeError(error)));
    }
  })();

  paint();
}
