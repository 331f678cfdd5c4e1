/**
 * Typed fetch client for the dialogue service.
 *
 * Every method maps one endpoint; non-2xx responses become ApiError
 * with the server's detail message, so callers can branch on status
 * (409 turn in flight, 410 closed, 502 backend down) without touching
 * response bodies themselves.
 */

import type {
  CreatedSession,
  ResourceWire,
  SessionStateWire,
  StageName,
  TurnResultWire,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function detailOf(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    if (body.detail !== undefined) return JSON.stringify(body.detail);
  } catch {
    // fall through to the generic message
  }
  return `request failed with status ${response.status}`;
}

export class ConsoleClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw new ApiError(response.status, await detailOf(response));
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async health(): Promise<boolean> {
    try {
      const response = await this.fetchFn(`${this.baseUrl}/healthz`);
      return response.ok;
    } catch {
      return false;
    }
  }

  createSession(options: { session_id?: string; resources?: ResourceWire[] } = {}): Promise<CreatedSession> {
    return this.post<CreatedSession>("/v1/sessions", options);
  }

  sendMessage(sessionId: string, text: string): Promise<TurnResultWire> {
    return this.post<TurnResultWire>(
      `/v1/sessions/${encodeURIComponent(sessionId)}/messages`,
      { text },
    );
  }

  getState(sessionId: string): Promise<SessionStateWire> {
    return this.request<SessionStateWire>(
      `/v1/sessions/${encodeURIComponent(sessionId)}/state`,
    );
  }

  async getTranscript(sessionId: string): Promise<string> {
    const response = await this.fetchFn(
      `${this.baseUrl}/v1/sessions/${encodeURIComponent(sessionId)}/transcript`,
    );
    if (!response.ok) {
      throw new ApiError(response.status, await detailOf(response));
    }
    return response.text();
  }

  overrideStage(sessionId: string, stage: StageName, operatorNote: string): Promise<SessionStateWire> {
    return this.post<SessionStateWire>(
      `/v1/sessions/${encodeURIComponent(sessionId)}/stage_override`,
      { stage, operator_note: operatorNote },
    );
  }
}
