// Typed client for the session service; the editor's only backend.

import { EditEvent } from "./replay.js";

export type SessionDoc = {
  schema_version: number;
  session_id: string;
  clip_id: string;
  started_at_ms: number;
  deadline_ms: number;
  score: string;
  preview: { type: string; ticks_per_beat: number; seconds_per_tick: number };
};

export type SubmitResult = {
  schema_version: number;
  session_id: string;
  state: string;
  metrics: { editing_time_seconds: number; key_presses: number; mouse_clicks: number };
};

export class SessionClient {
  constructor(private readonly baseUrl: string) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      const detail = await response.text();
      throw new Error(`${path} failed (${response.status}): ${detail}`);
    }
    return (await response.json()) as T;
  }

  createSession(editorId: string, clipId?: string): Promise<SessionDoc> {
    return this.post("/sessions", { editor_id: editorId, clip_id: clipId ?? null });
  }

  sendEvents(sessionId: string, batchId: string, events: EditEvent[]): Promise<unknown> {
    return this.post(`/sessions/${sessionId}/events`, { batch_id: batchId, events });
  }

  submit(
    sessionId: string,
    payload: { edited_score: string; eq1: number; eq2: number; eq3: number },
  ): Promise<SubmitResult> {
    return this.post(`/sessions/${sessionId}/submit`, payload);
  }
}
