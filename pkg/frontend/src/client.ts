// Thin typed wrapper over the session service endpoints.

import { openStream, StreamHandle } from "./sse.js";
import type { Ack, CommandKind, EventRecord, Snapshot } from "./types.js";

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  async createSession(config?: Record<string, unknown>): Promise<string> {
    const response = await fetch(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(config ? { config } : {}),
    });
    if (!response.ok) throw new Error(`create session failed: ${response.status}`);
    const body = (await response.json()) as { session_id: string };
    return body.session_id;
  }

  async submitCommand(
    sessionId: string,
    kind: CommandKind,
    payload?: Record<string, unknown>,
  ): Promise<Ack> {
    const response = await fetch(`${this.baseUrl}/sessions/${sessionId}/commands`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ kind, payload: payload ?? {} }),
    });
    if (!response.ok) throw new Error(`submit failed: ${response.status}`);
    return (await response.json()) as Ack;
  }

  async getSnapshot(sessionId: string): Promise<Snapshot> {
    const response = await fetch(`${this.baseUrl}/sessions/${sessionId}/snapshot`);
    if (!response.ok) throw new Error(`snapshot failed: ${response.status}`);
    return (await response.json()) as Snapshot;
  }

  exportUrl(sessionId: string): string {
    return `${this.baseUrl}/sessions/${sessionId}/export`;
  }

  streamEvents(
    sessionId: string,
    fromSeq: number,
    onEvent: (event: EventRecord) => void,
    onEnd?: () => void,
  ): StreamHandle {
    return openStream({
      url: (seq) => `${this.baseUrl}/sessions/${sessionId}/events?from_seq=${seq}`,
      fromSeq,
      onFrame: (frame) => {
        if (frame.event === "end") {
          onEnd?.();
          return;
        }
        if (frame.data) {
          onEvent(JSON.parse(frame.data) as EventRecord);
        }
      },
    });
  }
}
