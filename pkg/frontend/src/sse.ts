// Minimal server-sent-events reader on top of fetch streaming. Works in
// browsers and node alike, and resumes from the last seen sequence number on
// reconnect, which the EventSource API cannot promise across page contexts.

export interface SseFrame {
  event: string | null;
  id: string | null;
  data: string;
}

export function parseFrames(buffer: string): { frames: SseFrame[]; rest: string } {
  const frames: SseFrame[] = [];
  const blocks = buffer.split("\n\n");
  const rest = blocks.pop() ?? "";
  for (const block of blocks) {
    let event: string | null = null;
    let id: string | null = null;
    const data: string[] = [];
    for (const line of block.split("\n")) {
      if (line.startsWith("data: ")) data.push(line.slice(6));
      else if (line.startsWith("event: ")) event = line.slice(7);
      else if (line.startsWith("id: ")) id = line.slice(4);
      // lines starting with ":" are keepalive comments
    }
    if (data.length > 0 || event !== null) {
      frames.push({ event, id, data: data.join("\n") });
    }
  }
  return { frames, rest };
}

export interface StreamHandle {
  close(): void;
  done: Promise<void>;
}

export interface StreamOptions {
  url: (fromSeq: number) => string;
  fromSeq: number;
  onFrame: (frame: SseFrame) => void;
  /** called with the next from_seq before each reconnect attempt */
  reconnectDelayMs?: number;
  maxReconnects?: number;
}

export function openStream(options: StreamOptions): StreamHandle {
  const controller = new AbortController();
  let lastSeq = options.fromSeq - 1;
  let closed = false;
  const maxReconnects = options.maxReconnects ?? Infinity;

  const done = (async () => {
    let attempts = 0;
    while (!closed) {
      try {
        const response = await fetch(options.url(lastSeq + 1), {
          headers: { Accept: "text/event-stream" },
          signal: controller.signal,
        });
        if (!response.ok || !response.body) {
          throw new Error(`stream request failed: ${response.status}`);
        }
        attempts = 0;
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        let buffer = "";
        for (;;) {
          const { value, done: eof } = await reader.read();
          if (eof) break;
          buffer += decoder.decode(value, { stream: true });
          const { frames, rest } = parseFrames(buffer);
          buffer = rest;
          for (const frame of frames) {
            if (frame.id !== null) {
              const seq = Number(frame.id);
              if (Number.isFinite(seq)) lastSeq = Math.max(lastSeq, seq);
            }
            options.onFrame(frame);
            if (frame.event === "end") {
              closed = true;
            }
          }
          if (closed) {
            controller.abort();
            return;
          }
        }
      } catch (err) {
        if (closed || controller.signal.aborted) return;
        attempts += 1;
        if (attempts > maxReconnects) throw err;
      }
      if (!closed) {
        await new Promise((r) => setTimeout(r, options.reconnectDelayMs ?? 1000));
      }
    }
  })();

  return {
    close() {
      closed = true;
      controller.abort();
    },
    done: done.catch(() => undefined),
  };
}
