// Thin client over the session service. All state mutation flows through
// these documented endpoints; the stream parser works on fetch bodies so
// the same code runs in browsers and in node-based tests.

import type { SessionView, SketchView, UiEvent, LsChip } from "./model.js";

export interface EditResponse {
  accepted: boolean;
  command?: Record<string, unknown>;
  ls_tree?: { tokens: LsChip[] };
  error?: string;
  new_revision?: number;
}

export class ApiStatusError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let code = "error";
    let message = response.statusText;
    try {
      const body = (await response.json()) as { code?: string; message?: string };
      code = body.code ?? code;
      message = body.message ?? message;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiStatusError(response.status, code, message);
  }
  return (await response.json()) as T;
}

export async function createSession(base: string, body: Record<string, unknown>): Promise<SessionView> {
  return asJson(await fetch(`${base}/sessions`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  }));
}

export async function getSession(base: string, id: string): Promise<SessionView> {
  return asJson(await fetch(`${base}/sessions/${id}`));
}

export async function getSketch(base: string, id: string, module: string): Promise<SketchView> {
  return asJson(await fetch(`${base}/sessions/${id}/sketch/${module}`));
}

export async function postEdit(base: string, id: string, sentence: string): Promise<EditResponse> {
  return asJson(await fetch(`${base}/sessions/${id}/edits`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ sentence }),
  }));
}

export async function approveSession(base: string, id: string): Promise<void> {
  await asJson(await fetch(`${base}/sessions/${id}/approve`, { method: "POST" }));
}

export interface LibraryEntryView {
  id: string;
  module_name: string;
  weight: number;
  gc_marked: boolean;
}

export async function getLibrary(base: string): Promise<{ entries: LibraryEntryView[] }> {
  return asJson(await fetch(`${base}/library`));
}

// Incremental server-sent-event parsing: feed raw text chunks, get events.
export function parseSseChunk(buffer: string): { events: UiEvent[]; rest: string } {
  const events: UiEvent[] = [];
  let rest = buffer;
  for (;;) {
    const sep = rest.indexOf("\n\n");
    if (sep < 0) break;
    const block = rest.slice(0, sep);
    rest = rest.slice(sep + 2);
    for (const line of block.split("\n")) {
      if (line.startsWith("data: ")) {
        try {
          events.push(JSON.parse(line.slice("data: ".length)) as UiEvent);
        } catch {
          console.warn("unparseable event payload dropped", line);
        }
      }
    }
  }
  return { events, rest };
}

export interface StreamHandle {
  close(): void;
  done: Promise<void>;
}

// Subscribes to the event stream. On a dropped connection the onResync
// callback runs (callers do a full GET) before the stream reconnects.
export function streamEvents(
  base: string,
  id: string,
  onEvent: (event: UiEvent) => void,
  onResync: () => Promise<boolean>,
  reconnectDelayMs = 500,
): StreamHandle {
  let closed = false;
  let abort = new AbortController();

  const done = (async () => {
    while (!closed) {
      try {
        const response = await fetch(`${base}/sessions/${id}/events`, { signal: abort.signal });
        if (!response.ok || response.body === null) throw new Error(`stream HTTP ${response.status}`);
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        let buffer = "";
        for (;;) {
          const { done: finished, value } = await reader.read();
          if (finished) return; // server closed at terminal status
          buffer += decoder.decode(value, { stream: true });
          const parsed = parseSseChunk(buffer);
          buffer = parsed.rest;
          for (const event of parsed.events) onEvent(event);
        }
      } catch (error) {
        if (closed) return;
        console.warn("event stream dropped; resyncing", error);
        const keepGoing = await onResync();
        if (!keepGoing) return;
        await new Promise((resolve) => setTimeout(resolve, reconnectDelayMs));
        abort = new AbortController();
      }
    }
  })();

  return {
    close() {
      closed = true;
      abort.abort();
    },
    done,
  };
}
