/**
 * Thin protocol client: one request/response channel for commands and one
 * SSE reader for events. The fetch implementation is injectable so tests
 * can run against a scripted transport and the e2e against a real server.
 */

import {
  Command,
  CommandResponse,
  CreateResponse,
  LogResponse,
  SessionConfig,
  SessionEvent,
  StateEvent,
  commandProblem,
  isSessionEvent,
} from "./protocol.js";

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

async function postJson(
  fetchImpl: FetchLike,
  url: string,
  body: unknown,
): Promise<unknown> {
  const resp = await fetchImpl(url, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!resp.ok) {
    let detail = "";
    try {
      const parsed = (await resp.json()) as { detail?: string };
      detail = parsed.detail ?? "";
    } catch {
      /* non-json error body */
    }
    throw new Error(`HTTP ${resp.status}${detail ? `: ${detail}` : ""}`);
  }
  return resp.json();
}

let cmdCounter = 0;

/** Client-generated idempotency id attached to every command. */
export function nextCommandId(): string {
  cmdCounter += 1;
  return `c${Date.now().toString(36)}-${cmdCounter}`;
}

export class SessionClient {
  readonly baseUrl: string;
  readonly id: string;
  private readonly token: string;
  private readonly fetchImpl: FetchLike;

  private constructor(
    baseUrl: string,
    id: string,
    token: string,
    fetchImpl: FetchLike,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.id = id;
    this.token = token;
    this.fetchImpl = fetchImpl;
  }

  static async create(
    baseUrl: string,
    config: SessionConfig,
    fetchImpl: FetchLike = fetch,
  ): Promise<{ client: SessionClient; state: StateEvent }> {
    const body = (await postJson(
      fetchImpl,
      `${baseUrl.replace(/\/+$/, "")}/session`,
      config,
    )) as CreateResponse;
    const client = new SessionClient(
      baseUrl,
      body.id,
      body.writer_token,
      fetchImpl,
    );
    return { client, state: body.state };
  }

  /**
   * Sends one command. Invalid commands are refused locally, never sent.
   * A network failure is retried once with the same idempotency id; the
   * operator commands are safe to repeat (a duplicated toggle is a no-op,
   * a duplicated lifecycle command is rejected by the service).
   */
  async command(cmd: Command): Promise<CommandResponse> {
    const problem = commandProblem(cmd);
    if (problem !== null) {
      throw new Error(`refusing to send invalid command: ${problem}`);
    }
    const payload = { token: this.token, cmd_id: nextCommandId(), ...cmd };
    const url = `${this.baseUrl}/session/${this.id}/cmd`;
    try {
      return (await postJson(this.fetchImpl, url, payload)) as CommandResponse;
    } catch (err) {
      if (err instanceof Error && /^HTTP \d/.test(err.message)) throw err;
      return (await postJson(this.fetchImpl, url, payload)) as CommandResponse;
    }
  }

  async state(): Promise<StateEvent> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/session/${this.id}/state`,
    );
    if (!resp.ok) throw new Error(`HTTP ${resp.status}`);
    return (await resp.json()) as StateEvent;
  }

  async log(): Promise<LogResponse> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/session/${this.id}/log`,
    );
    if (!resp.ok) throw new Error(`HTTP ${resp.status}`);
    return (await resp.json()) as LogResponse;
  }

  /**
   * Reads the SSE stream and hands every well-formed event to `onEvent`.
   * Resolves when the stream ends (server close or `limit` reached);
   * malformed frames are reported, not fatal, and the stream continues.
   */
  async events(
    onEvent: (e: SessionEvent) => void,
    options: {
      limit?: number;
      signal?: AbortSignal;
      onMalformed?: (line: string) => void;
    } = {},
  ): Promise<void> {
    const qs = options.limit !== undefined ? `?limit=${options.limit}` : "";
    const resp = await this.fetchImpl(
      `${this.baseUrl}/session/${this.id}/events${qs}`,
      { signal: options.signal } as RequestInit,
    );
    if (!resp.ok || resp.body === null) {
      throw new Error(`HTTP ${resp.status}`);
    }
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let idx: number;
      while ((idx = buffer.indexOf("\n\n")) >= 0) {
        const frame = buffer.slice(0, idx);
        buffer = buffer.slice(idx + 2);
        dispatchFrame(frame, onEvent, options.onMalformed);
      }
    }
  }
}

function dispatchFrame(
  frame: string,
  onEvent: (e: SessionEvent) => void,
  onMalformed?: (line: string) => void,
): void {
  for (const line of frame.split("\n")) {
    if (!line.startsWith("data: ")) continue; // comments are keepalives
    const raw = line.slice("data: ".length);
    let parsed: unknown;
    try {
      parsed = JSON.parse(raw);
    } catch {
      onMalformed?.(raw);
      continue;
    }
    if (isSessionEvent(parsed)) {
      onEvent(parsed);
    } else {
      onMalformed?.(raw);
    }
  }
}
