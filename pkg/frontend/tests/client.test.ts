import { describe, expect, it } from "vitest";

import { SessionClient } from "../src/client.js";
import { SessionEvent } from "../src/protocol.js";

type Call = { url: string; body?: unknown };

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

const CREATED = {
  v: 1,
  id: "abc123",
  writer_token: "tok",
  state: {
    v: 1, type: "state", phase: "idle", clock: 0, rate: 0, cadence: 10,
    theory: "ct", mode: "always-split", scenario: "ce", duration: 8000,
    run_index: null, elements: [], packets: [], density: null, scoreboard: [],
  },
};

function scriptedFetch(
  calls: Call[],
  respond: (url: string, body: unknown) => Response,
) {
  return async (url: string, init?: RequestInit): Promise<Response> => {
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    calls.push({ url, body });
    return respond(url, body);
  };
}

describe("session client", () => {
  it("creates a session and keeps the writer token out of sight", async () => {
    const calls: Call[] = [];
    const { client, state } = await SessionClient.create(
      "http://svc/",
      { scenario: "ce", seed: 5, rate: 0 },
      scriptedFetch(calls, () => jsonResponse(CREATED)),
    );
    expect(client.id).toBe("abc123");
    expect(state.scenario).toBe("ce");
    expect(calls[0]!.url).toBe("http://svc/session");
    expect(calls[0]!.body).toEqual({ scenario: "ce", seed: 5, rate: 0 });
  });

  it("sends commands with the token and an idempotency id", async () => {
    const calls: Call[] = [];
    const fetchImpl = scriptedFetch(calls, (url) =>
      url.endsWith("/session")
        ? jsonResponse(CREATED)
        : jsonResponse({ v: 1, ok: true, run_index: 0 }),
    );
    const { client } = await SessionClient.create("http://svc", {}, fetchImpl);
    const resp = await client.command({ type: "start_run" });
    expect(resp.ok).toBe(true);
    const sent = calls[1]!.body as Record<string, unknown>;
    expect(calls[1]!.url).toBe("http://svc/session/abc123/cmd");
    expect(sent.token).toBe("tok");
    expect(sent.type).toBe("start_run");
    expect(typeof sent.cmd_id).toBe("string");
  });

  it("refuses to send schema-invalid commands", async () => {
    const calls: Call[] = [];
    const { client } = await SessionClient.create(
      "http://svc",
      {},
      scriptedFetch(calls, () => jsonResponse(CREATED)),
    );
    await expect(
      client.command({ type: "set_rate", rate: -1 } as never),
    ).rejects.toThrow(/invalid command/);
    expect(calls).toHaveLength(1); // only the create call went out
  });

  it("retries once on network failure with the same command id", async () => {
    const calls: Call[] = [];
    let first = true;
    const fetchImpl = async (url: string, init?: RequestInit) => {
      const body = init?.body ? JSON.parse(init.body as string) : undefined;
      calls.push({ url, body });
      if (url.endsWith("/session")) return jsonResponse(CREATED);
      if (first) {
        first = false;
        throw new TypeError("network down");
      }
      return jsonResponse({ v: 1, ok: true });
    };
    const { client } = await SessionClient.create("http://svc", {}, fetchImpl);
    const resp = await client.command({ type: "pause" });
    expect(resp.ok).toBe(true);
    const a = calls[1]!.body as Record<string, unknown>;
    const b = calls[2]!.body as Record<string, unknown>;
    expect(a.cmd_id).toBe(b.cmd_id);
  });

  it("surfaces rejections as ok: false, not exceptions", async () => {
    const fetchImpl = scriptedFetch([], (url) =>
      url.endsWith("/session")
        ? jsonResponse(CREATED)
        : jsonResponse({ v: 1, ok: false, error: "choice window: a branch is at B2" }),
    );
    const { client } = await SessionClient.create("http://svc", {}, fetchImpl);
    const resp = await client.command({ type: "insert", element: "B2" });
    expect(resp.ok).toBe(false);
    if (!resp.ok) expect(resp.error).toMatch(/choice window/);
  });

  it("raises HTTP errors with the detail string", async () => {
    const fetchImpl = scriptedFetch([], (url) =>
      url.endsWith("/session")
        ? jsonResponse(CREATED)
        : jsonResponse({ detail: "writer token required" }, 403),
    );
    const { client } = await SessionClient.create("http://svc", {}, fetchImpl);
    await expect(client.command({ type: "pause" })).rejects.toThrow(
      /HTTP 403: writer token required/,
    );
  });

  it("parses the event stream, skipping keepalives and malformed frames", async () => {
    const stream = [
      `data: ${JSON.stringify(CREATED.state)}\n\n`,
      ": keepalive\n\n",
      "data: {broken json\n\n",
      `data: ${JSON.stringify({ v: 1, type: "run_started", run_index: 0 })}\n\n`,
      `data: ${JSON.stringify({
        v: 1, type: "detection", run_index: 0,
        source: "S1", detector: "D1", time: 8000, ensemble: 1,
      })}\n\n`,
    ].join("");
    const fetchImpl = async (url: string): Promise<Response> => {
      if (url.endsWith("/session")) return jsonResponse(CREATED);
      expect(url).toContain("/events?limit=5");
      return new Response(stream, {
        headers: { "content-type": "text/event-stream" },
      });
    };
    const { client } = await SessionClient.create("http://svc", {}, fetchImpl);
    const seen: SessionEvent[] = [];
    const bad: string[] = [];
    await client.events((e) => seen.push(e), {
      limit: 5,
      onMalformed: (line) => bad.push(line),
    });
    expect(seen.map((e) => e.type)).toEqual(["state", "run_started", "detection"]);
    expect(bad).toEqual(["{broken json"]);
  });
});
