"""HTTP/SSE transport for live sessions.

Protocol (version 1; the ``v`` field appears in every message):

* ``POST /session`` with ``{"scenario": <builtin name or inline scenario
  object>, "theory", "mode", "seed", "cadence"?, "rate"?}`` creates a
  session and returns ``{"v", "id", "writer_token", "state"}``.  The token
  is required for commands; event streams are open to any reader.
* ``POST /session/{id}/cmd`` with ``{"token", "type", ...}`` applies one
  command (see ``mzsim.service.COMMAND_TYPES``) and returns its result.
* ``GET /session/{id}/events`` is a server-sent-event stream: one
  ``data: <json>`` line per event, starting with a state snapshot.
* ``GET /session/{id}/state`` returns a one-off snapshot, and
  ``GET /session/{id}/log`` the replayable command log.

Wall-clock pacing: while a session is running, a background ticker advances
the simulated clock by ``rate`` units per second and broadcasts state.
Sessions created with ``rate = 0`` move only through explicit ``step``
commands, which makes scripted drivers fully deterministic.
"""

from __future__ import annotations

import asyncio
import json
import secrets
import time
import uuid
from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import StreamingResponse

from .elements import SplitterMode
from .packets import ConfigurationError
from .scenarios import resolve_scenario, scenario_from_json
from .service import PROTOCOL_VERSION, Session

TICK_SECONDS = 0.1


class _LiveSession:
    def __init__(self, core: Session, token: str):
        self.core = core
        self.token = token
        self.subscribers: list[asyncio.Queue] = []
        self.lock = asyncio.Lock()
        self.ticker: asyncio.Task | None = None


def _sse(event: dict) -> str:
    return f"data: {json.dumps(event, sort_keys=True)}\n\n"


def create_app() -> FastAPI:
    sessions: dict[str, _LiveSession] = {}

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        for live in sessions.values():
            if live.ticker is not None:
                live.ticker.cancel()

    app = FastAPI(title="mzsim live sessions", lifespan=lifespan)
    app.state.sessions = sessions

    def _get(sid: str) -> _LiveSession:
        live = sessions.get(sid)
        if live is None:
            raise HTTPException(status_code=404, detail="no such session")
        return live

    def _broadcast(live: _LiveSession) -> None:
        for event in live.core.heartbeat():
            for q in list(live.subscribers):
                q.put_nowait(event)

    async def _tick(live: _LiveSession) -> None:
        last = time.monotonic()
        while True:
            await asyncio.sleep(TICK_SECONDS)
            now = time.monotonic()
            dt = now - last
            last = now
            async with live.lock:
                if live.core.phase == "running" and live.core.rate > 0.0:
                    live.core.advance_to(live.core.clock + dt * live.core.rate)
                    _broadcast(live)

    def _ensure_ticker(live: _LiveSession) -> None:
        # rate-0 sessions are driven by explicit step commands, so they
        # never need a wall-clock task (and scripted runs stay quiet).
        if live.core.rate > 0.0 and live.ticker is None:
            live.ticker = asyncio.create_task(_tick(live))

    @app.post("/session")
    async def create_session(request: Request):
        body = await request.json()
        spec = body.get("scenario", "be")
        try:
            if isinstance(spec, dict):
                scenario = scenario_from_json(spec)
            else:
                scenario = resolve_scenario(str(spec))
            core = Session(
                scenario,
                theory=body.get("theory", "ct"),
                mode=SplitterMode(body.get("mode", "always-split")),
                seed=int(body.get("seed", 0)),
                cadence=float(body.get("cadence", 10.0)),
                rate=float(body.get("rate", 400.0)),
            )
        except (ConfigurationError, ValueError, KeyError) as e:
            raise HTTPException(status_code=422, detail=str(e))
        sid = uuid.uuid4().hex[:12]
        live = _LiveSession(core, secrets.token_urlsafe(16))
        sessions[sid] = live
        _ensure_ticker(live)
        return {
            "v": PROTOCOL_VERSION,
            "id": sid,
            "writer_token": live.token,
            "state": core.state_event(),
        }

    @app.post("/session/{sid}/cmd")
    async def command(sid: str, request: Request):
        live = _get(sid)
        body = await request.json()
        if body.get("token") != live.token:
            raise HTTPException(status_code=403, detail="writer token required")
        cmd = {k: v for k, v in body.items() if k != "token"}
        async with live.lock:
            result = live.core.apply_command(cmd)
            _broadcast(live)
        if cmd.get("type") == "set_rate":
            _ensure_ticker(live)
        return result

    @app.get("/session/{sid}/state")
    async def state(sid: str):
        live = _get(sid)
        async with live.lock:
            return live.core.state_event()

    @app.get("/session/{sid}/log")
    async def log(sid: str):
        live = _get(sid)
        async with live.lock:
            return {
                "v": PROTOCOL_VERSION,
                "scenario": live.core.base_scenario.name,
                "theory": live.core.theory,
                "mode": live.core.mode.value,
                "seed": live.core.seed,
                "cadence": live.core.cadence,
                "log": list(live.core.command_log),
            }

    @app.get("/session/{sid}/events")
    async def events(sid: str, limit: int | None = None):
        """SSE stream; ``limit`` closes it after that many events, which
        scripted clients use to avoid holding the connection open."""
        live = _get(sid)

        async def stream():
            q: asyncio.Queue = asyncio.Queue()
            live.subscribers.append(q)
            sent = 0
            try:
                yield _sse(live.core.state_event())
                sent += 1
                while limit is None or sent < limit:
                    try:
                        event = await asyncio.wait_for(q.get(), timeout=15.0)
                    except asyncio.TimeoutError:
                        yield ": keepalive\n\n"
                        continue
                    yield _sse(event)
                    sent += 1
            finally:
                live.subscribers.remove(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


app = create_app()


def main(host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
