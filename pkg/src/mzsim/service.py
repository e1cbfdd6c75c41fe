"""Headless live-session state machine.

A session owns a scenario and a scoreboard and runs one particle at a time.
The operator (through whatever transport sits on top; see ``mzsim.server``)
can start runs, pause, change the pacing, and insert or remove splitters
while the particle is in flight.  The session is driven by ``advance_to``
(monotone simulated clock) plus ``apply_command``; everything it emits goes
through ``heartbeat``.

Determinism: run ``i`` uses the stream derived from (seed, i), and edits
always take effect on a cadence gridpoint at or after the command, never in
the past, so replaying the command log reproduces every outcome exactly.

Advanced-theory sessions run the time-reversed layout, so their clock runs
over the reversed scenario (the wavefunction leaves a detector and collapses
onto a source).  Two-boundary sessions precompute both legs at launch and
therefore refuse mid-flight edits.
"""

from __future__ import annotations

import base64
import math
from dataclasses import replace

import numpy as np

from .elements import CAPTURE_RADIUS, ElementKind, SplitterMode, is_present
from .engines import (
    RunRecord,
    live_backward_packets,
    live_packets,
    run_ct,
    run_st,
)
from .geometry import distance, scale, add
from .harness import _normalized_weights, ensemble_pairs
from .packets import ConfigurationError, GridSpec, center_at, density_grid, product_density_grid
from .rng import run_stream
from .scenarios import Scenario, resolve_scenario, time_reverse

PROTOCOL_VERSION = 1
DEFAULT_CADENCE = 10.0
DEFAULT_RATE = 400.0  # simulated time units per wall second

STATE_DENSITY_N = 64

COMMAND_TYPES = (
    "start_run",
    "pause",
    "resume",
    "set_rate",
    "insert",
    "remove",
    "reset_scoreboard",
    "step",
)


class CommandRejected(Exception):
    pass


def _density_spec(scenario: Scenario) -> GridSpec:
    xs = [e.position[0] for e in scenario.elements]
    ys = [e.position[1] for e in scenario.elements]
    pad = 200.0
    return GridSpec(
        x_min=min(xs) - pad,
        x_max=max(xs) + pad,
        y_min=min(ys) - pad,
        y_max=max(ys) + pad,
        nx=STATE_DENSITY_N,
        ny=STATE_DENSITY_N,
    )


class Session:
    def __init__(
        self,
        scenario: Scenario | str,
        theory: str = "ct",
        mode: SplitterMode = SplitterMode.ALWAYS_SPLIT,
        seed: int = 0,
        cadence: float = DEFAULT_CADENCE,
        rate: float = DEFAULT_RATE,
    ):
        if isinstance(scenario, str):
            scenario = resolve_scenario(scenario)
        if theory not in ("ct", "at", "st"):
            raise ConfigurationError(f"unknown theory {theory!r}")
        if isinstance(mode, str):
            mode = SplitterMode(mode)
        if cadence <= 0.0:
            raise ConfigurationError("cadence must be positive")
        self.base_scenario = scenario
        self.theory = theory
        self.mode = mode
        self.seed = int(seed)
        self.cadence = float(cadence)
        self.rate = float(rate)
        # the layout actually propagated; reversed for advanced sessions
        self.run_scenario = time_reverse(scenario) if theory == "at" else scenario
        self._spec = _density_spec(self.run_scenario)
        self.phase = "idle"  # idle | running | paused | detected
        self.clock = 0.0
        self.run_index: int | None = None
        self.run_counter = 0
        self.scoreboard: dict[tuple[str, str], int] = {}
        self.command_log: list[dict] = []
        self._record: RunRecord | None = None
        self._run_events: list[tuple[float, str, str]] = []  # (t_eff, element, action)
        self._queue: list[dict] = []
        # toggle state carried between runs; starts from presence at t = 0
        self.toggle_state: dict[str, bool] = {
            e.id: is_present(e, 0.0)
            for e in self.run_scenario.elements
            if e.kind is ElementKind.SPLITTER
        }
        self._run_start_state = dict(self.toggle_state)

    # -- scenario assembly ------------------------------------------------

    def _presence_from_events(self, element_id: str) -> tuple:
        """Presence intervals for one run, from the launch state plus the
        mid-run edit events."""
        state = self._run_start_state[element_id]
        events = sorted(ev for ev in self._run_events if ev[1] == element_id)
        intervals = []
        t_on = 0.0 if state else None
        for t, _, action in events:
            if action == "insert" and t_on is None:
                t_on = t
            elif action == "remove" and t_on is not None:
                if t > t_on:
                    intervals.append((t_on, t))
                t_on = None
        if t_on is not None:
            intervals.append((t_on, self.run_scenario.duration))
        return tuple(intervals)

    def _current_scenario(self) -> Scenario:
        elements = tuple(
            replace(e, presence=self._presence_from_events(e.id))
            if e.id in self.toggle_state
            else e
            for e in self.run_scenario.elements
        )
        return Scenario(
            name=self.run_scenario.name,
            duration=self.run_scenario.duration,
            elements=elements,
            emissions=self.run_scenario.emissions,
            arms=self.run_scenario.arms,
        )

    def _recompute(self) -> None:
        """Rebuild the full run from its own rng stream.

        Edits are never retroactive (the guard refuses anything close to a
        live branch), so the past of the rebuilt run is identical to what
        was already shown and only the future changes.
        """
        scn = self._current_scenario()
        rng = run_stream(self.seed, self.run_index)
        if self.theory == "st":
            pairs = ensemble_pairs(scn)
            sources = sorted({s for s, _ in pairs})
            u = float(rng.random())
            src = sources[min(int(u * len(sources)), len(sources) - 1)]
            dets, weights = _normalized_weights(scn, src, self.mode, pairs)
            v = float(rng.random())
            acc, det = 0.0, dets[-1]
            for d, w in zip(dets, weights):
                acc += w
                if v < acc:
                    det = d
                    break
            self._record = run_st(scn, src, det, self.mode)
        else:
            self._record = run_ct(scn, self.mode, rng)

    def _outcome(self) -> tuple[str, str]:
        """(source, detector) of the finished run, in forward convention."""
        rec = self._record
        if self.theory == "at":
            return rec.detector_id, rec.source_id
        return rec.source_id, rec.detector_id

    # -- time -------------------------------------------------------------

    def advance_to(self, t: float) -> None:
        """Move the session clock forward (no-op unless running)."""
        if self.phase != "running":
            return
        if t <= self.clock:
            return
        # the record lives in the running clock for every theory here (an
        # advanced session's inner record is a retarded run of the reversed
        # layout), so detection_time can be used directly
        det = self._record.detection_time
        if det is not None and t >= det:
            self.clock = det
            self.phase = "detected"
            src, out = self._outcome()
            key = (src, out)
            self.scoreboard[key] = self.scoreboard.get(key, 0) + 1
            try:
                ensemble = ensemble_pairs(self.base_scenario).index(key) + 1
            except (ConfigurationError, ValueError):
                ensemble = None
            self._queue.append(
                {
                    "v": PROTOCOL_VERSION,
                    "type": "detection",
                    "run_index": self.run_index,
                    "source": src,
                    "detector": out,
                    "time": det,
                    "ensemble": ensemble,
                }
            )
        else:
            self.clock = min(t, self.run_scenario.duration)

    def heartbeat(self) -> list[dict]:
        """Queued lifecycle events plus a state snapshot; the transient
        detected phase resolves to idle once it has been reported."""
        events = list(self._queue)
        self._queue.clear()
        events.append(self.state_event())
        if self.phase == "detected":
            self.phase = "idle"
        return events

    # -- commands ----------------------------------------------------------

    def apply_command(self, cmd: dict) -> dict:
        try:
            result = self._apply(cmd)
        except CommandRejected as e:
            return {"v": PROTOCOL_VERSION, "ok": False, "error": str(e)}
        out = {"v": PROTOCOL_VERSION, "ok": True}
        out.update(result)
        return out

    def _log(self, cmd: dict, **extra) -> None:
        entry = {"clock": self.clock, "phase": self.phase, **cmd}
        entry.update(extra)
        self.command_log.append(entry)

    def _apply(self, cmd: dict) -> dict:
        ctype = cmd.get("type")
        if ctype not in COMMAND_TYPES:
            raise CommandRejected(f"unknown command {ctype!r}")
        handler = getattr(self, f"_cmd_{ctype}")
        return handler(cmd)

    def _cmd_start_run(self, cmd: dict) -> dict:
        if self.phase == "detected":
            self.phase = "idle"  # the detection has already been scored
        if self.phase != "idle":
            raise CommandRejected(f"cannot start a run while {self.phase}")
        self.run_index = self.run_counter
        self.run_counter += 1
        self.clock = 0.0
        self._run_events = []
        self._run_start_state = dict(self.toggle_state)
        self._recompute()
        self.phase = "running"
        self._log(cmd, run_index=self.run_index)
        self._queue.append(
            {
                "v": PROTOCOL_VERSION,
                "type": "run_started",
                "run_index": self.run_index,
            }
        )
        return {"run_index": self.run_index}

    def _cmd_pause(self, cmd: dict) -> dict:
        if self.phase != "running":
            raise CommandRejected(f"cannot pause while {self.phase}")
        self.phase = "paused"
        self._log(cmd)
        return {}

    def _cmd_resume(self, cmd: dict) -> dict:
        if self.phase != "paused":
            raise CommandRejected(f"cannot resume while {self.phase}")
        self.phase = "running"
        self._log(cmd)
        return {}

    def _cmd_set_rate(self, cmd: dict) -> dict:
        rate = cmd.get("rate")
        if not isinstance(rate, (int, float)) or not rate > 0.0:
            raise CommandRejected("set_rate needs rate > 0")
        self.rate = float(rate)
        self._log(cmd)
        return {"rate": self.rate}

    def _cmd_step(self, cmd: dict) -> dict:
        # Deterministic manual clock for tests and scripted drivers; a
        # protocol extension over the operator command set.
        dt = cmd.get("dt")
        if not isinstance(dt, (int, float)) or not dt > 0.0:
            raise CommandRejected("step needs dt > 0")
        if self.phase not in ("running", "detected"):
            raise CommandRejected(f"cannot step while {self.phase}")
        self._log(cmd)
        self.advance_to(self.clock + float(dt))
        return {"clock": self.clock, "phase": self.phase}

    def _effective_time(self) -> float:
        grid = math.ceil(self.clock / self.cadence - 1e-9)
        return grid * self.cadence

    def _guard_choice_window(self, element_id: str, t_eff: float) -> None:
        """Refuse an edit while any branch is inside (or will reach) the
        element before the edit lands."""
        el = self.run_scenario.element(element_id)
        for seg in self._record.segments:
            p = seg.packet
            v = p.constants.speed
            if v <= 0.0:
                continue
            horizon = t_eff + CAPTURE_RADIUS / v
            lo = max(self.clock, seg.t_from)
            hi = min(horizon, seg.t_to)
            if lo > hi:
                continue
            a = center_at(p, lo)
            b = center_at(p, hi)
            if _point_segment_distance(el.position, a, b) < CAPTURE_RADIUS:
                raise CommandRejected(
                    f"choice window: a branch is at {element_id} before the edit lands"
                )

    def _cmd_insert(self, cmd: dict) -> dict:
        return self._toggle(cmd, "insert")

    def _cmd_remove(self, cmd: dict) -> dict:
        return self._toggle(cmd, "remove")

    def _toggle(self, cmd: dict, action: str) -> dict:
        eid = cmd.get("element")
        if eid not in self.toggle_state:
            raise CommandRejected(f"element {eid!r} is not toggleable")
        want = action == "insert"
        if self.phase == "detected":
            raise CommandRejected("run already detected")
        if self.phase == "idle":
            self.toggle_state[eid] = want
            self._log(cmd, effective_time=None)
            return {"effective_time": None, "staged": True}
        if self.theory == "st":
            raise CommandRejected("two-boundary runs are fixed at launch")
        if self.toggle_state[eid] == want:
            return {"effective_time": None, "noop": True}
        t_eff = self._effective_time()
        self._guard_choice_window(eid, t_eff)
        self._run_events.append((t_eff, eid, action))
        self.toggle_state[eid] = want
        self._recompute()
        self._log(cmd, effective_time=t_eff)
        return {"effective_time": t_eff}

    def _cmd_reset_scoreboard(self, cmd: dict) -> dict:
        self.scoreboard = {}
        self._log(cmd)
        return {}

    # -- state snapshot ------------------------------------------------------

    def state_event(self) -> dict:
        rec = self._record
        packets = []
        density = None
        if rec is not None and self.phase in ("running", "paused", "detected"):
            t = self.clock
            if self.theory == "st":
                fwd = live_packets(rec, t)
                bwd = live_backward_packets(rec, t)
                grid = product_density_grid(
                    fwd, bwd, self._spec, t, rec.duration - t
                )
                for p in fwd:
                    packets.append(_packet_state(p, t, "forward"))
                for p in bwd:
                    packets.append(_packet_state(p, rec.duration - t, "backward"))
            else:
                live = live_packets(rec, t)
                grid = density_grid(live, self._spec, t)
                for p in live:
                    packets.append(_packet_state(p, t, None))
            density = _density_state(grid)
        presence = []
        scn = self._current_scenario() if self.phase != "idle" and rec is not None else None
        for e in self.run_scenario.elements:
            if e.id in self.toggle_state:
                if scn is not None:
                    present = is_present(scn.element(e.id), self.clock)
                else:
                    present = self.toggle_state[e.id]
            else:
                present = is_present(e, self.clock)
            presence.append(
                {
                    "id": e.id,
                    "kind": e.kind.value,
                    "position": list(e.position),
                    "present": present,
                    "toggleable": e.id in self.toggle_state,
                }
            )
        return {
            "v": PROTOCOL_VERSION,
            "type": "state",
            "phase": self.phase,
            "clock": self.clock,
            "rate": self.rate,
            "cadence": self.cadence,
            "theory": self.theory,
            "mode": self.mode.value,
            "scenario": self.base_scenario.name,
            "duration": self.run_scenario.duration,
            "run_index": self.run_index,
            "elements": presence,
            "packets": packets,
            "density": density,
            "scoreboard": [
                {"source": s, "detector": d, "count": c}
                for (s, d), c in sorted(self.scoreboard.items())
            ],
        }


def _packet_state(p, t_own_clock: float, leg: str | None) -> dict:
    x, y = center_at(p, t_own_clock)
    out = {"x": x, "y": y, "weight": abs(p.amplitude) ** 2}
    if leg is not None:
        out["leg"] = leg
    return out


def _density_state(grid) -> dict:
    vmax = float(grid.values.max())
    if vmax > 0.0:
        scaled = np.rint(grid.values / vmax * 255.0).astype(np.uint8)
    else:
        scaled = np.zeros_like(grid.values, dtype=np.uint8)
    return {
        "nx": grid.spec.nx,
        "ny": grid.spec.ny,
        "x_min": grid.spec.x_min,
        "x_max": grid.spec.x_max,
        "y_min": grid.spec.y_min,
        "y_max": grid.spec.y_max,
        "max": vmax,
        "data": base64.b64encode(scaled.tobytes()).decode("ascii"),
    }


def _point_segment_distance(p, a, b) -> float:
    ab = (b[0] - a[0], b[1] - a[1])
    ap = (p[0] - a[0], p[1] - a[1])
    denom = ab[0] ** 2 + ab[1] ** 2
    if denom <= 0.0:
        return distance(p, a)
    s = max(0.0, min(1.0, (ap[0] * ab[0] + ap[1] * ab[1]) / denom))
    closest = add(a, scale(ab, s))
    return distance(p, closest)


def replay_log(
    scenario: Scenario | str,
    theory: str,
    mode: SplitterMode | str,
    seed: int,
    log: list[dict],
    cadence: float = DEFAULT_CADENCE,
) -> Session:
    """Rebuild a session by re-driving its command log.

    Every command is applied at its recorded clock; outcomes depend only on
    the seed, the run counter, and the effective times of edits, so the
    replayed scoreboard matches the original exactly.
    """
    s = Session(scenario, theory=theory, mode=mode, seed=seed, cadence=cadence)
    for entry in log:
        s.advance_to(entry["clock"])
        # a live session would have heartbeat between commands; that is what
        # resolves a detected run back to idle
        s.heartbeat()
        cmd = {
            k: v
            for k, v in entry.items()
            if k not in ("clock", "phase", "effective_time", "run_index")
        }
        resp = s.apply_command(cmd)
        if not resp.get("ok"):
            raise ConfigurationError(f"replay rejected {cmd}: {resp.get('error')}")
    s.heartbeat()
    return s
