/**
 * Browser wiring: create a session, stream its events, paint the heatmap,
 * and expose the choice controls. Everything protocol-shaped lives in the
 * sibling modules; this file only touches the DOM.
 */

import { SessionClient } from "./client.js";
import { FrameCoalescer, paintState } from "./heatmap.js";
import { Command, DetectionEvent, StateEvent } from "./protocol.js";
import {
  ScoreboardCell,
  emptyTallies,
  foldDetection,
  scoreboardView,
} from "./scoreboard.js";
import {
  ViewState,
  initialViewState,
  noteError,
  noteMidflightInsertion,
  reduceEvent,
  toggleButtons,
} from "./controls.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing #${id}`);
  return el as T;
};

let client: SessionClient | null = null;
let view: ViewState = initialViewState();
let tallies = emptyTallies();

const canvas = $<HTMLCanvasElement>("view");
const ctx = canvas.getContext("2d");
if (ctx === null) throw new Error("no 2d context");
const coalescer = new FrameCoalescer(
  (s: StateEvent) => paintState(ctx, s, canvas.width, canvas.height),
  (run) => requestAnimationFrame(run),
);

function renderScoreboard(): void {
  const sv = scoreboardView(tallies, view.sawMidflightInsertion);
  const rows = sv.cells
    .map(
      (c: ScoreboardCell) =>
        `<tr><td>${c.ensemble ?? "?"}</td><td>${c.source}&rarr;${c.detector}` +
        `</td><td>${c.count}</td><td>${c.probability.toFixed(3)}</td></tr>`,
    )
    .join("");
  $("scoreboard").innerHTML =
    `<table><tr><th></th><th>pair</th><th>count</th><th>p</th></tr>${rows}</table>` +
    `<div>runs: ${sv.total}</div>`;
  $("paradox").style.display = sv.paradox ? "inline" : "none";
}

function renderControls(): void {
  const box = $("toggles");
  box.innerHTML = "";
  for (const b of toggleButtons(view)) {
    const btn = document.createElement("button");
    btn.textContent = `${b.present ? "remove" : "insert"} ${b.id}`;
    if (b.disabledReason !== null) {
      btn.disabled = true;
      btn.title = b.disabledReason;
    }
    btn.onclick = () => {
      void send({
        type: b.present ? "remove" : "insert",
        element: b.id,
      });
    };
    box.appendChild(btn);
  }
  $("status").textContent =
    view.lastError ??
    `${view.connection} | phase ${view.state?.phase ?? "-"} | clock ${
      view.state?.clock?.toFixed(0) ?? "-"
    }`;
}

async function send(cmd: Command): Promise<void> {
  if (client === null) return;
  try {
    const resp = await client.command(cmd);
    if (!resp.ok) {
      view = noteError(view, resp.error);
    } else {
      view = { ...view, lastError: null };
      if (
        cmd.type === "insert" &&
        "effective_time" in resp &&
        resp.effective_time !== null &&
        resp.effective_time !== undefined
      ) {
        view = noteMidflightInsertion(view);
      }
    }
  } catch (err) {
    view = noteError(view, err instanceof Error ? err.message : String(err));
  }
  renderControls();
  renderScoreboard();
}

function onEvent(e: StateEvent | DetectionEvent | { type: string }): void {
  view = reduceEvent(view, e as never);
  if (e.type === "state") {
    coalescer.push(e as StateEvent);
  } else if (e.type === "detection") {
    tallies = foldDetection(tallies, e as DetectionEvent);
    renderScoreboard();
  }
  renderControls();
}

async function connect(): Promise<void> {
  const base = ($<HTMLInputElement>("base").value || "").replace(/\/+$/, "");
  const scenario = $<HTMLSelectElement>("scenario").value;
  const theory = $<HTMLSelectElement>("theory").value as "ct" | "at" | "st";
  const mode = $<HTMLSelectElement>("mode").value as
    | "always-split"
    | "collapse";
  const seed = Number($<HTMLInputElement>("seed").value || "0");
  try {
    const made = await SessionClient.create(base, {
      scenario,
      theory,
      mode,
      seed,
    });
    client = made.client;
    view = initialViewState();
    tallies = emptyTallies();
    onEvent(made.state);
    void client.events(onEvent, {
      onMalformed: () => {
        view = noteError(view, "malformed event (stream continues)");
        renderControls();
      },
    });
  } catch (err) {
    view = noteError(view, err instanceof Error ? err.message : String(err));
    renderControls();
  }
}

$("connect").onclick = () => void connect();
$("start").onclick = () => void send({ type: "start_run" });
$("pause").onclick = () => void send({ type: "pause" });
$("resume").onclick = () => void send({ type: "resume" });
$("reset").onclick = () => void send({ type: "reset_scoreboard" });
$("export").onclick = () => {
  if (client === null) return;
  void client.log().then((log) => {
    const blob = new Blob([JSON.stringify(log, null, 2)], {
      type: "application/json",
    });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = `session-${client?.id ?? "log"}.json`;
    a.click();
  });
};

renderControls();
renderScoreboard();
