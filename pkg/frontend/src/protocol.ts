/**
 * Live-session protocol, version 1 (see docs/protocol.md in the repo root).
 *
 * The UI never simulates physics; everything it knows arrives through these
 * message shapes. Commands are schema-checked here before they are sent so
 * only protocol-valid commands ever reach the wire.
 */

export const PROTOCOL_VERSION = 1;

export type Phase = "idle" | "running" | "paused" | "detected";
export type Theory = "ct" | "at" | "st";
export type Mode = "always-split" | "collapse";

export interface ElementState {
  id: string;
  kind: "source" | "splitter" | "mirror" | "detector";
  position: [number, number];
  present: boolean;
  toggleable: boolean;
}

export interface PacketState {
  x: number;
  y: number;
  weight: number;
  /** only on two-boundary sessions */
  leg?: "forward" | "backward";
}

export interface DensityState {
  nx: number;
  ny: number;
  x_min: number;
  x_max: number;
  y_min: number;
  y_max: number;
  /** value that maps to full brightness */
  max: number;
  /** base64 uint8 grid, row-major, row 0 at y_max */
  data: string;
}

export interface ScoreboardEntry {
  source: string;
  detector: string;
  count: number;
}

export interface StateEvent {
  v: number;
  type: "state";
  phase: Phase;
  clock: number;
  rate: number;
  cadence: number;
  theory: Theory;
  mode: Mode;
  scenario: string;
  duration: number;
  run_index: number | null;
  elements: ElementState[];
  packets: PacketState[];
  density: DensityState | null;
  scoreboard: ScoreboardEntry[];
}

export interface RunStartedEvent {
  v: number;
  type: "run_started";
  run_index: number;
}

export interface DetectionEvent {
  v: number;
  type: "detection";
  run_index: number;
  source: string;
  detector: string;
  time: number;
  /** 1-based canonical pair index; bright pairs are 1 and 2 */
  ensemble: number | null;
}

export type SessionEvent = StateEvent | RunStartedEvent | DetectionEvent;

export interface SessionConfig {
  scenario?: string | object;
  theory?: Theory;
  mode?: Mode;
  seed?: number;
  cadence?: number;
  rate?: number;
}

export interface CreateResponse {
  v: number;
  id: string;
  writer_token: string;
  state: StateEvent;
}

export type Command =
  | { type: "start_run" }
  | { type: "pause" }
  | { type: "resume" }
  | { type: "set_rate"; rate: number }
  | { type: "step"; dt: number }
  | { type: "insert"; element: string }
  | { type: "remove"; element: string }
  | { type: "reset_scoreboard" };

export interface CommandOk {
  v: number;
  ok: true;
  run_index?: number;
  rate?: number;
  clock?: number;
  phase?: Phase;
  effective_time?: number | null;
  staged?: boolean;
  noop?: boolean;
}

export interface CommandRejected {
  v: number;
  ok: false;
  error: string;
}

export type CommandResponse = CommandOk | CommandRejected;

export interface LogEntry {
  clock: number;
  phase: Phase;
  type: Command["type"];
  [extra: string]: unknown;
}

export interface LogResponse {
  v: number;
  scenario: string;
  theory: Theory;
  mode: Mode;
  seed: number;
  cadence: number;
  log: LogEntry[];
}

function isRecord(x: unknown): x is Record<string, unknown> {
  return typeof x === "object" && x !== null;
}

export function isStateEvent(e: unknown): e is StateEvent {
  return (
    isRecord(e) &&
    e.type === "state" &&
    e.v === PROTOCOL_VERSION &&
    typeof e.clock === "number" &&
    typeof e.phase === "string" &&
    Array.isArray(e.elements) &&
    Array.isArray(e.packets) &&
    Array.isArray(e.scoreboard)
  );
}

export function isRunStartedEvent(e: unknown): e is RunStartedEvent {
  return (
    isRecord(e) &&
    e.type === "run_started" &&
    e.v === PROTOCOL_VERSION &&
    typeof e.run_index === "number"
  );
}

export function isDetectionEvent(e: unknown): e is DetectionEvent {
  return (
    isRecord(e) &&
    e.type === "detection" &&
    e.v === PROTOCOL_VERSION &&
    typeof e.source === "string" &&
    typeof e.detector === "string" &&
    typeof e.run_index === "number"
  );
}

export function isSessionEvent(e: unknown): e is SessionEvent {
  return isStateEvent(e) || isRunStartedEvent(e) || isDetectionEvent(e);
}

/**
 * Checks a command against the protocol schema. Returns null when valid,
 * otherwise the reason, so the caller can refuse to send it.
 */
export function commandProblem(cmd: unknown): string | null {
  if (!isRecord(cmd)) return "command must be an object";
  switch (cmd.type) {
    case "start_run":
    case "pause":
    case "resume":
    case "reset_scoreboard":
      return null;
    case "set_rate":
      return typeof cmd.rate === "number" && cmd.rate > 0
        ? null
        : "set_rate needs rate > 0";
    case "step":
      return typeof cmd.dt === "number" && cmd.dt > 0
        ? null
        : "step needs dt > 0";
    case "insert":
    case "remove":
      return typeof cmd.element === "string" && cmd.element.length > 0
        ? null
        : `${cmd.type} needs an element id`;
    default:
      return `unknown command type ${JSON.stringify(cmd.type)}`;
  }
}
