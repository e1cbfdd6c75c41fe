/**
 * View-state reducer for the control room. Toggle buttons are disabled when
 * the service is certain to reject the command; the windowed cases mirror
 * the service's choice guard from protocol data alone (packet centers vs
 * element position), since the UI does not simulate physics.
 */

import { SessionEvent, StateEvent } from "./protocol.js";

/**
 * Pixel-free proximity guard. The service rejects an edit when a branch is
 * within its capture radius of the element before the edit lands; from the
 * outside we only see packet centers at the last cadence tick, so the
 * mirror uses a radius generous enough to cover one cadence of travel.
 */
export const GUARD_RADIUS = 60;

export type Connection = "connecting" | "open" | "closed" | "error";

export interface RunHistoryEntry {
  runIndex: number;
  source: string;
  detector: string;
  ensemble: number | null;
}

export interface ViewState {
  connection: Connection;
  state: StateEvent | null;
  history: RunHistoryEntry[];
  /** true once an insert landed mid-flight in this session */
  sawMidflightInsertion: boolean;
  lastError: string | null;
}

export function initialViewState(): ViewState {
  return {
    connection: "connecting",
    state: null,
    history: [],
    sawMidflightInsertion: false,
    lastError: null,
  };
}

export function reduceEvent(view: ViewState, event: SessionEvent): ViewState {
  switch (event.type) {
    case "state":
      return { ...view, connection: "open", state: event };
    case "run_started":
      return view;
    case "detection":
      return {
        ...view,
        history: [
          ...view.history,
          {
            runIndex: event.run_index,
            source: event.source,
            detector: event.detector,
            ensemble: event.ensemble,
          },
        ],
      };
  }
}

export function noteMidflightInsertion(view: ViewState): ViewState {
  return { ...view, sawMidflightInsertion: true };
}

export function noteError(view: ViewState, message: string): ViewState {
  return { ...view, lastError: message };
}

/**
 * Why a toggle button for `elementId` is disabled, or null when the command
 * should be accepted. Mirrors the service rules:
 * idle toggles stage the next run (always allowed), detected runs are over,
 * two-boundary runs are fixed at launch, and mid-run edits must not land
 * while a branch is at the element.
 */
export function toggleDisabledReason(
  view: ViewState,
  elementId: string,
): string | null {
  if (view.connection !== "open" || view.state === null) {
    return "not connected";
  }
  const s = view.state;
  const el = s.elements.find((e) => e.id === elementId);
  if (el === undefined || !el.toggleable) {
    return `${elementId} is not toggleable`;
  }
  if (s.phase === "idle") return null; // stages the next run
  if (s.phase === "detected") return "run already detected";
  if (s.theory === "st") return "two-boundary runs are fixed at launch";
  for (const p of s.packets) {
    const dx = p.x - el.position[0];
    const dy = p.y - el.position[1];
    if (Math.hypot(dx, dy) < GUARD_RADIUS) {
      return `choice window: a branch is at ${elementId}`;
    }
  }
  return null;
}

/** Toggleable elements with their button state, for rendering. */
export function toggleButtons(
  view: ViewState,
): { id: string; present: boolean; disabledReason: string | null }[] {
  if (view.state === null) return [];
  return view.state.elements
    .filter((e) => e.toggleable)
    .map((e) => ({
      id: e.id,
      present: e.present,
      disabledReason: toggleDisabledReason(view, e.id),
    }));
}
