/**
 * Canvas heatmap of the density grid plus element glyphs. Pure pixel work
 * against a minimal 2D-context interface so it is testable without a DOM.
 * Painting is coalesced to one state event per animation frame, since the
 * service cadence can exceed the display rate.
 */

import { DensityState, ElementState, StateEvent } from "./protocol.js";

export interface ImageDataLike {
  readonly width: number;
  readonly height: number;
  readonly data: Uint8ClampedArray;
}

/** The subset of CanvasRenderingContext2D the heatmap needs. */
export interface Context2DLike {
  createImageData(w: number, h: number): ImageDataLike;
  putImageData(img: ImageDataLike, dx: number, dy: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  strokeStyle: string | object;
  fillStyle: string | object;
  lineWidth: number;
}

export function decodeDensity(d: DensityState): Uint8Array {
  const bin = typeof atob === "function"
    ? atob(d.data)
    : Buffer.from(d.data, "base64").toString("binary");
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

export interface WorldTransform {
  toPixelX(x: number): number;
  toPixelY(y: number): number;
}

export function worldTransform(
  d: { x_min: number; x_max: number; y_min: number; y_max: number },
  width: number,
  height: number,
): WorldTransform {
  const sx = width / (d.x_max - d.x_min);
  const sy = height / (d.y_max - d.y_min);
  return {
    toPixelX: (x) => (x - d.x_min) * sx,
    // canvas y runs downward, world y upward
    toPixelY: (y) => (d.y_max - y) * sy,
  };
}

export const GLYPH_RADIUS = 6;

export function paintDensity(
  ctx: Context2DLike,
  density: DensityState,
  width: number,
  height: number,
): void {
  const grid = decodeDensity(density);
  const img = ctx.createImageData(width, height);
  for (let py = 0; py < height; py++) {
    // row 0 of the grid is at y_max, which is also canvas row 0
    const gy = Math.min(
      density.ny - 1,
      Math.floor((py / height) * density.ny),
    );
    for (let px = 0; px < width; px++) {
      const gx = Math.min(
        density.nx - 1,
        Math.floor((px / width) * density.nx),
      );
      const v = grid[gy * density.nx + gx] ?? 0;
      const o = (py * width + px) * 4;
      img.data[o] = v;
      img.data[o + 1] = v;
      img.data[o + 2] = v;
      img.data[o + 3] = 255;
    }
  }
  ctx.putImageData(img, 0, 0);
}

/** Element glyphs on top of the heatmap; absent elements are hollow. */
export function paintElements(
  ctx: Context2DLike,
  elements: ElementState[],
  tf: WorldTransform,
): void {
  for (const el of elements) {
    const x = tf.toPixelX(el.position[0]);
    const y = tf.toPixelY(el.position[1]);
    ctx.lineWidth = 1.5;
    ctx.strokeStyle = el.kind === "splitter" ? "#7fd4ff" : "#cccccc";
    ctx.fillStyle = ctx.strokeStyle;
    if (el.kind === "splitter" || el.kind === "mirror") {
      ctx.beginPath();
      ctx.arc(x, y, GLYPH_RADIUS, 0, 2 * Math.PI);
      if (el.present) {
        ctx.fill();
      } else {
        ctx.stroke();
      }
    } else if (el.present) {
      ctx.fillRect(x - GLYPH_RADIUS, y - GLYPH_RADIUS, 2 * GLYPH_RADIUS, 2 * GLYPH_RADIUS);
    } else {
      ctx.strokeRect(x - GLYPH_RADIUS, y - GLYPH_RADIUS, 2 * GLYPH_RADIUS, 2 * GLYPH_RADIUS);
    }
  }
}

export function paintState(
  ctx: Context2DLike,
  state: StateEvent,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  if (state.density !== null) {
    paintDensity(ctx, state.density, width, height);
    const tf = worldTransform(state.density, width, height);
    paintElements(ctx, state.elements, tf);
  }
  // an idle session has no density; the canvas stays blank
}

export type Scheduler = (run: () => void) => void;

/**
 * Keeps only the newest state event between animation frames. With a
 * 400-units-per-second default rate and 10-unit cadence the service can
 * emit 40 events per second per subscriber; the display needs at most one
 * per frame.
 */
export class FrameCoalescer {
  private pending: StateEvent | null = null;
  private scheduled = false;
  painted = 0;

  constructor(
    private readonly paint: (s: StateEvent) => void,
    private readonly schedule: Scheduler,
  ) {}

  push(state: StateEvent): void {
    this.pending = state;
    if (this.scheduled) return;
    this.scheduled = true;
    this.schedule(() => {
      this.scheduled = false;
      if (this.pending !== null) {
        const s = this.pending;
        this.pending = null;
        this.paint(s);
        this.painted += 1;
      }
    });
  }
}
