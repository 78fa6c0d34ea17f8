/**
 * Scrolling force-magnitude gauge. Geometry is computed by pure
 * functions over ForceHistory segments; the canvas layer just strokes
 * the result. Gaps in the feed stay gaps on screen.
 */

import { ForceHistory, GaugeSample } from "./state.js";

export interface GaugeLayout {
  width: number;
  height: number;
  windowS: number;
  /** Fixed ceiling for the y axis; 0 means autoscale to the window. */
  maxForce: number;
}

export interface TracePoint {
  x: number;
  y: number;
}

export interface GaugeFrame {
  segments: TracePoint[][];
  ceiling: number;
  latest: GaugeSample | null;
}

function windowed(samples: readonly GaugeSample[], windowS: number): GaugeSample[] {
  if (samples.length === 0) return [];
  const cutoff = samples[samples.length - 1].timeS - windowS;
  return samples.filter((s) => s.timeS >= cutoff);
}

/**
 * Project history into pixel space. Newest sample pins to the right
 * edge; segments shorter than the window scroll left as time passes.
 */
export function layoutTrace(history: ForceHistory, layout: GaugeLayout): GaugeFrame {
  const all = history.all();
  if (all.length === 0) {
    return { segments: [], ceiling: layout.maxForce || 1, latest: null };
  }
  const latest = all[all.length - 1];
  const visible = windowed(all, layout.windowS);
  let ceiling = layout.maxForce;
  if (ceiling <= 0) {
    ceiling = 1e-6;
    for (const s of visible) ceiling = Math.max(ceiling, s.magnitude);
    ceiling *= 1.1;
  }
  const t1 = latest.timeS;
  const t0 = t1 - layout.windowS;
  const toX = (t: number) => ((t - t0) / layout.windowS) * layout.width;
  const toY = (m: number) => layout.height * (1 - Math.min(m, ceiling) / ceiling);

  const segments: TracePoint[][] = [];
  for (const run of history.segments()) {
    const pts = run
      .filter((s) => s.timeS >= t0)
      .map((s) => ({ x: toX(s.timeS), y: toY(s.magnitude) }));
    if (pts.length > 0) segments.push(pts);
  }
  return { segments, ceiling, latest };
}

const TRACE_STYLES: Record<string, string> = {
  push: "#5ad1ff",
  pull: "#ffb657",
  wet: "#68a0ff",
  dry: "#ffd76e",
};

export function drawGauge(
  ctx: CanvasRenderingContext2D,
  history: ForceHistory,
  layout: GaugeLayout,
): void {
  ctx.clearRect(0, 0, layout.width, layout.height);
  ctx.fillStyle = "rgba(10, 14, 20, 0.85)";
  ctx.fillRect(0, 0, layout.width, layout.height);

  const frame = layoutTrace(history, layout);

  ctx.strokeStyle = "rgba(255,255,255,0.12)";
  ctx.lineWidth = 1;
  ctx.beginPath();
  for (let i = 1; i < 4; i++) {
    const y = (layout.height * i) / 4;
    ctx.moveTo(0, y);
    ctx.lineTo(layout.width, y);
  }
  ctx.stroke();

  const mode = frame.latest?.mode ?? "push";
  ctx.strokeStyle = TRACE_STYLES[mode] ?? "#cccccc";
  ctx.lineWidth = 1.5;
  for (const segment of frame.segments) {
    if (segment.length < 2) continue;
    ctx.beginPath();
    ctx.moveTo(segment[0].x, segment[0].y);
    for (let i = 1; i < segment.length; i++) {
      ctx.lineTo(segment[i].x, segment[i].y);
    }
    ctx.stroke();
  }

  ctx.fillStyle = "#e8e8e8";
  ctx.font = "11px system-ui, sans-serif";
  const label = frame.latest === null ? "-- N" : `${frame.latest.magnitude.toFixed(3)} N`;
  ctx.fillText(label, 8, 14);
  ctx.fillText(`${frame.ceiling.toFixed(2)} N max`, 8, layout.height - 6);
}
