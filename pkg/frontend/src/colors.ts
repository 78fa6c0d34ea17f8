/**
 * Vertex color synthesis. Wetness lerps the base tint toward blue;
 * the deformation highlight blends a yellow-to-red ramp on top, so the
 * two signals stay distinguishable when they overlap.
 */

export const BASE_COLOR: [number, number, number] = [0.93, 0.91, 0.86];
export const WET_COLOR: [number, number, number] = [0.13, 0.33, 0.89];
export const HIGHLIGHT_EDGE: [number, number, number] = [1.0, 0.85, 0.1];
export const HIGHLIGHT_CORE: [number, number, number] = [0.95, 0.16, 0.07];

function lerp3(
  a: [number, number, number],
  b: [number, number, number],
  t: number,
): [number, number, number] {
  return [
    a[0] + (b[0] - a[0]) * t,
    a[1] + (b[1] - a[1]) * t,
    a[2] + (b[2] - a[2]) * t,
  ];
}

function clamp01(x: number): number {
  return x < 0 ? 0 : x > 1 ? 1 : x;
}

/** Color of one vertex given its wetness and highlight weight, both in [0, 1]. */
export function vertexColor(wetness: number, highlight: number): [number, number, number] {
  const w = clamp01(wetness);
  const h = clamp01(highlight);
  const wet = lerp3(BASE_COLOR, WET_COLOR, w);
  if (h <= 0) return wet;
  return lerp3(wet, lerp3(HIGHLIGHT_EDGE, HIGHLIGHT_CORE, h), h);
}

/** Fill (and return) an RGB buffer for the whole mesh. */
export function vertexColors(
  wetness: ArrayLike<number>,
  highlight: ArrayLike<number>,
  out?: Float32Array,
): Float32Array {
  const n = wetness.length;
  const colors = out ?? new Float32Array(3 * n);
  for (let i = 0; i < n; i++) {
    const [r, g, b] = vertexColor(wetness[i], highlight[i]);
    colors[3 * i] = r;
    colors[3 * i + 1] = g;
    colors[3 * i + 2] = b;
  }
  return colors;
}
