/**
 * Client-side session state: the latest complete snapshot, the force
 * history ring, and the outgoing pose throttle. All plain data so the
 * render loop and the tests can drive it without a DOM.
 */

import {
  DecodedArray,
  ForceReading,
  HelloMessage,
  SnapshotMessage,
  decodeArray,
} from "./protocol.js";

export type Connection = "connecting" | "open" | "closed";

export interface MeshData {
  triangles: Int32Array;
  restPositions: Float32Array;
  vertexCount: number;
}

export interface SnapshotView {
  step: number;
  timeS: number;
  paused: boolean;
  positions: Float32Array;
  wetness: Float32Array;
  highlight: Float32Array;
  force: ForceReading;
  toolMode: string;
  toolPosition: number[] | null;
  toolRadius: number;
  stats?: Record<string, number>;
}

function asF32(decoded: DecodedArray): Float32Array {
  return decoded.data instanceof Float32Array
    ? decoded.data
    : Float32Array.from(decoded.data);
}

export function meshFromHello(hello: HelloMessage): MeshData {
  const tris = decodeArray(hello.surface_triangles, "i4");
  const rest = decodeArray(hello.rest_positions, "f4");
  return {
    triangles:
      tris.data instanceof Int32Array ? tris.data : Int32Array.from(tris.data),
    restPositions: asF32(rest),
    vertexCount: rest.shape[0],
  };
}

/**
 * Decode every array of a snapshot before exposing any of it, so a
 * render pass never sees half of one frame and half of another.
 */
export function viewSnapshot(message: SnapshotMessage): SnapshotView {
  const positions = asF32(decodeArray(message.positions, "f4"));
  const wetness = asF32(decodeArray(message.wetness, "f4"));
  const highlight = asF32(decodeArray(message.highlight, "f4"));
  return {
    step: message.step,
    timeS: message.time_s,
    paused: message.paused,
    positions,
    wetness,
    highlight,
    force: message.force,
    toolMode: message.tool.mode,
    toolPosition: message.tool.position,
    toolRadius: message.tool.radius,
    stats: message.stats,
  };
}

export interface GaugeSample {
  timeS: number;
  magnitude: number;
  mode: string;
}

/**
 * Fixed-capacity force history. Consecutive samples further apart than
 * the gap threshold start a new segment; the plot draws segments
 * independently so stalls show as breaks instead of fake lines.
 */
export class ForceHistory {
  readonly capacity: number;
  readonly gapS: number;
  private samples: GaugeSample[] = [];

  constructor(capacity = 600, gapS = 0.1) {
    this.capacity = capacity;
    this.gapS = gapS;
  }

  push(sample: GaugeSample): void {
    const last = this.samples[this.samples.length - 1];
    if (last !== undefined && sample.timeS === last.timeS) {
      return; // duplicate publish of the same reading
    }
    if (last !== undefined && sample.timeS < last.timeS) {
      this.samples = []; // session reset: history restarts
    }
    this.samples.push(sample);
    if (this.samples.length > this.capacity) {
      this.samples.splice(0, this.samples.length - this.capacity);
    }
  }

  all(): readonly GaugeSample[] {
    return this.samples;
  }

  /** Contiguous runs of samples, split where time jumps past the gap. */
  segments(): GaugeSample[][] {
    const out: GaugeSample[][] = [];
    let current: GaugeSample[] = [];
    for (const sample of this.samples) {
      const last = current[current.length - 1];
      if (last !== undefined && sample.timeS - last.timeS > this.gapS) {
        out.push(current);
        current = [];
      }
      current.push(sample);
    }
    if (current.length > 0) out.push(current);
    return out;
  }

  clear(): void {
    this.samples = [];
  }
}

/**
 * Latest-wins outgoing pose limiter. The server folds commands the
 * same way, so dropping intermediate poses loses nothing; the cap just
 * keeps a fast pointer from flooding the socket.
 */
export class PoseThrottle {
  private intervalMs: number;
  private lastSent = -Infinity;
  private pending: number[] | null = null;

  constructor(rateHz: number) {
    this.intervalMs = 1000 / rateHz;
  }

  submit(position: number[]): void {
    this.pending = position;
  }

  /** The position to send now, or null if throttled or idle. */
  take(nowMs: number): number[] | null {
    if (this.pending === null || nowMs - this.lastSent < this.intervalMs) {
      return null;
    }
    const out = this.pending;
    this.pending = null;
    this.lastSent = nowMs;
    return out;
  }
}

export class ClientState {
  connection: Connection = "connecting";
  mesh: MeshData | null = null;
  hello: HelloMessage | null = null;
  snapshot: SnapshotView | null = null;
  mode = "push";
  readonly forces: ForceHistory;
  readonly throttle: PoseThrottle;

  constructor(rateHz = 60) {
    this.forces = new ForceHistory();
    this.throttle = new PoseThrottle(rateHz);
  }

  acceptHello(message: HelloMessage): void {
    this.hello = message;
    this.mesh = meshFromHello(message);
  }

  acceptSnapshot(message: SnapshotMessage): void {
    const view = viewSnapshot(message);
    if (this.mesh !== null && view.positions.length !== 3 * this.mesh.vertexCount) {
      return; // incomplete or foreign snapshot: keep the previous frame
    }
    this.snapshot = view;
    const f = view.force.force;
    this.forces.push({
      timeS: view.force.time_s,
      magnitude: Math.hypot(f[0], f[1], f[2]),
      mode: view.force.mode,
    });
  }
}
