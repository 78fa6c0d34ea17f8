/**
 * Wire protocol shared with the simulation service: every frame is an
 * 8-digit lowercase hex byte-length prefix followed by compact JSON.
 * Large numeric arrays arrive as { shape, dtype, b64 } with
 * little-endian packed data; small ones stay plain JSON lists.
 */

export class ProtocolError extends Error {}

export interface ArrayPayload {
  shape: number[];
  dtype: string;
  b64: string;
}

export interface DecodedArray {
  data: Float32Array | Int32Array;
  shape: number[];
}

export interface ForceReading {
  time_s: number;
  force: number[];
  mode: string;
  contact_count: number;
}

export interface HelloMessage {
  type: "hello";
  protocol: number;
  snapshot_rate: number;
  dt: number;
  surface_triangles: unknown;
  rest_positions: unknown;
  tet_count: number;
  tool: { radius: number; modes: string[]; kernel_radius: number };
}

export interface SnapshotMessage {
  type: "snapshot";
  step: number;
  time_s: number;
  paused: boolean;
  positions: unknown;
  wetness: unknown;
  highlight: unknown;
  force: ForceReading;
  tool: { mode: string; position: number[] | null; radius: number };
  stats?: Record<string, number>;
}

const encoder = new TextEncoder();
const decoder = new TextDecoder();

export function frameBytes(message: object): Uint8Array {
  const body = encoder.encode(JSON.stringify(message));
  const prefix = body.length.toString(16).padStart(8, "0");
  const out = new Uint8Array(8 + body.length);
  out.set(encoder.encode(prefix), 0);
  out.set(body, 8);
  return out;
}

export function parseFrame(data: ArrayBuffer | Uint8Array): Record<string, unknown> {
  const bytes = data instanceof Uint8Array ? data : new Uint8Array(data);
  if (bytes.length < 8) {
    throw new ProtocolError("frame shorter than its length prefix");
  }
  const prefix = decoder.decode(bytes.subarray(0, 8));
  if (!/^[0-9a-f]{8}$/.test(prefix)) {
    throw new ProtocolError("frame prefix is not hexadecimal");
  }
  const expected = parseInt(prefix, 16);
  const body = bytes.subarray(8);
  if (body.length !== expected) {
    throw new ProtocolError(
      `frame length prefix says ${expected} bytes, got ${body.length}`,
    );
  }
  let message: unknown;
  try {
    message = JSON.parse(decoder.decode(body));
  } catch {
    throw new ProtocolError("frame body is not valid JSON");
  }
  if (typeof message !== "object" || message === null || !("type" in message)) {
    throw new ProtocolError("frame body must be an object with a 'type'");
  }
  return message as Record<string, unknown>;
}

function isArrayPayload(value: unknown): value is ArrayPayload {
  return (
    typeof value === "object" &&
    value !== null &&
    "b64" in value &&
    "shape" in value &&
    "dtype" in value
  );
}

function flatten(value: unknown, out: number[], shape: number[], depth: number): void {
  if (Array.isArray(value)) {
    if (shape.length === depth) {
      shape.push(value.length);
    } else if (shape[depth] !== value.length) {
      throw new ProtocolError("ragged nested array in frame");
    }
    for (const item of value) flatten(item, out, shape, depth + 1);
  } else if (typeof value === "number") {
    out.push(value);
  } else {
    throw new ProtocolError("non-numeric entry in array payload");
  }
}

/** Decode either array form into flat typed data plus its shape. */
export function decodeArray(payload: unknown, kind: "f4" | "i4" = "f4"): DecodedArray {
  if (isArrayPayload(payload)) {
    const raw = atob(payload.b64);
    const bytes = new Uint8Array(raw.length);
    for (let i = 0; i < raw.length; i++) bytes[i] = raw.charCodeAt(i);
    const data =
      payload.dtype === "i4"
        ? new Int32Array(bytes.buffer, 0, bytes.length / 4)
        : new Float32Array(bytes.buffer, 0, bytes.length / 4);
    return { data, shape: payload.shape.slice() };
  }
  const flat: number[] = [];
  const shape: number[] = [];
  flatten(payload, flat, shape, 0);
  const data = kind === "i4" ? Int32Array.from(flat) : Float32Array.from(flat);
  return { data, shape };
}

export type Command =
  | { type: "proxy_pose"; position: number[]; orientation?: number[]; mode?: string }
  | { type: "set_mode"; mode: string }
  | { type: "pause"; paused: boolean }
  | { type: "reset" };
