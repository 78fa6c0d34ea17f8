/**
 * WebSocket link to the session server. Owns reconnect; everything
 * above it just sees messages and a connection flag.
 */

import { Command, frameBytes, parseFrame } from "./protocol.js";

export interface LinkHandlers {
  onMessage: (message: Record<string, unknown>) => void;
  onStatus: (status: "connecting" | "open" | "closed") => void;
}

const RECONNECT_BASE_MS = 500;
const RECONNECT_MAX_MS = 5000;

export class SessionLink {
  private url: string;
  private handlers: LinkHandlers;
  private socket: WebSocket | null = null;
  private attempts = 0;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(url: string, handlers: LinkHandlers) {
    this.url = url;
    this.handlers = handlers;
  }

  connect(): void {
    this.closed = false;
    this.open();
  }

  private open(): void {
    this.handlers.onStatus("connecting");
    const socket = new WebSocket(this.url);
    socket.binaryType = "arraybuffer";
    this.socket = socket;

    socket.onopen = () => {
      this.attempts = 0;
      this.handlers.onStatus("open");
    };
    socket.onmessage = (event: MessageEvent) => {
      if (!(event.data instanceof ArrayBuffer)) return;
      let message: Record<string, unknown>;
      try {
        message = parseFrame(new Uint8Array(event.data));
      } catch {
        return; // a bad frame is the server's bug, not a reason to die
      }
      this.handlers.onMessage(message);
    };
    socket.onclose = () => {
      this.socket = null;
      this.handlers.onStatus("closed");
      if (!this.closed) this.scheduleReconnect();
    };
    socket.onerror = () => {
      socket.close();
    };
  }

  private scheduleReconnect(): void {
    const delay = Math.min(RECONNECT_MAX_MS, RECONNECT_BASE_MS * 2 ** this.attempts);
    this.attempts += 1;
    this.timer = setTimeout(() => this.open(), delay);
  }

  send(command: Command): boolean {
    if (this.socket === null || this.socket.readyState !== WebSocket.OPEN) {
      return false;
    }
    this.socket.send(frameBytes(command));
    return true;
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.socket?.close();
  }
}
