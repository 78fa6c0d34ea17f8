/**
 * Browser entry point: connect to the session server, render the
 * surface, steer the tool with the pointer, and keep the force gauge
 * scrolling.
 */

import { drawGauge } from "./gauge.js";
import { SessionLink } from "./net.js";
import {
  TravelPlane,
  adjustDepth,
  makeTravelPlane,
  pixelToNdc,
  pointerToProxy,
} from "./picking.js";
import { HelloMessage, SnapshotMessage } from "./protocol.js";
import { ClientState } from "./state.js";
import { SceneView } from "./render.js";

const MODE_KEYS: Record<string, string> = { "1": "push", "2": "pull", "3": "wet", "4": "dry" };

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
}

function wsUrl(): string {
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  return `${scheme}://${location.host}/ws`;
}

function main(): void {
  const viewCanvas = byId<HTMLCanvasElement>("view");
  const gaugeCanvas = byId<HTMLCanvasElement>("gauge");
  const statusLine = byId<HTMLSpanElement>("status");
  const modeButtons = Array.from(
    document.querySelectorAll<HTMLButtonElement>("button[data-mode]"),
  );
  const pauseButton = byId<HTMLButtonElement>("pause");
  const resetButton = byId<HTMLButtonElement>("reset");

  const state = new ClientState();
  const scene = new SceneView(viewCanvas);
  let plane: TravelPlane = makeTravelPlane(0.0, 0.3, 0.12);
  let wheelStep = 0.005;
  let paused = false;

  const link = new SessionLink(wsUrl(), {
    onStatus(status) {
      state.connection = status;
      statusLine.textContent = status;
      statusLine.className = status;
    },
    onMessage(message) {
      const kind = message.type;
      if (kind === "hello") {
        const hello = message as unknown as HelloMessage;
        state.acceptHello(hello);
        scene.setMesh(state.mesh!);
        const zs: number[] = [];
        const rest = state.mesh!.restPositions;
        for (let i = 2; i < rest.length; i += 3) zs.push(rest[i]);
        const top = Math.max(...zs);
        const radius = hello.tool.radius;
        plane = makeTravelPlane(top - 2 * radius, top + 6 * radius, top + 1.5 * radius);
        wheelStep = radius / 4;
        scene.setTravelPlane(plane);
      } else if (kind === "snapshot") {
        state.acceptSnapshot(message as unknown as SnapshotMessage);
      } else if (kind === "error") {
        console.warn("server rejected a command:", message.message);
      }
    },
  });
  link.connect();

  function sizeToWindow(): void {
    const rect = viewCanvas.getBoundingClientRect();
    scene.resize(rect.width * devicePixelRatio, rect.height * devicePixelRatio);
  }
  window.addEventListener("resize", sizeToWindow);
  sizeToWindow();

  viewCanvas.addEventListener("pointermove", (event) => {
    const rect = viewCanvas.getBoundingClientRect();
    const [nx, ny] = pixelToNdc(
      event.clientX - rect.left,
      event.clientY - rect.top,
      rect.width,
      rect.height,
    );
    const hit = pointerToProxy(scene.camera, nx, ny, plane);
    if (hit !== null) state.throttle.submit(hit);
  });

  viewCanvas.addEventListener(
    "wheel",
    (event) => {
      event.preventDefault();
      plane = adjustDepth(plane, event.deltaY, wheelStep);
      scene.setTravelPlane(plane);
    },
    { passive: false },
  );

  function selectMode(mode: string): void {
    state.mode = mode;
    link.send({ type: "set_mode", mode });
    for (const button of modeButtons) {
      button.classList.toggle("active", button.dataset.mode === mode);
    }
  }
  for (const button of modeButtons) {
    button.addEventListener("click", () => selectMode(button.dataset.mode!));
  }
  window.addEventListener("keydown", (event) => {
    const mode = MODE_KEYS[event.key];
    if (mode !== undefined) selectMode(mode);
  });

  pauseButton.addEventListener("click", () => {
    paused = !paused;
    pauseButton.textContent = paused ? "resume" : "pause";
    link.send({ type: "pause", paused });
  });
  resetButton.addEventListener("click", () => {
    link.send({ type: "reset" });
    state.forces.clear();
  });

  const gaugeCtx = gaugeCanvas.getContext("2d")!;

  function frame(nowMs: number): void {
    const pose = state.throttle.take(nowMs);
    if (pose !== null) {
      link.send({ type: "proxy_pose", position: pose, mode: state.mode });
    }
    if (state.snapshot !== null) scene.update(state.snapshot);
    scene.render();
    drawGauge(gaugeCtx, state.forces, {
      width: gaugeCanvas.width,
      height: gaugeCanvas.height,
      windowS: 6.0,
      maxForce: 0,
    });
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);
}

main();
