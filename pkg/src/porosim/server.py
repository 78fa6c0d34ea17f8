"""Live state-streaming service around a running session.

Three loops share the work in serve mode. The simulation thread owns all
mutable state: it paces itself against the wall clock, drains the command
mailbox once per step so commands land atomically at step boundaries, and
publishes fully serialized snapshot frames. A haptic thread samples the
force mailbox at the nominal kilohertz rate and keeps arrival statistics.
The network side runs under the ASGI event loop, fanning identical frame
bytes out to every connected client and writing parsed commands into the
command mailbox; it never touches the session directly.

Frames on the wire are binary messages holding an 8-character lowercase
hex byte-length prefix followed by a UTF-8 JSON body. Large numeric
arrays inside a frame ride as base64 little-endian 32-bit payloads;
small ones stay plain JSON lists.
"""

from __future__ import annotations

import asyncio
import base64
import contextlib
import dataclasses
import json
import logging
import threading
import time

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles

from .errors import PorosimError
from .haptics import MODES, Mailbox, Pose, jitter_histogram
from .session import Session, build_summary

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
#: frames per second pushed to clients, independent of the solver rate
SNAPSHOT_RATE = 60.0
#: arrays whose raw payload meets this size go base64 instead of JSON lists
ARRAY_B64_THRESHOLD = 2048
HAPTIC_PERIOD = 1e-3
_PREFIX_LEN = 8


class ProtocolError(PorosimError):
    """A frame that cannot be parsed or fails command validation."""


def encode_array(values: np.ndarray, kind: str = "f4") -> object:
    """JSON-able form of an array: plain nested lists when small, else
    a base64 little-endian payload with its shape."""
    arr = np.ascontiguousarray(values, dtype="<" + kind)
    raw = arr.tobytes()
    if len(raw) < ARRAY_B64_THRESHOLD:
        return arr.tolist()
    return {"shape": list(arr.shape), "dtype": kind,
            "b64": base64.b64encode(raw).decode("ascii")}


def decode_array(payload, kind: str = "f4") -> np.ndarray:
    if isinstance(payload, dict):
        raw = base64.b64decode(payload["b64"])
        arr = np.frombuffer(raw, dtype="<" + payload.get("dtype", kind))
        return arr.reshape(payload["shape"])
    return np.asarray(payload, dtype="<" + kind)


def frame_bytes(message: dict) -> bytes:
    body = json.dumps(message, separators=(",", ":")).encode("utf-8")
    return f"{len(body):08x}".encode("ascii") + body


def parse_frame(data: bytes) -> dict:
    if len(data) < _PREFIX_LEN:
        raise ProtocolError(f"frame shorter than its {_PREFIX_LEN}-byte prefix")
    try:
        length = int(data[:_PREFIX_LEN].decode("ascii"), 16)
    except (UnicodeDecodeError, ValueError) as exc:
        raise ProtocolError("frame prefix is not hexadecimal") from exc
    body = data[_PREFIX_LEN:]
    if len(body) != length:
        raise ProtocolError(
            f"frame length prefix says {length} bytes, got {len(body)}")
    try:
        message = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError("frame body is not valid JSON") from exc
    if not isinstance(message, dict) or "type" not in message:
        raise ProtocolError("frame body must be an object with a 'type'")
    return message


@dataclasses.dataclass(frozen=True)
class Command:
    """One client instruction, applied at the next step boundary."""

    kind: str
    pose: Pose | None = None
    mode: str | None = None
    paused: bool | None = None


@dataclasses.dataclass(frozen=True)
class ControlState:
    """Latest-wins tool control block flowing network -> simulation.

    The network event loop is the only writer, so its read-modify-write
    is safe; the simulation thread just reads the current block at each
    step boundary. ``reset_count`` increments per reset request, letting
    the reader detect edges without a second channel.
    """

    pose: Pose | None = None
    mode: str = "push"
    paused: bool = False
    reset_count: int = 0

    def apply(self, command: Command) -> "ControlState":
        if command.kind == "proxy_pose":
            return dataclasses.replace(
                self, pose=command.pose,
                mode=command.mode if command.mode is not None else self.mode)
        if command.kind == "set_mode":
            return dataclasses.replace(self, mode=command.mode)
        if command.kind == "pause":
            return dataclasses.replace(self, paused=command.paused)
        if command.kind == "reset":
            return dataclasses.replace(self, pose=None,
                                       reset_count=self.reset_count + 1)
        raise ProtocolError(f"unknown command kind {command.kind!r}")


def parse_command(message: dict) -> Command:
    kind = message["type"]
    if kind == "proxy_pose":
        try:
            position = np.asarray(message["position"], dtype=np.float64)
            orientation = np.asarray(
                message.get("orientation", (1.0, 0.0, 0.0, 0.0)),
                dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad proxy_pose fields: {exc}") from exc
        if position.shape != (3,) or orientation.shape != (4,):
            raise ProtocolError("proxy_pose needs position[3], orientation[4]")
        if not (np.all(np.isfinite(position)) and np.all(np.isfinite(orientation))):
            raise ProtocolError("proxy_pose values must be finite")
        mode = message.get("mode")
        if mode is not None and mode not in MODES:
            raise ProtocolError(f"unknown tool mode {mode!r}")
        return Command("proxy_pose", pose=Pose(position, orientation), mode=mode)
    if kind == "set_mode":
        mode = message.get("mode")
        if mode not in MODES:
            raise ProtocolError(f"unknown tool mode {mode!r}")
        return Command("set_mode", mode=mode)
    if kind == "pause":
        paused = message.get("paused")
        if not isinstance(paused, bool):
            raise ProtocolError("pause needs a boolean 'paused'")
        return Command("pause", paused=paused)
    if kind == "reset":
        return Command("reset")
    raise ProtocolError(f"unknown command type {message['type']!r}")


class HapticSampler:
    """Fixed-rate reader of the force mailbox, tracking arrival jitter."""

    def __init__(self, mailbox: Mailbox, period_s: float = HAPTIC_PERIOD):
        self.mailbox = mailbox
        self.period_s = period_s
        self.tick_times: list[float] = []
        self.torn_reads = 0
        self.last_sample = None
        self._stop = threading.Event()
        self._thread = None

    def _run(self):
        next_tick = time.perf_counter()
        last_seq = -1
        last_time = -np.inf
        while not self._stop.is_set():
            next_tick += self.period_s
            seq, sample = self.mailbox.read()
            # each published sequence number pairs with exactly one payload
            # and never decreases, so a repeated sequence with a different
            # sample clock, or a sequence going backwards, means the swap
            # was not atomic
            if seq < last_seq or (seq == last_seq and sample.time_s != last_time):
                self.torn_reads += 1
            last_seq, last_time = seq, sample.time_s
            self.last_sample = sample
            self.tick_times.append(time.perf_counter())
            if len(self.tick_times) > 20000:
                del self.tick_times[:10000]
            delay = next_tick - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
            elif delay < -1.0:
                next_tick = time.perf_counter()

    def start(self):
        self._thread = threading.Thread(target=self._run, name="haptic",
                                        daemon=True)
        self._thread.start()

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    def stats(self) -> dict:
        report = jitter_histogram(self.tick_times)
        report["torn_reads"] = self.torn_reads
        return report


class SessionServer:
    """Owns the simulation and haptic threads behind the ASGI app."""

    def __init__(self, session: Session, snapshot_rate: float = SNAPSHOT_RATE):
        self.session = session
        self.snapshot_rate = float(snapshot_rate)
        self.control_mailbox = Mailbox(ControlState())
        self.snapshot_mailbox = Mailbox(None)
        self.haptics = HapticSampler(session.force_mailbox)
        self._control = ControlState()
        self._resets_applied = 0
        self._failed = False
        self.commands_seen = 0
        self._stop = threading.Event()
        self._thread = None

    # -- command side (network writer) ------------------------------------

    def submit(self, command: Command):
        """Fold a command into the control block for the next step
        boundary. Single writer: the ASGI event loop serializes all
        submissions, so read-modify-write here is safe."""
        _, control = self.control_mailbox.read()
        self.control_mailbox.publish(control.apply(command))
        self.commands_seen += 1

    # -- simulation thread -------------------------------------------------

    def _run(self):
        dt = self.session.config.dt
        next_step = time.perf_counter()
        last_snapshot = 0.0
        snapshot_gap = 1.0 / self.snapshot_rate
        while not self._stop.is_set():
            # one control read per step keeps command application atomic
            # at step boundaries
            _, control = self.control_mailbox.read()
            self._control = control
            if control.reset_count > self._resets_applied:
                self._resets_applied = control.reset_count
                self._failed = False
                self.session.reset()
            if not control.paused and not self._failed:
                try:
                    self.session.step(control.pose, control.mode)
                except PorosimError:
                    log.exception("simulation step failed; stopping until reset")
                    self._failed = True
            now = time.perf_counter()
            if now - last_snapshot >= snapshot_gap:
                last_snapshot = now
                self.snapshot_mailbox.publish(self.snapshot_frame())
            next_step += dt
            delay = next_step - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
            elif delay < -1.0:
                # fell badly behind (debugger, machine stall): resync
                next_step = time.perf_counter()

    def start(self):
        self.haptics.start()
        self._thread = threading.Thread(target=self._run, name="simulation",
                                        daemon=True)
        self._thread.start()

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
        self.haptics.stop()

    # -- frames -------------------------------------------------------------

    def hello_frame(self) -> bytes:
        session = self.session
        return frame_bytes({
            "type": "hello",
            "protocol": PROTOCOL_VERSION,
            "snapshot_rate": self.snapshot_rate,
            "dt": session.config.dt,
            "surface_triangles": encode_array(session.surface.triangles, "i4"),
            "rest_positions": encode_array(session.surface.vertices, "f4"),
            "tet_count": int(len(session.mesh.tets)),
            "tool": {
                "radius": session.tool_radius,
                "modes": list(MODES),
                "kernel_radius": session.config.kernel.radius,
            },
        })

    def snapshot_frame(self) -> bytes:
        session = self.session
        _, force = session.force_mailbox.read()
        stats = session.stats_rows[-1] if session.stats_rows else None
        control = self._control
        message = {
            "type": "snapshot",
            "step": session.step_index,
            "time_s": session.sim_time,
            "paused": control.paused or self._failed,
            "positions": encode_array(session.surface.vertices, "f4"),
            "wetness": encode_array(session.surface.wetness, "f4"),
            "highlight": encode_array(session.surface.highlight, "f4"),
            "force": {
                "time_s": force.time_s,
                "force": [float(x) for x in force.force],
                "mode": force.mode,
                "contact_count": force.contact_count,
            },
            "tool": {
                "mode": control.mode,
                "position": ([float(x) for x in control.pose.position]
                             if control.pose is not None else None),
                "radius": session.tool_radius,
            },
        }
        if stats is not None:
            message["stats"] = {
                "kinetic_energy": stats.kinetic_energy,
                "elastic_energy": stats.elastic_energy,
                "water_mass_total": stats.water_mass_total,
                "saturation_mean": stats.saturation_mean,
                "contact_count": stats.contact_count,
                "step_wall_s": stats.wall_s,
            }
        return frame_bytes(message)

    def stats_document(self) -> dict:
        return {
            "summary": build_summary(self.session),
            "haptics": self.haptics.stats(),
            "commands_seen": self.commands_seen,
            "paused": self._control.paused or self._failed,
        }


def build_app(server: SessionServer, static_dir=None):
    """ASGI application exposing the stream socket and a stats endpoint."""
    clients: dict[int, asyncio.Queue] = {}
    client_counter = {"next": 0}

    @contextlib.asynccontextmanager
    async def lifespan(_app):
        server.start()
        task = asyncio.get_running_loop().create_task(_broadcast())
        try:
            yield
        finally:
            server.stop()
            task.cancel()

    app = FastAPI(title="porosim", version="0.1.0", lifespan=lifespan)

    async def _broadcast():
        """Fan every published snapshot out to every client queue, so all
        clients observe the same byte sequence from their join point."""
        last_seq = -1
        while not server._stop.is_set():
            seq, payload = server.snapshot_mailbox.read()
            if seq != last_seq and payload is not None:
                last_seq = seq
                dead = []
                for cid, queue in clients.items():
                    try:
                        queue.put_nowait(payload)
                    except asyncio.QueueFull:
                        dead.append(cid)
                for cid in dead:
                    clients.pop(cid, None)
            await asyncio.sleep(0.25 / server.snapshot_rate)

    @app.get("/stats")
    def stats():
        return server.stats_document()

    @app.websocket("/ws")
    async def ws_endpoint(socket: WebSocket):
        await socket.accept()
        cid = client_counter["next"]
        client_counter["next"] += 1
        queue: asyncio.Queue = asyncio.Queue(maxsize=600)
        clients[cid] = queue
        await socket.send_bytes(server.hello_frame())

        async def sender():
            while True:
                payload = await queue.get()
                await socket.send_bytes(payload)

        send_task = asyncio.get_running_loop().create_task(sender())
        try:
            while True:
                received = await socket.receive()
                if received["type"] == "websocket.disconnect":
                    break
                data = received.get("bytes")
                if data is None:
                    # text frames still get parsed so a sloppy client sees
                    # a protocol error instead of a dropped connection
                    data = (received.get("text") or "").encode("utf-8")
                try:
                    command = parse_command(parse_frame(data))
                except ProtocolError as exc:
                    await socket.send_bytes(frame_bytes(
                        {"type": "error", "message": str(exc)}))
                    continue
                server.submit(command)
                await socket.send_bytes(frame_bytes(
                    {"type": "ack", "command": command.kind}))
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()
            clients.pop(cid, None)

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="ui")
    return app


def serve(session: Session, port: int, host: str = "127.0.0.1",
          static_dir=None):
    """Run the streaming service until interrupted."""
    import uvicorn

    server = SessionServer(session)
    app = build_app(server, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
