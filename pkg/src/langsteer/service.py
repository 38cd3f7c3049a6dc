"""Session server: live episodes over a WebSocket, corrections streamed in.

One JSON message per text frame. The server is authoritative: it drives each
session on a fixed-rate clock while a client is attached, pushes SessionState
every tick and a downsampled CostMapFrame whenever the cost stack changes,
and answers corrections with an ack carrying the constraint/goal
classification (or the grounder's error).
"""

from __future__ import annotations

import asyncio
import base64
import contextlib
import json
import math
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import controller as ctl
from .config import AppConfig
from .costmap import compose_position_grid
from .grounding import CorrectionError
from .world import Task, generate_environment, object_type, sample_starts

PROTOCOL_VERSION = 1
FRAME_SIDE = 64  # cost frames are downsampled to FRAME_SIDE^2
RESUME_GRACE_S = 60.0

KINDS = ("hello", "create_session", "session_state", "submit_correction",
         "correction_ack", "correction_error", "cost_map_frame",
         "episode_end", "reset")


@dataclass
class WireMessage:
    kind: str
    session_id: str | None = None
    payload: dict = field(default_factory=dict)


class DecodeError(Exception):
    pass


def encode(msg: WireMessage) -> str:
    body = {"kind": msg.kind, "payload": msg.payload}
    if msg.session_id is not None:
        body["session_id"] = msg.session_id
    return json.dumps(body, sort_keys=True)


def decode(raw: str | bytes) -> WireMessage:
    """Parse one frame; unknown top-level fields are ignored for forward
    compatibility, unknown kinds are rejected."""
    try:
        body = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise DecodeError(f"malformed frame: {e}") from e
    if not isinstance(body, dict) or "kind" not in body:
        raise DecodeError("frame has no kind")
    kind = body["kind"]
    if kind not in KINDS:
        raise DecodeError(f"unknown message kind {kind!r}")
    payload = body.get("payload", {})
    if not isinstance(payload, dict):
        raise DecodeError("payload must be an object")
    return WireMessage(kind=kind, session_id=body.get("session_id"),
                       payload=payload)


def _downsample(grid: np.ndarray, side: int = FRAME_SIDE, reduce="mean") -> np.ndarray:
    res = grid.shape[0]
    f = res // side
    blocks = grid[:side * f, :side * f].reshape(side, f, side, f)
    return blocks.max(axis=(1, 3)) if reduce == "max" else blocks.mean(axis=(1, 3))


def _b64(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype=np.uint8).tobytes()).decode()


class LiveSession:
    """Server-side episode: controller session plus streaming bookkeeping."""

    def __init__(self, session_id: str, env_seed: int, task: Task,
                 planner_seed: int, cfg: AppConfig):
        self.id = session_id
        self.cfg = cfg
        self.env_seed = env_seed
        self.planner_seed = planner_seed
        self.task = task
        self.env = generate_environment(env_seed, cfg.grid)
        self.session = self._fresh()
        self.subscribers: set[asyncio.Queue] = set()
        self.driver: asyncio.Task | None = None
        self.detached_at: float | None = None
        self.pending_acks: list[tuple[str, ctl.CorrectionRecord]] = []
        self._stack_sig = None

    def _fresh(self) -> ctl.Session:
        return ctl.create_session(self.env, self.task, seed=self.planner_seed,
                                  planner_cfg=self.cfg.planner,
                                  base_cfg=self.cfg.base_cost,
                                  weights=self.cfg.weights, codes=self.cfg.codes,
                                  ctrl_cfg=self.cfg.controller)

    def reset(self) -> None:
        self.session = self._fresh()
        self.pending_acks.clear()
        self._stack_sig = None

    # -- outbound messages -------------------------------------------------

    def describe(self) -> WireMessage:
        spec = self.env.spec
        return WireMessage("create_session", self.id, {
            "env_seed": self.env_seed,
            "env_id": self.env.id,
            "world": [spec.world_width, spec.world_height],
            "grid_resolution": spec.grid_resolution,
            "robot_radius": self.cfg.base_cost.robot_radius,
            "objects": [{"name": object_type(o.type_id).name,
                         "color": object_type(o.type_id).color,
                         "footprint": list(o.footprint)} for o in self.env.objects],
            "start": list(self.task.start),
            "goal": list(self.task.goal),
            "max_steps": self.task.max_steps,
        })

    def state_message(self) -> WireMessage:
        s = self.session
        tail = [[round(st.q[0], 2), round(st.q[1], 2)]
                for st in s.trajectory[-50:]]
        return WireMessage("session_state", self.id, {
            "tick": s.tick_count,
            "q": list(s.state.q),
            "qdot": list(s.state.qdot),
            "status": s.status.value,
            "trajectory_tail": tail,
            "constraints": len(s.stack.constraints),
            "language_goal_active": s.stack.active_language_goal is not None,
            "task_cost_active": s.stack.task_cost_active,
        })

    def stack_signature(self):
        s = self.session.stack
        return (len(s.constraints), id(s.active_language_goal), s.task_cost_active)

    def cost_frame(self) -> WireMessage:
        stack = self.session.stack
        grid = compose_position_grid(stack, self.env)
        small = _downsample(grid)
        lo, hi = float(small.min()), float(small.max())
        scaled = np.zeros_like(small) if hi == lo else (small - lo) / (hi - lo) * 255.0
        gc = stack.active_language_goal
        mask_small = (_downsample(gc.mask.grid.astype(np.float64), reduce="max")
                      if gc is not None else np.zeros_like(small))
        return WireMessage("cost_map_frame", self.id, {
            "tick": self.session.tick_count,
            "shape": [FRAME_SIDE, FRAME_SIDE],
            "cost_b64": _b64(np.rint(scaled)),
            "mask_b64": _b64(mask_small > 0),
            "cost_min": lo,
            "cost_max": hi,
        })

    def frame_if_changed(self) -> WireMessage | None:
        sig = self.stack_signature()
        if sig != self._stack_sig:
            self._stack_sig = sig
            return self.cost_frame()
        return None

    # -- inbound -----------------------------------------------------------

    def submit(self, text: str, corr_id: str) -> WireMessage | None:
        """Enqueue a correction; returns an immediate error message or None."""
        try:
            record = ctl.submit_correction(self.session, text)
        except CorrectionError as e:
            return WireMessage("correction_error", self.id,
                               {"corr_id": corr_id, "text": text, "error": str(e)})
        self.pending_acks.append((corr_id, record))
        return None

    def drain_acks(self) -> list[WireMessage]:
        out = []
        ready = [(cid, r) for cid, r in self.pending_acks
                 if r.applied_tick is not None or r.error is not None]
        self.pending_acks = [(cid, r) for cid, r in self.pending_acks
                             if (cid, r) not in ready]
        for cid, r in ready:
            if r.error is not None:
                out.append(WireMessage("correction_error", self.id,
                                       {"corr_id": cid, "text": r.text,
                                        "error": r.error}))
            else:
                out.append(WireMessage("correction_ack", self.id,
                                       {"corr_id": cid, "text": r.text,
                                        "classification": r.kind.value,
                                        "applied_tick": r.applied_tick}))
        return out

    def broadcast(self, msg: WireMessage) -> None:
        for q in list(self.subscribers):
            q.put_nowait(encode(msg))


class SessionHub:
    def __init__(self, cfg: AppConfig, rate_hz: float = 10.0):
        self.cfg = cfg
        self.rate_hz = rate_hz
        self.sessions: dict[str, LiveSession] = {}

    def create(self, payload: dict) -> LiveSession:
        env_seed = int(payload.get("env_seed", 0))
        planner_seed = int(payload.get("planner_seed", 0))
        env = generate_environment(env_seed, self.cfg.grid)
        task_payload = payload.get("task", {})
        if "start" in task_payload:
            start = tuple(float(v) for v in task_payload["start"])
        else:
            start = sample_starts(env, 1, seed=planner_seed)[0]
        if "goal" in task_payload:
            goal = tuple(float(v) for v in task_payload["goal"])
        else:
            from .dataset import enumerate_goals
            goals = enumerate_goals(env)
            if not goals:
                raise ValueError("environment offers no valid goals")
            goal = goals[0][0]
        task = Task(start=start, goal=goal,
                    max_steps=int(task_payload.get("max_steps", 500)))
        live = LiveSession(str(uuid.uuid4()), env_seed, task, planner_seed, self.cfg)
        self.sessions[live.id] = live
        return live

    async def drive(self, live: LiveSession) -> None:
        """Tick the session at the configured rate while anyone is attached."""
        period = 1.0 / self.rate_hz
        try:
            while live.subscribers and live.session.status is ctl.SessionStatus.RUNNING:
                t0 = time.perf_counter()
                ctl.tick(live.session)
                for msg in live.drain_acks():
                    live.broadcast(msg)
                frame = live.frame_if_changed()
                if frame is not None:
                    live.broadcast(frame)
                live.broadcast(live.state_message())
                if live.session.status is not ctl.SessionStatus.RUNNING:
                    target = live.session.task.goal
                    q = live.session.state.q
                    live.broadcast(WireMessage("episode_end", live.id, {
                        "status": live.session.status.value,
                        "ticks": live.session.tick_count,
                        "final_distance": math.hypot(q[0] - target[0],
                                                     q[1] - target[1]),
                    }))
                    break
                await asyncio.sleep(max(0.0, period - (time.perf_counter() - t0)))
        finally:
            live.driver = None

    def ensure_driving(self, live: LiveSession) -> None:
        if live.driver is None or live.driver.done():
            live.driver = asyncio.get_running_loop().create_task(self.drive(live))

    async def reap_detached(self) -> None:
        while True:
            await asyncio.sleep(5.0)
            now = time.monotonic()
            for sid, live in list(self.sessions.items()):
                if (not live.subscribers and live.detached_at is not None
                        and now - live.detached_at > RESUME_GRACE_S):
                    del self.sessions[sid]


def create_app(cfg: AppConfig | None = None, rate_hz: float = 10.0) -> FastAPI:
    hub = SessionHub(cfg or AppConfig(), rate_hz)

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        reaper = asyncio.get_running_loop().create_task(hub.reap_detached())
        yield
        reaper.cancel()

    app = FastAPI(title="langsteer session server", lifespan=lifespan)
    app.state.hub = hub

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        out_queue: asyncio.Queue = asyncio.Queue()
        attached: LiveSession | None = None

        async def pump():
            while True:
                await ws.send_text(await out_queue.get())

        pump_task = asyncio.get_running_loop().create_task(pump())
        await ws.send_text(encode(WireMessage("hello", None, {
            "server": "langsteer", "protocol": PROTOCOL_VERSION,
            "rate_hz": hub.rate_hz})))
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = decode(raw)
                except DecodeError as e:
                    await ws.send_text(encode(WireMessage(
                        "correction_error", None, {"error": str(e)})))
                    continue
                if msg.kind == "hello":
                    sid = msg.payload.get("session_id")
                    if sid and sid in hub.sessions:
                        if attached is not None:
                            attached.subscribers.discard(out_queue)
                        attached = hub.sessions[sid]
                        attached.subscribers.add(out_queue)
                        attached.detached_at = None
                        await ws.send_text(encode(attached.describe()))
                        await ws.send_text(encode(attached.cost_frame()))
                        hub.ensure_driving(attached)
                elif msg.kind == "create_session":
                    try:
                        attached = hub.create(msg.payload)
                    except Exception as e:
                        await ws.send_text(encode(WireMessage(
                            "correction_error", None, {"error": str(e)})))
                        continue
                    attached.subscribers.add(out_queue)
                    await ws.send_text(encode(attached.describe()))
                    await ws.send_text(encode(attached.state_message()))
                    await ws.send_text(encode(attached.cost_frame()))
                    attached._stack_sig = attached.stack_signature()
                    hub.ensure_driving(attached)
                elif msg.kind == "submit_correction":
                    live = hub.sessions.get(msg.session_id or "")
                    if live is None:
                        await ws.send_text(encode(WireMessage(
                            "correction_error", msg.session_id,
                            {"error": "no such session"})))
                        continue
                    err = live.submit(str(msg.payload.get("text", "")),
                                      str(msg.payload.get("corr_id", "")))
                    if err is not None:
                        await ws.send_text(encode(err))
                elif msg.kind == "reset":
                    live = hub.sessions.get(msg.session_id or "")
                    if live is not None:
                        live.reset()
                        await ws.send_text(encode(live.state_message()))
                        await ws.send_text(encode(live.cost_frame()))
                        hub.ensure_driving(live)
                else:
                    await ws.send_text(encode(WireMessage(
                        "correction_error", msg.session_id,
                        {"error": f"clients may not send {msg.kind}"})))
        except WebSocketDisconnect:
            pass
        finally:
            pump_task.cancel()
            if attached is not None:
                attached.subscribers.discard(out_queue)
                if not attached.subscribers:
                    attached.detached_at = time.monotonic()
    return app


def serve(host: str, port: int, cfg: AppConfig | None = None,
          rate_hz: float = 10.0) -> None:
    import uvicorn

    uvicorn.run(create_app(cfg, rate_hz), host=host, port=port, log_level="warning")
