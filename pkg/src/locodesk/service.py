"""Teleoperation service: WebSocket wire protocol around the control loop.

One operator drives one robot.  The control loop runs on its own thread at
the 100 Hz control rate; at every 20 Hz command boundary it drains a
bounded inbox (commands and session actions), applies due commands through
the command pipeline, emits exactly one ack per command, publishes a
state snapshot (latest-wins — a stalled client skips intermediate
states), and appends accepted commands to the active recording.  Network
handlers exchange messages with the loop only through queues.

An optional artificial latency delays command application by a fixed
interval of simulated time, for studying degraded teleoperation without
touching the client.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .command import CONTROL_PERIOD, TaskSpaceCommand
from .dataset import DemoRecord, make_header, save_demo
from .humanoid import FOOT_FRAMES
from .model import RobotModel
from .runtime import TICKS_PER_COMMAND, ControlRuntime, RuntimeView
from .tasks import TaskMonitor, get_task, reset_task

SCHEMA_VERSION = 1
STATE_HZ = 1.0 / (CONTROL_PERIOD * TICKS_PER_COMMAND)


@dataclass
class ServiceConfig:
    task: str = "WalkToTarget"
    seed: int = 0
    latency_ms: float = 0.0       # artificial command delay, simulated time
    demo_dir: str = "demos"
    pace: float = 1.0             # wall-clock speed factor; 0 free-runs
    host: str = "127.0.0.1"
    port: int = 8765

    def to_dict(self) -> dict:
        return {"task": self.task, "seed": self.seed,
                "latency_ms": self.latency_ms, "demo_dir": self.demo_dir,
                "pace": self.pace, "host": self.host, "port": self.port}


@dataclass
class _Pending:
    due: float
    payload: dict


class TeleopCore:
    """Thread-owning session state; transport-agnostic and fully testable.

    Messages enter through ``submit`` and leave through ``outbox`` (acks,
    session events) and ``wait_state`` (latest state snapshot).  With
    ``autostart=False`` tests drive the loop synchronously via ``step``.
    """

    def __init__(self, model: RobotModel, config: ServiceConfig | None = None):
        self.model = model
        self.config = config or ServiceConfig()
        self.runtime = ControlRuntime(model)
        self._inbox: queue.Queue[dict] = queue.Queue(maxsize=256)
        self.outbox: queue.Queue[dict] = queue.Queue(maxsize=1024)
        self._delay: deque[_Pending] = deque()
        self._state: tuple[int, dict] | None = None
        self._state_cond = threading.Condition()
        self._recorder: DemoRecord | None = None
        self._record_count = 0
        self._operator = False
        self._op_lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._reset_world(self.config.task, self.config.seed)

    # --- session state --------------------------------------------------------

    def _reset_world(self, task_name: str, seed: int):
        self.task = get_task(task_name)
        self.seed = int(seed)
        setup = reset_task(self.task, self.seed)
        self.runtime.reset(setup)
        self.goal = setup.goal
        self.monitor = TaskMonitor(self.task, self.model, setup.goal)
        self._delay.clear()
        view = self.runtime.view(self.goal)
        self._initial_hands = {
            side: {"pos": ref.pos.tolist(), "quat": ref.quat.tolist()}
            for side, ref in view.hands_body.items()}
        self._publish(view)

    def hello(self) -> dict:
        return {"v": SCHEMA_VERSION, "type": "hello",
                "model": self.model.hash(), "task": self.task.name,
                "seed": self.seed, "state_hz": STATE_HZ,
                "control_hz": 1.0 / CONTROL_PERIOD}

    def claim(self) -> bool:
        with self._op_lock:
            if self._operator:
                return False
            self._operator = True
            return True

    def release(self):
        with self._op_lock:
            self._operator = False

    # --- client -> loop -------------------------------------------------------

    def submit(self, msg: dict):
        """Queue a client message; structural rejects are acked immediately."""
        if not isinstance(msg, dict) or msg.get("type") not in ("command",
                                                                "session"):
            self._emit(self._ack(_seq_of(msg), False, "malformed message"))
            return
        try:
            self._inbox.put_nowait(msg)
        except queue.Full:
            self._emit(self._ack(_seq_of(msg), False, "command queue full"))

    # --- loop -> client -------------------------------------------------------

    def wait_state(self, after_tick: int, timeout: float = 0.25
                   ) -> tuple[int, dict] | None:
        """Newest state snapshot with tick > after_tick, or None on timeout."""
        deadline = time.monotonic() + timeout
        with self._state_cond:
            while self._state is None or self._state[0] <= after_tick:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                self._state_cond.wait(remaining)
            return self._state

    def latest_state(self) -> dict | None:
        with self._state_cond:
            return None if self._state is None else self._state[1]

    # --- control thread -------------------------------------------------------

    def start(self):
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, daemon=True,
                                        name="teleop-control")
        self._thread.start()

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None

    def _run(self):
        period = (CONTROL_PERIOD / self.config.pace if self.config.pace > 0
                  else 0.0)
        next_at = time.monotonic()
        while not self._stop.is_set():
            self.step()
            if period:
                next_at += period
                delay = next_at - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                else:
                    next_at = time.monotonic()

    def step(self, ticks: int = 1):
        """Advance the control loop; boundary work happens at 20 Hz ticks."""
        for _ in range(ticks):
            if self.runtime.tick_index % TICKS_PER_COMMAND == 0:
                self._drain_inbox()
                view = self.runtime.view(self.goal)
                self._apply_due(view)
                self._publish(view)
            self.runtime.control_tick()
            self.monitor.update(self.runtime.sim.world)

    # --- boundary work --------------------------------------------------------

    def _drain_inbox(self):
        now = self.runtime.tick_index * CONTROL_PERIOD
        while True:
            try:
                msg = self._inbox.get_nowait()
            except queue.Empty:
                return
            if msg["type"] == "session":
                self._session(msg)
            else:
                self._delay.append(_Pending(
                    due=now + self.config.latency_ms / 1000.0, payload=msg))

    def _apply_due(self, view: RuntimeView):
        now = self.runtime.tick_index * CONTROL_PERIOD
        while self._delay and self._delay[0].due <= now:
            payload = self._delay.popleft().payload
            try:
                cmd = TaskSpaceCommand.from_dict(payload)
            except Exception as exc:
                self._emit(self._ack(_seq_of(payload), False,
                                     f"malformed command: {exc}"))
                continue
            res = self.runtime.ingest_command(cmd)
            if res.stale:
                self._emit(self._ack(cmd.seq, False, "stale sequence"))
            elif cmd.trigger and res.trigger_rejected:
                self._emit(self._ack(cmd.seq, False, "gait busy"))
            elif not res.accepted:
                self._emit(self._ack(cmd.seq, False, "rejected"))
            else:
                self._emit(self._ack(cmd.seq, True, None))
                if self._recorder is not None:
                    self._recorder.rows.append({
                        "t": view.time, "tick": self.runtime.tick_index,
                        "obs": view.obs.tolist(),
                        "command": cmd.to_dict()})

    def _session(self, msg: dict):
        action = msg.get("action")
        if action == "start_recording":
            task = msg.get("task", self.task.name)
            seed = int(msg.get("seed", self.seed))
            try:
                self._reset_world(task, seed)
            except KeyError as exc:
                self._event("rejected", f"unknown task: {exc}")
                return
            self._recorder = DemoRecord(header=make_header(
                self.task.name, self.seed, self.model.hash(),
                self._initial_hands, source="teleop"))
            self._event("recording_started",
                        f"{self.task.name} seed {self.seed}")
        elif action == "stop_recording":
            path = self._finish_recording()
            self._event("recording_stopped", path or "no active recording")
        elif action == "reset":
            self._finish_recording()
            self._reset_world(self.task.name, int(msg.get("seed", self.seed)))
            self._event("reset_done", f"seed {self.seed}")
        elif action == "fault_clear":
            self.runtime.wbc.clear_fault()
            self._event("fault_cleared", "")
        else:
            self._event("rejected", f"unknown action: {action!r}")

    def _finish_recording(self) -> str | None:
        if self._recorder is None:
            return None
        rec, self._recorder = self._recorder, None
        world = self.runtime.sim.world
        outcome = "aborted" if not rec.rows else self.monitor.outcome(world)
        rec.outcome = {"outcome": outcome, "ticks": self.runtime.tick_index,
                       "time": world.time,
                       "state_hash": self.runtime.sim.state_hash(),
                       "goal": self.goal}
        directory = Path(self.config.demo_dir)
        directory.mkdir(parents=True, exist_ok=True)
        self._record_count += 1
        path = directory / (f"{self.task.name}_seed{self.seed}"
                            f"_{self._record_count:03d}.jsonl.gz")
        save_demo(path, rec)
        return str(path)

    # --- message assembly -----------------------------------------------------

    def _publish(self, view: RuntimeView):
        world = self.runtime.sim.world
        feet = {}
        for side, frame in FOOT_FRAMES.items():
            pos, quat = self.runtime.sim.frame_pose(frame)
            bp, bq = self.runtime._world_to_body(pos, quat, view.base_pos,
                                                 view.base_yaw)
            feet[side] = {"pos": bp.tolist(), "quat": bq.tolist()}
        msg = {
            "v": SCHEMA_VERSION, "type": "state",
            "tick": self.runtime.tick_index,
            "time": view.time, "busy": view.busy,
            "gait_code": view.gait_code, "fallen": view.fallen,
            "fault": bool(world.fault),
            "base": {"pos": view.base_pos.tolist(),
                     "yaw": float(view.base_yaw)},
            "hands": {s: {"pos": r.pos.tolist(), "quat": r.quat.tolist()}
                      for s, r in view.hands_body.items()},
            "hands_measured": {s: {"pos": p.tolist(), "quat": q.tolist()}
                               for s, (p, q) in view.hand_meas_body.items()},
            "feet": feet,
            "joints": world.robot.joint_q(self.model).tolist(),
            "grasped": sorted(view.grasped),
            "objects": {name: {"pos": p.tolist(), "quat": q.tolist()}
                        for name, (p, q) in view.objects.items()},
            "task": {"name": self.task.name,
                     "success": self.monitor.success_latched,
                     "partial": self.monitor.partial_latched},
            "recording": self._recorder is not None,
            "last_seq": self.runtime.pipeline.last_seq,
        }
        with self._state_cond:
            self._state = (self.runtime.tick_index, msg)
            self._state_cond.notify_all()

    def _ack(self, seq: int, accepted: bool, reason: str | None) -> dict:
        return {"v": SCHEMA_VERSION, "type": "ack", "seq": int(seq),
                "accepted": accepted, "reason": reason}

    def _event(self, event: str, detail: str):
        self._emit({"v": SCHEMA_VERSION, "type": "session_event",
                    "event": event, "detail": detail})

    def _emit(self, msg: dict):
        try:
            self.outbox.put_nowait(msg)
        except queue.Full:      # a dead client's acks are not worth blocking
            pass


def _seq_of(msg) -> int:
    try:
        return int(msg.get("seq", 0))
    except (AttributeError, TypeError, ValueError):
        return 0


# --- transport ----------------------------------------------------------------

def build_app(core: TeleopCore):
    """FastAPI app exposing /teleop (WebSocket), /schema, and /healthz."""
    import asyncio

    from fastapi import FastAPI, WebSocket, WebSocketDisconnect

    app = FastAPI(title="locodesk teleop")
    app.state.core = core

    @app.get("/healthz")
    def healthz():
        return {"ok": True, "tick": core.runtime.tick_index}

    @app.get("/schema")
    def schema():
        path = Path(__file__).resolve().parents[2] / "schema" \
            / "teleop_v1.schema.json"
        return json.loads(path.read_text())

    async def pump_states(ws: WebSocket):
        last = -1
        while True:
            got = await asyncio.to_thread(core.wait_state, last, 0.2)
            if got is not None:
                last = got[0]
                await ws.send_json(got[1])

    async def pump_outbox(ws: WebSocket):
        while True:
            try:
                msg = await asyncio.to_thread(core.outbox.get, True, 0.2)
            except queue.Empty:
                continue
            await ws.send_json(msg)

    @app.websocket("/teleop")
    async def teleop(ws: WebSocket):
        await ws.accept()
        if not core.claim():
            await ws.send_json({"v": SCHEMA_VERSION, "type": "session_event",
                                "event": "rejected",
                                "detail": "another operator is connected"})
            await ws.close(code=1008)
            return
        pumps = []
        try:
            await ws.send_json(core.hello())
            pumps = [asyncio.create_task(pump_states(ws)),
                     asyncio.create_task(pump_outbox(ws))]
            while True:
                core.submit(await ws.receive_json())
        except WebSocketDisconnect:
            pass
        finally:
            for p in pumps:
                p.cancel()
            core.release()

    return app


def serve(model: RobotModel, config: ServiceConfig):
    """Run the teleoperation service until interrupted."""
    import uvicorn

    core = TeleopCore(model, config)
    core.start()
    app = build_app(core)
    try:
        uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    finally:
        core.stop()
