"""Task-space command ingestion and interpolation.

Operator commands arrive at 20 Hz with hand pose setpoints expressed in the
body (pelvis) frame.  Each accepted setpoint starts a fresh cubic Hermite
segment from the currently interpolated hand state, so the 100 Hz samples
remain C1 across command boundaries.  Segments end with zero velocity and
later samples hold the terminal pose.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .locomotion import LocomotionType
from .quat import quat_conj, quat_from_rotvec, quat_mul, quat_normalize, \
    quat_to_rotvec
from .wbc import PoseRef

COMMAND_PERIOD = 0.05
CONTROL_PERIOD = 0.01

# reachable hand box in the body frame (pelvis-relative), meters
WORKSPACE_LOWER = np.array([-0.35, -0.45, -0.50])
WORKSPACE_UPPER = np.array([0.45, 0.45, 0.35])

HAND_SIDES = ("left", "right")


class CommandError(ValueError):
    pass


@dataclass
class HandSetpoint:
    pos: np.ndarray
    quat: np.ndarray

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float).reshape(3)
        self.quat = quat_normalize(np.asarray(self.quat,
                                              dtype=float).reshape(4))


@dataclass
class TaskSpaceCommand:
    """One operator command: hand setpoints, grasps, and a gait trigger."""

    seq: int
    timestamp: float
    hands: dict[str, HandSetpoint]
    grasp: dict[str, bool]
    trigger: bool = False
    locomotion: int = int(LocomotionType.FORWARD)

    def __post_init__(self):
        for side in self.hands:
            if side not in HAND_SIDES:
                raise CommandError(f"unknown hand side {side!r}")
        self.locomotion = int(self.locomotion)
        if self.trigger:
            LocomotionType(self.locomotion)   # must name a primitive

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "hands": {s: {"pos": h.pos.tolist(), "quat": h.quat.tolist()}
                      for s, h in self.hands.items()},
            "grasp": {s: bool(v) for s, v in self.grasp.items()},
            "trigger": bool(self.trigger),
            "locomotion": int(self.locomotion),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpaceCommand":
        return cls(
            seq=int(d["seq"]),
            timestamp=float(d["timestamp"]),
            hands={s: HandSetpoint(pos=np.array(h["pos"]),
                                   quat=np.array(h["quat"]))
                   for s, h in d.get("hands", {}).items()},
            grasp={s: bool(v) for s, v in d.get("grasp", {}).items()},
            trigger=bool(d.get("trigger", False)),
            locomotion=int(d.get("locomotion", 0)),
        )


@dataclass
class HermiteSegment:
    """Cubic Hermite position segment with constant-rate orientation slerp.

    Starts from ``(p0, v0, q0)`` and reaches ``(p1, q1)`` with zero terminal
    velocity after ``duration`` seconds.
    """

    p0: np.ndarray
    v0: np.ndarray
    q0: np.ndarray
    p1: np.ndarray
    q1: np.ndarray
    duration: float = COMMAND_PERIOD
    rel: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.duration <= 0:
            raise CommandError("segment duration must be positive")
        self.p0 = np.asarray(self.p0, dtype=float).reshape(3)
        self.v0 = np.asarray(self.v0, dtype=float).reshape(3)
        self.p1 = np.asarray(self.p1, dtype=float).reshape(3)
        self.q0 = quat_normalize(np.asarray(self.q0, dtype=float).reshape(4))
        self.q1 = quat_normalize(np.asarray(self.q1, dtype=float).reshape(4))
        self.rel = quat_to_rotvec(quat_mul(self.q1, quat_conj(self.q0)))

    def eval(self, t: float) -> PoseRef:
        T = self.duration
        if t >= T:
            return PoseRef(pos=self.p1.copy(), quat=self.q1.copy())
        s = max(t, 0.0) / T
        h00 = 2 * s ** 3 - 3 * s ** 2 + 1
        h10 = s ** 3 - 2 * s ** 2 + s
        h01 = -2 * s ** 3 + 3 * s ** 2
        dh00 = 6 * s ** 2 - 6 * s
        dh10 = 3 * s ** 2 - 4 * s + 1
        dh01 = -6 * s ** 2 + 6 * s
        ddh00 = 12 * s - 6
        ddh10 = 6 * s - 4
        ddh01 = -12 * s + 6
        pos = h00 * self.p0 + h10 * T * self.v0 + h01 * self.p1
        vel = (dh00 * self.p0 + dh10 * T * self.v0 + dh01 * self.p1) / T
        acc = (ddh00 * self.p0 + ddh10 * T * self.v0 + ddh01 * self.p1) / T ** 2
        quat = quat_mul(quat_from_rotvec(self.rel * s), self.q0)
        omega = self.rel / T
        return PoseRef(pos=pos, quat=quat,
                       vel=np.concatenate([vel, omega]),
                       acc=np.concatenate([acc, np.zeros(3)]))


def hermite_segment(prev: PoseRef, setpoint: HandSetpoint,
                    duration: float = COMMAND_PERIOD) -> HermiteSegment:
    """Segment from the current interpolated state to a new setpoint."""
    return HermiteSegment(p0=prev.pos, v0=prev.vel[:3], q0=prev.quat,
                          p1=setpoint.pos, q1=setpoint.quat,
                          duration=duration)


@dataclass
class IngestResult:
    accepted: bool
    stale: bool = False
    clamped: dict[str, bool] = field(default_factory=dict)
    trigger_forwarded: bool = False
    trigger_rejected: bool = False
    locomotion: int | None = None


class CommandPipeline:
    """Per-hand segment state plus sequencing, clamping, and gait gating."""

    def __init__(self, workspace_lower: np.ndarray = WORKSPACE_LOWER,
                 workspace_upper: np.ndarray = WORKSPACE_UPPER,
                 period: float = COMMAND_PERIOD):
        self.lower = np.asarray(workspace_lower, dtype=float).reshape(3)
        self.upper = np.asarray(workspace_upper, dtype=float).reshape(3)
        if np.any(self.lower >= self.upper):
            raise CommandError("workspace box is empty")
        self.period = period
        self.last_seq = -1
        self.grasp = {s: False for s in HAND_SIDES}
        self._segments: dict[str, HermiteSegment] = {}
        self._seg_t0: dict[str, float] = {}
        self._hold: dict[str, PoseRef] = {}

    def reset(self, hands: dict[str, PoseRef]):
        """Set the initial hand poses (body frame); clears segments."""
        self._segments = {}
        self._seg_t0 = {}
        self._hold = {s: PoseRef(pos=r.pos.copy(), quat=r.quat.copy())
                      for s, r in hands.items()}
        self.last_seq = -1
        self.grasp = {s: False for s in HAND_SIDES}

    def ingest(self, cmd: TaskSpaceCommand, now: float,
               busy: bool) -> IngestResult:
        """Apply one command at time ``now``.

        Stale sequence numbers drop the whole command.  Hand setpoints are
        clamped to the workspace box (flagged per hand) and always start new
        segments; the gait trigger only forwards when the gait is idle.
        """
        if cmd.seq <= self.last_seq:
            return IngestResult(accepted=False, stale=True)
        self.last_seq = cmd.seq
        res = IngestResult(accepted=True)
        for side, sp in cmd.hands.items():
            if side not in self._hold:
                raise CommandError(f"pipeline not reset with hand {side!r}")
            target = np.clip(sp.pos, self.lower, self.upper)
            res.clamped[side] = bool(np.any(target != sp.pos))
            current = self.sample_hand(side, now)
            self._segments[side] = hermite_segment(
                current, HandSetpoint(pos=target, quat=sp.quat), self.period)
            self._seg_t0[side] = now
        for side, g in cmd.grasp.items():
            self.grasp[side] = bool(g)
        if cmd.trigger:
            if busy:
                res.trigger_rejected = True
            else:
                res.trigger_forwarded = True
                res.locomotion = int(cmd.locomotion)
        return res

    def sample_hand(self, side: str, now: float) -> PoseRef:
        seg = self._segments.get(side)
        if seg is None:
            hold = self._hold[side]
            return PoseRef(pos=hold.pos.copy(), quat=hold.quat.copy())
        return seg.eval(now - self._seg_t0[side])

    def sample(self, now: float) -> dict[str, PoseRef]:
        """Interpolated body-frame hand references at time ``now``."""
        return {side: self.sample_hand(side, now) for side in self._hold}
