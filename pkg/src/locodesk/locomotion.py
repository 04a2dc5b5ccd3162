"""Gait planning: footstep primitives, DCM references, swing trajectories.

A locomotion primitive is a fixed-displacement two-step plan (forward,
backward, turn, or side-step).  The center-of-mass reference comes from the
divergent component of motion (DCM) ``xi = c + cdot / omega``: a backward
recursion over piecewise-constant virtual repellent points (VRPs) fixes the
per-phase DCM boundary values, and the COM tracks the DCM through the
closed-form solution of ``cdot = omega (xi - c)``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .quat import (quat_conj, quat_from_rotvec, quat_from_yaw, quat_mul,
                   quat_slerp, quat_to_rotvec, quat_yaw)
from .wbc import PoseRef

# primitive displacement magnitudes
STEP_LENGTH = 0.2
TURN_ANGLE = math.radians(18.0)
SIDE_STEP = 0.1

# phase durations (seconds)
SWING_TIME = 0.35
TRANSITION_TIME = 0.15
FINAL_BALANCE_TIME = 0.3
STEP_TIME = SWING_TIME + 2.0 * TRANSITION_TIME

APEX_HEIGHT = 0.05
NOMINAL_HALF_SEPARATION = 0.075


class LocomotionError(ValueError):
    pass


class LocomotionType(enum.IntEnum):
    FORWARD = 0
    BACKWARD = 1
    TURN_LEFT = 2
    TURN_RIGHT = 3
    SIDEWALK_LEFT = 4
    SIDEWALK_RIGHT = 5


# --- gait phase machine ------------------------------------------------------

BALANCE = "double_support_balance"
PHASES = (BALANCE,
          "contact_transition_start:left", "swing:left",
          "contact_transition_end:left",
          "contact_transition_start:right", "swing:right",
          "contact_transition_end:right")
EVENTS = ("begin:left", "begin:right", "phase_done")


def gait_step(phase: str, event: str) -> str:
    """Advance the gait phase machine by one event.

    Stepping begins only from double support; each step runs contact
    transition out, swing, and contact transition in for one side.  Illegal
    transitions leave the phase unchanged.
    """
    if phase not in PHASES or event not in EVENTS:
        return phase
    if phase == BALANCE:
        if event == "begin:left":
            return "contact_transition_start:left"
        if event == "begin:right":
            return "contact_transition_start:right"
        return phase
    if event != "phase_done":
        return phase
    name, side = phase.split(":")
    if name == "contact_transition_start":
        return f"swing:{side}"
    if name == "swing":
        return f"contact_transition_end:{side}"
    return BALANCE


def phase_busy(phase: str) -> bool:
    return phase != BALANCE


# --- footstep planning -------------------------------------------------------

@dataclass
class Footstep:
    side: str
    pos: np.ndarray          # (3,) world, sole on the ground plane
    yaw: float
    swing_time: float = SWING_TIME
    transition_time: float = TRANSITION_TIME

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float).reshape(3)

    def quat(self) -> np.ndarray:
        return quat_from_yaw(self.yaw)

    def to_dict(self) -> dict:
        return {"side": self.side, "pos": self.pos.tolist(),
                "yaw": self.yaw, "swing_time": self.swing_time,
                "transition_time": self.transition_time}


@dataclass
class FootholdPlan:
    primitive: LocomotionType
    steps: list[Footstep]
    initial: dict[str, Footstep]
    final: dict[str, Footstep]
    midfoot_start: np.ndarray
    midfoot_end: np.ndarray
    yaw_start: float
    yaw_end: float


def _wrap_angle(a: float) -> float:
    return math.atan2(math.sin(a), math.cos(a))


def _midfoot(feet: dict[str, Footstep]):
    pos = 0.5 * (feet["left"].pos + feet["right"].pos)
    dy = _wrap_angle(feet["right"].yaw - feet["left"].yaw)
    yaw = _wrap_angle(feet["left"].yaw + 0.5 * dy)
    return pos, yaw


def _displacement(primitive: LocomotionType):
    """(local dx, dy, dyaw) of the midfoot frame for one primitive."""
    if primitive == LocomotionType.FORWARD:
        return STEP_LENGTH, 0.0, 0.0
    if primitive == LocomotionType.BACKWARD:
        return -STEP_LENGTH, 0.0, 0.0
    if primitive == LocomotionType.TURN_LEFT:
        return 0.0, 0.0, TURN_ANGLE
    if primitive == LocomotionType.TURN_RIGHT:
        return 0.0, 0.0, -TURN_ANGLE
    if primitive == LocomotionType.SIDEWALK_LEFT:
        return 0.0, SIDE_STEP, 0.0
    if primitive == LocomotionType.SIDEWALK_RIGHT:
        return 0.0, -SIDE_STEP, 0.0
    raise LocomotionError(f"unknown primitive {primitive!r}")


def _lead_side(primitive: LocomotionType) -> str:
    """First swing foot: lead with the foot on the side of the motion."""
    if primitive in (LocomotionType.TURN_LEFT, LocomotionType.SIDEWALK_LEFT):
        return "left"
    if primitive in (LocomotionType.TURN_RIGHT, LocomotionType.SIDEWALK_RIGHT):
        return "right"
    return "right"


def plan_footsteps(feet: dict[str, Footstep],
                   primitive: LocomotionType) -> FootholdPlan:
    """Two-step plan realizing one primitive displacement of the midfoot.

    Both feet end at the nominal lateral separation around the displaced
    midfoot frame, so repeated primitives chain without drift.
    """
    mid0, yaw0 = _midfoot(feet)
    dx, dy, dyaw = _displacement(primitive)
    cy, sy = math.cos(yaw0), math.sin(yaw0)
    mid1 = mid0 + np.array([cy * dx - sy * dy, sy * dx + cy * dy, 0.0])
    yaw1 = _wrap_angle(yaw0 + dyaw)
    c1, s1 = math.cos(yaw1), math.sin(yaw1)
    targets = {}
    for side, off in (("left", NOMINAL_HALF_SEPARATION),
                      ("right", -NOMINAL_HALF_SEPARATION)):
        targets[side] = Footstep(
            side=side,
            pos=mid1 + np.array([-s1 * off, c1 * off, 0.0]),
            yaw=yaw1)
    lead = _lead_side(primitive)
    trail = "right" if lead == "left" else "left"
    steps = [targets[lead], targets[trail]]
    return FootholdPlan(primitive=primitive, steps=steps,
                        initial={s: feet[s] for s in ("left", "right")},
                        final=targets, midfoot_start=mid0, midfoot_end=mid1,
                        yaw_start=yaw0, yaw_end=yaw1)


# --- DCM planning ------------------------------------------------------------

@dataclass
class DCMPhase:
    vrp: np.ndarray          # (3,) piecewise-constant virtual repellent point
    duration: float
    xi_ini: np.ndarray = field(default_factory=lambda: np.zeros(3))
    xi_end: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.vrp = np.asarray(self.vrp, dtype=float).reshape(3)


def plan_dcm(vrps: list[np.ndarray], durations: list[float],
             omega: float) -> list[DCMPhase]:
    """Backward recursion fixing per-phase DCM boundary values.

    The terminal DCM equals the last VRP; each phase start follows from
    ``xi_ini = vrp + exp(-omega T) (xi_end - vrp)``.
    """
    if len(vrps) != len(durations) or not vrps:
        raise LocomotionError("VRP and duration lists must match and be non-empty")
    if omega <= 0:
        raise LocomotionError("omega must be positive")
    phases = [DCMPhase(vrp=v, duration=float(T))
              for v, T in zip(vrps, durations)]
    xi_end = phases[-1].vrp.copy()
    for ph in reversed(phases):
        if ph.duration <= 0:
            raise LocomotionError("phase durations must be positive")
        ph.xi_end = xi_end
        ph.xi_ini = ph.vrp + math.exp(-omega * ph.duration) * (xi_end - ph.vrp)
        xi_end = ph.xi_ini
    return phases


def dcm_ref(phases: list[DCMPhase], omega: float, t: float):
    """DCM position and velocity at time ``t`` into the phase sequence."""
    rem = t
    for ph in phases:
        if rem <= ph.duration or ph is phases[-1]:
            tau = min(rem, ph.duration)
            d = ph.xi_ini - ph.vrp
            xi = ph.vrp + math.exp(omega * tau) * d
            xi_dot = omega * math.exp(omega * tau) * d
            if rem > ph.duration:    # hold the terminal DCM
                xi = ph.xi_end
                xi_dot = np.zeros(3)
            return xi, xi_dot
        rem -= ph.duration
    raise LocomotionError("empty phase list")


def com_anchors(phases: list[DCMPhase], c0: np.ndarray,
                omega: float) -> list[np.ndarray]:
    """COM value at the start of each phase when tracking the DCM plan.

    Integrates ``cdot = omega (xi - c)`` exactly across phases starting from
    ``c0``.
    """
    anchors = [np.asarray(c0, dtype=float).reshape(3).copy()]
    for ph in phases[:-1]:
        c, _, _ = _com_phase(ph, anchors[-1], omega, ph.duration)
        anchors.append(c)
    return anchors


def _com_phase(ph: DCMPhase, c_start: np.ndarray, omega: float, tau: float):
    """Closed-form COM state ``tau`` seconds into one phase.

    With xi(t) = p + e^{omega t} d, the solution of cdot = omega (xi - c) is
    c(t) = p + (d/2) e^{omega t} + (c0 - p - d/2) e^{-omega t}.
    """
    p = ph.vrp
    d = ph.xi_ini - p
    half = 0.5 * d
    grow = math.exp(omega * tau)
    decay = math.exp(-omega * tau)
    rest = c_start - p - half
    c = p + half * grow + rest * decay
    cdot = omega * (half * grow - rest * decay)
    xi = p + grow * d
    cddot = omega * (omega * (xi - p) - cdot)
    return c, cdot, cddot


def dcm_to_com(phases: list[DCMPhase], anchors: list[np.ndarray],
               omega: float, t: float):
    """COM position, velocity, and acceleration tracking the DCM plan."""
    rem = t
    for ph, c_start in zip(phases, anchors):
        if rem <= ph.duration or ph is phases[-1]:
            tau = min(rem, ph.duration)
            c, cdot, cddot = _com_phase(ph, c_start, omega, tau)
            if rem > ph.duration:
                # after the plan the DCM holds at xi_end; c decays onto it
                extra = rem - ph.duration
                decay = math.exp(-omega * extra)
                rest = c - ph.xi_end
                c = ph.xi_end + rest * decay
                cdot = -omega * rest * decay
                cddot = omega * omega * rest * decay
            return c, cdot, cddot
        rem -= ph.duration
    raise LocomotionError("empty phase list")


# --- swing trajectory --------------------------------------------------------

def _smoothstep(s: float):
    """Cubic blend and its first two derivatives with respect to s."""
    return 3 * s * s - 2 * s ** 3, 6 * s - 6 * s * s, 6 - 12 * s


def _bump(s: float):
    """Quartic bump equal to 1 at s = 0.5, flat at both ends."""
    v = 16.0 * s * s * (1 - s) * (1 - s)
    dv = 32.0 * s * (1 - s) * (1 - 2 * s)
    ddv = 32.0 * ((1 - 2 * s) ** 2 - 2 * s * (1 - s))
    return v, dv, ddv


def swing_trajectory(pos0, quat0, pos1, quat1, apex: float, duration: float,
                     t: float) -> PoseRef:
    """C1 swing foot reference between two footholds.

    Horizontal motion follows a smoothstep blend; height adds a quartic bump
    whose value at mid-swing is ``max(z0, z1) + apex`` exactly.  Orientation
    slerps between the foothold orientations at the blended rate.
    """
    if duration <= 0:
        raise LocomotionError("swing duration must be positive")
    p0 = np.asarray(pos0, dtype=float).reshape(3)
    p1 = np.asarray(pos1, dtype=float).reshape(3)
    q0 = np.asarray(quat0, dtype=float).reshape(4)
    q1 = np.asarray(quat1, dtype=float).reshape(4)
    s = min(max(t / duration, 0.0), 1.0)
    sig, dsig, ddsig = _smoothstep(s)
    bump, dbump, ddbump = _bump(s)
    inv = 1.0 / duration

    dp = p1 - p0
    pos = p0 + sig * dp
    vel = dp * (dsig * inv)
    acc = dp * (ddsig * inv * inv)

    peak = max(p0[2], p1[2]) + apex
    mid = p0[2] + 0.5 * dp[2]
    lift = peak - mid
    pos[2] += bump * lift
    vel[2] += dbump * lift * inv
    acc[2] += ddbump * lift * inv * inv

    rel = quat_to_rotvec(quat_mul(q1, quat_conj(q0)))
    quat = quat_mul(quat_from_rotvec(rel * sig), q0)
    ang_vel = rel * (dsig * inv)
    ang_acc = rel * (ddsig * inv * inv)

    return PoseRef(pos=pos, quat=quat,
                   vel=np.concatenate([vel, ang_vel]),
                   acc=np.concatenate([acc, ang_acc]))


# --- gait executor -----------------------------------------------------------

@dataclass
class GaitSegment:
    phase: str               # one of PHASES minus BALANCE, or "final_balance"
    side: str | None
    t_start: float
    t_end: float
    target: Footstep | None = None

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


class GaitExecutor:
    """Runs one primitive at a time and produces per-tick references.

    Busy from ``start`` until the final balance phase completes; further
    ``start`` requests while busy are rejected.  References cover the COM
    (from the DCM plan), the torso yaw, both feet, and per-foot load scales
    that ramp the contact force caps through transitions.
    """

    def __init__(self, omega: float, apex: float = APEX_HEIGHT,
                 swing_time: float = SWING_TIME,
                 transition_time: float = TRANSITION_TIME,
                 final_balance_time: float = FINAL_BALANCE_TIME):
        if omega <= 0:
            raise LocomotionError("omega must be positive")
        self.omega = omega
        self.apex = apex
        self.swing_time = swing_time
        self.transition_time = transition_time
        self.final_balance_time = final_balance_time
        self.phase = BALANCE
        self.primitive: LocomotionType | None = None
        self.plan: FootholdPlan | None = None
        self.feet: dict[str, Footstep] = {}
        self._segments: list[GaitSegment] = []
        self._dcm_phases: list[DCMPhase] = []
        self._com_anchors: list[np.ndarray] = []
        self._t = 0.0
        self._z_com = 0.0
        self._torso_from = np.array([1.0, 0, 0, 0])
        self._torso_to = np.array([1.0, 0, 0, 0])
        self._swing_from: dict[str, Footstep] = {}

    @property
    def busy(self) -> bool:
        return bool(self._segments)

    @property
    def mode(self) -> str:
        return "walking" if self.busy else "standing"

    @property
    def gait_code(self) -> int:
        """0 when idle, primitive value + 1 while a primitive runs."""
        if self.busy and self.primitive is not None:
            return int(self.primitive) + 1
        return 0

    def set_stance(self, feet: dict[str, Footstep]):
        """Seed the planner's foothold estimate (projected measured poses)."""
        self.feet = {s: Footstep(side=s, pos=f.pos.copy(), yaw=f.yaw)
                     for s, f in feet.items()}

    def start(self, primitive: LocomotionType, com: np.ndarray) -> bool:
        """Begin a primitive; returns False (no-op) while busy."""
        if self.busy:
            return False
        if not self.feet:
            raise LocomotionError("stance footholds not set")
        primitive = LocomotionType(primitive)
        self.primitive = primitive
        self.plan = plan_footsteps(self.feet, primitive)
        com = np.asarray(com, dtype=float).reshape(3)
        self._z_com = float(com[2])

        tt, st = self.transition_time, self.swing_time
        step_time = st + 2 * tt
        segs = []
        t = 0.0
        self._swing_from = {}
        for step in self.plan.steps:
            side = step.side
            self._swing_from[side] = Footstep(side=side,
                                              pos=self.feet[side].pos.copy(),
                                              yaw=self.feet[side].yaw)
            segs.append(GaitSegment(f"contact_transition_start:{side}", side,
                                    t, t + tt, step))
            segs.append(GaitSegment(f"swing:{side}", side, t + tt,
                                    t + tt + st, step))
            segs.append(GaitSegment(f"contact_transition_end:{side}", side,
                                    t + tt + st, t + step_time, step))
            t += step_time
        segs.append(GaitSegment("final_balance", None, t,
                                t + self.final_balance_time))
        self._segments = segs
        self._t = 0.0

        z = np.array([0.0, 0.0, self._z_com])
        vrps = []
        durations = []
        for step in self.plan.steps:
            stance = "right" if step.side == "left" else "left"
            stance_pos = (self.plan.final[stance].pos
                          if stance == self.plan.steps[0].side
                          else self.feet[stance].pos)
            vrps.append(stance_pos + z)
            durations.append(step_time)
        mid_end = self.plan.midfoot_end + z
        vrps.append(mid_end)
        durations.append(self.final_balance_time)
        self._dcm_phases = plan_dcm(vrps, durations, self.omega)
        self._com_anchors = com_anchors(self._dcm_phases, com, self.omega)
        self._torso_from = quat_from_yaw(self.plan.yaw_start)
        self._torso_to = quat_from_yaw(self.plan.yaw_end)

        self.phase = gait_step(self.phase, f"begin:{self.plan.steps[0].side}")
        self.feet = {s: Footstep(side=s, pos=f.pos.copy(), yaw=f.yaw)
                     for s, f in self.plan.final.items()}
        return True

    def _segment(self) -> GaitSegment | None:
        for seg in self._segments:
            if self._t < seg.t_end:
                return seg
        return None

    def advance(self, dt: float):
        """Move executor time forward, updating the phase machine."""
        if not self.busy:
            return
        before = self._segment()
        self._t += dt
        after = self._segment()
        if after is None:
            # retire the plan: final balance done
            while phase_busy(self.phase):
                self.phase = gait_step(self.phase, "phase_done")
            self._segments = []
            self._dcm_phases = []
            self._com_anchors = []
            self.primitive = None
            return
        if before is not None and after is not before:
            i, j = self._segments.index(before), self._segments.index(after)
            for seg in self._segments[i:j]:
                if seg.phase == "final_balance":
                    while phase_busy(self.phase):
                        self.phase = gait_step(self.phase, "phase_done")
                elif seg.phase.startswith("contact_transition_end"):
                    self.phase = gait_step(self.phase, "phase_done")
                    nxt = self._segments[self._segments.index(seg) + 1]
                    if nxt.side is not None and nxt.phase.startswith(
                            "contact_transition_start"):
                        self.phase = gait_step(self.phase, f"begin:{nxt.side}")
                else:
                    self.phase = gait_step(self.phase, "phase_done")

    def foot_scales(self) -> dict[str, float]:
        scales = {"left": 1.0, "right": 1.0}
        seg = self._segment()
        if seg is None or seg.side is None:
            return scales
        s = (self._t - seg.t_start) / seg.duration
        sig, _, _ = _smoothstep(min(max(s, 0.0), 1.0))
        if seg.phase.startswith("contact_transition_start"):
            scales[seg.side] = 1.0 - sig
        elif seg.phase.startswith("swing"):
            scales[seg.side] = 0.0
        elif seg.phase.startswith("contact_transition_end"):
            scales[seg.side] = sig
        return scales

    def foot_refs(self) -> dict[str, PoseRef]:
        refs = {}
        seg = self._segment()
        swing_side = None
        if seg is not None and seg.phase.startswith("swing"):
            swing_side = seg.side
        for side in ("left", "right"):
            if side == swing_side:
                src = self._swing_from[side]
                tgt = seg.target
                refs[side] = swing_trajectory(
                    src.pos, src.quat(), tgt.pos, tgt.quat(), self.apex,
                    seg.duration, self._t - seg.t_start)
            else:
                hold = self._foothold_now(side)
                refs[side] = PoseRef(pos=hold.pos, quat=hold.quat())
        return refs

    def _foothold_now(self, side: str) -> Footstep:
        """Planned foothold for a non-swinging foot at the current time."""
        if not self.busy or self.plan is None:
            return self.feet[side]
        seg = self._segment()
        for cand in self._segments:
            if cand.side == side and cand.phase.startswith("swing"):
                if self._t >= cand.t_end:
                    return cand.target
                return self._swing_from[side]
        return self.feet[side]

    def com_refs(self):
        """(com, com_vel, com_acc, xi, xi_dot) at the current time."""
        if not self._dcm_phases:
            raise LocomotionError("no active plan")
        c, cdot, cddot = dcm_to_com(self._dcm_phases, self._com_anchors,
                                    self.omega, self._t)
        xi, xi_dot = dcm_ref(self._dcm_phases, self.omega, self._t)
        return c, cdot, cddot, xi, xi_dot

    def torso_quat(self) -> np.ndarray:
        if not self.busy:
            return self._torso_to
        total = self._segments[-1].t_end
        sig, _, _ = _smoothstep(min(max(self._t / total, 0.0), 1.0))
        return quat_slerp(self._torso_from, self._torso_to, sig)

    def plan_dict(self) -> dict:
        """Serializable snapshot of the live plan (for diagnostics export)."""
        if self.plan is None:
            return {}
        return {
            "primitive": int(self.plan.primitive),
            "steps": [s.to_dict() for s in self.plan.steps],
            "midfoot_start": self.plan.midfoot_start.tolist(),
            "midfoot_end": self.plan.midfoot_end.tolist(),
            "yaw_start": self.plan.yaw_start,
            "yaw_end": self.plan.yaw_end,
            "dcm": [{"vrp": ph.vrp.tolist(), "duration": ph.duration,
                     "xi_ini": ph.xi_ini.tolist(),
                     "xi_end": ph.xi_end.tolist()}
                    for ph in self._dcm_phases],
        }

    def export_plan(self, path: str):
        with open(path, "a") as f:
            f.write(json.dumps(self.plan_dict()) + "\n")


def footstep_from_pose(side: str, pos: np.ndarray,
                       quat: np.ndarray) -> Footstep:
    """Project a measured foot pose onto the ground plane foothold."""
    p = np.asarray(pos, dtype=float).copy()
    p[2] = 0.0
    return Footstep(side=side, pos=p, yaw=quat_yaw(np.asarray(quat, float)))
