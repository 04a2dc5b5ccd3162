"""Scripted teleoperators for the bundled tasks.

Each agent consumes the runtime view at the 20 Hz command rate and emits
full task-space commands -- both hand setpoints, grasp flags, and an
optional gait trigger -- through the same interface a human operator or a
learned policy uses.  They are deliberately plain state machines; their
job is producing consistent demonstrations for behavior cloning.
"""

from __future__ import annotations

import numpy as np

from .command import HandSetpoint, TaskSpaceCommand
from .locomotion import LocomotionType
from .tasks import PUSH_BOX_HALF


def _wrap(a: float) -> float:
    return float(np.arctan2(np.sin(a), np.cos(a)))


def _to_body(view, p_world: np.ndarray) -> np.ndarray:
    """World point into the yaw-aligned base frame the commands live in."""
    d = np.asarray(p_world, dtype=float) - view.base_pos
    c, s = np.cos(view.base_yaw), np.sin(view.base_yaw)
    return np.array([c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]])


class ScriptedAgent:
    """Shared machinery: sequence numbers, rate limiting, command assembly."""

    hand_step = 0.02              # max setpoint travel per 20 Hz command, m

    def __init__(self):
        self._seq = 0
        self.goal: dict = {}
        self._grasp = {"left": False, "right": False}

    def reset(self, goal: dict):
        self._seq = 0
        self.goal = dict(goal)
        self._grasp = {"left": False, "right": False}

    def act(self, view) -> TaskSpaceCommand | None:
        raise NotImplementedError

    def _command(self, view, hands: dict[str, np.ndarray] | None = None,
                 grasp: dict[str, bool] | None = None, trigger: bool = False,
                 locomotion: LocomotionType = LocomotionType.FORWARD
                 ) -> TaskSpaceCommand:
        # Both hands and both grasp flags go out on every command, and hand
        # targets are approached in bounded steps from the current setpoint:
        # cloning learns per-step deltas, so the demonstrations must consist
        # of consistent small motions rather than far-off absolute jumps.
        setpoints = {}
        for side, ref in view.hands_body.items():
            tgt = (hands or {}).get(side)
            pos = ref.pos.copy()
            if tgt is not None:
                d = np.asarray(tgt, dtype=float) - pos
                n = float(np.linalg.norm(d))
                if n > self.hand_step:
                    d *= self.hand_step / n
                pos = pos + d
            setpoints[side] = HandSetpoint(pos=pos, quat=ref.quat.copy())
        self._grasp.update(grasp or {})
        self._seq += 1
        return TaskSpaceCommand(seq=self._seq, timestamp=view.time,
                                hands=setpoints, grasp=dict(self._grasp),
                                trigger=trigger, locomotion=int(locomotion))


class ScriptedWalker(ScriptedAgent):
    """Turn toward the goal bearing, then step until inside the goal disc.

    The align threshold sits above the largest bearing a shipped goal can
    present before the success latch fires, so demonstrations on the task
    distribution are forward-only; goal-blind cloning cannot time turns,
    and a lone mistimed turn is enough to miss the goal disc.  Turning
    still engages for operator-driven targets far off axis.
    """

    stop_radius = 0.18
    align_threshold = np.radians(65.0)

    def act(self, view) -> TaskSpaceCommand | None:
        if view.fallen:
            return None
        if view.busy:
            return self._command(view)
        d = np.asarray(self.goal["target_xy"]) - view.base_pos[:2]
        dist = float(np.linalg.norm(d))
        if dist <= self.stop_radius:
            return self._command(view)
        bearing = _wrap(np.arctan2(d[1], d[0]) - view.base_yaw)
        if abs(bearing) <= self.align_threshold:
            prim = LocomotionType.FORWARD
        elif dist < 0.35 and abs(bearing) > np.radians(150.0):
            prim = LocomotionType.BACKWARD
        elif dist < 0.45 and np.radians(60.0) < abs(bearing) < np.radians(120.0):
            prim = (LocomotionType.SIDEWALK_LEFT if bearing > 0
                    else LocomotionType.SIDEWALK_RIGHT)
        else:
            prim = (LocomotionType.TURN_LEFT if bearing > 0
                    else LocomotionType.TURN_RIGHT)
        return self._command(view, trigger=True, locomotion=prim)


class ScriptedReacher(ScriptedAgent):
    """Move the hand onto the object, close the grasp, lift it clear.

    The grasp flag comes on during the last stretch of the approach rather
    than at arrival: attachment is retried every tick while the flag is
    held, so closing early costs nothing, and demonstrations whose flag
    leads the contact teach a cloned policy whose own sampled close may lag
    a step or two.  Once on, the flag stays on.
    """

    approach_tol = 0.05           # inside the grasp attach radius
    close_radius = 0.09           # begin closing this far out
    lift_margin = 0.05

    def reset(self, goal: dict):
        super().reset(goal)
        self._phase = "approach"
        self._lift_target: np.ndarray | None = None

    def act(self, view) -> TaskSpaceCommand | None:
        if view.fallen:
            return None
        side = self.goal.get("side", "right")
        obj = view.objects.get(self.goal["object"])
        if obj is None:
            return self._command(view)
        obj_body = _to_body(view, obj[0])
        hand_pos = view.hand_meas_body[side][0]
        dist = float(np.linalg.norm(hand_pos - obj_body))
        closing = self._grasp[side] or dist < self.close_radius
        if self._phase == "approach":
            if dist < self.approach_tol:
                self._phase = "close"
            else:
                return self._command(view, hands={side: obj_body},
                                     grasp={side: closing})
        if self._phase == "close":
            if side in view.grasped:
                self._phase = "lift"
                lift = self.goal["lift_height"] + self.lift_margin
                self._lift_target = obj_body + np.array([0.0, 0.0, lift])
            else:
                return self._command(view, hands={side: obj_body},
                                     grasp={side: True})
        return self._command(view, hands={side: self._lift_target},
                             grasp={side: True})


class ScriptedPusher(ScriptedAgent):
    """Stage the hand behind the box face, then drive it past the goal line.

    The goal line can carry the face beyond the arm's reach, so when the
    push target drifts too far forward the agent tucks the hand, takes one
    forward step, and resumes pushing from the new stance.
    """

    side = "right"
    push_z = 0.60
    stage_gap = 0.10              # staging standoff from the face
    push_gap = 0.02               # setpoint past-contact depth while pushing
    done_margin = 0.02
    reach_limit = 0.30            # body-frame x beyond which a step is due
    tuck_x = 0.10

    def reset(self, goal: dict):
        super().reset(goal)
        self._phase = "stage"

    def act(self, view) -> TaskSpaceCommand | None:
        if view.fallen:
            return None
        obj = view.objects.get(self.goal["object"])
        if obj is None:
            return self._command(view)
        pos = obj[0]
        face_x = float(pos[0]) - PUSH_BOX_HALF[0]
        hand = view.hand_meas_body[self.side][0]
        if self._phase not in ("done", "step"):
            push_x = _to_body(view, np.array([face_x, pos[1],
                                              self.push_z]))[0]
            if push_x > self.reach_limit:
                self._phase = "step"
        if self._phase == "step":
            # keep the hand tucked while the base closes in, otherwise the
            # stance change sweeps it through the box; step only once the
            # hand has actually settled at the tuck point, since stepping
            # with the arm still in flight upsets the stance
            tuck = np.array([self.tuck_x, hand[1], self.push_z
                             - view.base_pos[2]])
            if view.busy:
                return self._command(view, hands={self.side: tuck})
            if float(np.linalg.norm(hand - tuck)) > 0.03:
                return self._command(view, hands={self.side: tuck})
            self._phase = "stage"
            return self._command(view, hands={self.side: tuck}, trigger=True,
                                 locomotion=LocomotionType.FORWARD)
        if view.busy:
            return self._command(view)
        if self._phase == "stage":
            target = _to_body(view, np.array([face_x - self.stage_gap,
                                              pos[1], self.push_z]))
            if float(np.linalg.norm(hand - target)) < 0.04:
                self._phase = "push"
            else:
                return self._command(view, hands={self.side: target})
        if self._phase == "push":
            if pos[0] >= self.goal["x_line"] + self.done_margin:
                self._phase = "done"
            else:
                target = _to_body(view, np.array([face_x - self.push_gap,
                                                  pos[1], self.push_z]))
                return self._command(view, hands={self.side: target})
        target = _to_body(view, np.array([face_x - self.stage_gap,
                                          pos[1], self.push_z]))
        return self._command(view, hands={self.side: target})


SCRIPTED_AGENTS = {
    "WalkToTarget": ScriptedWalker,
    "ReachAndGrasp": ScriptedReacher,
    "PushBox": ScriptedPusher,
}


def scripted_agent(task_name: str) -> ScriptedAgent:
    try:
        cls = SCRIPTED_AGENTS[task_name]
    except KeyError:
        raise ValueError(f"no scripted agent for task {task_name!r}; "
                         f"available: {sorted(SCRIPTED_AGENTS)}") from None
    return cls()
