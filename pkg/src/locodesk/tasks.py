"""Task definitions: seeded resets, goal predicates, outcome latching.

Each task samples its initial object layout and goal from a seeded generator
(identical seeds give bitwise-identical setups), and exposes instantaneous
success/partial predicates that are pure functions of the world.  A
``TaskMonitor`` latches predicate crossings so that reaching a goal once
counts even if the robot later drifts away.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .humanoid import FOOT_FRAMES
from .kinematics import frame_pose
from .model import RobotModel
from .sim import SimObject, WorldState


class TaskError(ValueError):
    pass


@dataclass
class TaskSetup:
    """Sampled initial conditions: objects plus a JSON-able goal."""
    objects: list[SimObject]
    goal: dict


@dataclass(frozen=True)
class TaskDefinition:
    name: str
    time_limit: float
    sample: Callable[[np.random.Generator], TaskSetup]
    success: Callable[[RobotModel, WorldState, dict], bool]
    partial: Callable[[RobotModel, WorldState, dict], bool]


def reset_task(task: TaskDefinition, seed: int) -> TaskSetup:
    """Deterministic task reset: one seed, one setup."""
    return task.sample(np.random.default_rng(seed))


def _find_object(world: WorldState, name: str) -> SimObject | None:
    for obj in world.objects:
        if obj.name == name:
            return obj
    return None


def midfoot_xy(model: RobotModel, world: WorldState) -> np.ndarray:
    pts = [frame_pose(model, world.robot.q, f)[0]
           for f in sorted(FOOT_FRAMES.values())]
    return 0.5 * (pts[0][:2] + pts[1][:2])


# --- WalkToTarget ------------------------------------------------------------

# Goals never enter the policy observation (state-only sensing), so imitation
# can only reproduce the demo distribution; the goal spread is sized against
# the success radius so that a goal-blind straight walk crosses every target.
WALK_RADIUS_RANGE = (1.15, 1.45)
WALK_BEARING_LIMIT = np.radians(8.0)
WALK_SUCCESS_RADIUS = 0.25
WALK_PARTIAL_RADIUS = 0.5


def _walk_sample(rng: np.random.Generator) -> TaskSetup:
    r = rng.uniform(*WALK_RADIUS_RANGE)
    bearing = rng.uniform(-WALK_BEARING_LIMIT, WALK_BEARING_LIMIT)
    target = [float(r * np.cos(bearing)), float(r * np.sin(bearing))]
    return TaskSetup(objects=[], goal={
        "target_xy": target,
        "range": float(r),
        "bearing": float(bearing),
        "success_radius": WALK_SUCCESS_RADIUS,
        "partial_radius": WALK_PARTIAL_RADIUS,
    })


def _walk_distance(model, world, goal) -> float:
    mid = midfoot_xy(model, world)
    return float(np.linalg.norm(mid - np.asarray(goal["target_xy"])))


def _walk_success(model, world, goal) -> bool:
    return _walk_distance(model, world, goal) <= goal["success_radius"]


def _walk_partial(model, world, goal) -> bool:
    return _walk_distance(model, world, goal) <= goal["partial_radius"]


# --- ReachAndGrasp -----------------------------------------------------------

# Sampling box kept inside the grasp attach radius of its own centre: the
# object position is invisible to a state-only policy, so a reach toward the
# mean must still end within attach range of every sample.
REACH_X_RANGE = (0.30, 0.36)
REACH_Y_RANGE = (-0.13, -0.04)
REACH_Z_RANGE = (0.74, 0.80)
REACH_LIFT_HEIGHT = 0.08
REACH_ITEM = "item"


def _reach_sample(rng: np.random.Generator) -> TaskSetup:
    pos = [float(rng.uniform(*REACH_X_RANGE)),
           float(rng.uniform(*REACH_Y_RANGE)),
           float(rng.uniform(*REACH_Z_RANGE))]
    item = SimObject(name=REACH_ITEM, shape="sphere", size=[0.03, 0, 0],
                     mass=0.25, pos=pos, quat=[1, 0, 0, 0], mode="static",
                     graspable=True)
    return TaskSetup(objects=[item], goal={
        "object": REACH_ITEM,
        "object_xyz": pos,
        "start_z": pos[2],
        "lift_height": REACH_LIFT_HEIGHT,
        "side": "right",
    })


def _reach_grasped(world, goal) -> bool:
    return any(world.objects[w.object_index].name == goal["object"]
               for w in world.welds.values())


def _reach_success(model, world, goal) -> bool:
    obj = _find_object(world, goal["object"])
    if obj is None or not _reach_grasped(world, goal):
        return False
    return obj.pos[2] >= goal["start_z"] + goal["lift_height"]


def _reach_partial(model, world, goal) -> bool:
    return _reach_grasped(world, goal)


# --- PushBox -----------------------------------------------------------------

PUSH_X_RANGE = (0.38, 0.44)
PUSH_Y_RANGE = (-0.06, 0.06)
PUSH_GOAL_DISTANCE = 0.10
PUSH_PARTIAL_DISTANCE = 0.04
PUSH_BOX = "box"
PUSH_BOX_HALF = (0.125, 0.125, 0.375)


def _push_sample(rng: np.random.Generator) -> TaskSetup:
    x0 = float(rng.uniform(*PUSH_X_RANGE))
    y0 = float(rng.uniform(*PUSH_Y_RANGE))
    box = SimObject(name=PUSH_BOX, shape="box", size=PUSH_BOX_HALF,
                    mass=1.5, pos=[x0, y0, PUSH_BOX_HALF[2]],
                    quat=[1, 0, 0, 0], mode="planar", mu_ground=0.3)
    return TaskSetup(objects=[box], goal={
        "object": PUSH_BOX,
        "start_x": x0,
        "x_line": x0 + PUSH_GOAL_DISTANCE,
        "partial_line": x0 + PUSH_PARTIAL_DISTANCE,
    })


def _push_success(model, world, goal) -> bool:
    obj = _find_object(world, goal["object"])
    return obj is not None and obj.pos[0] >= goal["x_line"]


def _push_partial(model, world, goal) -> bool:
    obj = _find_object(world, goal["object"])
    return obj is not None and obj.pos[0] >= goal["partial_line"]


# --- registry ----------------------------------------------------------------

TASKS = {
    "WalkToTarget": TaskDefinition(
        name="WalkToTarget", time_limit=30.0, sample=_walk_sample,
        success=_walk_success, partial=_walk_partial),
    "ReachAndGrasp": TaskDefinition(
        name="ReachAndGrasp", time_limit=15.0, sample=_reach_sample,
        success=_reach_success, partial=_reach_partial),
    "PushBox": TaskDefinition(
        name="PushBox", time_limit=20.0, sample=_push_sample,
        success=_push_success, partial=_push_partial),
}


def get_task(name: str) -> TaskDefinition:
    try:
        return TASKS[name]
    except KeyError:
        raise TaskError(f"unknown task {name!r}; "
                        f"available: {sorted(TASKS)}") from None


# --- outcome latching --------------------------------------------------------

@dataclass
class TaskMonitor:
    """Latches goal crossings; precedence fault > success > fall > partial."""

    task: TaskDefinition
    model: RobotModel
    goal: dict
    success_latched: bool = field(default=False, init=False)
    partial_latched: bool = field(default=False, init=False)

    def update(self, world: WorldState):
        if not self.success_latched and self.task.success(self.model, world,
                                                          self.goal):
            self.success_latched = True
        if not self.partial_latched and self.task.partial(self.model, world,
                                                          self.goal):
            self.partial_latched = True

    def outcome(self, world: WorldState) -> str:
        if world.fault:
            return "failure"
        if self.success_latched:
            return "success"
        if world.fallen:
            return "failure"
        if self.partial_latched:
            return "partial"
        return "failure"
