"""Task resets, goal predicates, and outcome latching."""

import json

import numpy as np
import pytest
from scipy import stats

from locodesk import tasks
from locodesk.model import RobotState, load_default_model, nominal_state
from locodesk.sim import SimObject, Simulator, Weld, WorldState
from locodesk.tasks import (TASKS, TaskError, TaskMonitor, get_task,
                            midfoot_xy, reset_task)


@pytest.fixture(scope="module")
def humanoid():
    return load_default_model()


def make_world(model, objects=(), welds=None):
    return WorldState(robot=nominal_state(model), objects=list(objects),
                      welds=welds or {})


def test_registry_contains_all_tasks():
    assert set(TASKS) == {"WalkToTarget", "ReachAndGrasp", "PushBox"}
    assert get_task("WalkToTarget").time_limit == 30.0
    with pytest.raises(TaskError):
        get_task("JugglingFlamingTorches")


def test_reset_is_bitwise_deterministic():
    for name in TASKS:
        a = reset_task(get_task(name), seed=1234)
        b = reset_task(get_task(name), seed=1234)
        assert json.dumps(a.goal, sort_keys=True) == \
            json.dumps(b.goal, sort_keys=True)
        assert len(a.objects) == len(b.objects)
        for oa, ob in zip(a.objects, b.objects):
            assert np.array_equal(oa.pos, ob.pos)
            assert np.array_equal(oa.quat, ob.quat)
        c = reset_task(get_task(name), seed=1235)
        assert json.dumps(a.goal, sort_keys=True) != \
            json.dumps(c.goal, sort_keys=True)


def test_goal_dicts_are_json_serializable():
    for name in TASKS:
        setup = reset_task(get_task(name), seed=7)
        json.dumps(setup.goal)


def test_walk_reset_distribution_uniform():
    task = get_task("WalkToTarget")
    rs, bearings = [], []
    for seed in range(1000):
        goal = reset_task(task, seed).goal
        rs.append(goal["range"])
        bearings.append(goal["bearing"])
    lo, hi = tasks.WALK_RADIUS_RANGE
    rs = (np.array(rs) - lo) / (hi - lo)
    limit = tasks.WALK_BEARING_LIMIT
    bearings = (np.array(bearings) + limit) / (2 * limit)
    assert stats.kstest(rs, "uniform").pvalue > 0.01
    assert stats.kstest(bearings, "uniform").pvalue > 0.01


def _unit(values, rng):
    return (np.asarray(values) - rng[0]) / (rng[1] - rng[0])


def test_reach_and_push_reset_distributions_uniform():
    reach = get_task("ReachAndGrasp")
    xs = np.array([reset_task(reach, s).goal["object_xyz"]
                   for s in range(1000)])
    assert stats.kstest(_unit(xs[:, 0], tasks.REACH_X_RANGE),
                        "uniform").pvalue > 0.01
    assert stats.kstest(_unit(xs[:, 1], tasks.REACH_Y_RANGE),
                        "uniform").pvalue > 0.01
    assert stats.kstest(_unit(xs[:, 2], tasks.REACH_Z_RANGE),
                        "uniform").pvalue > 0.01
    push = get_task("PushBox")
    x0 = np.array([reset_task(push, s).goal["start_x"] for s in range(1000)])
    assert stats.kstest(_unit(x0, tasks.PUSH_X_RANGE),
                        "uniform").pvalue > 0.01


def test_walk_goal_within_stated_ranges():
    task = get_task("WalkToTarget")
    for seed in range(200):
        goal = reset_task(task, seed).goal
        assert tasks.WALK_RADIUS_RANGE[0] <= goal["range"] \
            <= tasks.WALK_RADIUS_RANGE[1]
        assert abs(goal["bearing"]) <= tasks.WALK_BEARING_LIMIT + 1e-12


def test_walk_predicates_use_midfoot(humanoid):
    task = get_task("WalkToTarget")
    world = make_world(humanoid)
    mid = midfoot_xy(humanoid, world)
    goal = {"target_xy": [mid[0] + 0.2, mid[1]], "success_radius": 0.25,
            "partial_radius": 0.5}
    assert task.success(humanoid, world, goal)
    goal_far = dict(goal, target_xy=[mid[0] + 0.4, mid[1]])
    assert not task.success(humanoid, world, goal_far)
    assert task.partial(humanoid, world, goal_far)
    goal_out = dict(goal, target_xy=[mid[0] + 2.0, mid[1]])
    assert not task.partial(humanoid, world, goal_out)


def test_reach_predicates_require_weld_and_lift(humanoid):
    task = get_task("ReachAndGrasp")
    item = SimObject(name="item", shape="sphere", size=[0.03, 0, 0],
                     mass=0.25, pos=[0.3, -0.1, 0.75], quat=[1, 0, 0, 0],
                     mode="static", graspable=True)
    goal = {"object": "item", "start_z": 0.75, "lift_height": 0.08}
    world = make_world(humanoid, [item])
    assert not task.success(humanoid, world, goal)
    assert not task.partial(humanoid, world, goal)
    weld = Weld(side="right", object_index=0, rel_pos=np.zeros(3),
                rel_quat=np.array([1.0, 0, 0, 0]))
    world = make_world(humanoid, [item], {"right": weld})
    assert task.partial(humanoid, world, goal)
    assert not task.success(humanoid, world, goal)     # not lifted yet
    item.pos[2] = 0.75 + 0.09
    assert task.success(humanoid, world, goal)


def test_push_predicates_track_box_line(humanoid):
    task = get_task("PushBox")
    box = SimObject(name="box", shape="box", size=[0.125, 0.125, 0.375],
                    mass=1.5, pos=[0.40, 0.0, 0.375], quat=[1, 0, 0, 0],
                    mode="planar")
    goal = {"object": "box", "x_line": 0.50, "partial_line": 0.44}
    world = make_world(humanoid, [box])
    assert not task.partial(humanoid, world, goal)
    box.pos[0] = 0.45
    assert task.partial(humanoid, world, goal)
    assert not task.success(humanoid, world, goal)
    box.pos[0] = 0.51
    assert task.success(humanoid, world, goal)


def test_monitor_latches_success(humanoid):
    task = get_task("WalkToTarget")
    world = make_world(humanoid)
    mid = midfoot_xy(humanoid, world)
    goal = {"target_xy": [float(mid[0]), float(mid[1])],
            "success_radius": 0.25, "partial_radius": 0.5}
    mon = TaskMonitor(task, humanoid, goal)
    mon.update(world)
    assert mon.success_latched
    # walk away: success must stick
    world.robot.q[0] += 3.0
    mon.update(world)
    assert mon.outcome(world) == "success"
    # falling after success still counts
    world.fallen = True
    assert mon.outcome(world) == "success"
    # a fault never counts
    world.fault = True
    assert mon.outcome(world) == "failure"


def test_monitor_partial_and_failure_paths(humanoid):
    task = get_task("WalkToTarget")
    world = make_world(humanoid)
    mid = midfoot_xy(humanoid, world)
    goal = {"target_xy": [mid[0] + 0.4, mid[1]],
            "success_radius": 0.25, "partial_radius": 0.5}
    mon = TaskMonitor(task, humanoid, goal)
    mon.update(world)
    assert mon.partial_latched and not mon.success_latched
    assert mon.outcome(world) == "partial"
    world.fallen = True
    assert mon.outcome(world) == "failure"   # fall outranks partial

    far = TaskMonitor(task, humanoid,
                      dict(goal, target_xy=[mid[0] + 5, mid[1]]))
    far.update(make_world(humanoid))
    assert far.outcome(make_world(humanoid)) == "failure"


def test_reset_setups_run_in_simulator(humanoid):
    """Every task's sampled objects must load into a fresh world."""
    sim = Simulator(humanoid)
    for name in TASKS:
        setup = reset_task(get_task(name), seed=3)
        world = sim.reset(nominal_state(humanoid), setup.objects)
        sim.step(np.zeros(humanoid.n_act))
        assert not world.fault
