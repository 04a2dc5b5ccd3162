"""Gait planning: DCM recursion, COM tracking, swing arcs, phase machine."""

import math

import numpy as np
import pytest

from locodesk import locomotion as loco
from locodesk.quat import quat_from_yaw, quat_slerp, quat_yaw

OMEGA = math.sqrt(9.81 / 0.575)


def nominal_feet(yaw=0.0, mid=(0.0, 0.0)):
    c, s = math.cos(yaw), math.sin(yaw)
    off = loco.NOMINAL_HALF_SEPARATION
    feet = {}
    for side, o in (("left", off), ("right", -off)):
        feet[side] = loco.Footstep(
            side=side,
            pos=np.array([mid[0] - s * o, mid[1] + c * o, 0.0]),
            yaw=yaw)
    return feet


def simple_phases():
    vrps = [np.array([0.0, 0.1, 0.5]), np.array([0.2, -0.1, 0.5]),
            np.array([0.4, 0.0, 0.5])]
    return loco.plan_dcm(vrps, [0.65, 0.65, 0.3], OMEGA)


# --- state machine -----------------------------------------------------------

def test_gait_step_exhaustive():
    expected = {}
    for phase in loco.PHASES:
        for event in loco.EVENTS:
            expected[(phase, event)] = phase     # default: rejected
    expected[(loco.BALANCE, "begin:left")] = "contact_transition_start:left"
    expected[(loco.BALANCE, "begin:right")] = "contact_transition_start:right"
    for side in ("left", "right"):
        expected[(f"contact_transition_start:{side}", "phase_done")] = \
            f"swing:{side}"
        expected[(f"swing:{side}", "phase_done")] = \
            f"contact_transition_end:{side}"
        expected[(f"contact_transition_end:{side}", "phase_done")] = \
            loco.BALANCE
    for (phase, event), want in expected.items():
        assert loco.gait_step(phase, event) == want, (phase, event)
    # unknown inputs are inert
    assert loco.gait_step("nonsense", "phase_done") == "nonsense"
    assert loco.gait_step(loco.BALANCE, "nonsense") == loco.BALANCE


def test_phase_busy():
    assert not loco.phase_busy(loco.BALANCE)
    for phase in loco.PHASES[1:]:
        assert loco.phase_busy(phase)


# --- footstep plans ----------------------------------------------------------

@pytest.mark.parametrize("primitive,magnitude,kind", [
    (loco.LocomotionType.FORWARD, loco.STEP_LENGTH, "translation"),
    (loco.LocomotionType.BACKWARD, loco.STEP_LENGTH, "translation"),
    (loco.LocomotionType.TURN_LEFT, loco.TURN_ANGLE, "rotation"),
    (loco.LocomotionType.TURN_RIGHT, loco.TURN_ANGLE, "rotation"),
    (loco.LocomotionType.SIDEWALK_LEFT, loco.SIDE_STEP, "translation"),
    (loco.LocomotionType.SIDEWALK_RIGHT, loco.SIDE_STEP, "translation"),
])
def test_primitive_displacements(primitive, magnitude, kind):
    rng = np.random.default_rng(int(primitive))
    yaw = rng.uniform(-np.pi, np.pi)
    mid = rng.uniform(-1.0, 1.0, size=2)
    plan = loco.plan_footsteps(nominal_feet(yaw, mid), primitive)
    shift = np.linalg.norm(plan.midfoot_end[:2] - plan.midfoot_start[:2])
    turn = abs(loco._wrap_angle(plan.yaw_end - plan.yaw_start))
    if kind == "translation":
        assert abs(shift - magnitude) < 1e-9
        assert turn < 1e-9
    else:
        assert shift < 1e-9
        assert abs(turn - magnitude) < 1e-9
    # feet end at nominal separation around the displaced midfoot
    sep = np.linalg.norm(plan.final["left"].pos - plan.final["right"].pos)
    assert abs(sep - 2 * loco.NOMINAL_HALF_SEPARATION) < 1e-9


def test_forward_example():
    plan = loco.plan_footsteps(nominal_feet(0.0, (0.02, 0.0)),
                               loco.LocomotionType.FORWARD)
    assert np.allclose(plan.midfoot_end[:2], [0.22, 0.0], atol=1e-12)
    assert np.allclose(plan.final["left"].pos, [0.22, 0.075, 0.0], atol=1e-12)
    assert np.allclose(plan.final["right"].pos, [0.22, -0.075, 0.0],
                       atol=1e-12)


def test_turn_left_about_midfoot():
    plan = loco.plan_footsteps(nominal_feet(), loco.LocomotionType.TURN_LEFT)
    a = loco.TURN_ANGLE
    want_left = np.array([-math.sin(a) * 0.075, math.cos(a) * 0.075, 0.0])
    assert np.allclose(plan.final["left"].pos, want_left, atol=1e-12)
    assert plan.final["left"].yaw == pytest.approx(a)


def test_lead_foot_convention():
    assert loco._lead_side(loco.LocomotionType.SIDEWALK_LEFT) == "left"
    assert loco._lead_side(loco.LocomotionType.TURN_RIGHT) == "right"
    plan = loco.plan_footsteps(nominal_feet(),
                               loco.LocomotionType.SIDEWALK_LEFT)
    assert plan.steps[0].side == "left"


def test_primitive_chaining():
    feet = nominal_feet(0.0, (0.0, 0.0))
    for _ in range(3):
        plan = loco.plan_footsteps(feet, loco.LocomotionType.FORWARD)
        feet = plan.final
    mid, yaw = loco._midfoot(feet)
    assert np.allclose(mid[:2], [0.6, 0.0], atol=1e-9)
    assert abs(yaw) < 1e-12


# --- DCM plan ----------------------------------------------------------------

def test_terminal_dcm_is_final_vrp():
    phases = simple_phases()
    assert np.abs(phases[-1].xi_end - phases[-1].vrp).max() <= 1e-6
    # continuity: each phase ends where the next begins
    for a, b in zip(phases, phases[1:]):
        assert np.allclose(a.xi_end, b.xi_ini, atol=1e-12)


def test_backward_recursion_matches_rk4():
    phases = simple_phases()
    omega = OMEGA

    # forward-integrate the piecewise-constant-VRP dynamics phase by phase
    xi = phases[0].xi_ini.copy()
    for ph in phases:
        steps = int(round(ph.duration / 1e-3))
        h = ph.duration / steps
        f = lambda y: omega * (y - ph.vrp)
        for _ in range(steps):
            k1 = f(xi)
            k2 = f(xi + h / 2 * k1)
            k3 = f(xi + h / 2 * k2)
            k4 = f(xi + h * k3)
            xi = xi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        assert np.abs(xi - ph.xi_end).max() <= 1e-5
    assert np.abs(xi - phases[-1].xi_end).max() <= 1e-5

    # pointwise: closed form against the recursion boundary values
    for frac in (0.0, 0.3, 0.7, 1.0):
        for k, ph in enumerate(phases):
            t0 = sum(p.duration for p in phases[:k])
            xi_ref, _ = loco.dcm_ref(phases, omega, t0 + frac * ph.duration)
            want = ph.vrp + math.exp(omega * frac * ph.duration) \
                * (ph.xi_ini - ph.vrp)
            assert np.abs(xi_ref - want).max() <= 1e-9


def test_com_tracks_dcm_identity():
    phases = simple_phases()
    c0 = np.array([0.01, 0.12, 0.5])
    anchors = loco.com_anchors(phases, c0, OMEGA)
    total = sum(ph.duration for ph in phases)
    for t in np.linspace(0.0, total, 97):
        c, cdot, _ = loco.dcm_to_com(phases, anchors, OMEGA, float(t))
        xi, _ = loco.dcm_ref(phases, OMEGA, float(t))
        assert np.abs(c + cdot / OMEGA - xi).max() <= 1e-9


def test_com_closed_form_matches_rk4():
    phases = simple_phases()
    c0 = np.array([0.01, 0.12, 0.5])
    anchors = loco.com_anchors(phases, c0, OMEGA)
    c = c0.copy()
    h = 5e-4
    total = sum(ph.duration for ph in phases)
    n = int(round(total / h))
    f = lambda t, y: OMEGA * (loco.dcm_ref(phases, OMEGA, min(t, total))[0] - y)
    for i in range(n):
        t = i * h
        k1 = f(t, c)
        k2 = f(t + h / 2, c + h / 2 * k1)
        k3 = f(t + h / 2, c + h / 2 * k2)
        k4 = f(t + h, c + h * k3)
        c = c + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    want, _, _ = loco.dcm_to_com(phases, anchors, OMEGA, total)
    assert np.abs(c - want).max() <= 1e-5


def test_com_converges_after_plan():
    phases = simple_phases()
    anchors = loco.com_anchors(phases, np.array([0.0, 0.1, 0.5]), OMEGA)
    total = sum(ph.duration for ph in phases)
    c, cdot, _ = loco.dcm_to_com(phases, anchors, OMEGA, total + 3.0)
    assert np.abs(c - phases[-1].vrp).max() < 1e-4
    assert np.abs(cdot).max() < 1e-3


def test_plan_dcm_validation():
    with pytest.raises(loco.LocomotionError):
        loco.plan_dcm([], [], OMEGA)
    with pytest.raises(loco.LocomotionError):
        loco.plan_dcm([np.zeros(3)], [1.0], -1.0)
    with pytest.raises(loco.LocomotionError):
        loco.plan_dcm([np.zeros(3)], [0.0], OMEGA)


# --- swing trajectory --------------------------------------------------------

def test_swing_endpoints_and_apex():
    p0 = np.array([0.0, 0.1, 0.0])
    p1 = np.array([0.2, 0.1, 0.02])
    q0 = quat_from_yaw(0.0)
    q1 = quat_from_yaw(0.3)
    T = loco.SWING_TIME
    start = loco.swing_trajectory(p0, q0, p1, q1, 0.05, T, 0.0)
    end = loco.swing_trajectory(p0, q0, p1, q1, 0.05, T, T)
    mid = loco.swing_trajectory(p0, q0, p1, q1, 0.05, T, T / 2)
    assert np.allclose(start.pos, p0, atol=1e-12)
    assert np.allclose(end.pos, p1, atol=1e-12)
    assert np.abs(start.vel).max() < 1e-12
    assert np.abs(end.vel).max() < 1e-12
    assert mid.pos[2] == pytest.approx(max(p0[2], p1[2]) + 0.05, abs=1e-12)
    assert quat_yaw(mid.quat) == pytest.approx(0.15, abs=1e-9)


def test_swing_orientation_slerp():
    q0 = quat_from_yaw(-0.4)
    q1 = quat_from_yaw(0.9)
    T = 0.4
    for t in (0.1, 0.2, 0.33):
        ref = loco.swing_trajectory(np.zeros(3), q0, np.ones(3), q1, 0.04,
                                    T, t)
        s = t / T
        sig = 3 * s * s - 2 * s ** 3
        want = quat_slerp(q0, q1, sig)
        assert np.abs(ref.quat - want).max() < 1e-9


def test_swing_c1_continuity():
    p0 = np.array([0.0, -0.1, 0.0])
    p1 = np.array([0.15, -0.05, 0.01])
    q0 = quat_from_yaw(0.1)
    q1 = quat_from_yaw(-0.2)
    T = 0.35
    h = 1e-6
    for t in (0.07, 0.17, 0.28):
        a = loco.swing_trajectory(p0, q0, p1, q1, 0.05, T, t - h)
        b = loco.swing_trajectory(p0, q0, p1, q1, 0.05, T, t + h)
        c = loco.swing_trajectory(p0, q0, p1, q1, 0.05, T, t)
        fd_vel = (b.pos - a.pos) / (2 * h)
        assert np.abs(fd_vel - c.vel[:3]).max() < 1e-5
        assert np.abs(b.vel - a.vel).max() < 1e-4


def test_swing_rejects_bad_duration():
    with pytest.raises(loco.LocomotionError):
        loco.swing_trajectory(np.zeros(3), quat_from_yaw(0), np.ones(3),
                              quat_from_yaw(0), 0.05, 0.0, 0.0)


# --- executor ----------------------------------------------------------------

def make_executor():
    ex = loco.GaitExecutor(OMEGA)
    ex.set_stance(nominal_feet(0.0, (0.02, 0.0)))
    return ex


def run_to_completion(ex, dt=0.01, limit=10.0):
    t = 0.0
    while ex.busy and t < limit:
        ex.advance(dt)
        t += dt
    return t


def test_executor_busy_gating():
    ex = make_executor()
    com = np.array([0.02, 0.0, 0.575])
    assert ex.start(loco.LocomotionType.FORWARD, com)
    assert ex.busy
    assert ex.mode == "walking"
    # every start attempt while busy is rejected
    rejected = 0
    for prim in loco.LocomotionType:
        if not ex.start(prim, com):
            rejected += 1
    assert rejected == len(loco.LocomotionType)
    run_to_completion(ex)
    assert not ex.busy
    assert ex.mode == "standing"
    assert ex.gait_code == 0


def test_executor_gait_code():
    ex = make_executor()
    ex.start(loco.LocomotionType.TURN_LEFT, np.array([0.02, 0.0, 0.575]))
    assert ex.gait_code == int(loco.LocomotionType.TURN_LEFT) + 1


def test_executor_phase_sequence():
    ex = make_executor()
    ex.start(loco.LocomotionType.FORWARD, np.array([0.02, 0.0, 0.575]))
    seen = [ex.phase]
    for _ in range(200):
        ex.advance(0.01)
        if ex.phase != seen[-1]:
            seen.append(ex.phase)
        if not ex.busy:
            break
    assert seen == [
        "contact_transition_start:right", "swing:right",
        "contact_transition_end:right",
        "contact_transition_start:left", "swing:left",
        "contact_transition_end:left",
        loco.BALANCE,
    ]


def test_executor_foot_scales_ramp():
    ex = make_executor()
    ex.start(loco.LocomotionType.FORWARD, np.array([0.02, 0.0, 0.575]))
    scales_seen = []
    while ex.busy:
        s = ex.foot_scales()
        scales_seen.append(s)
        assert 0.0 <= s["left"] <= 1.0 and 0.0 <= s["right"] <= 1.0
        ex.advance(0.005)
    # the lead (right) foot fully unloads during its swing
    assert any(s["right"] == 0.0 for s in scales_seen)
    assert any(s["left"] == 0.0 for s in scales_seen)
    assert scales_seen[0]["right"] == pytest.approx(1.0)


def test_executor_foot_refs_continuous():
    ex = make_executor()
    ex.start(loco.LocomotionType.FORWARD, np.array([0.02, 0.0, 0.575]))
    prev = ex.foot_refs()
    dt = 0.002
    while ex.busy:
        ex.advance(dt)
        cur = ex.foot_refs()
        for side in ("left", "right"):
            jump = np.abs(cur[side].pos - prev[side].pos).max()
            assert jump < 0.02, f"{side} foot reference jumped {jump}"
        prev = cur
    final = ex.foot_refs()
    assert np.allclose(final["right"].pos[:2], [0.22, -0.075], atol=1e-9)
    assert np.allclose(final["left"].pos[:2], [0.22, 0.075], atol=1e-9)


def test_executor_com_refs_identity_and_continuity():
    ex = make_executor()
    com0 = np.array([0.018, 0.002, 0.575])
    ex.start(loco.LocomotionType.FORWARD, com0)
    c_first, _, _, _, _ = ex.com_refs()
    assert np.allclose(c_first, com0, atol=1e-12)
    prev = c_first
    while ex.busy:
        ex.advance(0.005)
        if not ex.busy:
            break
        c, cdot, _, xi, _ = ex.com_refs()
        assert np.abs(c + cdot / OMEGA - xi).max() <= 1e-9
        assert np.abs(c - prev).max() < 0.01
        prev = c


def test_executor_start_requires_stance():
    ex = loco.GaitExecutor(OMEGA)
    with pytest.raises(loco.LocomotionError):
        ex.start(loco.LocomotionType.FORWARD, np.zeros(3))


def test_executor_plan_export(tmp_path):
    ex = make_executor()
    ex.start(loco.LocomotionType.FORWARD, np.array([0.02, 0.0, 0.575]))
    path = tmp_path / "plan.jsonl"
    ex.export_plan(str(path))
    import json
    row = json.loads(path.read_text().strip())
    assert row["primitive"] == int(loco.LocomotionType.FORWARD)
    assert len(row["steps"]) == 2
    assert len(row["dcm"]) == 3


def test_footstep_from_pose():
    fs = loco.footstep_from_pose("left", np.array([0.1, 0.2, 0.05]),
                                 quat_from_yaw(0.7))
    assert fs.pos[2] == 0.0
    assert fs.yaw == pytest.approx(0.7)
