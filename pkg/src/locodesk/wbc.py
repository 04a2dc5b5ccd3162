"""Whole-body torque control.

Each 100 Hz tick assembles one convex QP over stacked decision variables
``x = [qdd; f]`` (generalized accelerations and stacked contact point
forces), with weighted task costs and five constraint families:

* floating-base rows of the dynamics must balance through contact forces,
* linearized friction pyramids ``U f >= 0``,
* per-point normal force caps,
* joint acceleration box bounds,
* actuator torque range on the actuated dynamics rows.

The optimal accelerations and forces map to feedforward torques, which a
joint-space PD wrap turns into the final motor command.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from . import kinematics as kin
from .model import RobotModel, RobotState
from .qp import QuadraticProgram, solve
from .quat import mat_to_quat, quat_err_vec, quat_to_mat

log = logging.getLogger(__name__)


class WBCError(ValueError):
    pass


@dataclass
class TaskSpec:
    """One weighted acceleration-tracking objective.

    kind 'pose' tracks a 6-vector frame acceleration, 'orientation' only the
    angular rows of a frame, 'com' the center-of-mass linear acceleration,
    'posture' a joint-space acceleration target.  ``weight`` may be a scalar
    or a per-row vector.
    """

    name: str
    kind: str                      # 'pose' | 'orientation' | 'com' | 'posture'
    accel: np.ndarray
    weight: float | np.ndarray
    frame: str | None = None

    def __post_init__(self):
        self.accel = np.asarray(self.accel, dtype=float)
        if not np.all(np.isfinite(self.accel)):
            raise WBCError(f"task {self.name!r}: non-finite desired acceleration")
        if np.any(np.asarray(self.weight, dtype=float) < 0):
            raise WBCError(f"task {self.name!r}: negative weight")
        if self.kind in ("pose", "orientation") and self.frame is None:
            raise WBCError(f"task {self.name!r}: frame required")


@dataclass
class ContactSpec:
    """A set of contact points on one frame with a linearized friction cone."""

    frame: str
    points: np.ndarray             # (k, 3) offsets in the contact frame
    mu: float = 0.7
    f_max: float = 400.0
    f_des: np.ndarray | None = None  # (k, 3) desired force per point
    weight_force: float = 0.02

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if self.points.shape[0] < 1:
            raise WBCError("a contact needs at least one point")
        if self.mu <= 0:
            raise WBCError("friction coefficient must be positive")
        if self.f_max <= 0:
            raise WBCError("normal force cap must be positive")
        if self.f_des is None:
            self.f_des = np.zeros_like(self.points)
        self.f_des = np.asarray(self.f_des, dtype=float).reshape(-1, 3)
        if self.f_des.shape != self.points.shape:
            raise WBCError("desired force shape mismatch")

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def cone_rows(self) -> np.ndarray:
        """Unit-normalized friction pyramid rows for one point: U f >= 0."""
        mu = self.mu
        rows = np.array([
            [-1.0, 0.0, mu],
            [1.0, 0.0, mu],
            [0.0, -1.0, mu],
            [0.0, 1.0, mu],
        ])
        return rows / np.linalg.norm(rows, axis=1, keepdims=True)


@dataclass
class WBCConfig:
    """Weights, regularizers, bounds, and gains of the controller."""

    w_body: float = 20.0
    w_foot: float = 10.0
    w_hand_standing: float = 5.0
    w_hand_walking: float = 0.5
    w_posture: float = 0.2
    # joints on a base-to-hand chain take their reference from hand-target
    # IK, so the posture pull there is the arm's main position driver
    w_posture_arm: float = 0.3
    w_force: float = 0.02
    # force regularization when tracking measured reactions; modest, so the
    # controller keeps enough force authority to regulate the body
    w_force_measured: float = 0.02
    lambda_qdd: float = 1e-4
    lambda_force: float = 1e-6
    # inner-servo setpoints integrate the optimized accelerations across
    # ticks instead of re-anchoring at the measured state, which gives the
    # task loop integral action against plant mismatch; the leak blends the
    # setpoint back toward measurement and the clamp bounds windup
    setpoint_leak: float = 0.1
    setpoint_clamp: float = 0.2
    qdd_limit: float = 250.0
    tau_limit: np.ndarray | None = None    # default: model effort limits
    kp_body: float = 80.0
    kd_body: float = 18.0
    kp_foot: float = 150.0
    kd_foot: float = 24.0
    kp_hand: float = 100.0
    kd_hand: float = 20.0
    kp_posture: float = 40.0
    kd_posture: float = 6.0
    kp_joint: float = 30.0
    kd_joint: float = 1.5
    # the arms have no wrist, so a commanded palm orientation is usually
    # infeasible at the commanded position; keep it a weak preference or it
    # pins the arm against the position task
    hand_orientation_scale: float = 0.05
    mu: float = 0.7
    f_max: float = 400.0
    dt: float = 0.01

    def __post_init__(self):
        if self.dt <= 0:
            raise WBCError("control period must be positive")
        for name in ("w_body", "w_foot", "w_hand_standing", "w_hand_walking",
                     "w_posture", "w_posture_arm", "w_force",
                     "w_force_measured", "lambda_qdd", "lambda_force",
                     "kp_body", "kd_body", "kp_foot", "kd_foot", "kp_hand",
                     "kd_hand", "kp_posture", "kd_posture", "kp_joint",
                     "kd_joint"):
            if getattr(self, name) < 0:
                raise WBCError(f"{name} must be nonnegative")
        if self.qdd_limit <= 0:
            raise WBCError("acceleration bound must be positive")
        if not 0.0 <= self.setpoint_leak <= 1.0:
            raise WBCError("setpoint leak must lie in [0, 1]")
        if self.setpoint_clamp <= 0:
            raise WBCError("setpoint clamp must be positive")

    def hand_weight(self, mode: str) -> float:
        if mode not in ("standing", "walking"):
            raise WBCError(f"unknown control mode {mode!r}")
        return self.w_hand_standing if mode == "standing" else self.w_hand_walking


@dataclass
class PoseRef:
    """Desired pose, twist, and feedforward acceleration for one frame."""

    pos: np.ndarray
    quat: np.ndarray
    vel: np.ndarray = field(default_factory=lambda: np.zeros(6))
    acc: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float).reshape(3)
        self.quat = np.asarray(self.quat, dtype=float).reshape(4)
        self.vel = np.asarray(self.vel, dtype=float).reshape(6)
        self.acc = np.asarray(self.acc, dtype=float).reshape(6)


@dataclass
class ReferenceFrame:
    """Complete reference set consumed by one control tick.

    ``com``/``com_vel``/``com_acc`` drive the center of mass, ``torso`` the
    body orientation, ``feet``/``hands`` hold per-side pose references, and
    ``posture`` is the joint-space attractor.  ``foot_scales`` maps side name
    to a load fraction in [0, 1]; 0 removes the contact (swing), values in
    between ramp the normal force cap during contact transitions.
    ``contact_forces`` optionally carries measured ground reactions per foot
    frame (one row per corner); when present they become the force targets so
    the solution's base dynamics stay consistent with the actual support.
    """

    com: np.ndarray
    torso: PoseRef
    feet: dict[str, PoseRef]
    hands: dict[str, PoseRef]
    posture: np.ndarray
    com_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    com_acc: np.ndarray = field(default_factory=lambda: np.zeros(3))
    foot_scales: dict[str, float] = field(default_factory=dict)
    contact_forces: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.com = np.asarray(self.com, dtype=float).reshape(3)
        self.com_vel = np.asarray(self.com_vel, dtype=float).reshape(3)
        self.com_acc = np.asarray(self.com_acc, dtype=float).reshape(3)
        self.posture = np.asarray(self.posture, dtype=float)


@dataclass
class TorqueCommand:
    tau_joint: np.ndarray
    tau_cmd: np.ndarray
    qdd: np.ndarray
    forces: dict[str, np.ndarray]
    residuals: dict[str, float]
    status: str
    fault: bool = False
    solve_time: float = 0.0
    # held setpoints for an inner joint servo running faster than the QP
    q_cmd: np.ndarray | None = None
    qd_cmd: np.ndarray | None = None


def task_acceleration(pos_des, quat_des, vel_des, acc_ff,
                      pos_meas, quat_meas, vel_meas, kp, kd) -> np.ndarray:
    """PD-plus-feedforward 6-vector task acceleration for a frame.

    Orientation error is the rotation vector of the error quaternion in the
    world frame; gains may be scalars or 6-vectors.
    """
    err = np.empty(6)
    err[0:3] = np.asarray(pos_des, float) - np.asarray(pos_meas, float)
    err[3:6] = quat_err_vec(np.asarray(quat_des, float),
                            np.asarray(quat_meas, float))
    vel_err = np.asarray(vel_des, float) - np.asarray(vel_meas, float)
    return np.asarray(acc_ff, float) + np.asarray(kp, float) * err \
        + np.asarray(kd, float) * vel_err


def point_acceleration(pos_des, vel_des, acc_ff, pos_meas, vel_meas,
                       kp, kd) -> np.ndarray:
    """PD-plus-feedforward 3-vector acceleration for a point target."""
    return np.asarray(acc_ff, float) \
        + np.asarray(kp, float) * (np.asarray(pos_des, float) - np.asarray(pos_meas, float)) \
        + np.asarray(kd, float) * (np.asarray(vel_des, float) - np.asarray(vel_meas, float))


class _TickData:
    """Dynamics and kinematics computed once and shared within a tick."""

    def __init__(self, model: RobotModel, state: RobotState):
        a = model.arrays
        self.model = model
        self.state = state
        self.A = dyn.crba(a.parent, a.jnt_dof, a.jnt_axis, a.jnt_pos,
                          a.jnt_quat, a.mass, a.com, a.inertia, a.floating,
                          a.n_v, state.q)
        self.bias = dyn.rnea(a.parent, a.jnt_dof, a.jnt_axis, a.jnt_pos,
                             a.jnt_quat, a.mass, a.com, a.inertia, a.floating,
                             a.n_v, state.q, state.v, np.zeros(a.n_v),
                             dyn.GRAVITY)
        self.R, self.p, self.axis_w = kin.fk_links(
            a.parent, a.jnt_dof, a.jnt_axis, a.jnt_pos, a.jnt_quat,
            a.floating, state.q)
        self.w, self.vp = kin.link_velocities(a.parent, a.jnt_dof, a.floating,
                                              self.p, self.axis_w, state.v)
        self.alpha, self.ap = kin.link_accel_bias(
            a.parent, a.jnt_dof, a.floating, self.p, self.axis_w, state.v,
            self.w)
        self._arrays = a

    def frame_point(self, frame: str):
        a = self._arrays
        k = self.model.frame_id(frame)
        li = int(a.frame_link[k])
        Rf = self.R[li] @ quat_to_mat(a.frame_quat[k])
        pf = self.p[li] + self.R[li] @ a.frame_pos[k]
        return li, pf, Rf

    def point_jac(self, link: int, point: np.ndarray) -> np.ndarray:
        a = self._arrays
        return kin.point_jacobian(a.parent, a.jnt_dof, a.floating, a.n_v,
                                  self.p, self.axis_w, link, point)

    def point_drift(self, link: int, point: np.ndarray) -> np.ndarray:
        return kin.point_drift(self.p, self.w, self.alpha, self.ap, link,
                               point)

    def frame_velocity(self, frame: str) -> np.ndarray:
        li, pf, _ = self.frame_point(frame)
        out = np.empty(6)
        r = pf - self.p[li]
        out[0:3] = self.vp[li] + np.cross(self.w[li], r)
        out[3:6] = self.w[li]
        return out

    def com_rows(self):
        a = self._arrays
        c_links, com, m_tot = kin.com_chain(a.mass, a.com, self.R, self.p)
        J = kin.com_jacobian_kernel(a.parent, a.jnt_dof, a.floating, a.n_v,
                                    self.p, self.axis_w, a.mass, c_links)
        drift = kin.com_drift_kernel(a.parent, self.p, self.w, self.alpha,
                                     self.ap, a.mass, c_links)
        return J, drift, com, m_tot


def _task_rows(data: _TickData, task: TaskSpec):
    model = data.model
    n_v = model.n_v
    if task.kind == "com":
        J, drift, _, _ = data.com_rows()
        acc = task.accel.reshape(3)
    elif task.kind in ("pose", "orientation"):
        li, pf, _ = data.frame_point(task.frame)
        J6 = data.point_jac(li, pf)
        d6 = data.point_drift(li, pf)
        if task.kind == "pose":
            J, drift, acc = J6, d6, task.accel.reshape(6)
        else:
            J, drift, acc = J6[3:6], d6[3:6], task.accel.reshape(3)
    elif task.kind == "posture":
        n_act = model.n_act
        J = np.zeros((n_act, n_v))
        J[np.arange(n_act), model.actuated_dofs] = 1.0
        drift = np.zeros(n_act)
        acc = task.accel.reshape(n_act)
    else:
        raise WBCError(f"unknown task kind {task.kind!r}")
    w = np.asarray(task.weight, dtype=float)
    if w.ndim == 0:
        w = np.full(J.shape[0], float(w))
    if w.shape != (J.shape[0],):
        raise WBCError(f"task {task.name!r}: weight length {w.shape[0]} "
                       f"does not match {J.shape[0]} rows")
    return J, drift, acc, w


def _contact_stack(data: _TickData, contacts: list[ContactSpec]) -> np.ndarray:
    """Stacked linear point Jacobians, shape (3K, n_v)."""
    rows = []
    for c in contacts:
        li, pf, Rf = data.frame_point(c.frame)
        for pt in c.points:
            pw = pf + Rf @ pt
            rows.append(data.point_jac(li, pw)[0:3])
    if rows:
        return np.vstack(rows)
    return np.zeros((0, data.model.n_v))


def build_qp(model: RobotModel, state: RobotState, tasks: list[TaskSpec],
             contacts: list[ContactSpec], config: WBCConfig,
             _data: _TickData | None = None) -> QuadraticProgram:
    """Assemble the per-tick QP over x = [qdd; f]."""
    if model.floating and not contacts:
        raise WBCError("a floating-base model needs at least one contact")
    data = _data or _TickData(model, state)
    n_v = model.n_v
    n_f = 3 * sum(c.n_points for c in contacts)
    n = n_v + n_f

    rows = []
    targets = []
    for task in tasks:
        J, drift, acc, w = _task_rows(data, task)
        sw = np.sqrt(w)
        block = np.zeros((J.shape[0], n))
        block[:, :n_v] = sw[:, None] * J
        rows.append(block)
        targets.append(sw * (acc - drift))
    off = n_v
    for c in contacts:
        k = 3 * c.n_points
        sw = np.sqrt(c.weight_force)
        block = np.zeros((k, n))
        block[:, off:off + k] = sw * np.eye(k)
        rows.append(block)
        targets.append(sw * c.f_des.ravel())
        off += k
    G = np.vstack(rows) if rows else np.zeros((0, n))
    h = np.concatenate(targets) if targets else np.zeros(0)

    H = G.T @ G
    H[np.arange(n_v), np.arange(n_v)] += config.lambda_qdd
    H[np.arange(n_v, n), np.arange(n_v, n)] += config.lambda_force
    H = 0.5 * (H + H.T)
    c_vec = -(G.T @ h)

    Jc = _contact_stack(data, contacts)

    A_eq = None
    b_eq = None
    if model.floating:
        A_eq = np.zeros((6, n))
        A_eq[:, :n_v] = data.A[0:6]
        if n_f:
            A_eq[:, n_v:] = -Jc[:, 0:6].T
        b_eq = -data.bias[0:6]

    in_rows = []
    in_rhs = []
    off = n_v
    for c in contacts:
        U = c.cone_rows()
        for _ in range(c.n_points):
            block = np.zeros((4, n))
            block[:, off:off + 3] = U
            in_rows.append(block)
            in_rhs.append(np.zeros(4))
            cap = np.zeros((1, n))
            cap[0, off + 2] = -1.0
            in_rows.append(cap)
            in_rhs.append(np.array([-c.f_max]))
            off += 3
    act = model.actuated_dofs
    if act.size:
        tau_lim = (model.effort_limits if config.tau_limit is None
                   else np.asarray(config.tau_limit, dtype=float))
        lim_dofs = act[np.isfinite(tau_lim)]
        tau_lim = tau_lim[np.isfinite(tau_lim)]
        if lim_dofs.size:
            tau_rows = np.zeros((lim_dofs.size, n))
            tau_rows[:, :n_v] = data.A[lim_dofs]
            if n_f:
                tau_rows[:, n_v:] = -Jc[:, lim_dofs].T
            tau_base = data.bias[lim_dofs]
            # tau_min <= tau_rows @ x + tau_base <= tau_max
            in_rows.append(tau_rows)
            in_rhs.append(-tau_lim - tau_base)
            in_rows.append(-tau_rows)
            in_rhs.append(-tau_lim + tau_base)
    A_in = np.vstack(in_rows) if in_rows else None
    b_in = np.concatenate(in_rhs) if in_rows else None

    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    joint_dofs = np.arange(6 if model.floating else 0, n_v)
    lower[joint_dofs] = -config.qdd_limit
    upper[joint_dofs] = config.qdd_limit

    return QuadraticProgram(H=H, c=c_vec, A_eq=A_eq, b_eq=b_eq,
                            A_in=A_in, b_in=b_in, lower=lower, upper=upper)


def compute_torque(model: RobotModel, state: RobotState,
                   contacts: list[ContactSpec], x: np.ndarray,
                   _data: _TickData | None = None):
    """Feedforward torque from an optimal (qdd, f) stack.

    Returns ``(tau_cmd, floating_residual)`` where the residual is the
    infinity norm of the unactuated dynamics rows after contact forces act.
    """
    data = _data or _TickData(model, state)
    n_v = model.n_v
    x = np.asarray(x, dtype=float)
    qdd = x[:n_v]
    f = x[n_v:]
    tau_full = data.A @ qdd + data.bias
    if f.size:
        Jc = _contact_stack(data, contacts)
        tau_full = tau_full - Jc.T @ f
    resid = float(np.abs(tau_full[model.floating_dofs]).max(initial=0.0))
    return tau_full[model.actuated_dofs], resid


def joint_pd_wrap(tau_cmd, q_cmd, qd_cmd, q_meas, qd_meas, kp, kd):
    """Final joint torque: feedforward plus joint-space PD."""
    return np.asarray(tau_cmd, float) \
        + np.asarray(kp, float) * (np.asarray(q_cmd, float) - np.asarray(q_meas, float)) \
        + np.asarray(kd, float) * (np.asarray(qd_cmd, float) - np.asarray(qd_meas, float))


def gravity_compensation_torque(model: RobotModel, state: RobotState,
                                contacts: list[ContactSpec]) -> np.ndarray:
    """Static hold torque distributing weight evenly over contact points.

    Fallback command when the QP fails: supports the robot's weight through
    the given contacts and cancels gravity on the actuated joints.
    """
    data = _TickData(model, state)
    grav = dyn.gravity_forces(model, state.q)
    act = model.actuated_dofs
    K = sum(c.n_points for c in contacts)
    if K == 0:
        return grav[act]
    _, _, com, _ = data.com_rows()
    pts = []
    for c in contacts:
        _, pf, Rf = data.frame_point(c.frame)
        for pt in c.points:
            pts.append(pf + Rf @ pt)
    fz = static_force_targets(np.array(pts), np.ones(K),
                              model.total_mass * dyn.GRAVITY, com[0:2])
    Jc = _contact_stack(data, contacts)
    f = np.zeros(3 * K)
    f[2::3] = fz
    return grav[act] - (Jc.T @ f)[act]


def hand_chain_mask(model: RobotModel,
                    hand_frames: dict[str, str]) -> np.ndarray:
    """Boolean mask over actuated joints that lie on a base-to-hand chain."""
    a = model.arrays
    pos = {int(d): k for k, d in enumerate(model.actuated_dofs)}
    mask = np.zeros(model.n_act, dtype=bool)
    for frame in hand_frames.values():
        li = int(a.frame_link[model.frame_id(frame)])
        while li > 0:
            d = int(a.jnt_dof[li])
            if d in pos:
                mask[pos[d]] = True
            li = int(a.parent[li])
    return mask


def standard_tasks(model: RobotModel, state: RobotState, refs: ReferenceFrame,
                   mode: str, config: WBCConfig,
                   foot_frames: dict[str, str],
                   hand_frames: dict[str, str],
                   _data: _TickData | None = None) -> list[TaskSpec]:
    """Build the fixed task set: COM, torso orientation, feet, hands, posture."""
    data = _data or _TickData(model, state)
    tasks = []
    J_com, _, com, _ = data.com_rows()
    com_vel = J_com @ state.v
    tasks.append(TaskSpec(
        name="com", kind="com", weight=config.w_body,
        accel=point_acceleration(refs.com, refs.com_vel, refs.com_acc,
                                 com, com_vel, config.kp_body,
                                 config.kd_body)))
    _, p_t, R_t = data.frame_point("torso")
    acc6 = task_acceleration(refs.torso.pos, refs.torso.quat, refs.torso.vel,
                             refs.torso.acc, p_t, mat_to_quat(R_t),
                             data.frame_velocity("torso"),
                             config.kp_body, config.kd_body)
    tasks.append(TaskSpec(name="torso", kind="orientation", frame="torso",
                          weight=config.w_body, accel=acc6[3:6]))
    for side in sorted(refs.feet):
        ref = refs.feet[side]
        frame = foot_frames[side]
        _, pf, Rf = data.frame_point(frame)
        acc = task_acceleration(ref.pos, ref.quat, ref.vel, ref.acc, pf,
                                mat_to_quat(Rf), data.frame_velocity(frame),
                                config.kp_foot, config.kd_foot)
        tasks.append(TaskSpec(name=f"foot_{side}", kind="pose", frame=frame,
                              weight=config.w_foot, accel=acc))
    w_hand = np.full(6, config.hand_weight(mode))
    w_hand[3:6] *= config.hand_orientation_scale
    for side in sorted(refs.hands):
        ref = refs.hands[side]
        frame = hand_frames[side]
        _, pf, Rf = data.frame_point(frame)
        acc = task_acceleration(ref.pos, ref.quat, ref.vel, ref.acc, pf,
                                mat_to_quat(Rf), data.frame_velocity(frame),
                                config.kp_hand, config.kd_hand)
        tasks.append(TaskSpec(name=f"hand_{side}", kind="pose", frame=frame,
                              weight=w_hand.copy(), accel=acc))
    q_j = state.joint_q(model)
    v_j = state.joint_v(model)
    post_acc = config.kp_posture * (refs.posture - q_j) \
        - config.kd_posture * v_j
    w_post = np.full(model.n_act, config.w_posture)
    w_post[hand_chain_mask(model, hand_frames)] = config.w_posture_arm
    tasks.append(TaskSpec(name="posture", kind="posture",
                          weight=w_post, accel=post_acc))
    return tasks


def static_force_targets(corners_world: np.ndarray, load: np.ndarray,
                         total: float, cop_xy: np.ndarray) -> np.ndarray:
    """Normal force targets supporting ``total`` with the given CoP.

    Minimizes sum(fz_i^2 / load_i) subject to force and planar moment
    balance, so the target distribution is consistent with static
    equilibrium; negative entries are clipped and the sum rescaled.
    """
    K = corners_world.shape[0]
    B = np.vstack([np.ones(K), corners_world[:, 0], corners_world[:, 1]])
    G = (B * load) @ B.T + 1e-12 * np.eye(3)
    rhs = total * np.array([1.0, cop_xy[0], cop_xy[1]])
    lam = np.linalg.solve(G, rhs)
    fz = load * (B.T @ lam)
    fz = np.maximum(fz, 0.0)
    s = fz.sum()
    if s > 0:
        fz *= total / s
    return fz


def foot_contacts(model: RobotModel, state: RobotState, config: WBCConfig,
                  foot_frames: dict[str, str], corners: np.ndarray,
                  scales: dict[str, float] | None = None,
                  forces: dict[str, np.ndarray] | None = None,
                  _data: _TickData | None = None) -> list[ContactSpec]:
    """Foot corner contacts with statically consistent force targets.

    ``scales[side]`` in (0, 1] ramps the normal cap for contact transitions;
    a scale of 0 removes the contact entirely (swing foot).  By default the
    desired forces are vertical and place the center of pressure under the
    measured COM.  ``forces[frame]`` overrides the targets with measured
    ground reactions, projected into the friction cone and normal cap, which
    keeps the optimized base dynamics consistent with the actual support.
    """
    if scales is None:
        scales = {s: 1.0 for s in foot_frames}
    active = [s for s in sorted(foot_frames) if scales.get(s, 0.0) > 0.0]
    if not active:
        return []
    data = _data or _TickData(model, state)
    _, _, com, _ = data.com_rows()
    k = corners.shape[0]
    pts_world = []
    load = []
    for side in active:
        _, pf, Rf = data.frame_point(foot_frames[side])
        for pt in corners:
            pts_world.append(pf + Rf @ pt)
            load.append(scales[side])
    fz = static_force_targets(np.array(pts_world), np.array(load),
                              model.total_mass * dyn.GRAVITY, com[0:2])
    specs = []
    for i, side in enumerate(active):
        frame = foot_frames[side]
        cap = config.f_max * scales[side]
        meas = None if forces is None else forces.get(frame)
        w_f = config.w_force
        if meas is not None:
            f_des = np.array(meas, dtype=float).reshape(k, 3)
            f_des[:, 2] = np.clip(f_des[:, 2], 0.0, cap)
            # project tangentials into the solver's cone
            t_max = config.mu * f_des[:, 2] / np.sqrt(2.0)
            f_des[:, 0] = np.clip(f_des[:, 0], -t_max, t_max)
            f_des[:, 1] = np.clip(f_des[:, 1], -t_max, t_max)
            w_f = config.w_force_measured
        else:
            f_des = np.zeros((k, 3))
            f_des[:, 2] = fz[i * k:(i + 1) * k]
        specs.append(ContactSpec(frame=frame, points=corners,
                                 mu=config.mu,
                                 f_max=cap,
                                 f_des=f_des,
                                 weight_force=w_f))
    return specs


class WholeBodyController:
    """Stateful controller wrapper: fault latch and QP warm start."""

    def __init__(self, model: RobotModel, config: WBCConfig | None = None,
                 foot_frames: dict[str, str] | None = None,
                 hand_frames: dict[str, str] | None = None,
                 foot_corners: np.ndarray | None = None):
        from .humanoid import FOOT_CORNERS, FOOT_FRAMES, HAND_FRAMES
        self.model = model
        self.config = config or WBCConfig()
        self.foot_frames = dict(foot_frames or FOOT_FRAMES)
        self.hand_frames = dict(hand_frames or HAND_FRAMES)
        self.foot_corners = (FOOT_CORNERS.copy() if foot_corners is None
                             else np.asarray(foot_corners, dtype=float))
        self.fault = False
        self._warm: np.ndarray | None = None
        self._q_des: np.ndarray | None = None
        self._qd_des: np.ndarray | None = None

    def clear_fault(self):
        self.fault = False
        self._warm = None
        self._q_des = None
        self._qd_des = None

    # the solver certifies "optimal" against a strict absolute KKT bar; a
    # stalled iterate whose constraint residuals are still orders below the
    # controller's error budget is fine to act on
    _ACCEPT = {"stationarity": 1e-4, "primal_eq": 1e-7, "primal_in": 1e-7,
               "dual": 1e-7, "complementarity": 1e-4}

    @classmethod
    def _usable(cls, sol) -> bool:
        if sol.optimal:
            return True
        res = sol.residuals
        if not res:
            return False
        return all(res.get(k, np.inf) <= v for k, v in cls._ACCEPT.items())

    def _tau_limit(self) -> np.ndarray:
        if self.config.tau_limit is None:
            return self.model.effort_limits
        return np.asarray(self.config.tau_limit, dtype=float)

    def _hold(self, state: RobotState, contacts: list[ContactSpec],
              status: str, residuals: dict[str, float],
              t0: float) -> TorqueCommand:
        tau = gravity_compensation_torque(self.model, state, contacts)
        lim = self._tau_limit()
        tau = np.clip(tau, -lim, lim)
        return TorqueCommand(
            tau_joint=tau, tau_cmd=tau, qdd=np.zeros(self.model.n_v),
            forces={}, residuals=residuals, status=status, fault=True,
            solve_time=time.perf_counter() - t0,
            q_cmd=state.joint_q(self.model),
            qd_cmd=np.zeros(self.model.n_act))

    def tick(self, state: RobotState, tasks: list[TaskSpec],
             contacts: list[ContactSpec],
             _data: _TickData | None = None) -> TorqueCommand:
        model = self.model
        cfg = self.config
        t0 = time.perf_counter()
        if self.fault:
            return self._hold(state, contacts, "fault", {}, t0)
        data = _data or _TickData(model, state)
        qp = build_qp(model, state, tasks, contacts, cfg, _data=data)
        sol = solve(qp, warm_start=self._warm)
        if not self._usable(sol) and self._warm is not None:
            sol = solve(qp)      # retry cold: warm starts can mislead
        if not self._usable(sol):
            self.fault = True
            log.warning("whole-body QP finished %s; latching fault and "
                        "holding gravity compensation", sol.status)
            return self._hold(state, contacts, sol.status,
                              dict(sol.residuals), t0)
        self._warm = sol.x
        n_v = model.n_v
        qdd = sol.x[:n_v]
        tau_cmd, float_resid = compute_torque(model, state, contacts, sol.x,
                                              _data=data)
        lim = self._tau_limit()
        over = np.abs(tau_cmd) - lim
        if np.any(over > 1e-6):
            log.warning("torque command exceeds bounds by %.3e; clamping",
                        float(over.max()))
        tau_cmd = np.clip(tau_cmd, -lim, lim)

        # integrate qdd* into persistent setpoints: anchoring at the measured
        # state every tick leaves the task loop proportional-only, and model
        # mismatch at the contacts then shows up as steady-state error
        act = model.actuated_dofs
        q_meas = state.joint_q(model)
        qd_meas = state.joint_v(model)
        if self._qd_des is None or self._q_des is None:
            self._qd_des = qd_meas.copy()
            self._q_des = q_meas.copy()
        leak = cfg.setpoint_leak
        qd_cmd = (1.0 - leak) * self._qd_des + leak * qd_meas \
            + qdd[act] * cfg.dt
        q_cmd = self._q_des + leak * (q_meas - self._q_des) + qd_cmd * cfg.dt
        q_cmd = np.clip(q_cmd, q_meas - cfg.setpoint_clamp,
                        q_meas + cfg.setpoint_clamp)
        self._qd_des = qd_cmd
        self._q_des = q_cmd
        tau_joint = joint_pd_wrap(tau_cmd, q_cmd, qd_cmd, q_meas, qd_meas,
                                  cfg.kp_joint, cfg.kd_joint)
        tau_joint = np.clip(tau_joint, -lim, lim)

        forces = {}
        off = n_v
        for c in contacts:
            k = 3 * c.n_points
            forces[c.frame] = sol.x[off:off + k].reshape(-1, 3)
            off += k
        residuals = {"floating_rows": float_resid, **sol.residuals}
        for task in tasks:
            J, drift, acc, _ = _task_rows(data, task)
            residuals[f"task_{task.name}"] = float(
                np.abs(J @ qdd + drift - acc).max(initial=0.0))
        return TorqueCommand(
            tau_joint=tau_joint, tau_cmd=tau_cmd, qdd=qdd, forces=forces,
            residuals=residuals, status=sol.status,
            solve_time=time.perf_counter() - t0,
            q_cmd=q_cmd, qd_cmd=qd_cmd)

    def control_tick(self, state: RobotState, refs: ReferenceFrame,
                     mode: str) -> TorqueCommand:
        """One full tick: build the standard task set and contacts, solve."""
        data = _TickData(self.model, state)
        contacts = foot_contacts(self.model, state, self.config,
                                 self.foot_frames, self.foot_corners,
                                 refs.foot_scales if refs.foot_scales else None,
                                 refs.contact_forces or None,
                                 _data=data)
        if self.fault:
            return self._hold(state, contacts, "fault", {},
                              time.perf_counter())
        tasks = standard_tasks(self.model, state, refs, mode, self.config,
                               self.foot_frames, self.hand_frames, _data=data)
        return self.tick(state, tasks, contacts, _data=data)


def control_tick(controller: WholeBodyController, state: RobotState,
                 refs: ReferenceFrame, mode: str) -> TorqueCommand:
    """Functional entry point for one control tick."""
    return controller.control_tick(state, refs, mode)


def standing_references(model: RobotModel, state: RobotState,
                        foot_frames: dict[str, str],
                        hand_frames: dict[str, str],
                        posture: np.ndarray | None = None) -> ReferenceFrame:
    """References that hold the measured state (quiet standing)."""
    data = _TickData(model, state)
    _, _, com, _ = data.com_rows()
    _, p_t, R_t = data.frame_point("torso")
    feet = {}
    for side, frame in foot_frames.items():
        _, pf, Rf = data.frame_point(frame)
        feet[side] = PoseRef(pos=pf, quat=mat_to_quat(Rf))
    hands = {}
    for side, frame in hand_frames.items():
        _, pf, Rf = data.frame_point(frame)
        hands[side] = PoseRef(pos=pf, quat=mat_to_quat(Rf))
    q_nom = (state.joint_q(model).copy() if posture is None
             else np.asarray(posture, dtype=float))
    return ReferenceFrame(com=com, torso=PoseRef(pos=p_t, quat=mat_to_quat(R_t)),
                          feet=feet, hands=hands, posture=q_nom,
                          foot_scales={s: 1.0 for s in foot_frames})
